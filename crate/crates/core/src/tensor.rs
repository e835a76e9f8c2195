//! Dense tensors of order 1 to 4 with mode-n unfolding and folding.
//!
//! Storage is lexicographic with the first index varying fastest, so the
//! mode-1 unfolding of a tensor is its data buffer read as a column-major
//! matrix. Modes are numbered from 1, element indices from 0.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest tensor order handled anywhere in the crate.
pub const MAX_ORDER: usize = 4;

/// Dense N-order array, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Binary tensor used for observation masks (`true` = observed).
pub type BinaryTensor = Tensor<bool>;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_ORDER {
        return Err(Error::Shape(format!(
            "order {} outside 1..={MAX_ORDER}",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Copy> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (d, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < shape[d] {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Linear offset of a multi-index. Panics when the index is out of range.
    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index order mismatch");
        let mut off = 0;
        let mut stride = 1;
        for (d, (&i, &n)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(i < n, "index {i} out of range for dimension {d} of size {n}");
            off += i * stride;
            stride *= n;
        }
        off
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], value: T) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Same shape, different contents.
    pub fn with_data<U: Copy>(&self, data: Vec<U>) -> Result<Tensor<U>> {
        Tensor::new(&self.shape, data)
    }
}

impl Tensor<f64> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Mode-n unfolding of a tensor together with what is needed to fold it back.
#[derive(Debug, Clone, PartialEq)]
pub struct Unfolding {
    pub mode: usize,
    pub matrix: DMatrix<f64>,
    pub source_shape: Vec<usize>,
}

impl Unfolding {
    pub fn fold(&self) -> Result<Tensor> {
        fold(&self.matrix, self.mode, &self.source_shape)
    }
}

/// Splits a shape around `mode` into (product before, size at, product after).
fn split_at_mode(shape: &[usize], mode: usize) -> Result<(usize, usize, usize)> {
    if mode == 0 || mode > shape.len() {
        return Err(Error::InvalidMode {
            mode,
            order: shape.len(),
        });
    }
    let k = mode - 1;
    let before = shape[..k].iter().product();
    let after = shape[k + 1..].iter().product();
    Ok((before, shape[k], after))
}

/// Number of mode-`mode` fibers of a tensor with the given shape.
pub fn count_fibers(shape: &[usize], mode: usize) -> Result<usize> {
    let (before, _, after) = split_at_mode(shape, mode)?;
    Ok(before * after)
}

/// Mode-`mode` unfolding: rows indexed by the chosen dimension, columns are
/// the mode fibers ordered with the lowest remaining index varying fastest.
pub fn unfold(t: &Tensor, mode: usize) -> Result<Unfolding> {
    let (before, size, after) = split_at_mode(t.shape(), mode)?;
    let mut matrix = DMatrix::zeros(size, before * after);
    let data = t.data();
    for right in 0..after {
        for i in 0..size {
            let src = before * (i + size * right);
            for left in 0..before {
                matrix[(i, left + before * right)] = data[src + left];
            }
        }
    }
    Ok(Unfolding {
        mode,
        matrix,
        source_shape: t.shape().to_vec(),
    })
}

/// Inverse of [`unfold`].
pub fn fold(matrix: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<Tensor> {
    check_shape(shape)?;
    let (before, size, after) = split_at_mode(shape, mode)?;
    if matrix.nrows() != size || matrix.ncols() != before * after {
        return Err(Error::Shape(format!(
            "a {}x{} matrix cannot fold into {shape:?} along mode {mode}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut data = vec![0.0; size * before * after];
    for right in 0..after {
        for i in 0..size {
            let dst = before * (i + size * right);
            for left in 0..before {
                data[dst + left] = matrix[(i, left + before * right)];
            }
        }
    }
    Tensor::new(shape, data)
}

/// Count of singular values above `rel_tol` times the largest one.
///
/// This is the "dimension of the spanned space" diagnostic for groups of
/// fibers; the all-zero matrix has rank 0.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let Ok(sv) = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]).singular_values() else {
        return 0;
    };
    let top = sv.iter().copied().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}


/// Per-mode fiber count and span dimension of one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeRank {
    pub mode: usize,
    pub size: usize,
    pub fibers: usize,
    pub dim_span: usize,
}

pub fn mode_ranks(t: &Tensor, rel_tol: f64) -> Result<Vec<ModeRank>> {
    (1..=t.order())
        .map(|mode| {
            Ok(ModeRank {
                mode,
                size: t.shape()[mode - 1],
                fibers: count_fibers(t.shape(), mode)?,
                dim_span: numerical_rank(&unfold(t, mode)?.matrix, rel_tol),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|v| v as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f64>::zeros(&[]).is_err());
        assert!(Tensor::<f64>::zeros(&[1, 2, 3, 4, 5]).is_err());
        assert!(Tensor::<f64>::zeros(&[3, 0]).is_err());
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn from_fn_walks_first_index_fastest() {
        let t = Tensor::from_fn(&[2, 3], |i| (i[0] + 10 * i[1]) as f64).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        assert_eq!(t.get(&[1, 2]), 21.0);
    }

    #[test]
    fn table_fiber_counts() {
        let shape = [4, 4, 3, 708];
        let counts: Vec<_> = (1..=4).map(|m| count_fibers(&shape, m).unwrap()).collect();
        assert_eq!(counts, vec![8496, 8496, 11328, 48]);
        assert_eq!(count_fibers(&[7], 1).unwrap(), 1);
        assert!(matches!(
            count_fibers(&shape, 5),
            Err(Error::InvalidMode { mode: 5, order: 4 })
        ));
        assert!(count_fibers(&shape, 0).is_err());
    }

    #[test]
    fn unfold_shape_matches_fiber_count() {
        let t = Tensor::zeros(&[4, 4, 3, 708]).unwrap();
        let u = unfold(&t, 1).unwrap();
        assert_eq!(u.matrix.shape(), (4, 8496));
    }

    #[test]
    fn order_one_unfolds_to_column() {
        let t = Tensor::new(&[2], vec![5.0, -1.0]).unwrap();
        let u = unfold(&t, 1).unwrap();
        assert_eq!(u.matrix.shape(), (2, 1));
        assert_eq!(u.matrix[(0, 0)], 5.0);
        assert_eq!(u.matrix[(1, 0)], -1.0);
    }

    #[test]
    fn unfold_index_map_3x4x5() {
        // oracle: entry (i, j, k) -> row i, column j + 4k (0-based)
        let t = Tensor::from_fn(&[3, 4, 5], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64).unwrap();
        let u1 = unfold(&t, 1).unwrap().matrix;
        let u2 = unfold(&t, 2).unwrap().matrix;
        let u3 = unfold(&t, 3).unwrap().matrix;
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    let v = t.get(&[i, j, k]);
                    assert_eq!(u1[(i, j + 4 * k)], v);
                    assert_eq!(u2[(j, i + 3 * k)], v);
                    assert_eq!(u3[(k, i + 3 * j)], v);
                }
            }
        }
    }

    #[test]
    fn fold_inverts_unfold() {
        let t = seq(&[4, 4, 3, 48]);
        for mode in 1..=4 {
            let u = unfold(&t, mode).unwrap();
            assert_eq!(u.fold().unwrap(), t);
        }
        let t3 = seq(&[3, 4, 5]);
        assert_eq!(fold(&unfold(&t3, 2).unwrap().matrix, 2, &[3, 4, 5]).unwrap(), t3);
    }

    #[test]
    fn fold_zero_matrix() {
        let z = fold(&DMatrix::zeros(3, 8), 2, &[2, 3, 4]).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert_eq!(z.shape(), &[2, 3, 4]);
    }

    #[test]
    fn fold_rejects_mismatch() {
        assert!(matches!(
            fold(&DMatrix::zeros(3, 7), 2, &[2, 3, 4]),
            Err(Error::Shape(_))
        ));
        assert!(fold(&DMatrix::zeros(3, 8), 4, &[2, 3, 4]).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::identity(5, 5), 0.01), 5);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 7), 0.01), 0);
        let a1 = nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0]);
        let b1 = nalgebra::DVector::from_vec(vec![0.5, 1.0, 3.0]);
        let a2 = nalgebra::DVector::from_vec(vec![0.0, 1.0, 1.0, 2.0]);
        let b2 = nalgebra::DVector::from_vec(vec![2.0, -1.0, 0.0]);
        let m = &a1 * b1.transpose() + &a2 * b2.transpose();
        // full SVD check: exactly two singular values clearly nonzero
        let sv = m.clone().svd(false, false).singular_values;
        assert_eq!(sv.iter().filter(|&&s| s > 1e-9).count(), 2);
        assert_eq!(numerical_rank(&m, 0.01), 2);
    }
}
