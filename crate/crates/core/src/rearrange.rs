//! Reshaping between the m × n × b × t stack and the m × (t·n) × b working
//! tensor in which the t acquisitions of every original column sit next to
//! each other.
//!
//! Working column `v` (0-based) holds original column `v / t` at time `v % t`.

use crate::error::{Error, Result};
use crate::stack::{ImageStack, ObservationMask, StackDims};
use crate::tensor::{BinaryTensor, Tensor};

/// Working-space values and mask plus the dimensions of the source stack.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingTensor {
    pub values: Tensor,
    pub mask: BinaryTensor,
    pub dims: StackDims,
    pub value_range: f64,
}

impl WorkingTensor {
    pub fn rows(&self) -> usize {
        self.dims.height
    }

    pub fn cols(&self) -> usize {
        self.dims.width * self.dims.times
    }

    pub fn bands(&self) -> usize {
        self.dims.bands
    }

    pub fn missing_count(&self) -> usize {
        self.mask.data().iter().filter(|&&o| !o).count()
    }

    fn check(&self) -> Result<()> {
        let expected = working_shape(self.dims);
        if self.values.shape() != expected || self.mask.shape() != expected {
            return Err(Error::Shape(format!(
                "working tensor shapes {:?}/{:?} inconsistent with source {}",
                self.values.shape(),
                self.mask.shape(),
                self.dims
            )));
        }
        Ok(())
    }
}

pub fn working_shape(dims: StackDims) -> [usize; 3] {
    [dims.height, dims.times * dims.width, dims.bands]
}

/// Moves any 4-order stack-shaped tensor into working layout.
pub fn to_working<T: Copy>(src: &Tensor<T>) -> Result<Tensor<T>> {
    let d = StackDims::from_shape(src.shape())?;
    let (m, n, b, t) = (d.height, d.width, d.bands, d.times);
    let data = src.data();
    let mut out = Vec::with_capacity(data.len());
    // working offset u + m (v + t n w), v = j t + l
    for w in 0..b {
        for j in 0..n {
            for l in 0..t {
                let base = m * (j + n * (w + b * l));
                out.extend_from_slice(&data[base..base + m]);
            }
        }
    }
    Tensor::new(&working_shape(d), out)
}

/// Inverse of [`to_working`].
pub fn from_working<T: Copy>(src: &Tensor<T>, dims: StackDims) -> Result<Tensor<T>> {
    if src.shape() != working_shape(dims) {
        return Err(Error::Shape(format!(
            "working shape {:?} inconsistent with source {dims}",
            src.shape()
        )));
    }
    let (m, n, b, t) = (dims.height, dims.width, dims.bands, dims.times);
    let data = src.data();
    let mut out = Vec::with_capacity(data.len());
    for l in 0..t {
        for k in 0..b {
            for j in 0..n {
                let base = m * (j * t + l + t * n * k);
                out.extend_from_slice(&data[base..base + m]);
            }
        }
    }
    Tensor::new(&dims.shape(), out)
}

pub fn rearrange_forward(stack: &ImageStack, mask: &ObservationMask) -> Result<WorkingTensor> {
    mask.check_congruent(stack)?;
    Ok(WorkingTensor {
        values: to_working(stack.values())?,
        mask: to_working(mask.tensor())?,
        dims: stack.dims(),
        value_range: stack.value_range(),
    })
}

pub fn rearrange_inverse(w: &WorkingTensor) -> Result<(ImageStack, ObservationMask)> {
    w.check()?;
    let values = from_working(&w.values, w.dims)?;
    let mask = from_working(&w.mask, w.dims)?;
    Ok((
        ImageStack::new(values, w.value_range)?,
        ObservationMask::new(mask)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indexed_stack(dims: StackDims) -> ImageStack {
        let t = Tensor::from_fn(&dims.shape(), |i| {
            (i[0] + 10 * i[1] + 100 * i[2] + 1000 * i[3]) as f64
        })
        .unwrap();
        ImageStack::new(t, 1e6).unwrap()
    }

    #[test]
    fn single_pixel_time_series() {
        let dims = StackDims::new(1, 1, 1, 3).unwrap();
        let t = Tensor::new(&dims.shape(), vec![7.0, 8.0, 9.0]).unwrap();
        let s = ImageStack::new(t, 10.0).unwrap();
        let w = rearrange_forward(&s, &ObservationMask::all_observed(dims)).unwrap();
        assert_eq!(w.values.shape(), &[1, 3, 1]);
        assert_eq!(w.values.data(), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn temporal_interleave_2x2x1x2() {
        let dims = StackDims::new(2, 2, 1, 2).unwrap();
        let s = indexed_stack(dims);
        let w = rearrange_forward(&s, &ObservationMask::all_observed(dims)).unwrap();
        // v = 0..4 carries (j, l) = (0,0), (0,1), (1,0), (1,1)
        let expect = [(0, 0), (0, 1), (1, 0), (1, 1)];
        for (v, &(j, l)) in expect.iter().enumerate() {
            for i in 0..2 {
                assert_eq!(w.values.get(&[i, v, 0]), s.get(i, j, 0, l));
            }
        }
    }

    #[test]
    fn single_nonzero_inverse() {
        // 1-based working (2, 5, 1) with n = 3, t = 2 is stack (2, 3, 1, 1)
        let dims = StackDims::new(2, 3, 1, 2).unwrap();
        let mut values = Tensor::zeros(&working_shape(dims)).unwrap();
        values.set(&[1, 4, 0], 5.0);
        let w = WorkingTensor {
            values,
            mask: BinaryTensor::filled(&working_shape(dims), true).unwrap(),
            dims,
            value_range: 10.0,
        };
        let (s, _) = rearrange_inverse(&w).unwrap();
        for (pos, &v) in s.values().data().iter().enumerate() {
            let expected = if pos == s.values().offset(&[1, 2, 0, 0]) { 5.0 } else { 0.0 };
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn exhaustive_bijection() {
        let dims = StackDims::new(3, 4, 2, 3).unwrap();
        let s = indexed_stack(dims);
        let w = to_working(s.values()).unwrap();
        let mut seen = vec![false; dims.len()];
        for u in 0..3 {
            for v in 0..12 {
                for wb in 0..2 {
                    let x = w.get(&[u, v, wb]);
                    let (j, l) = (v / 3, v % 3);
                    assert_eq!(x, s.get(u, j, wb, l));
                    let off = s.values().offset(&[u, j, wb, l]);
                    assert!(!seen[off]);
                    seen[off] = true;
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn adjacent_times_adjacent_columns() {
        let dims = StackDims::new(2, 3, 1, 4).unwrap();
        let s = indexed_stack(dims);
        let w = to_working(s.values()).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                assert_eq!(w.get(&[0, j * 4 + l, 0]), s.get(0, j, 0, l));
                assert_eq!(w.get(&[0, j * 4 + l + 1, 0]), s.get(0, j, 0, l + 1));
            }
        }
    }

    #[test]
    fn inverse_rejects_bad_provenance() {
        let dims = StackDims::new(2, 3, 1, 2).unwrap();
        let w = WorkingTensor {
            values: Tensor::zeros(&[2, 5, 1]).unwrap(),
            mask: BinaryTensor::filled(&[2, 5, 1], true).unwrap(),
            dims,
            value_range: 1.0,
        };
        assert!(matches!(rearrange_inverse(&w), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_working_to_zero_stack() {
        let dims = StackDims::new(3, 2, 2, 2).unwrap();
        let w = WorkingTensor {
            values: Tensor::zeros(&working_shape(dims)).unwrap(),
            mask: BinaryTensor::filled(&working_shape(dims), true).unwrap(),
            dims,
            value_range: 1.0,
        };
        let (s, _) = rearrange_inverse(&w).unwrap();
        assert!(s.values().data().iter().all(|&v| v == 0.0));
    }
}
