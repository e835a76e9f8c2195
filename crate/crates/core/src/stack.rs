//! Multitemporal image stacks and their observation masks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{BinaryTensor, Tensor};

/// Dimensions of a stack: height × width × bands × times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StackDims {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub times: usize,
}

impl StackDims {
    pub fn new(height: usize, width: usize, bands: usize, times: usize) -> Result<Self> {
        let dims = Self {
            height,
            width,
            bands,
            times,
        };
        if dims.shape().contains(&0) {
            return Err(Error::Shape(format!("zero dimension in {dims}")));
        }
        Ok(dims)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.height, self.width, self.bands, self.times]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [m, n, b, t] => Self::new(m, n, b, t),
            _ => Err(Error::Shape(format!(
                "stack tensors are 4-order, got shape {shape:?}"
            ))),
        }
    }
}

impl std::fmt::Display for StackDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.height, self.width, self.bands, self.times
        )
    }
}

/// Observed 4-order data with its declared maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    values: Tensor,
    value_range: f64,
}

impl ImageStack {
    /// Validates finiteness, non-negativity and the declared range.
    pub fn new(values: Tensor, value_range: f64) -> Result<Self> {
        StackDims::from_shape(values.shape())?;
        if !(value_range.is_finite() && value_range > 0.0) {
            return Err(Error::InvalidValue(format!(
                "value range must be positive and finite, got {value_range}"
            )));
        }
        if let Some(pos) = values
            .data()
            .iter()
            .position(|&v| !v.is_finite() || v < 0.0 || v > value_range)
        {
            return Err(Error::InvalidValue(format!(
                "entry {pos} = {} outside [0, {value_range}]",
                values.data()[pos]
            )));
        }
        Ok(Self {
            values,
            value_range,
        })
    }

    pub fn dims(&self) -> StackDims {
        StackDims::from_shape(self.values.shape()).expect("validated at construction")
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn value_range(&self) -> f64 {
        self.value_range
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values.get(&[i, j, k, l])
    }

    /// One band at one time as an m × n matrix.
    pub fn band_image(&self, band: usize, time: usize) -> DMatrix<f64> {
        let d = self.dims();
        DMatrix::from_fn(d.height, d.width, |i, j| self.get(i, j, band, time))
    }
}

/// Binary tensor congruent to a stack; `true` marks an observed entry.
///
/// Every pixel is either observed or missing in all of its bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    mask: BinaryTensor,
}

impl ObservationMask {
    pub fn new(mask: BinaryTensor) -> Result<Self> {
        let d = StackDims::from_shape(mask.shape())?;
        for l in 0..d.times {
            for j in 0..d.width {
                for i in 0..d.height {
                    let first = mask.get(&[i, j, 0, l]);
                    if (1..d.bands).any(|k| mask.get(&[i, j, k, l]) != first) {
                        return Err(Error::InvalidValue(format!(
                            "mask is not band-consistent at pixel ({i}, {j}) time {l}"
                        )));
                    }
                }
            }
        }
        Ok(Self { mask })
    }

    pub fn all_observed(dims: StackDims) -> Self {
        Self {
            mask: BinaryTensor::filled(&dims.shape(), true).expect("valid dims"),
        }
    }

    /// Builds a mask from a per-pixel predicate `missing(i, j, l)`.
    pub fn from_pixels(dims: StackDims, mut missing: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mask = BinaryTensor::from_fn(&dims.shape(), |idx| !missing(idx[0], idx[1], idx[3]))
            .expect("valid dims");
        Self { mask }
    }

    pub fn dims(&self) -> StackDims {
        StackDims::from_shape(self.mask.shape()).expect("validated at construction")
    }

    pub fn tensor(&self) -> &BinaryTensor {
        &self.mask
    }

    pub fn into_tensor(self) -> BinaryTensor {
        self.mask
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize, l: usize) -> bool {
        self.mask.get(&[i, j, k, l])
    }

    /// Number of missing entries counted over all bands.
    pub fn missing_count(&self) -> usize {
        self.mask.data().iter().filter(|&&o| !o).count()
    }

    pub fn check_congruent(&self, stack: &ImageStack) -> Result<()> {
        if self.dims() != stack.dims() {
            return Err(Error::Congruence(format!(
                "mask {} vs stack {}",
                self.dims(),
                stack.dims()
            )));
        }
        Ok(())
    }
}
