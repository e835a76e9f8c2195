//! Synthetic degradation masks: clouds drawn as ellipses or polygons,
//! regular diagonal stripes and random vertical stripes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stack::{ObservationMask, StackDims};

/// Closed region in pixel coordinates; pixel `(i, j)` sits at row `i`, column `j`.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ellipse {
        row: f64,
        col: f64,
        row_radius: f64,
        col_radius: f64,
    },
    /// Vertices as `(row, col)`; even-odd rule.
    Polygon(Vec<(f64, f64)>),
}

impl Region {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (y, x) = (i as f64, j as f64);
        match self {
            Region::Ellipse {
                row,
                col,
                row_radius,
                col_radius,
            } => {
                if *row_radius <= 0.0 || *col_radius <= 0.0 {
                    return false;
                }
                let a = (y - row) / row_radius;
                let b = (x - col) / col_radius;
                a * a + b * b <= 1.0
            }
            Region::Polygon(v) => {
                let mut inside = false;
                let k = v.len();
                for e in 0..k {
                    let (y0, x0) = v[e];
                    let (y1, x1) = v[(e + 1) % k];
                    if (y0 > y) != (y1 > y) && x < x0 + (y - y0) * (x1 - x0) / (y1 - y0) {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Degradation {
    Cloud(Vec<Region>),
    /// Parallel stripes running at `angle` degrees from the row direction.
    /// A pixel is hidden when its offset along the stripe normal, taken modulo
    /// `period`, is below `width`.
    DiagonalStripes {
        period: f64,
        width: f64,
        angle: f64,
        offset: f64,
    },
    /// `count` full-height stripes with random start column and width.
    VerticalStripes {
        count: usize,
        min_width: usize,
        max_width: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub kind: Degradation,
    pub time: usize,
}

/// Signed distance along the stripe normal, the quantity stripes are cut from.
pub fn stripe_coordinate(i: usize, j: usize, angle: f64) -> f64 {
    let a = angle.to_radians();
    i as f64 * a.cos() - j as f64 * a.sin()
}

/// Mask hiding the specified region at `spec.time` only.
pub fn simulate_degradation(dims: StackDims, spec: &DegradationSpec) -> Result<ObservationMask> {
    if spec.time >= dims.times {
        return Err(Error::OutOfBounds(format!("time {} outside 0..{}", spec.time, dims.times)));
    }
    let hidden: Box<dyn Fn(usize, usize) -> bool> = match &spec.kind {
        Degradation::Cloud(regions) => {
            let regions = regions.clone();
            Box::new(move |i, j| regions.iter().any(|r| r.contains(i, j)))
        }
        &Degradation::DiagonalStripes {
            period,
            width,
            angle,
            offset,
        } => {
            if !(period > 0.0 && width >= 0.0 && angle.is_finite() && offset.is_finite()) {
                return Err(Error::Config(format!(
                    "stripe period {period} and width {width} must be positive"
                )));
            }
            Box::new(move |i, j| (stripe_coordinate(i, j, angle) - offset).rem_euclid(period) < width)
        }
        &Degradation::VerticalStripes {
            count,
            min_width,
            max_width,
            seed,
        } => {
            if min_width > max_width {
                return Err(Error::Config(format!("stripe widths {min_width}..{max_width} are reversed")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut columns = vec![false; dims.width];
            for _ in 0..count {
                let start = rng.random_range(0..dims.width);
                let w = rng.random_range(min_width..=max_width);
                for c in columns.iter_mut().skip(start).take(w) {
                    *c = true;
                }
            }
            Box::new(move |_, j| columns[j])
        }
    };
    let mask = ObservationMask::from_pixels(dims, |i, j, l| l == spec.time && hidden(i, j));
    if mask.missing_count() == 0 {
        return Err(Error::EmptyGeometry(format!("{:?} hides no pixel", spec.kind)));
    }
    Ok(mask)
}
