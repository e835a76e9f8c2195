//! ADMM completion of 4-order tensors under a per-mode low-rank prior.
//!
//! The same iteration serves two priors:
//!
//! * the logDet surrogate, linearised each iteration into singular-value
//!   weights `1 / (sigma + eps)` taken from the previous auxiliary iterate, and
//! * the plain nuclear norm (all weights 1), which is the HaLRTC baseline.
//!
//! Each iteration averages the auxiliary tensors into `X` on the missing
//! entries (observed entries stay pinned), shrinks every mode unfolding of
//! `X + Λ_i / β` by weighted singular-value thresholding at `τ = α_i / β`,
//! and takes a dual ascent step on each multiplier.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::similarity::PatchGroup;
use crate::tensor::{fold, unfold, BinaryTensor, Tensor};

const ORDER: usize = 4;

/// `beta * value_range` used by [`SolverConfig::halrtc_for_value_range`].
pub const HALRTC_BETA_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Mode weights, nonnegative and summing to one.
    pub alphas: [f64; ORDER],
    /// Penalty parameter of the augmented Lagrangian.
    pub beta: f64,
    /// LogDet offsets, one per mode.
    pub epsilon: [f64; ORDER],
    /// Relative-change stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_value_range(255.0)
    }
}

impl SolverConfig {
    /// Defaults for data in `[0, 255]` (ε = 1e-4) or `[0, 1]` (ε = 1e-2).
    pub fn for_value_range(range: f64) -> Self {
        let eps = if range <= 1.0 { 1e-2 } else { 1e-4 };
        Self {
            alphas: [0.25; ORDER],
            beta: 1.0,
            epsilon: [eps; ORDER],
            tol: 1e-5,
            max_iter: 100,
        }
    }

    /// Settings for the nuclear-norm baseline. Plain soft-thresholding at
    /// `alpha / beta` needs a threshold on the order of the value range to
    /// shrink anything, hence the small default `beta`.
    pub fn halrtc_for_value_range(range: f64) -> Self {
        Self {
            beta: HALRTC_BETA_SCALE / range,
            ..Self::for_value_range(range)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("negative mode weight in {:?}", self.alphas)));
        }
        let sum: f64 = self.alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mode weights sum to {sum}, expected 1")));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilon must be positive, got {:?}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics of one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub iterations: usize,
    /// `‖X^{k+1} − X^k‖_F / ‖X^k‖_F` for every executed iteration.
    pub rel_changes: Vec<f64>,
    pub converged: bool,
}

/// How singular values are weighted before thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    /// Reweighting by `1 / (sigma + eps)` from the previous auxiliary iterate.
    LogDet,
    /// Unit weights: plain singular-value soft thresholding.
    Uniform,
}

/// Linearisation weights of the logDet surrogate: `1 / (sigma_j + eps)`.
pub fn logdet_weights(sigma: &[f64], eps: f64) -> Result<Vec<f64>> {
    if let Some(s) = sigma.iter().find(|&&s| !(s >= 0.0)) {
        return Err(Error::InvalidValue(format!("singular value {s} is negative or NaN")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidValue(format!("epsilon must be positive, got {eps}")));
    }
    Ok(sigma.iter().map(|s| 1.0 / (s + eps)).collect())
}

/// Thin SVD with singular values sorted nonincreasing.
///
/// Backed by faer: nalgebra's bidiagonal SVD returns wrong factors on some
/// nearly rank-one wide unfoldings.
pub fn svd_sorted(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in SVD input".into()));
    }
    let (rows, cols) = m.shape();
    let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD of a {rows}x{cols} matrix failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u_sorted = DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
    let vt_sorted = DMatrix::from_fn(k, cols, |r, c| v[(c, order[r])]);
    Ok((u_sorted, order.iter().map(|&j| s[j]).collect(), vt_sorted))
}

/// Weighted singular-value thresholding that also returns the shrunk
/// singular values (the singular values of the output).
pub fn weighted_svt_with_values(m: &DMatrix<f64>, tau: f64, omega: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let r = m.nrows().min(m.ncols());
    if omega.len() != r {
        return Err(Error::Shape(format!("{} weights for {r} singular values", omega.len())));
    }
    let (u, sigma, vt) = svd_sorted(m)?;
    let shrunk: Vec<f64> = sigma
        .iter()
        .zip(omega)
        .map(|(s, w)| (s - tau * w).max(0.0))
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (j, &s) in shrunk.iter().enumerate() {
        if s > 0.0 {
            out.ger(s, &u.column(j), &vt.row(j).transpose(), 1.0);
        }
    }
    Ok((out, shrunk))
}

/// `U · max(Σ − τ·diag(ω), 0) · Vᵀ` where `U Σ Vᵀ` is the SVD of `m`.
pub fn weighted_svt(m: &DMatrix<f64>, tau: f64, omega: &[f64]) -> Result<DMatrix<f64>> {
    Ok(weighted_svt_with_values(m, tau, omega)?.0)
}

/// Completes the missing entries of a group of similar patches under the logDet prior.
pub fn admm_complete(group: &PatchGroup, cfg: &SolverConfig) -> Result<(Tensor, SolverTrace)> {
    complete(&group.values, &group.mask, cfg, Shrinkage::LogDet)
}

/// Nuclear-norm (HaLRTC) completion of a whole 4-order tensor.
pub fn halrtc_complete(values: &Tensor, mask: &BinaryTensor, cfg: &SolverConfig) -> Result<(Tensor, SolverTrace)> {
    complete(values, mask, cfg, Shrinkage::Uniform)
}

/// The shared ADMM iteration.
///
/// Modes with a zero weight take no part: their auxiliary variable equals `X`
/// and their multiplier stays zero, so they drop out of the `X` average.
pub fn complete(
    values: &Tensor,
    mask: &BinaryTensor,
    cfg: &SolverConfig,
    shrinkage: Shrinkage,
) -> Result<(Tensor, SolverTrace)> {
    cfg.validate()?;
    if values.order() != ORDER || values.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "expected congruent 4-order values and mask, got {:?} and {:?}",
            values.shape(),
            mask.shape()
        )));
    }
    let observed = mask.data();
    if !observed.iter().any(|&o| o) {
        return Err(Error::Unobserved);
    }
    if values
        .data()
        .iter()
        .zip(observed)
        .any(|(v, &o)| o && !v.is_finite())
    {
        return Err(Error::Numeric("non-finite observed value".into()));
    }
    if observed.iter().all(|&o| o) {
        return Ok((
            values.clone(),
            SolverTrace {
                iterations: 1,
                rel_changes: vec![0.0],
                converged: true,
            },
        ));
    }

    let shape = values.shape().to_vec();
    let len = values.len();
    let beta = cfg.beta;
    let active: Vec<usize> = (0..ORDER).filter(|&i| cfg.alphas[i] > 0.0).collect();
    let share = 1.0 / active.len() as f64;

    let mut x: Vec<f64> = values
        .data()
        .iter()
        .zip(observed)
        .map(|(&v, &o)| if o { v } else { 0.0 })
        .collect();
    let mut aux: Vec<Vec<f64>> = vec![vec![0.0; len]; ORDER];
    let mut dual: Vec<Vec<f64>> = vec![vec![0.0; len]; ORDER];
    let mut aux_sigma: Vec<Vec<f64>> = (0..ORDER)
        .map(|i| {
            let rows = shape[i];
            vec![0.0; rows.min(len / rows)]
        })
        .collect();
    let mut trace = SolverTrace::default();
    let mut x_next = vec![0.0; len];
    let mut shifted = vec![0.0; len];
    // whether the auxiliaries feeding the next X update have any rank
    let mut fed_rank = false;

    for k in 0..cfg.max_iter {
        for p in 0..len {
            x_next[p] = if observed[p] {
                x[p]
            } else {
                share * active.iter().map(|&i| aux[i][p] - dual[i][p] / beta).sum::<f64>()
            };
        }
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite iterate at iteration {}", k + 1)));
        }

        let mut any_rank = false;
        for &i in &active {
            for p in 0..len {
                shifted[p] = x_next[p] + dual[i][p] / beta;
            }
            let unfolded = unfold(&Tensor::new(&shape, shifted.clone())?, i + 1)?.matrix;
            let omega = match shrinkage {
                Shrinkage::LogDet => logdet_weights(&aux_sigma[i], cfg.epsilon[i])?,
                Shrinkage::Uniform => vec![1.0; aux_sigma[i].len()],
            };
            let (shrunk, sigma) = weighted_svt_with_values(&unfolded, cfg.alphas[i] / beta, &omega)?;
            any_rank |= sigma.first().is_some_and(|&s| s > 0.0);
            aux[i] = fold(&shrunk, i + 1, &shape)?.into_data();
            aux_sigma[i] = sigma;
            for p in 0..len {
                dual[i][p] += beta * (x_next[p] - aux[i][p]);
            }
        }

        let diff = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let base = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if base > 0.0 {
            diff / base
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        std::mem::swap(&mut x, &mut x_next);
        trace.iterations = k + 1;
        trace.rel_changes.push(rel);
        // X cannot move while every auxiliary tensor is thresholded to zero,
        // so a vanishing change only counts once X was built from some rank
        let counts = fed_rank;
        fed_rank = any_rank;
        if k > 0 && counts && rel < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((Tensor::new(&shape, x)?, trace))
}
