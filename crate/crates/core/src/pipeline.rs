//! The inpainting loop: pick the first missing pixel of the working tensor,
//! group patches similar to the one covering it, complete the group and
//! write the recovered entries back until nothing is missing.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rearrange::{rearrange_forward, rearrange_inverse, WorkingTensor};
use crate::similarity::{group_patches, search_scored, PatchRef, SearchConfig};
use crate::solver::{admm_complete, halrtc_complete, SolverConfig};
use crate::stack::{ImageStack, ObservationMask, StackDims};
use crate::tensor::{BinaryTensor, Tensor};

/// What to do with targets whose similarity search is undecidable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Retry in a second pass, then fill leftovers with HaLRTC on their bounding box.
    #[default]
    DeferThenHalrtc,
    /// Stop with an uncompleted-region error.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Sequential,
    /// Rounds of groups built from one frozen snapshot and solved concurrently.
    /// Results differ from sequential mode.
    SnapshotParallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub search: SearchConfig,
    pub solver: SolverConfig,
    /// Solver settings for the HaLRTC fallback.
    pub halrtc: SolverConfig,
    pub fallback: FallbackPolicy,
    pub mode: ExecutionMode,
}

impl PipelineConfig {
    pub fn for_value_range(range: f64) -> Self {
        Self {
            search: SearchConfig::default(),
            solver: SolverConfig::for_value_range(range),
            halrtc: SolverConfig::halrtc_for_value_range(range),
            fallback: FallbackPolicy::default(),
            mode: ExecutionMode::default(),
        }
    }

    pub fn validate(&self, dims: StackDims) -> Result<()> {
        self.search.validate(dims.times)?;
        self.solver.validate()?;
        self.halrtc.validate()?;
        let w = self.search.patch_width;
        if dims.height < w || dims.width * dims.times < w {
            return Err(Error::Shape(format!(
                "a {w}x{w} patch does not fit the working tensor of {dims}"
            )));
        }
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_value_range(255.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineReport {
    pub groups: usize,
    pub solver_iterations: usize,
    pub unconverged_groups: usize,
    pub backfilled_groups: usize,
    pub largest_group: usize,
    /// Missing entries, counted over all bands.
    pub missing_before: usize,
    pub missing_after: usize,
    pub deferred_targets: usize,
    /// Entries filled by the HaLRTC fallback rather than by patch groups.
    pub fallback_entries: usize,
    pub wall_time: Duration,
}

impl PipelineReport {
    /// `key = value` lines. Wall time is left out so that reports of
    /// identical runs are identical.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "groups = {}", self.groups);
        let _ = writeln!(out, "solver_iterations = {}", self.solver_iterations);
        let _ = writeln!(out, "unconverged_groups = {}", self.unconverged_groups);
        let _ = writeln!(out, "backfilled_groups = {}", self.backfilled_groups);
        let _ = writeln!(out, "largest_group = {}", self.largest_group);
        let _ = writeln!(out, "missing_before = {}", self.missing_before);
        let _ = writeln!(out, "missing_after = {}", self.missing_after);
        let _ = writeln!(out, "deferred_targets = {}", self.deferred_targets);
        let _ = writeln!(out, "fallback_entries = {}", self.fallback_entries);
        out
    }
}

/// Aligned in-bounds anchor of the patch covering working pixel `(i, v)`.
pub fn anchor_for(w: &WorkingTensor, width: usize, i: usize, v: usize) -> PatchRef {
    let t = w.dims.times;
    let row = i.min(w.rows() - width);
    let col = ((v / t) * t).min(w.cols() - width);
    PatchRef::new(row, col, width)
}

fn pixel_observed(w: &WorkingTensor, i: usize, v: usize) -> bool {
    // masks are band-consistent, band 0 decides
    w.mask.data()[i + w.rows() * v]
}

/// Completed group values ready to be merged into the working tensor.
struct Solved {
    members: Vec<PatchRef>,
    values: Tensor,
    iterations: usize,
    converged: bool,
    backfilled: bool,
}

fn solve_target(w: &WorkingTensor, target: PatchRef, cfg: &PipelineConfig) -> Result<Solved> {
    let outcome = search_scored(w, target, &cfg.search)?;
    let group = group_patches(w, &outcome.refs())?;
    let (values, trace) = admm_complete(&group, &cfg.solver)?;
    Ok(Solved {
        members: group.members,
        values,
        iterations: trace.iterations,
        converged: trace.converged,
        backfilled: outcome.backfilled,
    })
}

/// Writes still-missing entries of every member, target first; returns how many.
fn merge(w: &mut WorkingTensor, solved: &Solved) -> usize {
    let rows = w.rows();
    let cols = w.cols();
    let range = w.value_range;
    let bands = w.bands();
    let data = solved.values.data();
    let mut written = 0;
    let mut pos = 0;
    for p in &solved.members {
        for k in 0..bands {
            for c in p.col..p.col + p.width {
                for r in p.row..p.row + p.width {
                    let off = r + rows * (c + cols * k);
                    if !w.mask.data()[off] {
                        w.values.data_mut()[off] = data[pos].clamp(0.0, range);
                        w.mask.data_mut()[off] = true;
                        written += 1;
                    }
                    pos += 1;
                }
            }
        }
    }
    written
}

fn record(report: &mut PipelineReport, solved: &Solved) {
    report.groups += 1;
    report.solver_iterations += solved.iterations;
    report.unconverged_groups += usize::from(!solved.converged);
    report.backfilled_groups += usize::from(solved.backfilled);
    report.largest_group = report.largest_group.max(solved.members.len());
}

/// One row-major sweep. Undecidable targets are returned instead of failing.
fn sequential_pass(
    w: &mut WorkingTensor,
    cfg: &PipelineConfig,
    report: &mut PipelineReport,
) -> Result<Vec<(usize, usize)>> {
    let (rows, cols) = (w.rows(), w.cols());
    let width = cfg.search.patch_width;
    let mut undecided = Vec::new();
    // targets that failed since the last write would fail again
    let mut failed = HashSet::new();
    // entries only ever turn observed, so a forward cursor finds the first missing pixel
    for i in 0..rows {
        for v in 0..cols {
            if pixel_observed(w, i, v) {
                continue;
            }
            let target = anchor_for(w, width, i, v);
            if failed.contains(&(target.row, target.col)) {
                undecided.push((i, v));
                continue;
            }
            match solve_target(w, target, cfg) {
                Ok(solved) => {
                    let written = merge(w, &solved);
                    debug_assert!(written > 0);
                    record(report, &solved);
                    failed.clear();
                }
                Err(Error::DegenerateGroup { .. }) => {
                    failed.insert((target.row, target.col));
                    undecided.push((i, v));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(undecided)
}

fn parallel_pass(
    w: &mut WorkingTensor,
    cfg: &PipelineConfig,
    report: &mut PipelineReport,
) -> Result<Vec<(usize, usize)>> {
    let (rows, cols) = (w.rows(), w.cols());
    let width = cfg.search.patch_width;
    loop {
        // one seed per distinct target, in row-major order of first missing pixel
        let mut seeds: Vec<((usize, usize), PatchRef)> = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..rows {
            for v in 0..cols {
                if pixel_observed(w, i, v) {
                    continue;
                }
                let target = anchor_for(w, width, i, v);
                if seen.insert((target.row, target.col)) {
                    seeds.push(((i, v), target));
                }
            }
        }
        if seeds.is_empty() {
            return Ok(Vec::new());
        }
        let snapshot: &WorkingTensor = w;
        let results: Vec<Result<Solved>> = seeds
            .par_iter()
            .map(|&(_, target)| solve_target(snapshot, target, cfg))
            .collect();
        let mut progress = 0;
        let mut undecided = Vec::new();
        for (&(seed, _), res) in seeds.iter().zip(results) {
            match res {
                Ok(solved) => {
                    progress += merge(w, &solved);
                    record(report, &solved);
                }
                Err(Error::DegenerateGroup { .. }) => undecided.push(seed),
                Err(e) => return Err(e),
            }
        }
        if progress == 0 {
            return Ok(undecided);
        }
    }
}

fn run_pass(w: &mut WorkingTensor, cfg: &PipelineConfig, report: &mut PipelineReport) -> Result<Vec<(usize, usize)>> {
    match cfg.mode {
        ExecutionMode::Sequential => sequential_pass(w, cfg, report),
        ExecutionMode::SnapshotParallel => parallel_pass(w, cfg, report),
    }
}

/// Remaining missing pixels of the working tensor as stack coordinates `(i, j, l)`.
fn missing_pixels(w: &WorkingTensor) -> Vec<(usize, usize, usize)> {
    let t = w.dims.times;
    let mut out = Vec::new();
    for i in 0..w.rows() {
        for v in 0..w.cols() {
            if !pixel_observed(w, i, v) {
                out.push((i, v / t, v % t));
            }
        }
    }
    out
}

fn uncompleted(missing: &[(usize, usize, usize)]) -> Error {
    Error::Uncompleted {
        count: missing.len(),
        first: missing.iter().take(10).copied().collect(),
    }
}

/// Fills the leftovers with HaLRTC on the original data inside their
/// bounding box, widened by `margin` pixels on every side.
fn halrtc_fallback(
    w: &mut WorkingTensor,
    stack: &ImageStack,
    mask: &ObservationMask,
    cfg: &SolverConfig,
    missing: &[(usize, usize, usize)],
    margin: usize,
) -> Result<usize> {
    let d = stack.dims();
    let i0 = missing.iter().map(|p| p.0).min().unwrap_or(0).saturating_sub(margin);
    let i1 = (missing.iter().map(|p| p.0).max().unwrap_or(0) + margin).min(d.height - 1);
    let j0 = missing.iter().map(|p| p.1).min().unwrap_or(0).saturating_sub(margin);
    let j1 = (missing.iter().map(|p| p.1).max().unwrap_or(0) + margin).min(d.width - 1);
    let shape = [i1 - i0 + 1, j1 - j0 + 1, d.bands, d.times];
    let values = Tensor::from_fn(&shape, |x| stack.get(x[0] + i0, x[1] + j0, x[2], x[3]))?;
    let observed = BinaryTensor::from_fn(&shape, |x| mask.is_observed(x[0] + i0, x[1] + j0, x[2], x[3]))?;
    let (filled, _) = halrtc_complete(&values, &observed, cfg).map_err(|_| uncompleted(missing))?;
    let (rows, cols, t) = (w.rows(), w.cols(), d.times);
    let mut written = 0;
    for &(i, j, l) in missing {
        for k in 0..d.bands {
            let off = i + rows * (j * t + l + cols * k);
            if !w.mask.data()[off] {
                let x = filled.get(&[i - i0, j - j0, k, l]);
                w.values.data_mut()[off] = x.clamp(0.0, w.value_range);
                w.mask.data_mut()[off] = true;
                written += 1;
            }
        }
    }
    Ok(written)
}

/// Reconstructs every missing entry of `stack`. Observed entries are returned unchanged.
pub fn inpaint(
    stack: &ImageStack,
    mask: &ObservationMask,
    cfg: &PipelineConfig,
) -> Result<(ImageStack, PipelineReport)> {
    let start = Instant::now();
    mask.check_congruent(stack)?;
    cfg.validate(stack.dims())?;
    let mut report = PipelineReport {
        missing_before: mask.missing_count(),
        ..PipelineReport::default()
    };
    if report.missing_before == 0 {
        report.wall_time = start.elapsed();
        return Ok((stack.clone(), report));
    }
    if report.missing_before == mask.tensor().len() {
        return Err(Error::Unobserved);
    }

    let mut w = rearrange_forward(stack, mask)?;
    let undecided = run_pass(&mut w, cfg, &mut report)?;
    if !undecided.is_empty() {
        report.deferred_targets = undecided.len();
        if cfg.fallback == FallbackPolicy::Abort {
            return Err(uncompleted(&missing_pixels(&w)));
        }
        log::info!("{} targets deferred to a second pass", undecided.len());
        run_pass(&mut w, cfg, &mut report)?;
        let left = missing_pixels(&w);
        if !left.is_empty() {
            log::warn!("{} pixels left after two passes, using the HaLRTC fallback", left.len());
            report.fallback_entries = halrtc_fallback(&mut w, stack, mask, &cfg.halrtc, &left, cfg.search.patch_width)?;
        }
    }
    report.missing_after = w.missing_count();
    if report.missing_after > 0 {
        return Err(uncompleted(&missing_pixels(&w)));
    }
    let (out, _) = rearrange_inverse(&w)?;
    report.wall_time = start.elapsed();
    Ok((restore_observed(out, stack, mask)?, report))
}

/// Copies the observed entries of `src` over `out` bit for bit.
fn restore_observed(out: ImageStack, src: &ImageStack, mask: &ObservationMask) -> Result<ImageStack> {
    let range = out.value_range();
    let mut values = out.into_values();
    for ((v, &s), &o) in values
        .data_mut()
        .iter_mut()
        .zip(src.values().data())
        .zip(mask.tensor().data())
    {
        if o {
            *v = s;
        }
    }
    ImageStack::new(values, range)
}

/// Whole-stack HaLRTC baseline without patching.
pub fn halrtc(
    stack: &ImageStack,
    mask: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(ImageStack, crate::solver::SolverTrace)> {
    mask.check_congruent(stack)?;
    let (x, trace) = halrtc_complete(stack.values(), mask.tensor(), cfg)?;
    let range = stack.value_range();
    let values = x.map(|v| v.clamp(0.0, range));
    let out = ImageStack::new(values, range)?;
    Ok((restore_observed(out, stack, mask)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::StackDims;

    fn tiled_stack(dims: StackDims) -> ImageStack {
        // period-4 texture in both directions, same at every time
        let t = Tensor::from_fn(&dims.shape(), |x| {
            let (i, j, k) = (x[0] % 4, x[1] % 4, x[2]);
            (20 + 13 * i + 29 * j + 7 * i * j + 40 * k) as f64
        })
        .unwrap();
        ImageStack::new(t, 255.0).unwrap()
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            search: SearchConfig {
                radius: 16,
                min_group: 4,
                ..SearchConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn nothing_missing() {
        let dims = StackDims::new(8, 8, 2, 4).unwrap();
        let s = tiled_stack(dims);
        let (out, rep) = inpaint(&s, &ObservationMask::all_observed(dims), &small_cfg()).unwrap();
        assert_eq!(out, s);
        assert_eq!(rep.groups, 0);
        assert_eq!(rep.missing_after, 0);
    }

    #[test]
    fn single_missing_pixel_in_tiling() {
        let dims = StackDims::new(16, 16, 2, 4).unwrap();
        // every candidate patch equals the target and the group is rank one
        let t = Tensor::from_fn(&dims.shape(), |x| (60.0 + 40.0 * (x[0] % 2) as f64) * (1.0 + x[2] as f64)).unwrap();
        let s = ImageStack::new(t, 255.0).unwrap();
        let mask = ObservationMask::from_pixels(dims, |i, j, l| (i, j, l) == (6, 9, 2));
        // the default tolerance is relative to the whole group and stops ~0.05 short
        let mut cfg = small_cfg();
        cfg.solver.tol = 1e-12;
        cfg.solver.max_iter = 300;
        let (out, rep) = inpaint(&s, &mask, &cfg).unwrap();
        assert_eq!(rep.groups, 1);
        assert_eq!(rep.missing_before, 2);
        for k in 0..2 {
            assert!((out.get(6, 9, k, 2) - s.get(6, 9, k, 2)).abs() < 1e-6);
        }
        for (p, (&a, &b)) in out.values().data().iter().zip(s.values().data()).enumerate() {
            if mask.tensor().data()[p] {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn anchors_are_aligned_and_clamped() {
        let dims = StackDims::new(10, 5, 1, 4).unwrap();
        let s = tiled_stack(dims);
        let w = rearrange_forward(&s, &ObservationMask::all_observed(dims)).unwrap();
        assert_eq!(anchor_for(&w, 4, 3, 7), PatchRef::new(3, 4, 4));
        assert_eq!(anchor_for(&w, 4, 9, 19), PatchRef::new(6, 16, 4));
        let p = anchor_for(&w, 4, 8, 13);
        assert!(p.contains(8, 13) && p.col % 4 == 0);
    }

    #[test]
    fn fully_hidden_block_is_completed() {
        let dims = StackDims::new(24, 24, 2, 4).unwrap();
        let s = tiled_stack(dims);
        // an 8x8 hole at time 1 is wider than a patch
        let mask = ObservationMask::from_pixels(dims, |i, j, l| l == 1 && (8..16).contains(&i) && (8..16).contains(&j));
        let (out, rep) = inpaint(&s, &mask, &small_cfg()).unwrap();
        assert_eq!(rep.missing_after, 0);
        assert_eq!(rep.missing_before, 128);
        let err = out
            .values()
            .data()
            .iter()
            .zip(s.values().data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1.0, "max error {err}");
    }

    #[test]
    fn abort_policy_reports_uncompleted() {
        let dims = StackDims::new(8, 4, 1, 4).unwrap();
        let s = tiled_stack(dims);
        // every acquisition of columns 0..2 hidden: targets there have nothing observed
        let mask = ObservationMask::from_pixels(dims, |_, j, _| j < 2);
        let cfg = PipelineConfig {
            fallback: FallbackPolicy::Abort,
            ..small_cfg()
        };
        assert!(matches!(inpaint(&s, &mask, &cfg), Err(Error::Uncompleted { .. })));
        let (out, rep) = inpaint(&s, &mask, &small_cfg()).unwrap();
        assert_eq!(rep.missing_after, 0);
        assert!(rep.deferred_targets > 0);
        assert_eq!(out.dims(), dims);
    }

    #[test]
    fn deterministic_and_modes_agree_on_observed() {
        let dims = StackDims::new(16, 16, 2, 4).unwrap();
        let s = tiled_stack(dims);
        let mask = ObservationMask::from_pixels(dims, |i, j, l| l == 3 && (i + 2 * j) % 7 == 0);
        let (a, ra) = inpaint(&s, &mask, &small_cfg()).unwrap();
        let (b, rb) = inpaint(&s, &mask, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.to_kv_string(), rb.to_kv_string());
        let par = PipelineConfig {
            mode: ExecutionMode::SnapshotParallel,
            ..small_cfg()
        };
        let (c, rc) = inpaint(&s, &mask, &par).unwrap();
        assert_eq!(rc.missing_after, 0);
        for (p, &o) in mask.tensor().data().iter().enumerate() {
            if o {
                assert_eq!(c.values().data()[p].to_bits(), s.values().data()[p].to_bits());
            }
        }
    }

    #[test]
    fn rejects_empty_and_incongruent() {
        let dims = StackDims::new(8, 8, 1, 4).unwrap();
        let s = tiled_stack(dims);
        let none = ObservationMask::from_pixels(dims, |_, _, _| true);
        assert!(matches!(inpaint(&s, &none, &small_cfg()), Err(Error::Unobserved)));
        let other = ObservationMask::all_observed(StackDims::new(8, 8, 1, 2).unwrap());
        assert!(matches!(inpaint(&s, &other, &small_cfg()), Err(Error::Congruence(_))));
    }

    #[test]
    fn halrtc_keeps_observed() {
        let dims = StackDims::new(8, 8, 2, 4).unwrap();
        let s = tiled_stack(dims);
        let mask = ObservationMask::from_pixels(dims, |i, j, l| l == 0 && i < 3 && j < 3);
        let (out, trace) = halrtc(&s, &mask, &SolverConfig::halrtc_for_value_range(255.0)).unwrap();
        assert!(trace.iterations >= 1);
        for (p, &o) in mask.tensor().data().iter().enumerate() {
            if o {
                assert_eq!(out.values().data()[p].to_bits(), s.values().data()[p].to_bits());
            }
        }
    }
}
