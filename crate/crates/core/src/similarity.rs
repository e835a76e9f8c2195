//! Masked normalized cross-correlation, windowed similar-patch search and
//! stacking of similar patches into 4-order groups.

use crate::error::{Error, Result};
use crate::rearrange::WorkingTensor;
use crate::tensor::{BinaryTensor, Tensor};

/// Top-left anchor of a `width × width × bands` patch in the working tensor (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchRef {
    pub row: usize,
    pub col: usize,
    pub width: usize,
}

impl PatchRef {
    pub fn new(row: usize, col: usize, width: usize) -> Self {
        Self { row, col, width }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.width).contains(&row)
            && (self.col..self.col + self.width).contains(&col)
    }

    fn check(&self, w: &WorkingTensor) -> Result<()> {
        if self.width == 0 || self.row + self.width > w.rows() || self.col + self.width > w.cols() {
            return Err(Error::OutOfBounds(format!(
                "patch {self:?} in a {}x{} working tensor",
                w.rows(),
                w.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub patch_width: usize,
    pub radius: usize,
    pub step: usize,
    /// Minimum NCC for a candidate to join the group.
    pub threshold: f64,
    /// Groups smaller than this are back-filled with the best remaining candidates.
    pub min_group: usize,
    /// Minimum fraction of patch entries observed in both patches for NCC to be defined.
    pub min_overlap: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            patch_width: 4,
            radius: 100,
            step: 2,
            threshold: 0.91,
            min_group: 10,
            min_overlap: 0.5,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, times: usize) -> Result<()> {
        if self.patch_width == 0 || self.patch_width % times != 0 {
            return Err(Error::Config(format!(
                "patch width {} must be a positive multiple of the time count {times}",
                self.patch_width
            )));
        }
        if self.step == 0 {
            return Err(Error::Config("search step must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "similarity threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if self.min_group == 0 {
            return Err(Error::Config("minimum group size must be at least 1".into()));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::Config(format!(
                "minimum overlap {} outside (0, 1]",
                self.min_overlap
            )));
        }
        if self.radius / times <= 20 {
            log::debug!(
                "search radius {} gives fewer than 20 original columns per side",
                self.radius
            );
        }
        Ok(())
    }
}

/// Borrowed patch values with optional observation flags (`None` = fully observed).
#[derive(Debug, Clone, Copy)]
pub struct MaskedPatch<'a> {
    pub values: &'a [f64],
    pub observed: Option<&'a [bool]>,
}

impl<'a> MaskedPatch<'a> {
    pub fn new(values: &'a [f64], observed: &'a [bool]) -> Self {
        Self {
            values,
            observed: Some(observed),
        }
    }

    pub fn full(values: &'a [f64]) -> Self {
        Self {
            values,
            observed: None,
        }
    }

    #[inline]
    fn is_observed(&self, p: usize) -> bool {
        self.observed.is_none_or(|o| o[p])
    }

    fn mask_len(&self) -> usize {
        self.observed.map_or(self.values.len(), <[bool]>::len)
    }

    pub fn observed_count(&self) -> usize {
        (0..self.values.len()).filter(|&p| self.is_observed(p)).count()
    }
}

/// Normalized cross-correlation over the entries observed in both patches.
///
/// Means are taken over the joint set only. Returns `Ok(None)` when the joint
/// set covers less than `min_overlap` of the patch or either patch is constant
/// on it.
pub fn ncc(a: MaskedPatch<'_>, b: MaskedPatch<'_>, min_overlap: f64) -> Result<Option<f64>> {
    let len = a.values.len();
    if b.values.len() != len || a.mask_len() != len || b.mask_len() != len {
        return Err(Error::Shape(format!(
            "patch sizes differ: {}/{} vs {}/{}",
            len,
            a.mask_len(),
            b.values.len(),
            b.mask_len()
        )));
    }
    if len == 0 {
        return Ok(None);
    }
    let joint = |p: usize| a.is_observed(p) && b.is_observed(p);
    let (mut count, mut sa, mut sb) = (0usize, 0.0, 0.0);
    for p in (0..len).filter(|&p| joint(p)) {
        count += 1;
        sa += a.values[p];
        sb += b.values[p];
    }
    if (count as f64) < min_overlap * len as f64 || count == 0 {
        return Ok(None);
    }
    let (ma, mb) = (sa / count as f64, sb / count as f64);
    let (mut cross, mut va, mut vb) = (0.0, 0.0, 0.0);
    for p in (0..len).filter(|&p| joint(p)) {
        let (da, db) = (a.values[p] - ma, b.values[p] - mb);
        cross += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(None);
    }
    Ok(Some((cross / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)))
}

/// Copies one patch out of the working tensor, rows fastest, then columns, then bands.
pub(crate) fn extract_patch(w: &WorkingTensor, p: PatchRef, values: &mut Vec<f64>, observed: &mut Vec<bool>) {
    values.clear();
    observed.clear();
    let rows = w.rows();
    let cols = w.cols();
    let (vd, md) = (w.values.data(), w.mask.data());
    for k in 0..w.bands() {
        for c in p.col..p.col + p.width {
            let base = p.row + rows * (c + cols * k);
            values.extend_from_slice(&vd[base..base + p.width]);
            observed.extend_from_slice(&md[base..base + p.width]);
        }
    }
}

/// A candidate anchor with its similarity to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPatch {
    pub patch: PatchRef,
    pub score: f64,
}

/// Outcome of a search: the target first, then the admitted candidates in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub members: Vec<ScoredPatch>,
    /// True when the threshold admitted too few patches and the best
    /// remaining candidates were used instead.
    pub backfilled: bool,
}

impl SearchOutcome {
    pub fn refs(&self) -> Vec<PatchRef> {
        self.members.iter().map(|m| m.patch).collect()
    }
}

fn validate_target(w: &WorkingTensor, target: PatchRef, cfg: &SearchConfig) -> Result<()> {
    cfg.validate(w.dims.times)?;
    if target.width != cfg.patch_width {
        return Err(Error::Config(format!(
            "target width {} differs from configured patch width {}",
            target.width, cfg.patch_width
        )));
    }
    target.check(w)?;
    if target.col % w.dims.times != 0 {
        return Err(Error::OutOfBounds(format!(
            "target column {} is not aligned to a block of {} acquisitions",
            target.col, w.dims.times
        )));
    }
    Ok(())
}

/// Scans the square window around `target` and ranks candidates by NCC.
pub fn search_scored(w: &WorkingTensor, target: PatchRef, cfg: &SearchConfig) -> Result<SearchOutcome> {
    validate_target(w, target, cfg)?;
    let t = w.dims.times;
    let pw = cfg.patch_width;
    let (mut tv, mut tm) = (Vec::new(), Vec::new());
    extract_patch(w, target, &mut tv, &mut tm);
    let target_patch = MaskedPatch::new(&tv, &tm);
    let target_score = ncc(target_patch, target_patch, f64::MIN_POSITIVE)?.unwrap_or(1.0);
    let target_entry = ScoredPatch {
        patch: target,
        score: target_score,
    };
    if target_patch.observed_count() == 0 {
        return Err(Error::DegenerateGroup {
            row: target.row,
            col: target.col,
        });
    }

    let reach = (cfg.radius / cfg.step) as isize;
    let step = cfg.step as isize;
    let max_row = (w.rows() - pw) as isize;
    let max_col = (w.cols() - pw) as isize;
    let (mut cv, mut cm) = (Vec::new(), Vec::new());
    let mut defined = Vec::new();
    let mut any_candidate = false;
    for dr in -reach..=reach {
        let row = target.row as isize + dr * step;
        if row < 0 || row > max_row {
            continue;
        }
        for dc in -reach..=reach {
            let col = target.col as isize + dc * step;
            if col < 0 || col > max_col || col as usize % t != 0 || (dr == 0 && dc == 0) {
                continue;
            }
            any_candidate = true;
            let patch = PatchRef::new(row as usize, col as usize, pw);
            extract_patch(w, patch, &mut cv, &mut cm);
            if let Some(score) = ncc(target_patch, MaskedPatch::new(&cv, &cm), cfg.min_overlap)? {
                defined.push(ScoredPatch { patch, score });
            }
        }
    }
    if !any_candidate {
        return Ok(SearchOutcome {
            members: vec![target_entry],
            backfilled: true,
        });
    }
    if defined.is_empty() {
        return Err(Error::DegenerateGroup {
            row: target.row,
            col: target.col,
        });
    }

    let passing = defined.iter().filter(|c| c.score >= cfg.threshold).count();
    let mut members = vec![target_entry];
    let backfilled = passing + 1 < cfg.min_group;
    if backfilled {
        let mut order: Vec<usize> = (0..defined.len()).collect();
        // stable sort keeps scan order among equal scores
        order.sort_by(|&a, &b| defined[b].score.total_cmp(&defined[a].score));
        order.truncate(cfg.min_group - 1);
        order.sort_unstable();
        members.extend(order.into_iter().map(|i| defined[i]));
    } else {
        members.extend(defined.into_iter().filter(|c| c.score >= cfg.threshold));
    }
    Ok(SearchOutcome { members, backfilled })
}

/// Similar patches for `target`; the target itself is always the first entry.
pub fn search_similar(w: &WorkingTensor, target: PatchRef, cfg: &SearchConfig) -> Result<Vec<PatchRef>> {
    Ok(search_scored(w, target, cfg)?.refs())
}

/// Similar patches stacked along a fourth mode, with their masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub values: Tensor,
    pub mask: BinaryTensor,
    pub members: Vec<PatchRef>,
    pub target_index: usize,
}

impl PatchGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.values.len() / self.members.len()
    }

    /// Values of member `p` in patch order (rows, columns, bands).
    pub fn member_values(&self, p: usize) -> &[f64] {
        let len = self.patch_len();
        &self.values.data()[p * len..(p + 1) * len]
    }

    pub fn member_mask(&self, p: usize) -> &[bool] {
        let len = self.patch_len();
        &self.mask.data()[p * len..(p + 1) * len]
    }
}

/// Stacks the patches at `refs` into a `width × width × bands × refs.len()` group.
/// The first reference is recorded as the target.
pub fn group_patches(w: &WorkingTensor, refs: &[PatchRef]) -> Result<PatchGroup> {
    let Some(first) = refs.first() else {
        return Err(Error::Shape("cannot group an empty list of patches".into()));
    };
    let pw = first.width;
    for r in refs {
        r.check(w)?;
        if r.width != pw {
            return Err(Error::Shape(format!(
                "mixed patch widths {pw} and {}",
                r.width
            )));
        }
    }
    let shape = [pw, pw, w.bands(), refs.len()];
    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut mask = Vec::with_capacity(total);
    let (mut pv, mut pm) = (Vec::new(), Vec::new());
    for &r in refs {
        extract_patch(w, r, &mut pv, &mut pm);
        values.extend_from_slice(&pv);
        mask.extend_from_slice(&pm);
    }
    Ok(PatchGroup {
        values: Tensor::new(&shape, values)?,
        mask: BinaryTensor::new(&shape, mask)?,
        members: refs.to_vec(),
        target_index: 0,
    })
}
