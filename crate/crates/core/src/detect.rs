//! Two-stage cloud detection: a brightness threshold chosen to maximise the
//! correlation between the cloudy acquisition and the reference mean, then
//! removal of isolated flags by a neighbourhood majority vote.

use crate::error::{Error, Result};
use crate::stack::{ImageStack, ObservationMask};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    /// Threshold increment.
    pub step: f64,
    /// Chebyshev radius of the refinement window.
    pub radius: usize,
    /// A flag survives refinement when at least this fraction of its window is flagged.
    pub majority: f64,
}

impl DetectConfig {
    /// One grey level of an 8-bit image mapped onto `[0, range]`.
    pub fn for_value_range(range: f64) -> Self {
        Self {
            step: range / 255.0,
            radius: 3,
            majority: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("threshold step {} must be positive", self.step)));
        }
        if self.radius == 0 {
            return Err(Error::Config("refinement radius must be at least 1".into()));
        }
        if !(self.majority > 0.0 && self.majority <= 1.0) {
            return Err(Error::Config(format!("majority fraction {} outside (0, 1]", self.majority)));
        }
        Ok(())
    }
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self::for_value_range(255.0)
    }
}

/// Result of the threshold scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScan {
    pub mask: ObservationMask,
    /// Threshold of the returned mask; pixels brighter than it are flagged.
    pub gamma: f64,
    pub correlation: f64,
    /// Every visited threshold with its correlation (`None` when undefined).
    pub trace: Vec<(f64, Option<f64>)>,
}

/// Pearson correlation of two equally long samples; `None` when either is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_time(stack: &ImageStack, t1: usize) -> Result<()> {
    let d = stack.dims();
    if d.times < 2 {
        return Err(Error::Shape("cloud detection needs at least one reference acquisition".into()));
    }
    if t1 >= d.times {
        return Err(Error::OutOfBounds(format!("time {t1} outside 0..{}", d.times)));
    }
    Ok(())
}

/// Running sums for a correlation over a growing set, centred on fixed
/// offsets to limit cancellation.
#[derive(Default)]
struct Moments {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Moments {
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn correlation(&self) -> Option<f64> {
        if self.n == 0.0 {
            return None;
        }
        let vx = self.sxx - self.sx * self.sx / self.n;
        let vy = self.syy - self.sy * self.sy / self.n;
        let c = self.sxy - self.sx * self.sy / self.n;
        // relative round-off guard against spurious variance of constant data
        let tiny = 1e-12;
        if vx <= tiny * self.sxx.max(1.0) || vy <= tiny * self.syy.max(1.0) {
            return None;
        }
        Some((c / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Scans thresholds upwards from zero in increments of `cfg.step`.
///
/// At threshold `g` the pixels of time `t1` whose brightest band exceeds `g`
/// count as cloud, and the correlation between the remaining target values
/// and the per-pixel mean of the other acquisitions is evaluated. The scan
/// stops at the first strict decrease (or once nothing is flagged) and the
/// mask with the highest correlation is returned, later thresholds winning ties.
pub fn threshold_detect(stack: &ImageStack, t1: usize, cfg: &DetectConfig) -> Result<ThresholdScan> {
    cfg.validate()?;
    check_time(stack, t1)?;
    let d = stack.dims();
    let (m, n, b, t) = (d.height, d.width, d.bands, d.times);
    let pixels = m * n;

    let mut brightness = vec![0.0f64; pixels];
    let mut target = vec![0.0f64; pixels * b];
    let mut reference = vec![0.0f64; pixels * b];
    for j in 0..n {
        for i in 0..m {
            let p = i + m * j;
            for k in 0..b {
                let x = stack.get(i, j, k, t1);
                brightness[p] = brightness[p].max(x);
                target[p * b + k] = x;
                let r: f64 = (0..t).filter(|&l| l != t1).map(|l| stack.get(i, j, k, l)).sum();
                reference[p * b + k] = r / (t - 1) as f64;
            }
        }
    }
    let cx = target.iter().sum::<f64>() / target.len() as f64;
    let cy = reference.iter().sum::<f64>() / reference.len() as f64;

    // pixels with some signal, darkest first
    let mut order: Vec<usize> = (0..pixels).filter(|&p| brightness[p] > 0.0).collect();
    order.sort_by(|&a, &c| brightness[a].total_cmp(&brightness[c]).then(a.cmp(&c)));
    let top = order.last().map_or(0.0, |&p| brightness[p]);

    let mut moments = Moments::default();
    let mut next = 0;
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut prev: Option<f64> = None;
    let mut step_index = 0usize;
    loop {
        let gamma = step_index as f64 * cfg.step;
        while next < order.len() && brightness[order[next]] <= gamma {
            let p = order[next];
            for k in 0..b {
                moments.add(target[p * b + k] - cx, reference[p * b + k] - cy);
            }
            next += 1;
        }
        let f = moments.correlation();
        trace.push((gamma, f));
        if let Some(f) = f {
            if prev.is_some_and(|p| f < p - 1e-12) {
                break;
            }
            if best.is_none_or(|(_, bf)| f >= bf - 1e-12) {
                best = Some((step_index, best.map_or(f, |(_, bf)| bf.max(f))));
            }
            prev = Some(f);
        }
        if gamma >= top {
            break;
        }
        step_index += 1;
    }
    let Some((best_index, _)) = best else {
        return Err(Error::DetectionUndefined(
            "the target or reference is constant on every candidate region".into(),
        ));
    };
    let gamma = best_index as f64 * cfg.step;
    let correlation = trace[best_index].1.expect("best threshold has a defined correlation");
    let mask = ObservationMask::from_pixels(d, |i, j, l| {
        l == t1 && {
            let bright = brightness[i + m * j];
            bright <= 0.0 || bright > gamma
        }
    });
    Ok(ThresholdScan {
        mask,
        gamma,
        correlation,
        trace,
    })
}

/// Clears cloud flags at `t1` that are in the minority of their
/// `(2 r + 1)^2` window, clipped to the image. Decisions use the input mask only.
pub fn knn_refine(mask: &ObservationMask, t1: usize, cfg: &DetectConfig) -> Result<ObservationMask> {
    cfg.validate()?;
    let d = mask.dims();
    if t1 >= d.times {
        return Err(Error::OutOfBounds(format!("time {t1} outside 0..{}", d.times)));
    }
    let (m, n) = (d.height, d.width);
    // summed-area table of flagged pixels
    let mut sat = vec![0usize; (m + 1) * (n + 1)];
    for j in 0..n {
        for i in 0..m {
            let flagged = usize::from(!mask.is_observed(i, j, 0, t1));
            sat[(i + 1) + (m + 1) * (j + 1)] =
                flagged + sat[i + (m + 1) * (j + 1)] + sat[(i + 1) + (m + 1) * j] - sat[i + (m + 1) * j];
        }
    }
    let r = cfg.radius;
    let keep = |i: usize, j: usize| {
        let (i0, i1) = (i.saturating_sub(r), (i + r + 1).min(m));
        let (j0, j1) = (j.saturating_sub(r), (j + r + 1).min(n));
        let count = sat[i1 + (m + 1) * j1] + sat[i0 + (m + 1) * j0] - sat[i0 + (m + 1) * j1] - sat[i1 + (m + 1) * j0];
        let area = (i1 - i0) * (j1 - j0);
        count as f64 / area as f64 >= cfg.majority
    };
    Ok(ObservationMask::from_pixels(d, |i, j, l| {
        !mask.is_observed(i, j, 0, l) && (l != t1 || keep(i, j))
    }))
}

/// Threshold scan followed by refinement.
pub fn detect_clouds(stack: &ImageStack, t1: usize, cfg: &DetectConfig) -> Result<ObservationMask> {
    let scan = threshold_detect(stack, t1, cfg)?;
    log::info!(
        "threshold {} gives correlation {:.6} after {} steps",
        scan.gamma,
        scan.correlation,
        scan.trace.len()
    );
    knn_refine(&scan.mask, t1, cfg)
}
