//! Full-reference (PSNR, SSIM) and no-reference (Q, average gradient)
//! quality metrics, evaluated per band and averaged over bands.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stack::{ImageStack, ObservationMask};

fn check_same_len(x: &[f64], reference: &[f64]) -> Result<()> {
    if x.len() != reference.len() {
        return Err(Error::Shape(format!(
            "images have {} and {} pixels",
            x.len(),
            reference.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Shape("empty image".into()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(x: &[f64], reference: &[f64], max_val: f64) -> Result<f64> {
    check_same_len(x, reference)?;
    let sq: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    if sq == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (x.len() as f64 * max_val * max_val / sq).log10())
}

/// Single-window SSIM over the whole image, with `c1 = (0.01 L)^2` and
/// `c2 = (0.03 L)^2`. Variances and covariance use the population (1/N) form.
pub fn ssim(x: &[f64], reference: &[f64], max_val: f64) -> Result<f64> {
    check_same_len(x, reference)?;
    let n = x.len() as f64;
    let c1 = (0.01 * max_val).powi(2);
    let c2 = (0.03 * max_val).powi(2);
    let mx = x.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let (mut vx, mut vr, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(reference) {
        vx += (a - mx) * (a - mx);
        vr += (b - mr) * (b - mr);
        cov += (a - mx) * (b - mr);
    }
    let (vx, vr, cov) = (vx / n, vr / n, cov / n);
    Ok((2.0 * mx * mr + c1) * (2.0 * cov + c2) / ((mx * mx + mr * mr + c1) * (vx + vr + c2)))
}

fn check_grid(img: &DMatrix<f64>) -> Result<()> {
    if img.nrows() < 2 || img.ncols() < 2 {
        return Err(Error::Shape(format!(
            "a {}x{} image has no interior gradient",
            img.nrows(),
            img.ncols()
        )));
    }
    Ok(())
}

/// Forward differences over the (m-1) x (n-1) grid, rows then columns.
fn for_each_gradient(img: &DMatrix<f64>, mut f: impl FnMut(f64, f64)) {
    for j in 0..img.ncols() - 1 {
        for i in 0..img.nrows() - 1 {
            let x = img[(i, j)];
            f(img[(i + 1, j)] - x, img[(i, j + 1)] - x);
        }
    }
}

/// Metric Q = s1 (s1 - s2) / (s1 + s2) from the two singular values of the
/// N x 2 matrix of per-pixel forward differences.
pub fn metric_q(img: &DMatrix<f64>) -> Result<f64> {
    check_grid(img)?;
    let n = (img.nrows() - 1) * (img.ncols() - 1);
    let mut g = faer::Mat::<f64>::zeros(n, 2);
    let mut p = 0;
    for_each_gradient(img, |d1, d2| {
        g[(p, 0)] = d1;
        g[(p, 1)] = d2;
        p += 1;
    });
    // SVD rather than the 2x2 Gram matrix, which loses s2 to cancellation
    let sv = g
        .singular_values()
        .map_err(|e| Error::Numeric(format!("gradient SVD failed: {e:?}")))?;
    // a single gradient row has one singular value
    let other = sv.get(1).copied().unwrap_or(0.0);
    let (s1, s2) = (sv[0].max(other), sv[0].min(other));
    if s1 + s2 == 0.0 {
        return Ok(0.0);
    }
    Ok(s1 * (s1 - s2) / (s1 + s2))
}

/// Mean of `sqrt((d1^2 + d2^2) / 2)` over the forward-difference grid.
pub fn avg_gradient(img: &DMatrix<f64>) -> Result<f64> {
    check_grid(img)?;
    let mut sum = 0.0;
    for_each_gradient(img, |d1, d2| sum += ((d1 * d1 + d2 * d2) / 2.0).sqrt());
    Ok(sum / ((img.nrows() - 1) * (img.ncols() - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandQuality {
    pub psnr: f64,
    pub ssim: f64,
    pub q: f64,
    pub ag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub per_band: Vec<BandQuality>,
    pub average: BandQuality,
    /// PSNR and SSIM were computed on originally missing pixels only.
    pub restricted: bool,
    pub time: usize,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl QualityReport {
    /// Flat `key = value` text, bands numbered from 1.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "time = {}", self.time + 1);
        let _ = writeln!(out, "restricted = {}", self.restricted);
        let _ = writeln!(out, "bands = {}", self.per_band.len());
        let rows = self
            .per_band
            .iter()
            .enumerate()
            .map(|(k, q)| (format!("band{}", k + 1), q))
            .chain(std::iter::once(("average".to_string(), &self.average)));
        for (name, q) in rows {
            let _ = writeln!(out, "{name}.psnr = {}", fmt_value(q.psnr));
            let _ = writeln!(out, "{name}.ssim = {}", fmt_value(q.ssim));
            let _ = writeln!(out, "{name}.q = {}", fmt_value(q.q));
            let _ = writeln!(out, "{name}.ag = {}", fmt_value(q.ag));
        }
        out
    }
}

/// Quality of one acquisition of `test` against `reference`.
///
/// With a `region` mask, PSNR and SSIM only use pixels that are missing in
/// it; Q and AG always use the full band image of `test`. The peak value is
/// the declared range of the reference.
pub fn quality_report(
    test: &ImageStack,
    reference: &ImageStack,
    time: usize,
    region: Option<&ObservationMask>,
) -> Result<QualityReport> {
    let d = reference.dims();
    if test.dims() != d {
        return Err(Error::Shape(format!("test {} vs reference {d}", test.dims())));
    }
    if let Some(mask) = region {
        mask.check_congruent(reference)?;
    }
    if time >= d.times {
        return Err(Error::Shape(format!("time {time} outside 0..{}", d.times)));
    }
    let max_val = reference.value_range();
    let mut per_band = Vec::with_capacity(d.bands);
    for k in 0..d.bands {
        let timg = test.band_image(k, time);
        let rimg = reference.band_image(k, time);
        let (tv, rv): (Vec<f64>, Vec<f64>) = match region {
            Some(mask) => {
                let mut pairs = (Vec::new(), Vec::new());
                for j in 0..d.width {
                    for i in 0..d.height {
                        if !mask.is_observed(i, j, k, time) {
                            pairs.0.push(timg[(i, j)]);
                            pairs.1.push(rimg[(i, j)]);
                        }
                    }
                }
                pairs
            }
            None => (timg.as_slice().to_vec(), rimg.as_slice().to_vec()),
        };
        if tv.is_empty() {
            return Err(Error::Shape(format!(
                "no missing pixel in band {} at time {}",
                k + 1,
                time + 1
            )));
        }
        per_band.push(BandQuality {
            psnr: psnr(&tv, &rv, max_val)?,
            ssim: ssim(&tv, &rv, max_val)?,
            q: metric_q(&timg)?,
            ag: avg_gradient(&timg)?,
        });
    }
    let n = per_band.len() as f64;
    let mean = |f: fn(&BandQuality) -> f64| per_band.iter().map(f).sum::<f64>() / n;
    let average = BandQuality {
        psnr: mean(|q| q.psnr),
        ssim: mean(|q| q.ssim),
        q: mean(|q| q.q),
        ag: mean(|q| q.ag),
    };
    Ok(QualityReport {
        per_band,
        average,
        restricted: region.is_some(),
        time,
    })
}

/// (original, reconstructed) pairs at every entry missing in `mask`, in storage order.
pub fn scatter_data(x: &ImageStack, reference: &ImageStack, mask: &ObservationMask) -> Result<Vec<(f64, f64)>> {
    if x.dims() != reference.dims() {
        return Err(Error::Shape(format!("{} vs {}", x.dims(), reference.dims())));
    }
    mask.check_congruent(reference)?;
    Ok(mask
        .tensor()
        .data()
        .iter()
        .zip(reference.values().data().iter().zip(x.values().data()))
        .filter(|(&o, _)| !o)
        .map(|(_, (&r, &v))| (r, v))
        .collect())
}

/// Two-column CSV with a header line.
pub fn scatter_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("original,reconstructed\n");
    for (a, b) in pairs {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::StackDims;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};

    #[test]
    fn psnr_cases() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(psnr(&x, &x, 255.0).unwrap(), f64::INFINITY);
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let p = psnr(&shifted, &x, 255.0).unwrap();
        assert!((p - 10.0 * (255.0f64 * 255.0).log10()).abs() < 1e-12);
        assert!((p - 48.1308).abs() < 1e-4);
        assert!(psnr(&x, &x[..2], 255.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let r: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
        let noise: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amp in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let x: Vec<f64> = r.iter().zip(&noise).map(|(a, e)| a + amp * e).collect();
            let p = psnr(&x, &r, 255.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_cases() {
        let x = [10.0, 50.0, 30.0, 90.0];
        assert!((ssim(&x, &x, 255.0).unwrap() - 1.0).abs() < 1e-15);
        let c = [7.0; 4];
        assert!((ssim(&c, &c, 255.0).unwrap() - 1.0).abs() < 1e-15);
        let shifted: Vec<f64> = x.iter().map(|v| v + 20.0).collect();
        let s = ssim(&shifted, &x, 255.0).unwrap();
        // direct formula: means 65 and 45, equal variances and covariance 1000
        let (c1, c2) = (2.55f64.powi(2), 7.65f64.powi(2));
        let expected = (2.0 * 65.0 * 45.0 + c1) * (2.0 * 1000.0 + c2)
            / ((65.0f64 * 65.0 + 45.0 * 45.0 + c1) * (2000.0 + c2));
        assert!((s - expected).abs() < 1e-15);
        assert!(s < 1.0);
    }

    #[test]
    fn q_and_ag_closed_forms() {
        let c = DMatrix::from_element(4, 5, 3.0);
        assert_eq!(metric_q(&c).unwrap(), 0.0);
        assert_eq!(avg_gradient(&c).unwrap(), 0.0);
        let ramp = DMatrix::from_fn(4, 6, |_, j| j as f64);
        assert!((metric_q(&ramp).unwrap() - 15f64.sqrt()).abs() < 1e-12);
        let diag = DMatrix::from_fn(5, 5, |i, j| (i + j) as f64);
        assert!((avg_gradient(&diag).unwrap() - 1.0).abs() < 1e-15);
        assert!(metric_q(&DMatrix::zeros(1, 5)).is_err());
        assert!(avg_gradient(&DMatrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn q_matches_explicit_svd_on_3x3() {
        let img = DMatrix::from_row_slice(3, 3, &[1.0, 4.0, 2.0, 0.0, 3.0, 7.0, 5.0, 5.0, 1.0]);
        let mut rows = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                rows.push(img[(i + 1, j)] - img[(i, j)]);
                rows.push(img[(i, j + 1)] - img[(i, j)]);
            }
        }
        let g = DMatrix::from_row_slice(4, 2, &rows);
        let sv = g.svd(false, false).singular_values;
        let (s1, s2) = (sv.max(), sv.min());
        let expected = s1 * (s1 - s2) / (s1 + s2);
        assert!((metric_q(&img).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn q_and_ag_invariants() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let img = DMatrix::from_fn(6, 7, |_, _| rng.random_range(0.0..50.0));
        let shifted = img.map(|v| v + 13.0);
        assert!((metric_q(&img).unwrap() - metric_q(&shifted).unwrap()).abs() < 1e-9);
        assert!((avg_gradient(&img).unwrap() - avg_gradient(&shifted).unwrap()).abs() < 1e-12);
        let scaled = img.map(|v| 2.5 * v);
        assert!((avg_gradient(&scaled).unwrap() - 2.5 * avg_gradient(&img).unwrap()).abs() < 1e-12);
        assert!(metric_q(&img).unwrap() >= 0.0);
    }

    fn stack(dims: StackDims, f: impl Fn(&[usize]) -> f64) -> ImageStack {
        ImageStack::new(Tensor::from_fn(&dims.shape(), f).unwrap(), 255.0).unwrap()
    }

    #[test]
    fn report_averages_and_identity() {
        let dims = StackDims::new(4, 5, 3, 2).unwrap();
        let r = stack(dims, |i| ((i[0] * 7 + i[1] * 3 + i[2] * 11 + i[3]) % 17) as f64 * 10.0);
        let t = stack(dims, |i| ((i[0] * 7 + i[1] * 3 + i[2] * 11 + i[3]) % 17) as f64 * 10.0 + (i[2] as f64 + 1.0));
        let rep = quality_report(&r, &r, 0, None).unwrap();
        assert!(rep.per_band.iter().all(|b| b.psnr.is_infinite() && (b.ssim - 1.0).abs() < 1e-15));
        let text = rep.to_kv_string();
        assert!(text.contains("average.psnr = inf"));
        assert!(text.contains("band3.ssim = 1"));

        let rep = quality_report(&t, &r, 1, None).unwrap();
        let mean_psnr = rep.per_band.iter().map(|b| b.psnr).sum::<f64>() / 3.0;
        assert!((rep.average.psnr - mean_psnr).abs() < 1e-12);
        let mean_ag = rep.per_band.iter().map(|b| b.ag).sum::<f64>() / 3.0;
        assert!((rep.average.ag - mean_ag).abs() < 1e-12);
    }

    #[test]
    fn restricted_report_uses_missing_pixels() {
        let dims = StackDims::new(4, 4, 1, 2).unwrap();
        let r = stack(dims, |i| (i[0] + 4 * i[1]) as f64);
        let t = stack(dims, |i| if i[0] == 0 && i[1] == 0 && i[3] == 1 { 9.0 } else { (i[0] + 4 * i[1]) as f64 });
        let mask = ObservationMask::from_pixels(dims, |i, j, l| l == 1 && i < 2 && j < 1);
        let rep = quality_report(&t, &r, 1, Some(&mask)).unwrap();
        assert!(rep.restricted);
        let expected = psnr(&[9.0, 1.0], &[0.0, 1.0], 255.0).unwrap();
        assert!((rep.average.psnr - expected).abs() < 1e-12);
        assert!(quality_report(&t, &r, 0, Some(&mask)).is_err());
    }

    #[test]
    fn scatter_cases() {
        let dims = StackDims::new(3, 3, 2, 2).unwrap();
        let r = stack(dims, |i| (i[0] + i[1]) as f64);
        let all = ObservationMask::all_observed(dims);
        assert!(scatter_data(&r, &r, &all).unwrap().is_empty());
        let one = ObservationMask::from_pixels(dims, |i, j, l| (i, j, l) == (1, 2, 0));
        // one pixel, two bands
        assert_eq!(scatter_data(&r, &r, &one).unwrap(), vec![(3.0, 3.0), (3.0, 3.0)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rand_mask = ObservationMask::from_pixels(dims, |_, _, _| rng.random_bool(0.3));
        assert_eq!(scatter_data(&r, &r, &rand_mask).unwrap().len(), rand_mask.missing_count());
        assert!(scatter_csv(&[(1.0, 2.5)]).ends_with("1,2.5\n"));
    }
}
