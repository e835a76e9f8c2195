//! Seeded synthetic data: low multilinear-rank tensors and multitemporal
//! scenes tiled from a small dictionary of textured patches.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stack::{ImageStack, StackDims};
use crate::tensor::{BinaryTensor, Tensor};

/// Tucker product `core x_1 A_1 x_2 A_2 ...`; factor `n` is `shape[n] x core.shape()[n]`.
pub fn tucker(core: &Tensor, factors: &[DMatrix<f64>]) -> Result<Tensor> {
    if factors.len() != core.order() {
        return Err(Error::Shape(format!(
            "{} factors for a core of order {}",
            factors.len(),
            core.order()
        )));
    }
    for (n, f) in factors.iter().enumerate() {
        if f.ncols() != core.shape()[n] {
            return Err(Error::Shape(format!(
                "factor {} has {} columns, core mode has {}",
                n + 1,
                f.ncols(),
                core.shape()[n]
            )));
        }
    }
    // one mode at a time: contract mode n of `t` with factor n
    let mut t = core.clone();
    for (n, f) in factors.iter().enumerate() {
        let mut shape = t.shape().to_vec();
        shape[n] = f.nrows();
        let src = &t;
        t = Tensor::from_fn(&shape, |idx| {
            let mut j = idx.to_vec();
            (0..f.ncols())
                .map(|c| {
                    j[n] = c;
                    f[(idx[n], c)] * src.get(&j)
                })
                .sum()
        })?;
    }
    Ok(t)
}

/// Ground truth and observation pattern for a recovery experiment.
#[derive(Debug, Clone)]
pub struct RecoveryInstance {
    pub truth: Tensor,
    pub mask: BinaryTensor,
}

impl RecoveryInstance {
    /// `||x - truth||_F / ||truth||_F` over the hidden entries.
    pub fn hidden_relative_error(&self, x: &Tensor) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&o, &a), &b) in self.mask.data().iter().zip(x.data()).zip(self.truth.data()) {
            if !o {
                num += (a - b) * (a - b);
                den += b * b;
            }
        }
        (num / den).sqrt()
    }
}

/// Random Tucker tensor with uniform `[-1, 1)` core and factors, rescaled to
/// the given RMS, with each entry hidden independently with probability `missing`.
pub fn low_rank_instance(
    shape: [usize; 4],
    ranks: [usize; 4],
    rms: f64,
    missing: f64,
    seed: u64,
) -> Result<RecoveryInstance> {
    if !(0.0..=1.0).contains(&missing) {
        return Err(Error::Config(format!("missing fraction {missing} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = Tensor::from_fn(&ranks, |_| rng.random_range(-1.0..1.0))?;
    let factors: Vec<DMatrix<f64>> = (0..4)
        .map(|n| DMatrix::from_fn(shape[n], ranks[n], |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let t = tucker(&core, &factors)?;
    let current = (t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64).sqrt();
    let truth = t.map(|v| v * rms / current);
    let mask = BinaryTensor::from_fn(&shape, |_| !rng.random_bool(missing))?;
    Ok(RecoveryInstance { truth, mask })
}

/// Multitemporal scene built from repeating textured tiles.
///
/// The image is split into square blocks, each assigned a land-cover class.
/// Every class paints its blocks with one dictionary atom (a `tile x tile`
/// texture) scaled by a class band signature and a per-acquisition brightness,
/// so the temporal change differs between classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub times: usize,
    pub tile: usize,
    /// Side of the square blocks carrying one class.
    pub block: usize,
    pub atoms: usize,
    pub classes: usize,
    /// Texture amplitude relative to the class mean.
    pub contrast: f64,
    /// Standard deviation of additive uniform noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            bands: 3,
            times: 4,
            tile: 4,
            block: 4,
            atoms: 6,
            classes: 6,
            contrast: 0.8,
            noise: 0.0,
            seed: 7,
        }
    }
}

/// Values lie in `[0, 255]`.
pub fn dictionary_scene(cfg: &SceneConfig) -> Result<ImageStack> {
    let dims = StackDims::new(cfg.height, cfg.width, cfg.bands, cfg.times)?;
    if cfg.tile == 0 || cfg.block == 0 || cfg.atoms == 0 || cfg.classes == 0 {
        return Err(Error::Config("tile, block, atoms and classes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let atoms: Vec<Vec<f64>> = (0..cfg.atoms)
        .map(|_| (0..cfg.tile * cfg.tile).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let signatures: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.bands).map(|_| rng.random_range(30.0..160.0)).collect())
        .collect();
    let brightness: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.times).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let choice: Vec<usize> = (0..cfg.classes).map(|_| rng.random_range(0..cfg.atoms)).collect();
    let (bh, bw) = (cfg.height.div_ceil(cfg.block), cfg.width.div_ceil(cfg.block));
    // balanced so every class shows up in several blocks
    let mut class_map: Vec<usize> = (0..bh * bw).map(|b| b % cfg.classes).collect();
    class_map.shuffle(&mut rng);
    let noise: Vec<f64> = (0..dims.len())
        .map(|_| {
            if cfg.noise > 0.0 {
                // uniform with the requested standard deviation
                rng.random_range(-1.0..1.0) * cfg.noise * 3f64.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut p = 0;
    let values = Tensor::from_fn(&dims.shape(), |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let c = class_map[i / cfg.block + bh * (j / cfg.block)];
        let a = &atoms[choice[c]];
        let texture = a[i % cfg.tile + cfg.tile * (j % cfg.tile)];
        let v = signatures[c][k] * brightness[c][l] * (1.0 + cfg.contrast * texture) + noise[p];
        p += 1;
        v.clamp(0.0, 255.0)
    })?;
    ImageStack::new(values, 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{numerical_rank, unfold};

    #[test]
    fn tucker_has_requested_ranks() {
        let inst = low_rank_instance([4, 4, 3, 16], [2, 2, 2, 3], 100.0, 0.4, 5).unwrap();
        for (mode, r) in [(1, 2), (2, 2), (3, 2), (4, 3)] {
            let m = unfold(&inst.truth, mode).unwrap().matrix;
            assert_eq!(numerical_rank(&m, 1e-10), r, "mode {mode}");
        }
        let rms = (inst.truth.data().iter().map(|v| v * v).sum::<f64>() / inst.truth.len() as f64).sqrt();
        assert!((rms - 100.0).abs() < 1e-9);
        let hidden = inst.mask.data().iter().filter(|&&o| !o).count() as f64 / inst.mask.len() as f64;
        assert!((hidden - 0.4).abs() < 0.06, "{hidden}");
    }

    #[test]
    fn tucker_matches_explicit_sum() {
        let core = Tensor::from_fn(&[2, 1, 2], |i| (1 + i[0] + 2 * i[2]) as f64).unwrap();
        let f = vec![
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]),
            DMatrix::from_row_slice(2, 1, &[2.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 3.0]),
        ];
        let t = tucker(&core, &f).unwrap();
        assert_eq!(t.shape(), &[3, 2, 2]);
        for a in 0..3 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut s = 0.0;
                    for p in 0..2 {
                        for r in 0..2 {
                            s += core.get(&[p, 0, r]) * f[0][(a, p)] * f[1][(b, 0)] * f[2][(c, r)];
                        }
                    }
                    assert!((t.get(&[a, b, c]) - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scene_is_seeded_and_in_range() {
        let cfg = SceneConfig { block: 16, ..SceneConfig::default() };
        let a = dictionary_scene(&cfg).unwrap();
        assert_eq!(a, dictionary_scene(&cfg).unwrap());
        assert!(a.values().data().iter().all(|v| (0.0..=255.0).contains(v)));
        let other = dictionary_scene(&SceneConfig { seed: 8, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
        // tiles repeat inside a block
        assert_eq!(a.get(1, 2, 0, 0), a.get(5, 6, 0, 0));
        assert_eq!(a.get(1, 2, 2, 3), a.get(9, 14, 2, 3));
    }
}
