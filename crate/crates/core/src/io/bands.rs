//! One 16-bit PGM file per band, values scaled linearly from `[0, range]`
//! onto `[0, 65535]`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::stack::{ImageStack, StackDims};
use crate::tensor::Tensor;

const LEVELS: f64 = 65535.0;

/// File name of band `k` at time `l`, both 0-based.
pub fn band_file_name(k: usize, l: usize) -> String {
    format!("t{}_b{}.pgm", l + 1, k + 1)
}

/// Writes every band of acquisition `time` into `dir` and returns the paths.
pub fn export_bands(stack: &ImageStack, time: usize, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let d = stack.dims();
    if time >= d.times {
        return Err(Error::OutOfBounds(format!("time {time} outside 0..{}", d.times)));
    }
    let dir = dir.as_ref();
    let range = stack.value_range();
    let mut paths = Vec::with_capacity(d.bands);
    for k in 0..d.bands {
        // binary P5 with 16-bit big-endian samples, rows top to bottom
        let mut bytes = format!("P5\n{} {}\n65535\n", d.width, d.height).into_bytes();
        for i in 0..d.height {
            for j in 0..d.width {
                let v = (stack.get(i, j, k, time) / range * LEVELS).round().clamp(0.0, LEVELS) as u16;
                bytes.extend_from_slice(&v.to_be_bytes());
            }
        }
        let path = dir.join(band_file_name(k, time));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

fn read_band(path: &Path, d: StackDims) -> Result<Vec<u16>> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()?
        .into_luma16();
    if (img.height() as usize, img.width() as usize) != (d.height, d.width) {
        return Err(Error::Shape(format!(
            "{} is {}x{}, expected {}x{}",
            path.display(),
            img.height(),
            img.width(),
            d.height,
            d.width
        )));
    }
    Ok(img.into_raw())
}

/// Reads the files written by [`export_bands`] for every time of `dims`.
/// A band file beyond `dims.bands` is a band-count mismatch.
pub fn import_bands(dir: impl AsRef<Path>, dims: StackDims, value_range: f64) -> Result<ImageStack> {
    let dir = dir.as_ref();
    let mut values = Tensor::zeros(&dims.shape())?;
    for l in 0..dims.times {
        let extra = dir.join(band_file_name(dims.bands, l));
        if extra.exists() {
            return Err(Error::Shape(format!(
                "{} present but {} bands expected",
                extra.display(),
                dims.bands
            )));
        }
        for k in 0..dims.bands {
            let pixels = read_band(&dir.join(band_file_name(k, l)), dims)?;
            for i in 0..dims.height {
                for j in 0..dims.width {
                    let v = pixels[j + dims.width * i] as f64 / LEVELS * value_range;
                    values.set(&[i, j, k, l], v);
                }
            }
        }
    }
    ImageStack::new(values, value_range)
}
