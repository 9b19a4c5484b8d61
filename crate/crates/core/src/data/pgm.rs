//! Binary PGM (P5, 8-bit) export of sample grids.

use std::io::Write;
use std::path::Path;

use crate::array::DenseArray;
use crate::error::{Error, Result};

/// Tiles a batch of flattened images into one grayscale grid and writes it
/// as binary PGM. Values are mapped linearly from `[lo, hi]` to 0..=255;
/// pass `(0.0, 1.0)` for Bernoulli means or `None` to normalize to the
/// batch range (real-valued models).
pub fn write_pgm_grid(
    path: impl AsRef<Path>,
    images: &DenseArray,
    img_h: usize,
    img_w: usize,
    cols: usize,
    range: Option<(f64, f64)>,
) -> Result<()> {
    if images.cols() != img_h * img_w {
        return Err(Error::DimMismatch(format!(
            "image rows of {} values cannot form {img_h}x{img_w} tiles",
            images.cols()
        )));
    }
    let n = images.rows();
    let rows = n.div_ceil(cols);
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = images
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = images
            .values()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo, lo + 1.0)
        }
    });
    let pad = 1usize; // one-pixel separator between tiles
    let width = cols * img_w + (cols - 1) * pad;
    let height = rows * img_h + (rows - 1) * pad;
    let mut pixels = vec![0u8; width * height];
    for (idx, tile) in (0..n).map(|r| images.row(r)).enumerate() {
        let (tr, tc) = (idx / cols, idx % cols);
        let top = tr * (img_h + pad);
        let left = tc * (img_w + pad);
        for i in 0..img_h {
            for j in 0..img_w {
                let x = tile[i * img_w + j];
                let g = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                pixels[(top + i) * width + (left + j)] = (g * 255.0).round() as u8;
            }
        }
    }
    let mut out = std::fs::File::create(path)?;
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(&pixels)?;
    Ok(())
}
