//! Diverging red–white–blue heatmaps written as binary PPM (P6).

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Matrix;

/// Color of `value` on a scale symmetric about zero with half-range `max_abs`:
/// `−max_abs` is pure red, 0 white, `+max_abs` pure blue.
pub fn diverging_color(value: f64, max_abs: f64) -> [u8; 3] {
    if max_abs == 0.0 || value == 0.0 {
        return [255, 255, 255];
    }
    let t = (value.abs() / max_abs).min(1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if value < 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

/// RGB pixels in row-major order.
pub fn colorize(matrix: &Matrix) -> Result<Vec<[u8; 3]>> {
    if let Some(bad) = matrix.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cannot render value {bad}")));
    }
    let max_abs = matrix.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(matrix
        .data
        .iter()
        .map(|&v| diverging_color(v, max_abs))
        .collect())
}

pub fn encode_ppm(matrix: &Matrix) -> Result<Vec<u8>> {
    let pixels = colorize(matrix)?;
    let mut out = format!("P6\n{} {}\n255\n", matrix.cols, matrix.rows).into_bytes();
    out.reserve(pixels.len() * 3);
    for p in pixels {
        out.extend_from_slice(&p);
    }
    Ok(out)
}

pub fn render_heatmap(matrix: &Matrix, out_path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_ppm(matrix)?;
    std::fs::write(out_path, bytes)?;
    Ok(())
}
