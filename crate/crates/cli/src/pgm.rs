//! Binary portable graymap (P5) output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use priorgan_core::Tensor;

/// Tiles the rows of `samples` (each an `h x w` image in pixel units) into a
/// grid `ceil(sqrt(n))` tiles wide. Values are rounded and clamped to 0..=255;
/// unused tiles stay black.
pub fn grid(samples: &Tensor, h: usize, w: usize) -> Result<(usize, usize, Vec<u8>)> {
    let (n, d) = samples.dims2("pgm grid")?;
    if d != h * w {
        bail!("samples of width {d} are not {h}x{w} images");
    }
    if n == 0 {
        bail!("no samples to tile");
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut pixels = vec![0u8; gw * gh];
    for i in 0..n {
        let (ty, tx) = (i / cols, i % cols);
        for (p, v) in samples.row(i).iter().enumerate() {
            let (y, x) = (ty * h + p / w, tx * w + p % w);
            pixels[y * gw + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok((gw, gh, pixels))
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    std::fs::write(path, encode(width, height, pixels)).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload() {
        let bytes = encode(2, 1, &[0, 255]);
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn three_tiles_fill_a_two_by_two_grid() {
        // Three 1x2 images: tiles at (0,0), (0,1), (1,0).
        let s = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [300.0, -5.0]]).unwrap();
        let (w, h, px) = grid(&s, 1, 2).unwrap();
        assert_eq!((w, h), (4, 2));
        assert_eq!(px, vec![1, 2, 3, 4, 255, 0, 0, 0]);
    }

    #[test]
    fn wrong_width_is_rejected() {
        assert!(grid(&Tensor::zeros(&[2, 5]), 2, 2).is_err());
    }
}
