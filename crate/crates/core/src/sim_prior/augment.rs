use priorgan_autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges for random affine augmentation of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffineParams {
    /// Rotation drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    /// Independent x and y scale factors drawn from this range.
    pub scale: [f64; 2],
    /// Shear drawn from `[-shear, shear]`.
    pub shear: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            scale: [0.3, 1.0],
            shear: 0.3,
        }
    }
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: [1.0, 1.0],
            shear: 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Affine {
        let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Affine {
            angle: uniform(-self.rotation_deg, self.rotation_deg).to_radians(),
            scale_x: uniform(self.scale[0], self.scale[1]),
            scale_y: uniform(self.scale[0], self.scale[1]),
            shear: uniform(-self.shear, self.shear),
        }
    }
}

/// One concrete transform about the image centre: scale, then shear, then
/// rotate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub angle: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub shear: f64,
}

impl Affine {
    /// Forward 2x2 matrix acting on `(x, y)` column vectors.
    fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.angle.sin_cos();
        // R * Sh * S with Sh = [[1, shear], [0, 1]].
        let a = [[self.scale_x, self.shear * self.scale_y], [0.0, self.scale_y]];
        [
            [c * a[0][0] - s * a[1][0], c * a[0][1] - s * a[1][1]],
            [s * a[0][0] + c * a[1][0], s * a[0][1] + c * a[1][1]],
        ]
    }

    /// Applies the transform to one `h x w` row-major image, sampling
    /// bilinearly and filling outside the source with `background`.
    pub fn apply(&self, image: &[f64], h: usize, w: usize, background: f64) -> Result<Vec<f64>> {
        if image.len() != h * w {
            return Err(Error::contract(format!(
                "image of {} values is not {h}x{w}",
                image.len()
            )));
        }
        let m = self.matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::contract("singular affine transform"));
        }
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let pixel = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                background
            } else {
                image[r as usize * w + c as usize]
            }
        };
        let mut out = vec![background; h * w];
        for r in 0..h {
            for c in 0..w {
                let (dx, dy) = (c as f64 - cx, r as f64 - cy);
                let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
                let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let mut v = 0.0;
                for (dr, wy) in [(0, 1.0 - fy), (1, fy)] {
                    for (dc, wx) in [(0, 1.0 - fx), (1, fx)] {
                        let weight = wy * wx;
                        if weight != 0.0 {
                            v += weight * pixel(y0 + dr, x0 + dc);
                        }
                    }
                }
                out[r * w + c] = v;
            }
        }
        Ok(out)
    }
}

/// Independently transforms every row of `x`, each row an `h x w` image.
pub fn affine_augment(
    x: &Tensor,
    shape: (usize, usize),
    params: &AffineParams,
    background: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let (n, d) = x.dims2("affine_augment")?;
    let (h, w) = shape;
    if h * w != d {
        return Err(Error::contract(format!("cannot view {d} features as a {h}x{w} image")));
    }
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(params.sample(rng).apply(x.row(i), h, w, background)?);
    }
    Ok(Tensor::matrix(n, d, data)?)
}
