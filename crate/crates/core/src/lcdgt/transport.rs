//! Screen-to-camera transport of the polarizer direction field, inverse
//! warping of displayed images and the screen polarizer angle fit.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Vector2};

use super::homography::Homography;
use crate::error::{Error, Result};
use crate::image::PlanarImage;
use crate::stokes::wrap_half_turn;

/// Camera pixel `(row, col)` as an image point: `x = col`, `y = row`.
fn pixel_point(row: usize, col: usize) -> (f64, f64) {
    (col as f64, row as f64)
}

/// `J^{-T}` of the screen-to-camera map at the screen preimage of camera
/// point `q`, or `None` where undefined.
pub fn inverse_transpose_jacobian(h: &Homography, h_inv: &Homography, q: (f64, f64)) -> Option<Matrix2<f64>> {
    let p = h_inv.project(q).ok()?;
    let j = h.jacobian(p).ok()?;
    let jit = j.try_inverse()?.transpose();
    jit.iter().all(|v| v.is_finite()).then_some(jit)
}

/// Orientation of `J^{-T} (cos alpha, sin alpha)`, folded to [-pi/2, pi/2).
pub fn transport_angle(jit: &Matrix2<f64>, alpha: f64) -> Option<f64> {
    let v = jit * Vector2::new(alpha.cos(), alpha.sin());
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| wrap_half_turn(v.y.atan2(v.x)))
}

/// Camera-space AoLP field of a screen whose polarizer sits at `alpha`.
/// Pixels where the transport is undefined are 0 and flagged invalid.
pub fn transport_aolp_field(h: &Homography, alpha: f64, height: usize, width: usize) -> Result<(PlanarImage, Vec<bool>)> {
    let h_inv = h.inverse()?;
    let mut valid = vec![false; height * width];
    let mut data = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let phi = inverse_transpose_jacobian(h, &h_inv, pixel_point(r, c)).and_then(|j| transport_angle(&j, alpha));
            if let Some(phi) = phi {
                data[r * width + c] = phi;
                valid[r * width + c] = true;
            }
        }
    }
    Ok((PlanarImage::new(height, width, 1, data)?, valid))
}

/// Bilinear sample of a single-channel image at `(x, y)`; `None` outside
/// `[0, w-1] x [0, h-1]`.
pub fn sample_bilinear(img: &PlanarImage, x: f64, y: f64) -> Option<f64> {
    let (h, w) = (img.height(), img.width());
    let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= xm && y <= ym) {
        return None;
    }
    let (x0, y0) = ((x.floor() as usize).min(w.saturating_sub(2)), (y.floor() as usize).min(h.saturating_sub(2)));
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(y0, x0, 0) * (1.0 - fx) + img.get(y0, x1, 0) * fx;
    let bottom = img.get(y1, x0, 0) * (1.0 - fx) + img.get(y1, x1, 0) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Inverse-maps the displayed screen image into a `height x width` camera
/// frame with bilinear sampling. Pixels whose preimage leaves the screen are
/// 0 and flagged invalid.
pub fn warp_to_camera(displayed: &PlanarImage, h: &Homography, height: usize, width: usize) -> Result<(PlanarImage, Vec<bool>)> {
    if displayed.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: displayed.channels(),
        });
    }
    let h_inv = h.inverse()?;
    let mut valid = vec![false; height * width];
    let mut data = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let Ok((x, y)) = h_inv.project(pixel_point(r, c)) else { continue };
            if let Some(v) = sample_bilinear(displayed, x, y) {
                data[r * width + c] = v;
                valid[r * width + c] = true;
            }
        }
    }
    Ok((PlanarImage::new(height, width, 1, data)?, valid))
}

/// One pose's observation for the polarizer angle fit.
#[derive(Clone, Debug)]
pub struct AlphaObservation {
    pub homography: Homography,
    /// Quarter-resolution AoLP from the naive demosaic.
    pub aolp: PlanarImage,
    /// Macro-pixels to use.
    pub valid: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaFit {
    /// Radians in [-pi/2, pi/2).
    pub alpha: f64,
    /// Mean squared doubled-angle unit-vector distance per used macro-pixel.
    pub residual: f64,
    pub samples: usize,
}

struct AlphaTerm {
    jit: Matrix2<f64>,
    obs: (f64, f64),
}

fn doubled(v: Vector2<f64>) -> Option<(f64, f64)> {
    let n2 = v.norm_squared();
    (n2 > 0.0).then(|| ((v.x * v.x - v.y * v.y) / n2, 2.0 * v.x * v.y / n2))
}

fn alpha_cost(terms: &[AlphaTerm], alpha: f64) -> f64 {
    let v = Vector2::new(alpha.cos(), alpha.sin());
    let mut s = 0.0;
    for t in terms {
        let (c, d) = doubled(t.jit * v).unwrap_or((0.0, 0.0));
        s += (c - t.obs.0).powi(2) + (d - t.obs.1).powi(2);
    }
    s / terms.len() as f64
}

pub const ALPHA_GRID: usize = 721;

/// Fits the single screen polarizer angle by a dense grid over [-pi/2, pi/2)
/// followed by golden-section refinement around the best grid sample.
/// Macro-pixel `(u, v)` is evaluated at camera point `(2v + 0.5, 2u + 0.5)`.
pub fn estimate_alpha(observations: &[AlphaObservation]) -> Result<AlphaFit> {
    let mut terms = Vec::new();
    for o in observations {
        let (hq, wq) = (o.aolp.height(), o.aolp.width());
        if o.valid.len() != hq * wq {
            return Err(Error::DimensionMismatch("alpha observation mask size".into()));
        }
        let h_inv = o.homography.inverse()?;
        for u in 0..hq {
            for v in 0..wq {
                if !o.valid[u * wq + v] {
                    continue;
                }
                let q = (2.0 * v as f64 + 0.5, 2.0 * u as f64 + 0.5);
                if let Some(jit) = inverse_transpose_jacobian(&o.homography, &h_inv, q) {
                    let phi = o.aolp.get(u, v, 0);
                    terms.push(AlphaTerm {
                        jit,
                        obs: ((2.0 * phi).cos(), (2.0 * phi).sin()),
                    });
                }
            }
        }
    }
    if terms.is_empty() {
        return Err(Error::Empty("no valid macro-pixels for the alpha fit"));
    }
    let step = PI / ALPHA_GRID as f64;
    let (best_k, _) = (0..ALPHA_GRID)
        .map(|k| (k, alpha_cost(&terms, -FRAC_PI_2 + k as f64 * step)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is non-empty");
    let centre = -FRAC_PI_2 + best_k as f64 * step;
    let (mut a, mut b) = (centre - step, centre + step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (alpha_cost(&terms, x1), alpha_cost(&terms, x2));
    while b - a > 1e-12 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = alpha_cost(&terms, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = alpha_cost(&terms, x2);
        }
    }
    let alpha = wrap_half_turn(0.5 * (a + b));
    Ok(AlphaFit {
        alpha,
        residual: alpha_cost(&terms, alpha),
        samples: terms.len(),
    })
}
