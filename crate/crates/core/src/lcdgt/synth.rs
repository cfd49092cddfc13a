//! Synthetic screen-capture rig: renders PFA captures of an LCD screen seen
//! under known homographies, for testing the ground-truth pipeline.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::capture::PoseCapture;
use super::homography::{Correspondence, Homography};
use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PfaPattern, PlanarImage};
use crate::mosaic::{polarizer_intensity, random_smooth_field, RandomFieldConfig};
use crate::stokes::{wrap_half_turn, StokesPixel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    /// Camera raster `(height, width)`, both even.
    pub camera: (usize, usize),
    /// Displayed image `(height, width)` in screen pixels.
    pub screen: (usize, usize),
    pub poses: usize,
    /// Value range of the smooth random image shown in the random frame.
    pub display_range: (f64, f64),
    /// Screen polarizer angle in radians.
    pub alpha: f64,
    pub lcd_dolp: f64,
    /// Screen response `gain * v^gamma + leak` for a displayed value `v`.
    pub gain: f64,
    pub gamma: f64,
    pub leak: f64,
    /// Unpolarized ambient radiance added to every frame.
    pub ambient: f64,
    /// Gaussian noise on every raw frame, in full-scale units.
    pub noise_sigma: f64,
    /// Gaussian noise on the corner image coordinates, in pixels.
    pub corner_noise: f64,
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            camera: (96, 128),
            screen: (60, 80),
            poses: 5,
            display_range: (0.15, 0.85),
            alpha: 37f64.to_radians(),
            lcd_dolp: 0.98,
            gain: 0.8,
            gamma: 1.3,
            leak: 0.02,
            ambient: 0.04,
            noise_sigma: 0.0,
            corner_noise: 0.0,
            seed: 0,
        }
    }
}

impl RigConfig {
    pub fn validate(&self) -> Result<()> {
        let (ch, cw) = self.camera;
        let (sh, sw) = self.screen;
        if ch < 4 || cw < 4 || ch % 2 != 0 || cw % 2 != 0 {
            return Err(Error::Config(format!("camera must be even and at least 4x4, got {ch}x{cw}")));
        }
        if sh < 8 || sw < 8 {
            return Err(Error::Config(format!("screen must be at least 8x8, got {sh}x{sw}")));
        }
        let (lo, hi) = self.display_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("display range must lie in [0, 1], got ({lo}, {hi})")));
        }
        if self.poses == 0 {
            return Err(Error::Config("at least one pose is required".into()));
        }
        if !(0.0..=1.0).contains(&self.lcd_dolp) || self.gain <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::Config("invalid screen response".into()));
        }
        if self.noise_sigma < 0.0 || self.corner_noise < 0.0 || self.leak < 0.0 || self.ambient < 0.0 {
            return Err(Error::Config("noise, leak and ambient must be non-negative".into()));
        }
        Ok(())
    }

    fn response(&self, v: f64) -> f64 {
        self.gain * v.clamp(0.0, 1.0).powf(self.gamma)
    }
}

/// One rendered pose with its planted ground truth.
#[derive(Clone, Debug)]
pub struct RigPose {
    pub capture: PoseCapture,
    pub homography: Homography,
    /// Black-free screen radiance `gain * v^gamma` per camera pixel.
    pub intensity: PlanarImage,
    /// Camera-space polarizer angle per camera pixel.
    pub aolp: PlanarImage,
    /// Pixels that see the screen.
    pub on_screen: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct SyntheticRig {
    pub config: RigConfig,
    pub poses: Vec<RigPose>,
}

/// Planted pose `i`: screen centre to camera centre, scaled, rotated and
/// tilted, with a seeded jitter.
fn pose_homography(config: &RigConfig, i: usize, rng: &mut ChaCha8Rng) -> Result<Homography> {
    let (ch, cw) = config.camera;
    let (sh, sw) = config.screen;
    let fit = (0.75 * cw as f64 / sw as f64).min(0.75 * ch as f64 / sh as f64);
    let t = if config.poses > 1 {
        i as f64 / (config.poses - 1) as f64 - 0.5
    } else {
        0.0
    };
    let theta = (24.0 * t).to_radians() + rng.random_range(-0.02..0.02);
    let scale = fit * (1.0 + rng.random_range(-0.05..0.05));
    let (px, py) = (
        rng.random_range(-1.5..1.5) / sw as f64 / 4.0,
        rng.random_range(-1.5..1.5) / sh as f64 / 4.0,
    );
    let (tx, ty) = (
        (cw as f64 - 1.0) / 2.0 + rng.random_range(-2.0..2.0),
        (ch as f64 - 1.0) / 2.0 + rng.random_range(-2.0..2.0),
    );
    let (s, c) = theta.sin_cos();
    let centre = Homography::from_rows([
        [1.0, 0.0, -(sw as f64 - 1.0) / 2.0],
        [0.0, 1.0, -(sh as f64 - 1.0) / 2.0],
        [0.0, 0.0, 1.0],
    ])?;
    let body = Homography::from_rows([
        [scale * c, -scale * s, 0.0],
        [scale * s, scale * c, 0.0],
        [px, py, 1.0],
    ])?;
    let place = Homography::from_rows([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])?;
    place.compose(&body)?.compose(&centre)
}

/// Camera-space angle of the screen polarizer at screen point `p`, from a
/// central-difference Jacobian and an explicit 2x2 inverse transpose.
fn rendered_angle(h: &Homography, p: (f64, f64), alpha: f64) -> Option<f64> {
    let e = 1e-5;
    let f = |x: f64, y: f64| h.project((x, y)).ok();
    let (xp, xm) = (f(p.0 + e, p.1)?, f(p.0 - e, p.1)?);
    let (yp, ym) = (f(p.0, p.1 + e)?, f(p.0, p.1 - e)?);
    let (a, b) = ((xp.0 - xm.0) / (2.0 * e), (yp.0 - ym.0) / (2.0 * e));
    let (c, d) = ((xp.1 - xm.1) / (2.0 * e), (yp.1 - ym.1) / (2.0 * e));
    let det = a * d - b * c;
    if det == 0.0 {
        return None;
    }
    // J = [[a, b], [c, d]]; J^{-T} = [[d, -c], [-b, a]] / det.
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let vx = (d * ca - c * sa) / det;
    let vy = (-b * ca + a * sa) / det;
    Some(wrap_half_turn(vy.atan2(vx)))
}

fn bilinear(img: &PlanarImage, x: f64, y: f64) -> Option<f64> {
    let (h, w) = (img.height(), img.width());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let row = |r| img.get(r, x0, 0) * (1.0 - fx) + img.get(r, x1, 0) * fx;
    Some(row(y0) * (1.0 - fy) + row(y1) * fy)
}

/// Screen geometry seen by the camera: displayed value, screen-space point
/// and polarizer angle per camera pixel.
struct ScreenView {
    value: Vec<Option<f64>>,
    angle: Vec<f64>,
}

fn view(config: &RigConfig, h: &Homography, displayed: &PlanarImage) -> Result<ScreenView> {
    let (ch, cw) = config.camera;
    let h_inv = h.inverse()?;
    let mut value = vec![None; ch * cw];
    let mut angle = vec![0.0; ch * cw];
    for r in 0..ch {
        for c in 0..cw {
            let Ok(p) = h_inv.project((c as f64, r as f64)) else { continue };
            if let (Some(v), Some(phi)) = (bilinear(displayed, p.0, p.1), rendered_angle(h, p, config.alpha)) {
                value[r * cw + c] = Some(v);
                angle[r * cw + c] = phi;
            }
        }
    }
    Ok(ScreenView { value, angle })
}

fn render_frame(config: &RigConfig, view: &ScreenView, values: &[Option<f64>], rng: &mut ChaCha8Rng) -> Result<MosaicedImage> {
    let (ch, cw) = config.camera;
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let pattern = PfaPattern;
    let mut data = vec![0.0; ch * cw];
    for r in 0..ch {
        for c in 0..cw {
            let k = r * cw + c;
            let theta = pattern.angle_at(r % 2, c % 2);
            let mut v = 0.5 * config.ambient;
            if let Some(d) = values[k] {
                let s0 = config.response(d) + config.leak;
                v += polarizer_intensity(StokesPixel::from_polarization(s0, view.angle[k], config.lcd_dolp), theta);
            }
            if config.noise_sigma > 0.0 {
                v += noise.sample(rng);
            }
            data[k] = v.clamp(0.0, 1.0);
        }
    }
    MosaicedImage::new(PlanarImage::new(ch, cw, 1, data)?)
}

fn checkerboard(height: usize, width: usize, square: usize) -> PlanarImage {
    PlanarImage::from_fn(height, width, |r, c| if (r / square + c / square) % 2 == 0 { 0.9 } else { 0.1 })
}

/// Corner grid on the screen, mapped into the camera.
fn corners(config: &RigConfig, h: &Homography, rng: &mut ChaCha8Rng) -> Result<Vec<Correspondence>> {
    let (sh, sw) = config.screen;
    let noise = Normal::new(0.0, config.corner_noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut out = Vec::new();
    for i in 1..8 {
        for j in 1..6 {
            let s = (i as f64 * (sw - 1) as f64 / 8.0, j as f64 * (sh - 1) as f64 / 6.0);
            let (mut x, mut y) = h.project(s)?;
            if config.corner_noise > 0.0 {
                x += noise.sample(rng);
                y += noise.sample(rng);
            }
            out.push(Correspondence::new(s, (x, y)));
        }
    }
    Ok(out)
}

/// Renders all poses. Every random draw derives from `config.seed`.
pub fn render_rig(config: &RigConfig) -> Result<SyntheticRig> {
    config.validate()?;
    let (ch, cw) = config.camera;
    let (sh, sw) = config.screen;
    let mut poses = Vec::with_capacity(config.poses);
    for i in 0..config.poses {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64));
        let h = pose_homography(config, i, &mut rng)?;
        let field = RandomFieldConfig {
            num_harmonics: 6,
            max_frequency: 1.5,
            amplitude_decay: 1.5,
            seed: rng.random(),
        };
        let displayed = random_smooth_field(&field, sh, sw, config.display_range)?;
        let board = checkerboard(sh, sw, (sw / 10).max(2));

        let random_view = view(config, &h, &displayed)?;
        let board_view = view(config, &h, &board)?;
        let black_values: Vec<Option<f64>> = random_view.value.iter().map(|v| v.map(|_| 0.0)).collect();

        let random_raw = render_frame(config, &random_view, &random_view.value, &mut rng)?;
        let board_raw = render_frame(config, &random_view, &board_view.value, &mut rng)?;
        let black_raw = render_frame(config, &random_view, &black_values, &mut rng)?;

        let intensity = PlanarImage::new(
            ch,
            cw,
            1,
            random_view.value.iter().map(|v| v.map_or(0.0, |d| config.response(d))).collect(),
        )?;
        let aolp = PlanarImage::new(ch, cw, 1, random_view.angle.clone())?;
        let on_screen = random_view.value.iter().map(Option::is_some).collect();
        let capture = PoseCapture::new(board_raw, random_raw, black_raw, displayed, corners(config, &h, &mut rng)?)?;
        poses.push(RigPose {
            capture,
            homography: h,
            intensity,
            aolp,
            on_screen,
        });
    }
    Ok(SyntheticRig {
        config: config.clone(),
        poses,
    })
}

/// Planted parameters written next to the pose directories.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigTruth {
    pub config: RigConfig,
    pub alpha_deg: f64,
    pub homographies: Vec<[[f64; 3]; 3]>,
}

pub const RIG_TRUTH_FILE: &str = "rig.json";

pub fn pose_dir_name(i: usize) -> String {
    format!("pose_{i:02}")
}

impl SyntheticRig {
    /// Writes `pose_NN/` capture directories and `rig.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, p) in self.poses.iter().enumerate() {
            p.capture.save(dir.join(pose_dir_name(i)))?;
        }
        let truth = RigTruth {
            config: self.config.clone(),
            alpha_deg: self.config.alpha.to_degrees(),
            homographies: self
                .poses
                .iter()
                .map(|p| {
                    let m = p.homography.matrix();
                    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
                })
                .collect(),
        };
        let path = dir.join(RIG_TRUTH_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&truth)?).map_err(|e| Error::io(&path, e))
    }
}
