//! Per-pose captures and the ground-truth pair construction.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::histogram::{histogram_match, Histogram256};
use super::homography::{estimate_homography, read_correspondences, write_correspondences, Correspondence, Homography};
use super::transport::{transport_aolp_field, warp_to_camera, AlphaObservation};
use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PlanarImage, StokesImage};
use crate::io::{read_image, read_pfm, read_pgm, write_pfm, write_pgm};
use crate::mosaic::naive_demosaic;
use crate::stokes::{dolp, StokesPixel};

/// The three raw frames of one screen pose, the image shown on the screen
/// and the board-corner correspondences.
#[derive(Clone, Debug)]
pub struct PoseCapture {
    pub board_raw: MosaicedImage,
    pub random_raw: MosaicedImage,
    pub black_raw: MosaicedImage,
    pub displayed: PlanarImage,
    pub correspondences: Vec<Correspondence>,
}

pub const BOARD_FILE: &str = "board.pgm";
pub const RANDOM_FILE: &str = "random.pgm";
pub const BLACK_FILE: &str = "black.pgm";
pub const DISPLAYED_FILE: &str = "displayed.pfm";
pub const CORNERS_FILE: &str = "corners.csv";

impl PoseCapture {
    pub fn new(
        board_raw: MosaicedImage,
        random_raw: MosaicedImage,
        black_raw: MosaicedImage,
        displayed: PlanarImage,
        correspondences: Vec<Correspondence>,
    ) -> Result<Self> {
        let dims = (random_raw.height(), random_raw.width());
        for (name, m) in [("board", &board_raw), ("black", &black_raw)] {
            if (m.height(), m.width()) != dims {
                return Err(Error::DimensionMismatch(format!("{name} frame size differs from the random frame")));
            }
        }
        if displayed.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                found: displayed.channels(),
            });
        }
        Ok(Self {
            board_raw,
            random_raw,
            black_raw,
            displayed,
            correspondences,
        })
    }

    pub fn height(&self) -> usize {
        self.random_raw.height()
    }

    pub fn width(&self) -> usize {
        self.random_raw.width()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let raw = |f: &str| MosaicedImage::new(read_pgm(dir.join(f))?);
        let displayed = read_image(dir.join(DISPLAYED_FILE))?;
        let displayed = if displayed.channels() == 1 { displayed } else { displayed.channel(0) };
        Self::new(
            raw(BOARD_FILE)?,
            raw(RANDOM_FILE)?,
            raw(BLACK_FILE)?,
            displayed,
            read_correspondences(dir.join(CORNERS_FILE))?,
        )
    }

    /// Writes the capture layout; raw frames as 16-bit PGM.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pgm(self.board_raw.image(), dir.join(BOARD_FILE), u16::MAX)?;
        write_pgm(self.random_raw.image(), dir.join(RANDOM_FILE), u16::MAX)?;
        write_pgm(self.black_raw.image(), dir.join(BLACK_FILE), u16::MAX)?;
        write_pfm(&self.displayed, dir.join(DISPLAYED_FILE))?;
        write_correspondences(dir.join(CORNERS_FILE), &self.correspondences)
    }
}

/// Pose directories (those containing a corners file) under `root`, sorted.
pub fn list_pose_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CORNERS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Empty("no pose directories with corners.csv"));
    }
    Ok(dirs)
}

/// Per-pixel `max(random - black, 0)`.
pub fn subtract_black(random: &MosaicedImage, black: &MosaicedImage) -> Result<MosaicedImage> {
    if random.image().dims() != black.image().dims() {
        return Err(Error::DimensionMismatch("random and black frames differ in size".into()));
    }
    let data = random
        .image()
        .data()
        .iter()
        .zip(black.image().data())
        .map(|(&r, &b)| (r - b).max(0.0))
        .collect();
    MosaicedImage::new(PlanarImage::new(random.height(), random.width(), 1, data)?)
}

/// Macro-pixels whose four pixels are all valid.
pub fn macro_pixel_mask(valid: &[bool], height: usize, width: usize) -> Vec<bool> {
    let (hq, wq) = (height / 2, width / 2);
    let mut out = vec![false; hq * wq];
    for u in 0..hq {
        for v in 0..wq {
            out[u * wq + v] = (0..2).all(|dr| (0..2).all(|dc| valid[(2 * u + dr) * width + 2 * v + dc]));
        }
    }
    out
}

/// Camera pixels whose screen preimage lies on the displayed image.
pub fn screen_region(capture: &PoseCapture, h: &Homography) -> Result<Vec<bool>> {
    Ok(warp_to_camera(&capture.displayed, h, capture.height(), capture.width())?.1)
}

/// Minimum DoLP for a macro-pixel to enter the polarizer angle fit.
pub const ALPHA_MIN_DOLP: f64 = 0.1;

/// Naive Stokes with the first-order offset that an intensity gradient
/// leaves in `S1` and `S2` removed. The four analyzers of a macro-pixel sit
/// half a pixel off its centre, so a radiance slope `(gx, gy)` per pixel adds
/// `(gx + gy) / 2` to `S1` and `(gx - gy) / 2` to `S2`; the slope is taken
/// from differences of the naive `S0` between macro-pixels in `usable`.
pub fn gradient_compensated_stokes(m: &MosaicedImage, usable: &[bool]) -> StokesImage {
    let naive = naive_demosaic(m);
    let (hq, wq) = (naive.height(), naive.width());
    let ok = |u: usize, v: usize| usable[u * wq + v];
    let s0 = |u: usize, v: usize| naive.pixel(u, v).s0;
    // Per-pixel slope along one axis from the usable neighbours of `at`.
    let slope = |at: usize, len: usize, get: &dyn Fn(usize) -> (bool, f64)| {
        let lo = if at > 0 && get(at - 1).0 { at - 1 } else { at };
        let hi = if at + 1 < len && get(at + 1).0 { at + 1 } else { at };
        if hi == lo {
            0.0
        } else {
            (get(hi).1 - get(lo).1) / (2.0 * (hi - lo) as f64)
        }
    };
    let mut out = naive.clone();
    for u in 0..hq {
        for v in 0..wq {
            if !ok(u, v) {
                continue;
            }
            let gx = slope(v, wq, &|k| (ok(u, k), s0(u, k)));
            let gy = slope(u, hq, &|k| (ok(k, v), s0(k, v)));
            let p = naive.pixel(u, v);
            out.set_pixel(u, v, StokesPixel::new(p.s0, p.s1 - 0.5 * (gx + gy), p.s2 - 0.5 * (gx - gy)));
        }
    }
    out
}

/// Alpha-fit observation of one pose: homography from the corners and the
/// naive AoLP of the black-subtracted frame inside the screen region.
pub fn alpha_observation(capture: &PoseCapture) -> Result<(AlphaObservation, f64)> {
    let fit = estimate_homography(&capture.correspondences)?;
    let signal = subtract_black(&capture.random_raw, &capture.black_raw)?;
    let region = screen_region(capture, &fit.homography)?;
    let mut valid = macro_pixel_mask(&region, capture.height(), capture.width());
    let stokes = gradient_compensated_stokes(&signal, &valid);
    let (hq, wq) = (stokes.height(), stokes.width());
    for u in 0..hq {
        for v in 0..wq {
            let d = dolp(stokes.pixel(u, v));
            if d.degenerate || d.value < ALPHA_MIN_DOLP {
                valid[u * wq + v] = false;
            }
        }
    }
    let (aolp, _) = stokes.aolp();
    Ok((
        AlphaObservation {
            homography: fit.homography,
            aolp,
            valid,
        },
        fit.mean_reprojection_error,
    ))
}

/// Ground-truth training pair of one pose.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub input: MosaicedImage,
    pub intensity: PlanarImage,
    pub aolp: PlanarImage,
    pub valid: Vec<bool>,
    pub homography: Homography,
    pub reprojection_error: f64,
}

pub fn build_training_pair(capture: &PoseCapture, alpha: f64) -> Result<TrainingPair> {
    let input = subtract_black(&capture.random_raw, &capture.black_raw)?;
    let fit = estimate_homography(&capture.correspondences)?;
    let h = fit.homography;
    let (height, width) = (capture.height(), capture.width());
    let (warped, region) = warp_to_camera(&capture.displayed, &h, height, width)?;

    let s0 = naive_demosaic(&input).s0();
    let macro_valid = macro_pixel_mask(&region, height, width);
    let target = Histogram256::from_image(&s0, Some(&macro_valid));
    if target.total() == 0 {
        return Err(Error::Empty("screen region covers no complete macro-pixel"));
    }
    let intensity = histogram_match(&warped, &target, Some(&region))?;
    let intensity = PlanarImage::new(
        height,
        width,
        1,
        intensity
            .data()
            .iter()
            .zip(&region)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect(),
    )?;

    let (aolp, transport_ok) = transport_aolp_field(&h, alpha, height, width)?;
    let valid: Vec<bool> = region.iter().zip(&transport_ok).map(|(&a, &b)| a && b).collect();
    Ok(TrainingPair {
        input,
        intensity,
        aolp,
        valid,
        homography: h,
        reprojection_error: fit.mean_reprojection_error,
    })
}

/// Per-pose quality record written next to the generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseQc {
    pub pose: String,
    pub reprojection_error: f64,
    pub alpha_deg: f64,
    pub alpha_residual: f64,
    pub valid_fraction: f64,
}

/// Reads `displayed.pfm` style single-channel images stored as PFM.
pub fn read_displayed(path: impl AsRef<Path>) -> Result<PlanarImage> {
    read_pfm(path)
}
