//! Interpolation-based demosaicers and pixel-level fusion.

use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PfaPattern, PlanarImage, StokesImage};
use crate::mosaic::naive_demosaic;
use crate::stokes::{angle_to_vector, stokes_unchecked, StokesPixel};

/// Full-resolution demosaicing output.
#[derive(Clone, Debug, PartialEq)]
pub struct DemosaicResult {
    pub intensity: PlanarImage,
    /// Radians in `[-pi/2, pi/2)`; 0 where the angle is undefined.
    pub aolp: PlanarImage,
    /// Absent for methods that do not estimate the degree of polarization.
    pub stokes: Option<StokesImage>,
}

impl DemosaicResult {
    pub fn from_stokes(stokes: StokesImage) -> Self {
        let intensity = stokes.s0();
        let (aolp, _) = stokes.aolp();
        Self {
            intensity,
            aolp,
            stokes: Some(stokes),
        }
    }

    pub fn height(&self) -> usize {
        self.intensity.height()
    }

    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    fn require_stokes(&self) -> Result<&StokesImage> {
        self.stokes
            .as_ref()
            .ok_or_else(|| Error::Config("fusion needs methods that produce Stokes images".into()))
    }
}

fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Taps and weights for output index `i` of a 2x center-aligned upscale.
fn bicubic_taps(i: usize, n: usize) -> [(usize, f64); 4] {
    let y = i as f64 / 2.0 - 0.25;
    let y0 = y.floor();
    let t = y - y0;
    let clamp = |k: f64| k.clamp(0.0, (n - 1) as f64) as usize;
    [
        (clamp(y0 - 1.0), catmull_rom(t + 1.0)),
        (clamp(y0), catmull_rom(t)),
        (clamp(y0 + 1.0), catmull_rom(1.0 - t)),
        (clamp(y0 + 2.0), catmull_rom(2.0 - t)),
    ]
}

/// Separable 2x Catmull-Rom upscale with clamped edges, per channel.
pub fn upscale2x_bicubic(img: &PlanarImage) -> PlanarImage {
    let (h, w, ch) = img.dims();
    let (oh, ow) = (2 * h, 2 * w);
    let col_taps: Vec<_> = (0..ow).map(|j| bicubic_taps(j, w)).collect();
    let mut horiz = vec![0.0; h * ow * ch];
    for r in 0..h {
        for (j, taps) in col_taps.iter().enumerate() {
            for k in 0..ch {
                horiz[(r * ow + j) * ch + k] = taps.iter().map(|&(c, wt)| wt * img.get(r, c, k)).sum();
            }
        }
    }
    let mut out = vec![0.0; oh * ow * ch];
    for i in 0..oh {
        let taps = bicubic_taps(i, h);
        for j in 0..ow {
            for k in 0..ch {
                out[(i * ow + j) * ch + k] = taps.iter().map(|&(r, wt)| wt * horiz[(r * ow + j) * ch + k]).sum();
            }
        }
    }
    PlanarImage::from_raw_unchecked(oh, ow, ch, out)
}

/// Quarter-resolution Stokes followed by a 2x bicubic upscale of each channel.
pub fn demosaic_bicubic_upscale(m: &MosaicedImage) -> DemosaicResult {
    let quarter = naive_demosaic(m);
    let full = upscale2x_bicubic(quarter.as_image());
    DemosaicResult::from_stokes(StokesImage::new(full).expect("three channels"))
}

/// Quarter-resolution Stokes replicated over each macro-pixel.
pub fn demosaic_naive_nearest(m: &MosaicedImage) -> DemosaicResult {
    let quarter = naive_demosaic(m);
    let (h, w) = (m.height(), m.width());
    let mut full = StokesImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            full.set_pixel(r, c, quarter.pixel(r / 2, c / 2));
        }
    }
    DemosaicResult::from_stokes(full)
}

/// Bilinear interpolation of one orientation channel known at
/// `(r0 + 2a, c0 + 2b)`, with edge replication.
fn interpolate_channel(m: &MosaicedImage, r0: usize, c0: usize) -> Vec<f64> {
    let (h, w) = (m.height(), m.width());
    let (lh, lw) = (h / 2, w / 2);
    let lattice = |a: usize, b: usize| m.get(r0 + 2 * a, c0 + 2 * b);
    let axis = |i: usize, off: usize, n: usize| -> (usize, usize, f64) {
        let y = (i as f64 - off as f64) / 2.0;
        let y0 = y.floor();
        let t = y - y0;
        let lo = y0.clamp(0.0, (n - 1) as f64) as usize;
        let hi = (y0 + 1.0).clamp(0.0, (n - 1) as f64) as usize;
        (lo, hi, t)
    };
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let (a0, a1, ty) = axis(i, r0, lh);
        for j in 0..w {
            let (b0, b1, tx) = axis(j, c0, lw);
            let top = (1.0 - tx) * lattice(a0, b0) + tx * lattice(a0, b1);
            let bot = (1.0 - tx) * lattice(a1, b0) + tx * lattice(a1, b1);
            out.push((1.0 - ty) * top + ty * bot);
        }
    }
    out
}

/// Per-orientation bilinear interpolation, then Stokes per pixel.
pub fn demosaic_bilinear(m: &MosaicedImage) -> DemosaicResult {
    let pattern = PfaPattern;
    let chan = |angle: u32| {
        let (r0, c0) = pattern.offset_of(angle).expect("sensor angle");
        interpolate_channel(m, r0, c0)
    };
    let (i0, i45, i90, i135) = (chan(0), chan(45), chan(90), chan(135));
    let (h, w) = (m.height(), m.width());
    let mut stokes = StokesImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            stokes.set_pixel(r, c, stokes_unchecked(i0[k], i45[k], i90[k], i135[k]));
        }
    }
    DemosaicResult::from_stokes(stokes)
}

fn check_pool(results: &[DemosaicResult], min: usize) -> Result<(usize, usize)> {
    if results.len() < min {
        return Err(Error::InsufficientData(format!(
            "fusion needs at least {min} inputs, got {}",
            results.len()
        )));
    }
    let (h, w) = (results[0].height(), results[0].width());
    if results.iter().any(|r| r.height() != h || r.width() != w) {
        return Err(Error::DimensionMismatch("fusion inputs differ in size".into()));
    }
    Ok((h, w))
}

/// Mean of the values left after dropping one minimum and one maximum.
pub fn alpha_trimmed_mean(values: &mut [f64]) -> f64 {
    assert!(values.len() >= 3);
    values.sort_by(f64::total_cmp);
    let inner = &values[1..values.len() - 1];
    inner.iter().sum::<f64>() / inner.len() as f64
}

/// Alpha-trimmed mean fusion on the Stokes channels.
pub fn fuse_atmf(results: &[DemosaicResult]) -> Result<DemosaicResult> {
    let (h, w) = check_pool(results, 3)?;
    let stokes: Vec<&StokesImage> = results.iter().map(|r| r.require_stokes()).collect::<Result<_>>()?;
    let mut out = StokesImage::zeros(h, w);
    let mut buf = vec![0.0; stokes.len()];
    let mut data = out.as_image().data().to_vec();
    for (k, slot) in data.iter_mut().enumerate() {
        for (b, s) in buf.iter_mut().zip(&stokes) {
            *b = s.as_image().data()[k];
        }
        *slot = alpha_trimmed_mean(&mut buf);
    }
    out = StokesImage::new(PlanarImage::from_raw_unchecked(h, w, 3, data))?;
    Ok(DemosaicResult::from_stokes(out))
}

/// Inverse-MSE weights normalized to sum to one. Methods with zero error
/// share all the weight.
pub fn weights_from_mse(mse: &[f64]) -> Result<Vec<f64>> {
    if mse.is_empty() {
        return Err(Error::Empty("method errors"));
    }
    if mse.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("invalid MSE values {mse:?}")));
    }
    let exact = mse.iter().filter(|&&e| e == 0.0).count();
    if exact > 0 {
        return Ok(mse.iter().map(|&e| if e == 0.0 { 1.0 / exact as f64 } else { 0.0 }).collect());
    }
    let inv: Vec<f64> = mse.iter().map(|e| 1.0 / e).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.iter().map(|v| v / total).collect())
}

/// Per-Stokes-channel method weights for [`fuse_with_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
}

/// One calibration image: every pooled method's output plus the targets.
#[derive(Clone, Debug)]
pub struct CalibrationPair {
    pub results: Vec<DemosaicResult>,
    pub intensity: PlanarImage,
    pub aolp: PlanarImage,
    pub mask: Option<Vec<bool>>,
}

/// Calibrates fusion weights on training pairs.
///
/// The S0 weight comes from the intensity MSE. Ground truth carries the angle
/// but not the degree of polarization, so S1 and S2 are scored on the cosine
/// and sine components of the doubled-angle unit vector.
pub fn calibrate_fusion_weights(pairs: &[CalibrationPair]) -> Result<FusionWeights> {
    let first = pairs.first().ok_or(Error::Empty("calibration pairs"))?;
    let n_methods = first.results.len();
    if n_methods == 0 || pairs.iter().any(|p| p.results.len() != n_methods) {
        return Err(Error::InsufficientData("every pair needs the same method pool".into()));
    }
    let mut sq = vec![[0.0f64; 3]; n_methods];
    let mut count = 0usize;
    for pair in pairs {
        let (h, w) = (pair.intensity.height(), pair.intensity.width());
        if pair.aolp.height() != h || pair.aolp.width() != w {
            return Err(Error::DimensionMismatch("calibration targets differ in size".into()));
        }
        check_pool(&pair.results, 1)?;
        if pair.results[0].height() != h || pair.results[0].width() != w {
            return Err(Error::DimensionMismatch("calibration results and targets differ in size".into()));
        }
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                if pair.mask.as_ref().is_some_and(|m| !m[k]) {
                    continue;
                }
                count += 1;
                let gt = angle_to_vector(pair.aolp.get(r, c, 0));
                for (m, res) in pair.results.iter().enumerate() {
                    let p = res.require_stokes()?.pixel(r, c);
                    let n = p.s1.hypot(p.s2);
                    let (ux, uy) = if n > 0.0 { (p.s1 / n, p.s2 / n) } else { (0.0, 0.0) };
                    sq[m][0] += (p.s0 - pair.intensity.get(r, c, 0)).powi(2);
                    sq[m][1] += (ux - gt.ax).powi(2);
                    sq[m][2] += (uy - gt.ay).powi(2);
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("valid calibration pixels"));
    }
    let mse = |ch: usize| sq.iter().map(|s| s[ch] / count as f64).collect::<Vec<_>>();
    Ok(FusionWeights {
        s0: weights_from_mse(&mse(0))?,
        s1: weights_from_mse(&mse(1))?,
        s2: weights_from_mse(&mse(2))?,
    })
}

/// Per-pixel weighted sum of the Stokes channels.
pub fn fuse_with_weights(results: &[DemosaicResult], weights: &FusionWeights) -> Result<DemosaicResult> {
    let (h, w) = check_pool(results, 1)?;
    let n = results.len();
    if weights.s0.len() != n || weights.s1.len() != n || weights.s2.len() != n {
        return Err(Error::InsufficientData(format!("{n} results but weights for a different pool")));
    }
    let stokes: Vec<&StokesImage> = results.iter().map(|r| r.require_stokes()).collect::<Result<_>>()?;
    let mut out = StokesImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = StokesPixel::default();
            for (m, s) in stokes.iter().enumerate() {
                let p = s.pixel(r, c);
                acc.s0 += weights.s0[m] * p.s0;
                acc.s1 += weights.s1[m] * p.s1;
                acc.s2 += weights.s2[m] * p.s2;
            }
            out.set_pixel(r, c, acc);
        }
    }
    Ok(DemosaicResult::from_stokes(out))
}

/// Weighted-average fusion calibrated on `training_pairs`.
pub fn fuse_weighted_average(results: &[DemosaicResult], training_pairs: &[CalibrationPair]) -> Result<DemosaicResult> {
    let weights = calibrate_fusion_weights(training_pairs)?;
    fuse_with_weights(results, &weights)
}
