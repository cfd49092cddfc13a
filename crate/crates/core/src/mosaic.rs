//! Forward PFA simulation, quarter-resolution demosaicing and the synthetic
//! training-set generator.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PfaPattern, PlanarImage, StokesImage};
use crate::io::{self, DatasetManifest, ManifestEntry, Split};
use crate::stokes::{stokes_unchecked, wrap_half_turn_f32, StokesPixel};

/// `(cos 2theta, sin 2theta)`, exact for the four sensor orientations.
fn doubled_angle_trig(theta_deg: f64) -> (f64, f64) {
    match theta_deg {
        t if t == 0.0 => (1.0, 0.0),
        t if t == 45.0 => (0.0, 1.0),
        t if t == 90.0 => (-1.0, 0.0),
        t if t == 135.0 => (0.0, -1.0),
        t => {
            let (s, c) = (2.0 * t.to_radians()).sin_cos();
            (c, s)
        }
    }
}

/// Intensity behind an ideal linear polarizer at `theta_deg` degrees.
pub fn polarizer_intensity(p: StokesPixel, theta_deg: f64) -> f64 {
    let (c, s) = doubled_angle_trig(theta_deg);
    (0.5 * (p.s0 + p.s1 * c + p.s2 * s)).max(0.0)
}

/// Full-resolution polarization state of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationScene {
    pub intensity: PlanarImage,
    pub aolp: PlanarImage,
    pub dolp: PlanarImage,
}

impl PolarizationScene {
    pub fn new(intensity: PlanarImage, aolp: PlanarImage, dolp: PlanarImage) -> Result<Self> {
        let dims = intensity.dims();
        if dims.2 != 1 || aolp.dims() != dims || dolp.dims() != dims {
            return Err(Error::DimensionMismatch(
                "scene rasters must be single-channel and share dimensions".into(),
            ));
        }
        if dolp.data().iter().any(|&d| !(0.0..=1.0).contains(&d)) {
            return Err(Error::Domain("DoLP outside [0, 1]".into()));
        }
        Ok(Self { intensity, aolp, dolp })
    }

    pub fn constant(height: usize, width: usize, s0: f64, aolp: f64, dolp: f64) -> Result<Self> {
        Self::new(
            PlanarImage::filled(height, width, 1, s0),
            PlanarImage::filled(height, width, 1, aolp),
            PlanarImage::filled(height, width, 1, dolp),
        )
    }

    pub fn stokes_at(&self, row: usize, col: usize) -> StokesPixel {
        StokesPixel::from_polarization(
            self.intensity.get(row, col, 0),
            self.aolp.get(row, col, 0),
            self.dolp.get(row, col, 0),
        )
    }
}

pub fn mosaic_scene(scene: &PolarizationScene) -> Result<MosaicedImage> {
    let (h, w, _) = scene.intensity.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("scene must have even dimensions, got {h}x{w}")));
    }
    let pattern = PfaPattern;
    let raw = PlanarImage::from_fn(h, w, |r, c| {
        polarizer_intensity(scene.stokes_at(r, c), pattern.angle_at(r % 2, c % 2))
    });
    MosaicedImage::new(raw)
}

/// One Stokes triple per 2x2 macro-pixel.
pub fn naive_demosaic(m: &MosaicedImage) -> StokesImage {
    let (h, w) = (m.height() / 2, m.width() / 2);
    let mut out = StokesImage::zeros(h, w);
    for u in 0..h {
        for v in 0..w {
            let (r, c) = (2 * u, 2 * v);
            let i90 = m.get(r, c);
            let i45 = m.get(r, c + 1);
            let i135 = m.get(r + 1, c);
            let i0 = m.get(r + 1, c + 1);
            out.set_pixel(u, v, stokes_unchecked(i0, i45, i90, i135));
        }
    }
    out
}

/// Band-limited random Fourier field parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomFieldConfig {
    pub num_harmonics: usize,
    /// Cycles per image.
    pub max_frequency: f64,
    pub amplitude_decay: f64,
    pub seed: u64,
}

impl Default for RandomFieldConfig {
    fn default() -> Self {
        Self {
            num_harmonics: 8,
            max_frequency: 4.0,
            amplitude_decay: 1.5,
            seed: 0,
        }
    }
}

/// Sum of random-phase 2-D sinusoids, affinely rescaled so that its extremes
/// hit `range`. A field whose span is numerically zero becomes the midpoint.
pub fn random_smooth_field(config: &RandomFieldConfig, height: usize, width: usize, range: (f64, f64)) -> Result<PlanarImage> {
    if config.num_harmonics == 0 {
        return Err(Error::Config("num_harmonics must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let harmonics: Vec<(f64, f64, f64, f64)> = (0..config.num_harmonics)
        .map(|_| {
            let f = config.max_frequency * rng.random::<f64>().sqrt().max(1e-3);
            let dir = rng.random::<f64>() * 2.0 * PI;
            let phase = rng.random::<f64>() * 2.0 * PI;
            let amp = f.max(1e-12).powf(-config.amplitude_decay);
            (f * dir.cos(), f * dir.sin(), phase, amp)
        })
        .collect();
    let amp_sum: f64 = harmonics.iter().map(|h| h.3).sum();
    let mut data = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let x = c as f64 / width.max(1) as f64;
            let y = r as f64 / height.max(1) as f64;
            let v: f64 = harmonics
                .iter()
                .map(|&(fx, fy, ph, a)| a / amp_sum * (2.0 * PI * (fx * x + fy * y) + ph).cos())
                .sum();
            data.push(v);
        }
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let out = if span <= 1e-9 {
        vec![0.5 * (range.0 + range.1); data.len()]
    } else {
        data.iter().map(|&v| range.0 + (v - lo) / span * (range.1 - range.0)).collect()
    };
    PlanarImage::new(height, width, 1, out)
}

/// A deterministic stand-in for natural images: a smooth background with
/// hard-edged shapes and striped texture patches.
pub fn procedural_intensity(seed: u64, height: usize, width: usize) -> PlanarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1A6E);
    let base = random_smooth_field(
        &RandomFieldConfig {
            num_harmonics: 6,
            max_frequency: 3.0,
            amplitude_decay: 1.0,
            seed: rng.random(),
        },
        height,
        width,
        (0.15, 0.85),
    )
    .expect("valid field config");
    let mut data = base.into_data();
    let (hf, wf) = (height as f64, width as f64);
    let n_shapes = rng.random_range(4..10);
    for _ in 0..n_shapes {
        let cy = rng.random::<f64>() * hf;
        let cx = rng.random::<f64>() * wf;
        let ry = (0.05 + 0.25 * rng.random::<f64>()) * hf;
        let rx = (0.05 + 0.25 * rng.random::<f64>()) * wf;
        let level = 0.05 + 0.9 * rng.random::<f64>();
        let disc = rng.random::<bool>();
        let striped = rng.random::<f64>() < 0.35;
        let period = 3.0 + 6.0 * rng.random::<f64>();
        let stripe_dir = rng.random::<f64>() * PI;
        let (sd, cd) = stripe_dir.sin_cos();
        for r in 0..height {
            for c in 0..width {
                let dy = (r as f64 - cy) / ry;
                let dx = (c as f64 - cx) / rx;
                let inside = if disc { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    let mut v = level;
                    if striped {
                        let t = (c as f64 * cd + r as f64 * sd) * 2.0 * PI / period;
                        v = (v + 0.15 * t.sin()).clamp(0.02, 0.98);
                    }
                    data[r * width + c] = v;
                }
            }
        }
    }
    PlanarImage::new(height, width, 1, data).expect("finite procedural image")
}

/// Where the synthetic generator draws its intensity crops from.
#[derive(Clone, Debug)]
pub enum IntensitySource {
    /// Grayscale PGM/PFM files in a directory.
    Directory(PathBuf),
    /// [`procedural_intensity`] images, one per sample.
    Procedural,
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub tile: usize,
    pub angle_field: RandomFieldConfig,
    pub dolp_field: RandomFieldConfig,
    pub dolp_range: (f64, f64),
    pub quantize_12bit: bool,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tile: 128,
            angle_field: RandomFieldConfig::default(),
            dolp_field: RandomFieldConfig::default(),
            dolp_range: (0.2, 1.0),
            quantize_12bit: false,
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub mosaic: MosaicedImage,
    pub scene: PolarizationScene,
}

fn quantize_12bit(img: &PlanarImage) -> PlanarImage {
    img.map(|v| (v.clamp(0.0, 1.0) * 4095.0).round() / 4095.0)
}

/// Renders one sample from an intensity crop; all randomness comes from `seed`.
pub fn synthesize_sample(intensity: PlanarImage, config: &SynthConfig, seed: u64) -> Result<SyntheticSample> {
    let (h, w, _) = intensity.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aolp_cfg = RandomFieldConfig {
        seed: rng.random(),
        ..config.angle_field
    };
    let dolp_cfg = RandomFieldConfig {
        seed: rng.random(),
        ..config.dolp_field
    };
    let aolp = random_smooth_field(&aolp_cfg, h, w, (-FRAC_PI_2, FRAC_PI_2))?.map(wrap_half_turn_f32);
    let dolp = random_smooth_field(&dolp_cfg, h, w, config.dolp_range)?;
    let scene = PolarizationScene::new(intensity, aolp, dolp)?;
    let mut mosaic = mosaic_scene(&scene)?;
    if config.quantize_12bit {
        mosaic = MosaicedImage::new(quantize_12bit(mosaic.image()))?;
    }
    Ok(SyntheticSample { mosaic, scene })
}

fn load_sources(dir: &Path, tile: usize) -> Result<Vec<PlanarImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("pgm") | Some("pfm")
            )
        })
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in paths {
        let img = io::read_image(&p)?;
        let img = if img.channels() == 1 { img } else { img.channel(0) };
        if img.height() >= tile && img.width() >= tile {
            images.push(img);
        }
    }
    if images.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no grayscale images of at least {tile}x{tile} in {}",
            dir.display()
        )));
    }
    Ok(images)
}

/// Number of training entries for an `n`-sample 75/25-style split.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((n as f64) * train_fraction).round() as usize
}

/// Draws an intensity crop for sample `index`.
fn draw_intensity(sources: &Option<Vec<PlanarImage>>, tile: usize, rng: &mut ChaCha8Rng) -> Result<PlanarImage> {
    match sources {
        Some(images) => {
            let img = &images[rng.random_range(0..images.len())];
            let r = rng.random_range(0..=img.height() - tile);
            let c = rng.random_range(0..=img.width() - tile);
            img.crop(r, c, tile, tile)
        }
        None => Ok(procedural_intensity(rng.random(), tile, tile)),
    }
}

/// Generates `n_samples` in memory; sample `i` is seeded with `seed ^ i`.
pub fn synthesize_samples(source: &IntensitySource, n_samples: usize, config: &SynthConfig) -> Result<Vec<SyntheticSample>> {
    if config.tile == 0 || config.tile % 2 != 0 {
        return Err(Error::Config(format!("tile must be even and positive, got {}", config.tile)));
    }
    let sources = match source {
        IntensitySource::Directory(dir) => Some(load_sources(dir, config.tile)?),
        IntensitySource::Procedural => None,
    };
    (0..n_samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ i as u64);
            let intensity = draw_intensity(&sources, config.tile, &mut rng)?;
            synthesize_sample(intensity, config, rng.random())
        })
        .collect()
}

/// Writes `input_NNNNN.pfm`, `s0_NNNNN.pfm` and `aolp_NNNNN.pfm` per sample
/// plus `manifest.jsonl` into `out_dir`. Samples past the train fraction form
/// the test split.
pub fn generate_synthetic_dataset(
    source: &IntensitySource,
    n_samples: usize,
    out_dir: impl AsRef<Path>,
    config: &SynthConfig,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = synthesize_samples(source, n_samples, config)?;
    let n_train = train_count(n_samples, config.train_fraction);
    let mut manifest = DatasetManifest::new(out_dir);
    for (i, s) in samples.iter().enumerate() {
        let entry = ManifestEntry {
            input: format!("input_{i:05}.pfm").into(),
            intensity: format!("s0_{i:05}.pfm").into(),
            aolp: format!("aolp_{i:05}.pfm").into(),
            split: if i < n_train { Split::Train } else { Split::Test },
            mask: None,
        };
        io::write_pfm(s.mosaic.image(), out_dir.join(&entry.input))?;
        io::write_pfm(&s.scene.intensity, out_dir.join(&entry.intensity))?;
        io::write_pfm(&s.scene.aolp, out_dir.join(&entry.aolp))?;
        manifest.entries.push(entry);
    }
    manifest.write(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
