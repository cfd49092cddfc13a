//! Metrics and benchmark harnesses: PSNR, intensity MAE, wrapped angle MAE,
//! additive-noise sweeps and training-set-size sweeps.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::classic::{
    calibrate_fusion_weights, demosaic_bicubic_upscale, demosaic_bilinear, demosaic_naive_nearest, fuse_atmf,
    fuse_with_weights, CalibrationPair, DemosaicResult, FusionWeights,
};
use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PlanarImage};
use crate::io::{DatasetManifest, Sample, Split};
use crate::mosaic::naive_demosaic;
use crate::pfadn::{demosaic_full_frame, split_validation, train, PfadnModel, TrainConfig, TrainState, TrainingSample};
use crate::stokes::{dolp, wrapped_angle_error};

fn check_dims(a: &PlanarImage, b: &PlanarImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn check_mask(mask: Option<&[bool]>, n: usize) -> Result<()> {
    if mask.is_some_and(|m| m.len() != n) {
        return Err(Error::DimensionMismatch("mask size".into()));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for images in [0, 1]; identical images give `+inf`.
pub fn psnr(gt: &PlanarImage, pred: &PlanarImage) -> Result<f64> {
    psnr_masked(gt, pred, None)
}

pub fn psnr_masked(gt: &PlanarImage, pred: &PlanarImage, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(gt, pred)?;
    check_mask(mask, gt.data().len())?;
    let (mut se, mut n) = (0.0, 0usize);
    for (k, (a, b)) in gt.data().iter().zip(pred.data()).enumerate() {
        if mask.is_none_or(|m| m[k]) {
            se += (a - b).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no pixels to compare"));
    }
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Mean absolute intensity error scaled by 1000.
pub fn intensity_mae_e3(gt: &PlanarImage, pred: &PlanarImage, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(gt, pred)?;
    check_mask(mask, gt.data().len())?;
    let (mut s, mut n) = (0.0, 0usize);
    for (k, (a, b)) in gt.data().iter().zip(pred.data()).enumerate() {
        if mask.is_none_or(|m| m[k]) {
            s += (a - b).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no pixels to compare"));
    }
    Ok(1000.0 * s / n as f64)
}

/// Mean wrapped orientation error in degrees over the pixels in `mask`.
pub fn angle_mae(gt: &PlanarImage, pred: &PlanarImage, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(gt, pred)?;
    check_mask(mask, gt.data().len())?;
    let (mut s, mut n) = (0.0, 0usize);
    for (k, (a, b)) in gt.data().iter().zip(pred.data()).enumerate() {
        if mask.is_none_or(|m| m[k]) {
            s += wrapped_angle_error(*a, *b);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("angle mask selects no pixels"));
    }
    Ok((s / n as f64).to_degrees())
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` to every pixel
/// and clamps to [0, 1]. The standard-normal draws depend only on `seed`, so
/// one seed gives the same noise pattern scaled by `sigma`.
pub fn add_noise(m: &MosaicedImage, sigma: f64, seed: u64) -> Result<MosaicedImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(m.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = m.image();
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (v + sigma * z).clamp(0.0, 1.0)
        })
        .collect();
    MosaicedImage::new(PlanarImage::new(img.height(), img.width(), 1, data)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Naive,
    Bicubic,
    Bilinear,
    Atmf,
    Weighted,
    Pfadn,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Naive,
        Method::Bicubic,
        Method::Bilinear,
        Method::Atmf,
        Method::Weighted,
        Method::Pfadn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Bicubic => "bicubic",
            Method::Bilinear => "bilinear",
            Method::Atmf => "atmf",
            Method::Weighted => "weighted",
            Method::Pfadn => "pfadn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::UnknownMethod(s.trim().to_string()))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// The interpolators pooled by the fusion methods.
fn fusion_pool(m: &MosaicedImage) -> Vec<DemosaicResult> {
    vec![demosaic_naive_nearest(m), demosaic_bicubic_upscale(m), demosaic_bilinear(m)]
}

/// A ready-to-run demosaicer.
pub enum Demosaicer<'a> {
    Classic(Method),
    Weighted(FusionWeights),
    Pfadn(&'a PfadnModel<f32>),
}

impl Demosaicer<'_> {
    pub fn run(&self, m: &MosaicedImage) -> Result<DemosaicResult> {
        match self {
            Demosaicer::Classic(Method::Naive) => Ok(demosaic_naive_nearest(m)),
            Demosaicer::Classic(Method::Bicubic) => Ok(demosaic_bicubic_upscale(m)),
            Demosaicer::Classic(Method::Bilinear) => Ok(demosaic_bilinear(m)),
            Demosaicer::Classic(Method::Atmf) => fuse_atmf(&fusion_pool(m)),
            Demosaicer::Classic(other) => Err(Error::Config(format!("{other} is not a stand-alone classic method"))),
            Demosaicer::Weighted(w) => fuse_with_weights(&fusion_pool(m), w),
            Demosaicer::Pfadn(model) => demosaic_full_frame(model, m, 1),
        }
    }
}

/// Calibrates weighted-average fusion on clean training samples.
pub fn calibrate_weighted(train: &[Sample]) -> Result<FusionWeights> {
    let pairs: Vec<CalibrationPair> = train
        .iter()
        .map(|s| CalibrationPair {
            results: fusion_pool(&s.input),
            intensity: s.intensity.clone(),
            aolp: s.aolp.clone(),
            mask: s.mask.clone(),
        })
        .collect();
    calibrate_fusion_weights(&pairs)
}

/// Per-image scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageMetrics {
    pub psnr_db: f64,
    pub intensity_mae_e3: f64,
    pub angle_mae_deg: f64,
}

/// Pixels scored for the angle: inside the sample mask and where the DoLP of
/// the clean input's macro-pixel reaches `min_dolp`. The ground truth does
/// not carry the DoLP, so the clean mosaic stands in for it.
pub fn angle_mask(sample: &Sample, min_dolp: f64) -> Vec<bool> {
    let (h, w) = (sample.input.height(), sample.input.width());
    let quarter = naive_demosaic(&sample.input);
    let mut out = vec![true; h * w];
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            let d = dolp(quarter.pixel(r / 2, c / 2));
            out[k] = !d.degenerate && d.value >= min_dolp && sample.mask.as_ref().is_none_or(|m| m[k]);
        }
    }
    out
}

pub fn score(sample: &Sample, pred: &DemosaicResult, min_dolp: f64) -> Result<ImageMetrics> {
    let mask = sample.mask.as_deref();
    Ok(ImageMetrics {
        psnr_db: psnr_masked(&sample.intensity, &pred.intensity, mask)?,
        intensity_mae_e3: intensity_mae_e3(&sample.intensity, &pred.intensity, mask)?,
        angle_mae_deg: angle_mae(&sample.aolp, &pred.aolp, Some(&angle_mask(sample, min_dolp)))?,
    })
}

/// Noise seed of test image `index`.
pub fn noise_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Scores `method` on every sample with noise `sigma`, over `jobs` threads.
pub fn evaluate(
    samples: &[Sample],
    method: &Demosaicer<'_>,
    sigma: f64,
    seed: u64,
    min_dolp: f64,
    jobs: usize,
) -> Result<Vec<ImageMetrics>> {
    let one = |i: usize| -> Result<ImageMetrics> {
        let noisy = add_noise(&samples[i].input, sigma, noise_seed(seed, i))?;
        score(&samples[i], &method.run(&noisy)?, min_dolp)
    };
    let idx: Vec<usize> = (0..samples.len()).collect();
    let jobs = jobs.clamp(1, idx.len().max(1));
    if jobs == 1 {
        return idx.into_iter().map(one).collect();
    }
    let chunk = idx.len().div_ceil(jobs);
    thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(|&i| one(i)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub sigma_n: f64,
    pub psnr_db: f64,
    pub intensity_mae_e3: f64,
    pub angle_mae_deg: f64,
    pub n_images: usize,
}

impl MetricsRow {
    /// Means over images; a single infinite PSNR makes the mean infinite.
    pub fn aggregate(method: &str, sigma_n: f64, per_image: &[ImageMetrics]) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Empty("no images evaluated"));
        }
        let n = per_image.len() as f64;
        let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            method: method.to_string(),
            sigma_n,
            psnr_db: mean(|m| m.psnr_db),
            intensity_mae_e3: mean(|m| m.intensity_mae_e3),
            angle_mae_deg: mean(|m| m.angle_mae_deg),
            n_images: per_image.len(),
        })
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

pub const METRICS_HEADER: &str = "method,sigma_n,psnr_db,intensity_mae_e3,angle_mae_deg,n_images";

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes rows as CSV; infinite PSNR is written as `inf`.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            fmt_num(r.sigma_n),
            fmt_num(r.psnr_db),
            fmt_num(r.intensity_mae_e3),
            fmt_num(r.angle_mae_deg),
            r.n_images
        ));
    }
    write_text(path.as_ref(), &s)
}

/// Plot-ready table: one line per sigma, PSNR and angle MAE per method.
pub fn write_sweep_tsv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.dedup();
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma_n).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut s = String::from("sigma_n");
    for m in &methods {
        s.push_str(&format!("\t{m}_psnr_db\t{m}_angle_mae_deg"));
    }
    s.push('\n');
    for &sigma in &sigmas {
        s.push_str(&fmt_num(sigma));
        for m in &methods {
            match rows.iter().find(|r| r.method == *m && r.sigma_n == sigma) {
                Some(r) => s.push_str(&format!("\t{}\t{}", fmt_num(r.psnr_db), fmt_num(r.angle_mae_deg))),
                None => s.push_str("\tnan\tnan"),
            }
        }
        s.push('\n');
    }
    write_text(path.as_ref(), &s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    /// Angle pixels whose DoLP is below this are skipped.
    pub min_dolp: f64,
    pub jobs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Naive, Method::Bicubic, Method::Bilinear],
            sigmas: vec![0.0],
            seed: 0,
            min_dolp: 0.02,
            jobs: 1,
        }
    }
}

/// Evaluates every method at every noise level on the test split. Rows are
/// sorted by `(method, sigma_n)`. With `out_csv`, the CSV and a `.tsv`
/// sibling are written.
pub fn run_benchmark(
    manifest: &DatasetManifest,
    config: &BenchmarkConfig,
    model: Option<&PfadnModel<f32>>,
    out_csv: Option<&Path>,
) -> Result<Vec<MetricsRow>> {
    if config.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config("noise levels must be non-negative".into()));
    }
    let mut methods = config.methods.clone();
    methods.sort_by_key(|m| m.name());
    methods.dedup();
    if methods.contains(&Method::Pfadn) && model.is_none() {
        return Err(Error::Config("method pfadn needs a weights file".into()));
    }
    let test = manifest.load_split(Split::Test)?;
    if test.is_empty() {
        return Err(Error::Empty("test split is empty"));
    }
    let weighted = if methods.contains(&Method::Weighted) {
        Some(calibrate_weighted(&manifest.load_split(Split::Train)?)?)
    } else {
        None
    };
    let mut sigmas = config.sigmas.clone();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();

    let mut rows = Vec::new();
    for &method in &methods {
        let runner = match method {
            Method::Weighted => Demosaicer::Weighted(weighted.clone().expect("calibrated above")),
            Method::Pfadn => Demosaicer::Pfadn(model.expect("checked above")),
            m => Demosaicer::Classic(m),
        };
        for &sigma in &sigmas {
            log::info!("evaluating {method} at sigma {sigma}");
            let per_image = evaluate(&test, &runner, sigma, config.seed, config.min_dolp, config.jobs)?;
            rows.push(MetricsRow::aggregate(method.name(), sigma, &per_image)?);
        }
    }
    if let Some(path) = out_csv {
        write_metrics_csv(path, &rows)?;
        write_sweep_tsv(tsv_sibling(path), &rows)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub train_size: usize,
    pub psnr_db: f64,
    pub intensity_mae_e3: f64,
    pub angle_mae_deg: f64,
    pub n_images: usize,
}

/// Fine-tunes a copy of `pretrained` on the first `size` training samples for
/// every entry of `sizes` and scores it on the test split.
pub fn training_size_sweep(
    manifest: &DatasetManifest,
    sizes: &[usize],
    pretrained: &PfadnModel<f32>,
    config: &TrainConfig,
    min_dolp: f64,
    out_csv: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let train_samples = manifest.load_split(Split::Train)?;
    if let Some(&too_big) = sizes.iter().find(|&&s| s > train_samples.len() || s == 0) {
        return Err(Error::InsufficientData(format!(
            "sweep size {too_big} but the train split holds {} samples",
            train_samples.len()
        )));
    }
    let test = manifest.load_split(Split::Test)?;
    if test.is_empty() {
        return Err(Error::Empty("test split is empty"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        log::info!("training-size sweep: {size} samples");
        let subset: Vec<TrainingSample> = train_samples[..size].iter().map(TrainingSample::from_sample).collect();
        let (fit, val) = split_validation(subset, 0.1);
        let mut model = pretrained.clone();
        let mut state = TrainState::new(config.lr);
        train(&mut model, &fit, &val, config, &mut state, |_, _, _| Ok(()))?;
        let per_image = evaluate(&test, &Demosaicer::Pfadn(&model), 0.0, 0, min_dolp, 1)?;
        let r = MetricsRow::aggregate("pfadn", 0.0, &per_image)?;
        rows.push(SweepRow {
            train_size: size,
            psnr_db: r.psnr_db,
            intensity_mae_e3: r.intensity_mae_e3,
            angle_mae_deg: r.angle_mae_deg,
            n_images: r.n_images,
        });
    }
    if let Some(path) = out_csv {
        let mut s = String::from("train_size,psnr_db,intensity_mae_e3,angle_mae_deg,n_images\n");
        for r in &rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.train_size,
                fmt_num(r.psnr_db),
                fmt_num(r.intensity_mae_e3),
                fmt_num(r.angle_mae_deg),
                r.n_images
            ));
        }
        write_text(path, &s)?;
    }
    Ok(rows)
}

/// `<stem>.tsv` next to a CSV report.
pub fn tsv_sibling(csv: &Path) -> PathBuf {
    csv.with_extension("tsv")
}
