//! Ground truth from LCD-screen captures: black-frame removal, homographies,
//! polarizer-field transport, histogram matching and the screen polarizer
//! angle fit.

pub mod capture;
pub mod histogram;
pub mod homography;
pub mod synth;
pub mod transport;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use capture::{
    alpha_observation, build_training_pair, list_pose_dirs, macro_pixel_mask, subtract_black, PoseCapture, PoseQc,
    TrainingPair,
};
pub use histogram::{histogram_match, Histogram256, BINS};
pub use homography::{
    estimate_homography, homography_jacobian, project_point, read_correspondences, write_correspondences,
    Correspondence, Homography, HomographyFit,
};
pub use synth::{render_rig, RigConfig, RigPose, RigTruth, SyntheticRig};
pub use transport::{
    estimate_alpha, sample_bilinear, transport_aolp_field, transport_angle, warp_to_camera, AlphaFit, AlphaObservation,
    ALPHA_GRID,
};

use crate::error::{Error, Result};
use crate::image::PlanarImage;
use crate::io::{write_pfm, write_pgm, DatasetManifest, ManifestEntry, Split};
use crate::mosaic::train_count;
use crate::stokes::wrap_half_turn_f32;

/// Screen polarizer angle fitted over all poses.
pub fn estimate_alpha_from_captures(captures: &[PoseCapture]) -> Result<AlphaFit> {
    let obs = captures
        .iter()
        .map(|c| alpha_observation(c).map(|(o, _)| o))
        .collect::<Result<Vec<_>>>()?;
    estimate_alpha(&obs)
}

pub fn load_captures(root: impl AsRef<Path>) -> Result<Vec<(String, PoseCapture)>> {
    list_pose_dirs(root)?
        .into_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            PoseCapture::load(&d).map(|c| (name, c))
        })
        .collect()
}

/// Dataset-level QC written as `qc.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GtReport {
    pub alpha_deg: f64,
    pub alpha_residual: f64,
    pub alpha_samples: usize,
    pub poses: Vec<PoseQc>,
}

pub const QC_FILE: &str = "qc.json";

/// Builds a training dataset from every pose directory under `captures`.
/// `alpha` overrides the fitted screen angle (radians). The last quarter of
/// the poses form the test split.
pub fn build_gt_dataset(captures: impl AsRef<Path>, out_dir: impl AsRef<Path>, alpha: Option<f64>) -> Result<GtReport> {
    let out_dir = out_dir.as_ref();
    let poses = load_captures(captures)?;
    let caps: Vec<PoseCapture> = poses.iter().map(|(_, c)| c.clone()).collect();
    let fit = estimate_alpha_from_captures(&caps)?;
    let alpha = alpha.unwrap_or(fit.alpha);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let n_train = train_count(poses.len(), 0.75);
    let mut manifest = DatasetManifest::new(out_dir);
    let mut qc = Vec::with_capacity(poses.len());
    for (i, (name, capture)) in poses.iter().enumerate() {
        log::info!("building ground truth for {name}");
        let pair = build_training_pair(capture, alpha)?;
        let entry = ManifestEntry {
            input: format!("input_{i:05}.pfm").into(),
            intensity: format!("s0_{i:05}.pfm").into(),
            aolp: format!("aolp_{i:05}.pfm").into(),
            split: if i < n_train { Split::Train } else { Split::Test },
            mask: Some(format!("mask_{i:05}.pgm").into()),
        };
        let mask = PlanarImage::new(
            capture.height(),
            capture.width(),
            1,
            pair.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )?;
        write_pfm(pair.input.image(), out_dir.join(&entry.input))?;
        write_pfm(&pair.intensity, out_dir.join(&entry.intensity))?;
        write_pfm(&pair.aolp.map(wrap_half_turn_f32), out_dir.join(&entry.aolp))?;
        write_pgm(&mask, out_dir.join(entry.mask.as_ref().expect("set above")), 1)?;
        manifest.entries.push(entry);
        qc.push(PoseQc {
            pose: name.clone(),
            reprojection_error: pair.reprojection_error,
            alpha_deg: alpha.to_degrees(),
            alpha_residual: fit.residual,
            valid_fraction: pair.valid.iter().filter(|&&v| v).count() as f64 / pair.valid.len() as f64,
        });
    }
    manifest.write(out_dir.join("manifest.jsonl"))?;
    let report = GtReport {
        alpha_deg: alpha.to_degrees(),
        alpha_residual: fit.residual,
        alpha_samples: fit.samples,
        poses: qc,
    };
    let path = out_dir.join(QC_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
