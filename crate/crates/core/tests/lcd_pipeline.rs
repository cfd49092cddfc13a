//! Screen-capture ground truth on the synthetic rig.

use pfadn_core::eval::{angle_mae, psnr_masked};
use pfadn_core::lcdgt::{self, build_training_pair, estimate_alpha_from_captures, render_rig, RigConfig};
use pfadn_core::stokes::wrapped_angle_error;

fn alpha_error_deg(cfg: &RigConfig) -> f64 {
    let rig = render_rig(cfg).unwrap();
    let caps: Vec<_> = rig.poses.iter().map(|p| p.capture.clone()).collect();
    let fit = estimate_alpha_from_captures(&caps).unwrap();
    wrapped_angle_error(fit.alpha, cfg.alpha).to_degrees()
}

#[test]
fn alpha_recovered_noiseless() {
    for seed in 0..3 {
        let err = alpha_error_deg(&RigConfig { seed, ..RigConfig::default() });
        assert!(err <= 0.01, "seed {seed}: {err} deg");
    }
}

#[test]
fn alpha_recovered_under_image_noise() {
    for seed in 0..3 {
        let err = alpha_error_deg(&RigConfig {
            seed,
            noise_sigma: 0.005,
            ..RigConfig::default()
        });
        assert!(err <= 0.1, "seed {seed}: {err} deg");
    }
}

#[test]
fn training_pairs_match_planted_truth() {
    let cfg = RigConfig::default();
    let rig = render_rig(&cfg).unwrap();
    for (i, pose) in rig.poses.iter().enumerate() {
        let pair = build_training_pair(&pose.capture, cfg.alpha).unwrap();
        let mask: Vec<bool> = pair.valid.iter().zip(&pose.on_screen).map(|(&a, &b)| a && b).collect();
        assert!(mask.iter().filter(|&&m| m).count() > 1000);
        let psnr = psnr_masked(&pose.intensity, &pair.intensity, Some(&mask)).unwrap();
        let worst = pair
            .aolp
            .data()
            .iter()
            .zip(pose.aolp.data())
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((&a, &b), _)| wrapped_angle_error(a, b).to_degrees())
            .fold(0.0, f64::max);
        let mean = angle_mae(&pose.aolp, &pair.aolp, Some(&mask)).unwrap();
        assert!(psnr >= 45.0, "pose {i}: {psnr} dB");
        assert!(worst <= 0.05, "pose {i}: max angle error {worst} deg, mean {mean}");
    }
}

#[test]
fn dataset_written_with_qc() {
    let dir = tempfile::tempdir().unwrap();
    let rig = render_rig(&RigConfig { poses: 4, ..RigConfig::default() }).unwrap();
    rig.save(dir.path().join("caps")).unwrap();
    let report = lcdgt::build_gt_dataset(dir.path().join("caps"), dir.path().join("gt"), None).unwrap();
    assert_eq!(report.poses.len(), 4);
    assert!((report.alpha_deg - 37.0).abs() <= 0.01);
    let manifest = pfadn_core::io::DatasetManifest::read(dir.path().join("gt/manifest.jsonl")).unwrap();
    assert_eq!(manifest.entries.len(), 4);
    manifest.validate().unwrap();
    assert!(dir.path().join("gt").join(lcdgt::QC_FILE).exists());
}
