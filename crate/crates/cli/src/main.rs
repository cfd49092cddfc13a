//! `pfadn`: synthetic data, demosaicing, training, evaluation and
//! screen-capture ground truth from the command line.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pfadn_core::classic::{demosaic_bicubic_upscale, demosaic_bilinear, fuse_atmf, DemosaicResult};
use pfadn_core::eval::{self, BenchmarkConfig, Method};
use pfadn_core::io::{self, load_weights, save_weights, DatasetManifest, Split};
use pfadn_core::lcdgt::{self, render_rig};
use pfadn_core::mosaic::{generate_synthetic_dataset, naive_demosaic, IntensitySource};
use pfadn_core::pfadn::{
    demosaic_full_frame, load_training_samples, split_validation, train, write_metrics_csv, PfadnConfig, PfadnModel,
    TrainState,
};
use pfadn_core::stokes::wrap_half_turn_f32;
use pfadn_core::MosaicedImage;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error(transparent)]
    Runtime(#[from] pfadn_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(pfadn_core::Error::Config(_) | pfadn_core::Error::UnknownMethod(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "pfadn", version, about = "PFA demosaicing toolkit")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-tile and per-image work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Run configuration file (key=value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic training set with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: usize,
        /// Directory of grayscale PGM/PFM images; procedural textures if absent.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Demosaic one raw PFA image.
    Demosaic {
        /// naive, bicubic, bilinear, atmf or pfadn.
        #[arg(long)]
        method: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Train PFADN on a manifest's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from these weights and their optimizer sidecars.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Per-epoch CSV log; defaults to `<out>.metrics.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Benchmark methods on the test split over noise levels.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated methods; all classic ones (plus pfadn with --weights) by default.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Comma-separated noise standard deviations.
        #[arg(long, default_value = "0")]
        sigmas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune pretrained weights on growing train subsets.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Comma-separated subset sizes.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a training set from screen captures.
    GtBuild {
        #[arg(long)]
        captures: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use this screen polarizer angle instead of fitting it.
        #[arg(long)]
        alpha_deg: Option<f64>,
    },
    /// Fit the screen polarizer angle from screen captures.
    AlphaEstimate {
        #[arg(long)]
        captures: PathBuf,
    },
    /// Render a synthetic screen-capture set.
    Rig {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{what}: cannot parse {t:?}")))
        })
        .collect()
}

fn load_model(path: &Path, tile: usize) -> Result<PfadnModel<f32>> {
    let params = load_weights(path)?;
    let cfg = PfadnConfig::infer(&params, tile)?;
    Ok(PfadnModel::from_params(cfg, params)?)
}

fn write_result(prefix: &Path, res: &DemosaicResult) -> Result<()> {
    let with_suffix = |s: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(s);
        PathBuf::from(p)
    };
    io::write_pfm(&res.intensity, with_suffix("_intensity.pfm"))?;
    io::write_pfm(&res.aolp.map(wrap_half_turn_f32), with_suffix("_aolp.pfm"))?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(pfadn_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Synth { out, samples, source } => {
            let synth = cfg.synth(cli.seed)?;
            let source = source.map_or(IntensitySource::Procedural, IntensitySource::Directory);
            log::info!("rendering {samples} samples into {}", out.display());
            let m = generate_synthetic_dataset(&source, samples, &out, &synth)?;
            log::info!("{} train / {} test", m.count(Split::Train), m.count(Split::Test));
        }
        Command::Demosaic {
            method,
            input,
            out_prefix,
            weights,
        } => {
            let method: Method = method.parse()?;
            let raw = io::read_image(&input)?;
            let raw = if raw.channels() == 1 { raw } else { raw.channel(0) };
            let m = MosaicedImage::new(raw)?;
            let res = match method {
                Method::Naive => DemosaicResult::from_stokes(naive_demosaic(&m)),
                Method::Bicubic => demosaic_bicubic_upscale(&m),
                Method::Bilinear => demosaic_bilinear(&m),
                Method::Atmf => fuse_atmf(&[
                    pfadn_core::classic::demosaic_naive_nearest(&m),
                    demosaic_bicubic_upscale(&m),
                    demosaic_bilinear(&m),
                ])?,
                Method::Weighted => {
                    return Err(CliError::Usage(
                        "weighted fusion needs training data; use `eval` with a manifest".into(),
                    ))
                }
                Method::Pfadn => {
                    let w = weights.ok_or_else(|| CliError::Usage("method pfadn requires --weights".into()))?;
                    let model = load_model(&w, cfg.get("model.tile")?)?;
                    demosaic_full_frame(&model, &m, jobs)?
                }
            };
            create_parent(&out_prefix)?;
            write_result(&out_prefix, &res)?;
        }
        Command::Train {
            manifest,
            out,
            resume,
            epochs,
            metrics,
        } => {
            let mut tc = cfg.train(cli.seed)?;
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let manifest = DatasetManifest::read(&manifest)?;
            let samples = load_training_samples(&manifest, Split::Train)?;
            let (fit, val) = split_validation(samples, cfg.get("train.val_fraction")?);
            log::info!("{} training / {} validation samples", fit.len(), val.len());
            let (mut model, mut state) = match &resume {
                Some(w) => {
                    let model = load_model(w, cfg.get("model.tile")?)?;
                    let state = TrainState::load(w)?.unwrap_or_else(|| TrainState::new(tc.lr));
                    log::info!("resuming from {} after epoch {}", w.display(), state.epoch);
                    (model, state)
                }
                None => (PfadnModel::init(cfg.model()?, cli.seed)?, TrainState::new(tc.lr)),
            };
            create_parent(&out)?;
            let metrics = metrics.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".metrics.csv");
                p.into()
            });
            let mut log_rows = Vec::new();
            train(&mut model, &fit, &val, &tc, &mut state, |row, model, state| {
                save_weights(&model.to_named(), &out)?;
                state.save(&out)?;
                log_rows.push(*row);
                write_metrics_csv(&metrics, &log_rows)
            })?;
            save_weights(&model.to_named(), &out)?;
            state.save(&out)?;
            write_metrics_csv(&metrics, &log_rows)?;
        }
        Command::Eval {
            manifest,
            methods,
            weights,
            sigmas,
            out,
        } => {
            let methods = match methods {
                Some(list) => eval::parse_methods(&list)?,
                None => {
                    let mut m = vec![Method::Naive, Method::Bicubic, Method::Bilinear, Method::Atmf, Method::Weighted];
                    if weights.is_some() {
                        m.push(Method::Pfadn);
                    }
                    m
                }
            };
            let model = match &weights {
                Some(w) => Some(load_model(w, cfg.get("model.tile")?)?),
                None => None,
            };
            let bc = BenchmarkConfig {
                methods,
                sigmas: parse_list("--sigmas", &sigmas)?,
                seed: cli.seed,
                min_dolp: cfg.get("eval.min_dolp")?,
                jobs,
            };
            let manifest = DatasetManifest::read(&manifest)?;
            eval::run_benchmark(&manifest, &bc, model.as_ref(), Some(&out))?;
        }
        Command::Sweep {
            manifest,
            weights,
            sizes,
            out,
        } => {
            let sizes: Vec<usize> = parse_list("--sizes", &sizes)?;
            let model = load_model(&weights, cfg.get("model.tile")?)?;
            let manifest = DatasetManifest::read(&manifest)?;
            eval::training_size_sweep(
                &manifest,
                &sizes,
                &model,
                &cfg.train(cli.seed)?,
                cfg.get("eval.min_dolp")?,
                Some(&out),
            )?;
        }
        Command::GtBuild { captures, out, alpha_deg } => {
            let report = lcdgt::build_gt_dataset(&captures, &out, alpha_deg.map(f64::to_radians))?;
            log::info!(
                "alpha {:.4} deg over {} poses, residual {:.3e}",
                report.alpha_deg,
                report.poses.len(),
                report.alpha_residual
            );
        }
        Command::AlphaEstimate { captures } => {
            let caps: Vec<_> = lcdgt::load_captures(&captures)?.into_iter().map(|(_, c)| c).collect();
            log::info!("fitting over {} poses", caps.len());
            let fit = lcdgt::estimate_alpha_from_captures(&caps)?;
            println!("alpha_deg={:.6}", fit.alpha.to_degrees());
            println!("residual={:e}", fit.residual);
            println!("samples={}", fit.samples);
        }
        Command::Rig { out } => {
            let rig = render_rig(&cfg.rig(cli.seed)?)?;
            rig.save(&out)?;
            log::info!("wrote {} poses to {}", rig.poses.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
