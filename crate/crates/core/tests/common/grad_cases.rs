//! Finite-difference gradient cases shared by the core tests and the
//! acceptance suite.

use std::collections::BTreeMap;

use pfadn_core::autodiff::{check_gradients, Graph, Padding, ParamSet, Tensor, Var};
use pfadn_core::mconv::{mconv, mconv_block, param_name, MConvParams, MConvVars, BRANCH_MASKS};
use pfadn_core::pfadn::{pfadn_loss, BoundParams, LossWeights, PfadnConfig, PfadnModel};
use pfadn_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 20;
const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;
const TOL_LOOSE: f64 = 1e-3;

pub type Build = Box<dyn Fn(&mut Graph<f64>, &BTreeMap<String, Var>) -> Result<Var>>;
type Make = Box<dyn Fn(u64, &mut ChaCha8Rng) -> (ParamSet<f64>, Build)>;

pub struct GradCase {
    pub name: String,
    pub tol: f64,
    pub step: f64,
    make: Make,
}

impl GradCase {
    fn new(name: impl Into<String>, tol: f64, make: impl Fn(u64, &mut ChaCha8Rng) -> (ParamSet<f64>, Build) + 'static) -> Self {
        Self {
            name: name.into(),
            tol,
            step: STEP,
            make: Box::new(make),
        }
    }

    /// Worst error over `seeds` instances, or the first failing seed.
    pub fn check(&self, seeds: u64) -> std::result::Result<f64, String> {
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (params, build) = (self.make)(seed, &mut rng);
            let r = check_gradients(&params, self.step, build).map_err(|e| format!("{}: {e}", self.name))?;
            if !(r.worst <= self.tol) {
                return Err(format!("{} seed {seed}: error {:.2e} on {}", self.name, r.worst, r.worst_param));
            }
            worst = worst.max(r.worst);
        }
        Ok(worst)
    }
}

/// Uniform in +-[0.05, 1), kept away from zero so ReLU kinks stay out of
/// reach of the difference stencil.
pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn unit_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// Reduces a non-scalar node with an L2 distance to a fixed random target.
fn reduce(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD_BEEF);
    let shape = g.value(out).shape().to_vec();
    let t = g.input(rand_tensor(&shape, &mut rng));
    g.l2_loss(out, t, None)
}

fn set(items: Vec<(&str, Tensor<f64>)>) -> ParamSet<f64> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

type UnaryOp = fn(&mut Graph<f64>, Var) -> Result<Var>;

pub fn cases() -> Vec<GradCase> {
    let mut out = Vec::new();

    for (pad, stride, ks) in [(Padding::Valid, 1, 3), (Padding::Replicate(1), 1, 3), (Padding::Valid, 2, 2)] {
        out.push(GradCase::new(format!("conv2d {pad:?} stride {stride}"), TOL, move |seed, rng| {
            let p = set(vec![
                ("x", rand_tensor(&[6, 6, 3], rng)),
                ("k", rand_tensor(&[ks, ks, 3, 4], rng)),
                ("b", rand_tensor(&[4], rng)),
            ]);
            let build: Build = Box::new(move |g, v| {
                let y = g.conv2d(v["x"], v["k"], Some(v["b"]), stride, pad)?;
                reduce(g, y, seed)
            });
            (p, build)
        }));
    }

    out.push(GradCase::new("conv_transpose2d", TOL, |seed, rng| {
        let p = set(vec![
            ("x", rand_tensor(&[3, 3, 4], rng)),
            ("k", rand_tensor(&[4, 4, 2, 4], rng)),
            ("b", rand_tensor(&[2], rng)),
        ]);
        let build: Build = Box::new(move |g, v| {
            let y = g.conv_transpose2d(v["x"], v["k"], Some(v["b"]), 2, 1, 6, 6)?;
            reduce(g, y, seed)
        });
        (p, build)
    }));

    let unary: [(&str, UnaryOp); 9] = [
        ("relu", |g, x| Ok(g.relu(x))),
        ("affine", |g, x| Ok(g.affine(x, 1.7, -0.3))),
        ("add", |g, x| {
            let y = g.relu(x);
            g.add(x, y)
        }),
        ("upscale2x", |g, x| g.upscale2x(x)),
        ("mask_tile", |g, x| g.mask_tile(x, BRANCH_MASKS[2])),
        ("crop_dup(1,1)", |g, x| g.crop_dup(x, 1, 1)),
        ("crop_dup(0,1)", |g, x| g.crop_dup(x, 0, 1)),
        ("space_to_depth", |g, x| g.space_to_depth(x)),
        ("normalize_pairs", |g, x| g.normalize_pairs(x, 1e-8)),
    ];
    for (name, op) in unary {
        out.push(GradCase::new(name, TOL, move |seed, rng| {
            let p = set(vec![("x", rand_tensor(&[6, 6, 2], rng))]);
            let build: Build = Box::new(move |g, v| {
                let y = op(g, v["x"])?;
                reduce(g, y, seed)
            });
            (p, build)
        }));
    }

    for weighted in [false, true] {
        for (name, tol, side) in [("l1", TOL, 6), ("l2", TOL, 6), ("ssim", TOL_LOOSE, 16)] {
            out.push(GradCase::new(format!("{name} weighted={weighted}"), tol, move |_, rng| {
                let w: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
                // SSIM needs image-like values; L1 needs |a - b| clear of its kink.
                let p = if name == "ssim" {
                    set(vec![("a", unit_tensor(&[side, side, 1], rng)), ("b", unit_tensor(&[side, side, 1], rng))])
                } else {
                    set(vec![("a", rand_tensor(&[side, side, 3], rng)), ("b", rand_tensor(&[side, side, 3], rng))])
                };
                let build: Build = Box::new(move |g, v| {
                    let w = weighted.then_some(&w[..]);
                    match name {
                        "l1" => g.l1_loss(v["a"], v["b"], w),
                        "l2" => g.l2_loss(v["a"], v["b"], w),
                        _ => g.ssim(v["a"], v["b"], w),
                    }
                });
                (p, build)
            }));
        }
    }

    for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        out.push(GradCase::new(format!("mconv({r},{c})"), TOL, move |seed, rng| {
            let p = set(vec![
                ("x", rand_tensor(&[6, 6, 3], rng)),
                ("k", rand_tensor(&[2, 2, 3, 4], rng)),
                ("b", rand_tensor(&[4], rng)),
            ]);
            let build: Build = Box::new(move |g, v| {
                let y = mconv(g, v["x"], r, c, v["k"], v["b"])?;
                reduce(g, y, seed)
            });
            (p, build)
        }));
    }

    out.push(GradCase::new("mconv_block", TOL, |seed, rng| {
        let mut p = ParamSet::new();
        let mut block = MConvParams::<f64>::init(3, 4, rng);
        for b in &mut block.biases {
            *b = rand_tensor(b.shape(), rng);
        }
        block.insert_into(0, &mut p);
        p.insert("x".into(), rand_tensor(&[6, 6, 3], rng));
        let build: Build = Box::new(move |g, v| {
            let vars = MConvVars {
                kernels: std::array::from_fn(|k| v[&param_name(0, k, "kernel")]),
                biases: std::array::from_fn(|k| v[&param_name(0, k, "bias")]),
            };
            let y = mconv_block(g, v["x"], &vars)?;
            reduce(g, y, seed)
        });
        (p, build)
    }));

    let mut net = GradCase::new("reduced PFADN", TOL_LOOSE, |seed, rng| {
        let cfg = PfadnConfig::reduced();
        // Zero-initialized biases put ReLU inputs exactly on the kink; jitter
        // every parameter off it.
        let mut params = PfadnModel::<f64>::init(cfg.clone(), seed).unwrap().params().clone();
        for t in params.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        let model = PfadnModel::from_params(cfg, params.clone()).unwrap();
        let input = unit_tensor(&[16, 16, 1], rng);
        let target_i = unit_tensor(&[16, 16, 1], rng);
        let target_a: Vec<f64> = (0..256)
            .flat_map(|_| {
                let phi: f64 = rng.random_range(0.0..std::f64::consts::PI);
                [(2.0 * phi).cos(), (2.0 * phi).sin()]
            })
            .collect();
        let target_a = Tensor::new(vec![16, 16, 2], target_a).unwrap();
        let build: Build = Box::new(move |g, v| {
            let bound = BoundParams::from_vars(v.clone());
            let x = g.input(input.clone());
            let out = model.forward(g, &bound, x)?;
            let ti = g.input(target_i.clone());
            let ta = g.input(target_a.clone());
            pfadn_loss(g, out.intensity, ti, out.angle, ta, LossWeights::default(), None)
        });
        (params, build)
    });
    // With a 1e-4 step a bias shift moves every pixel of a channel and some
    // ReLU input lands inside the stencil; 1e-6 keeps it one-sided.
    net.step = 1e-6;
    out.push(net);
    out
}
