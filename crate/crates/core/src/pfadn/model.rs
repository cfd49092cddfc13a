use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{glorot_uniform, Graph, Padding, ParamSet, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::PlanarImage;
use crate::io::NamedTensors;
use crate::mconv::{mconv_block, MConvParams, MConvVars};
use crate::stokes::{angle_to_vector, vector_to_angle, wrap_half_turn, AngleVector};

/// Denominator guard of the angle-pair normalization.
pub const PAIR_EPS: f64 = 1e-8;

/// Layer widths. The defaults give the full-size network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PfadnConfig {
    pub tile: usize,
    pub mconv_layers: usize,
    pub mconv_depth: usize,
    pub shrink: usize,
    pub mapping_layers: usize,
    pub expand: usize,
    pub angle_widths: Vec<usize>,
}

impl Default for PfadnConfig {
    fn default() -> Self {
        Self {
            tile: 128,
            mconv_layers: 3,
            mconv_depth: 16,
            shrink: 12,
            mapping_layers: 4,
            expand: 56,
            angle_widths: vec![32, 16],
        }
    }
}

impl PfadnConfig {
    /// A narrow variant on 16x16 tiles, small enough for finite-difference checks.
    pub fn reduced() -> Self {
        Self {
            tile: 16,
            mconv_layers: 2,
            mconv_depth: 2,
            shrink: 3,
            mapping_layers: 1,
            expand: 4,
            angle_widths: vec![4, 3],
        }
    }

    /// Channels after the space-to-depth rearrangement.
    pub fn packed_channels(&self) -> usize {
        4 * self.mconv_depth
    }

    fn validate(&self) -> Result<()> {
        if self.tile == 0 || self.tile % 2 != 0 {
            return Err(Error::Config(format!("tile must be even and positive, got {}", self.tile)));
        }
        let widths = [self.mconv_layers, self.mconv_depth, self.shrink, self.expand];
        if widths.contains(&0) || self.angle_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Recovers the widths from a parameter set's shapes.
    pub fn infer<T: Real>(params: &ParamSet<T>, tile: usize) -> Result<Self> {
        let shape = |name: &str| {
            params
                .get(name)
                .map(|t| t.shape().to_vec())
                .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
        };
        let count = |prefix: &str| {
            (0..)
                .take_while(|i| params.contains_key(&format!("{prefix}{i}.kernel")))
                .count()
        };
        let mconv_layers = (0..)
            .take_while(|l| params.contains_key(&crate::mconv::param_name(*l, 0, "kernel")))
            .count();
        let mconv_depth = shape(&crate::mconv::param_name(0, 0, "kernel"))?[3];
        let shrink = shape("shrink.kernel")?[3];
        let expand = shape("expand.kernel")?[3];
        let angle_widths = (0..count("angle"))
            .map(|i| shape(&format!("angle{i}.kernel")).map(|s| s[3]))
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            tile,
            mconv_layers,
            mconv_depth,
            shrink,
            mapping_layers: count("map"),
            expand,
            angle_widths,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Conv layer specification: name, kernel shape.
fn layer_shapes(cfg: &PfadnConfig) -> Vec<(String, [usize; 4])> {
    let (s, e) = (cfg.shrink, cfg.expand);
    let mut out = vec![("shrink".to_string(), [1, 1, cfg.packed_channels(), s])];
    for i in 0..cfg.mapping_layers {
        out.push((format!("map{i}"), [3, 3, s, s]));
    }
    out.push(("expand".to_string(), [1, 1, s, e]));
    let mut c = cfg.packed_channels();
    for (i, &w) in cfg.angle_widths.iter().enumerate() {
        out.push((format!("angle{i}"), [3, 3, c, w]));
        c = w;
    }
    out.push(("angle_out".to_string(), [3, 3, c, 2]));
    out
}

/// PFADN parameters plus the widths they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct PfadnModel<T> {
    config: PfadnConfig,
    params: ParamSet<T>,
}

/// Output of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `h x w x 1` intensity.
    pub intensity: Var,
    /// `h x w x 2` unit doubled-angle vectors.
    pub angle: Var,
}

impl<T: Real> PfadnModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: PfadnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut c_in = 1;
        for l in 0..config.mconv_layers {
            MConvParams::<T>::init(c_in, config.mconv_depth, &mut rng).insert_into(l, &mut params);
            c_in = config.mconv_depth;
        }
        for (name, ks) in layer_shapes(&config) {
            let fan_in = ks[0] * ks[1] * ks[2];
            let fan_out = ks[0] * ks[1] * ks[3];
            params.insert(format!("{name}.kernel"), glorot_uniform(&ks, fan_in, fan_out, &mut rng));
            params.insert(format!("{name}.bias"), Tensor::zeros(&[ks[3]]));
        }
        // Transposed conv kernel [5, 5, 1, expand]; fans follow the forward conv it is adjoint to.
        let e = config.expand;
        params.insert("deconv.kernel".into(), glorot_uniform(&[5, 5, 1, e], 25 * e, 25, &mut rng));
        params.insert("deconv.bias".into(), Tensor::zeros(&[1]));
        Ok(Self { config, params })
    }

    /// Wraps an existing parameter set after checking every shape.
    pub fn from_params(config: PfadnConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let reference = Self::init(config.clone(), 0)?;
        for (name, t) in &reference.params {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::ShapeMismatch(format!(
                        "parameter {name:?} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("missing parameter {name:?}"))),
            }
        }
        if let Some(extra) = params.keys().find(|k| !reference.params.contains_key(*k)) {
            return Err(Error::Config(format!("unexpected parameter {extra:?}")));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &PfadnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> PfadnModel<U> {
        PfadnModel {
            config: self.config.clone(),
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Registers every parameter in `g`, trainable or constant.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable { g.param(v.clone()) } else { g.input(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }

    /// Builds the network on an `h x w x 1` input node (h, w even).
    pub fn forward(&self, g: &mut Graph<T>, p: &BoundParams, input: Var) -> Result<ForwardVars> {
        let s = g.value(input).shape().to_vec();
        if s.len() != 3 || s[2] != 1 || s[0] % 2 != 0 || s[1] % 2 != 0 || s[0] < 2 || s[1] < 2 {
            return Err(Error::DimensionMismatch(format!("PFADN input must be even-sized HxWx1, got {s:?}")));
        }
        let (h, w) = (s[0], s[1]);
        let mut x = input;
        for l in 0..self.config.mconv_layers {
            let vars = MConvVars {
                kernels: std::array::from_fn(|k| p.get(&crate::mconv::param_name(l, k, "kernel"))),
                biases: std::array::from_fn(|k| p.get(&crate::mconv::param_name(l, k, "bias"))),
            };
            x = mconv_block(g, x, &vars)?;
        }
        let packed = g.space_to_depth(x)?;

        let conv = |g: &mut Graph<T>, x: Var, name: &str, pad: Padding, relu: bool| -> Result<Var> {
            let y = g.conv2d(x, p.get(&format!("{name}.kernel")), Some(p.get(&format!("{name}.bias"))), 1, pad)?;
            Ok(if relu { g.relu(y) } else { y })
        };

        let mut y = conv(g, packed, "shrink", Padding::Valid, true)?;
        for i in 0..self.config.mapping_layers {
            y = conv(g, y, &format!("map{i}"), Padding::Replicate(1), true)?;
        }
        y = conv(g, y, "expand", Padding::Valid, true)?;
        let intensity = g.conv_transpose2d(y, p.get("deconv.kernel"), Some(p.get("deconv.bias")), 2, 2, h, w)?;

        let mut a = packed;
        for i in 0..self.config.angle_widths.len() {
            a = conv(g, a, &format!("angle{i}"), Padding::Replicate(1), true)?;
        }
        let a = g.upscale2x(a)?;
        let a = conv(g, a, "angle_out", Padding::Replicate(1), false)?;
        let angle = g.normalize_pairs(a, T::of(PAIR_EPS))?;
        Ok(ForwardVars { intensity, angle })
    }

    /// Inference on one tile of exactly `config.tile` pixels square.
    pub fn predict_tile(&self, tile: &PlanarImage) -> Result<TilePrediction> {
        let t = self.config.tile;
        if tile.height() != t || tile.width() != t || tile.channels() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a {t}x{t}x1 tile, got {:?}",
                tile.dims()
            )));
        }
        self.predict(tile)
    }

    /// Inference on any even-sized single-channel image.
    pub fn predict(&self, image: &PlanarImage) -> Result<TilePrediction> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.input(image_to_tensor(image));
        let out = self.forward(&mut g, &p, x)?;
        let (h, w) = (image.height(), image.width());
        let intensity = PlanarImage::new(h, w, 1, g.value(out.intensity).data().iter().map(|v| v.as_f64()).collect())?;
        let vec = g.value(out.angle).data();
        let angle_vectors = PlanarImage::new(h, w, 2, vec.iter().map(|v| v.as_f64()).collect())?;
        let aolp = (0..h * w)
            .map(|i| {
                let v = AngleVector {
                    ax: vec[2 * i].as_f64(),
                    ay: vec[2 * i + 1].as_f64(),
                };
                vector_to_angle(v).unwrap_or(0.0)
            })
            .collect();
        Ok(TilePrediction {
            intensity,
            angle_vectors,
            aolp: PlanarImage::new(h, w, 1, aolp)?,
        })
    }
}

impl PfadnModel<f32> {
    pub fn to_named(&self) -> NamedTensors {
        self.params.clone()
    }

    /// Loads weights, inferring the widths from their shapes.
    pub fn from_named(params: NamedTensors) -> Result<Self> {
        let cfg = PfadnConfig::infer(&params, PfadnConfig::default().tile)?;
        Self::from_params(cfg, params)
    }
}

/// Name-to-node map produced by [`PfadnModel::bind`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: std::collections::BTreeMap<String, Var>,
}

impl BoundParams {
    /// Wraps nodes bound elsewhere, e.g. by a gradient checker.
    pub fn from_vars(vars: std::collections::BTreeMap<String, Var>) -> Self {
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} was validated at construction"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TilePrediction {
    pub intensity: PlanarImage,
    pub angle_vectors: PlanarImage,
    pub aolp: PlanarImage,
}

pub(crate) fn image_to_tensor<T: Real>(img: &PlanarImage) -> Tensor<T> {
    let (h, w, c) = img.dims();
    Tensor::new(vec![h, w, c], img.data().iter().map(|&v| T::of(v)).collect()).expect("dims match data")
}

/// Ground-truth doubled-angle vectors `(cos 2phi, sin 2phi)` of an AoLP map.
pub fn angle_targets<T: Real>(aolp: &PlanarImage) -> Tensor<T> {
    let (h, w, _) = aolp.dims();
    let mut data = Vec::with_capacity(2 * h * w);
    for &phi in aolp.data() {
        let v = angle_to_vector(wrap_half_turn(phi));
        data.push(T::of(v.ax));
        data.push(T::of(v.ay));
    }
    Tensor::new(vec![h, w, 2], data).expect("dims match data")
}

/// Loss weights for [`pfadn_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gamma: 0.5, beta: 0.84 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "gamma and beta must lie in [0, 1], got {} and {}",
                self.gamma, self.beta
            )));
        }
        Ok(())
    }

    /// The scalar combination `gamma [(1-beta) l1 + beta (1-ssim)] + (1-gamma) l2`.
    pub fn combine(&self, l1: f64, ssim: f64, l2: f64) -> f64 {
        self.gamma * ((1.0 - self.beta) * l1 + self.beta * (1.0 - ssim)) + (1.0 - self.gamma) * l2
    }
}

/// `gamma [(1-beta) L1(I, I') + beta (1 - SSIM(I, I'))] + (1-gamma) L2(A, A')`,
/// optionally restricted to pixels with positive `mask` weight.
pub fn pfadn_loss<T: Real>(
    g: &mut Graph<T>,
    intensity: Var,
    intensity_gt: Var,
    angle: Var,
    angle_gt: Var,
    w: LossWeights,
    mask: Option<&[T]>,
) -> Result<Var> {
    w.validate()?;
    let l1 = g.l1_loss(intensity, intensity_gt, mask)?;
    let ssim = g.ssim(intensity, intensity_gt, mask)?;
    let l2 = g.l2_loss(angle, angle_gt, mask)?;
    let (gamma, beta) = (w.gamma, w.beta);
    let a = g.affine(l1, T::of(gamma * (1.0 - beta)), T::zero());
    let b = g.affine(ssim, T::of(-gamma * beta), T::of(gamma * beta));
    let c = g.affine(l2, T::of(1.0 - gamma), T::zero());
    g.sum(&[a, b, c])
}
