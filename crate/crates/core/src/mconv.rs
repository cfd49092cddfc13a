//! Mosaiced convolutions: four shifted stride-2 2x2 convolutions whose
//! outputs are masked back onto their own pixel parity and summed, so the
//! kernel bank applied at a pixel depends only on `(row % 2, col % 2)`.

use rand::Rng;

use crate::autodiff::{glorot_uniform, Graph, Padding, ParamSet, Real, Tensor, TileMask, Var};
use crate::error::{Error, Result};

/// Masks `M0..M3`, indexed by branch `2r + c`.
pub const BRANCH_MASKS: [TileMask; 4] = [
    [[true, false], [false, false]],
    [[false, true], [false, false]],
    [[false, false], [true, false]],
    [[false, false], [false, true]],
];

/// Branch shifts `(r, c)` in index order `k = 2r + c`.
pub const BRANCHES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Parameter name of branch `k` in layer `layer`.
pub fn param_name(layer: usize, branch: usize, field: &str) -> String {
    format!("mconv{layer}.{branch}.{field}")
}

/// Kernel banks for one MConvBlock: kernel `[2, 2, c_in, d]` and bias `[d]`
/// per branch.
#[derive(Clone, Debug, PartialEq)]
pub struct MConvParams<T> {
    pub kernels: [Tensor<T>; 4],
    pub biases: [Tensor<T>; 4],
}

impl<T: Real> MConvParams<T> {
    pub fn init(c_in: usize, d: usize, rng: &mut impl Rng) -> Self {
        let fan_in = 4 * c_in;
        let fan_out = 4 * d;
        Self {
            kernels: std::array::from_fn(|_| glorot_uniform(&[2, 2, c_in, d], fan_in, fan_out, rng)),
            biases: std::array::from_fn(|_| Tensor::zeros(&[d])),
        }
    }

    pub fn c_in(&self) -> usize {
        self.kernels[0].shape()[2]
    }

    pub fn depth(&self) -> usize {
        self.kernels[0].shape()[3]
    }

    pub fn insert_into(&self, layer: usize, set: &mut ParamSet<T>) {
        for k in 0..4 {
            set.insert(param_name(layer, k, "kernel"), self.kernels[k].clone());
            set.insert(param_name(layer, k, "bias"), self.biases[k].clone());
        }
    }

    pub fn from_set(layer: usize, set: &ParamSet<T>) -> Result<Self> {
        let get = |k: usize, f: &str| {
            let name = param_name(layer, k, f);
            set.get(&name)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
        };
        let p = Self {
            kernels: [get(0, "kernel")?, get(1, "kernel")?, get(2, "kernel")?, get(3, "kernel")?],
            biases: [get(0, "bias")?, get(1, "bias")?, get(2, "bias")?, get(3, "bias")?],
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ks = self.kernels[0].shape();
        if ks.len() != 4 || ks[0] != 2 || ks[1] != 2 {
            return Err(Error::ShapeMismatch(format!("mconv kernel must be [2, 2, c_in, d], got {ks:?}")));
        }
        for k in 0..4 {
            if self.kernels[k].shape() != ks || self.biases[k].shape() != [ks[3]] {
                return Err(Error::ShapeMismatch(format!("mconv branch {k} shapes disagree")));
            }
        }
        Ok(())
    }
}

/// Graph handles of one block's parameters.
#[derive(Clone, Copy, Debug)]
pub struct MConvVars {
    pub kernels: [Var; 4],
    pub biases: [Var; 4],
}

impl MConvVars {
    /// Registers the parameters as trainable leaves.
    pub fn params<T: Real>(g: &mut Graph<T>, p: &MConvParams<T>) -> Self {
        Self {
            kernels: std::array::from_fn(|k| g.param(p.kernels[k].clone())),
            biases: std::array::from_fn(|k| g.param(p.biases[k].clone())),
        }
    }

    /// Registers the parameters as constants.
    pub fn constants<T: Real>(g: &mut Graph<T>, p: &MConvParams<T>) -> Self {
        Self {
            kernels: std::array::from_fn(|k| g.input(p.kernels[k].clone())),
            biases: std::array::from_fn(|k| g.input(p.biases[k].clone())),
        }
    }
}

fn check_even<T: Real>(g: &Graph<T>, x: Var) -> Result<()> {
    let s = g.value(x).shape();
    if s.len() != 3 || s[0] % 2 != 0 || s[1] % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("mconv needs an even-sized HWC input, got {s:?}")));
    }
    Ok(())
}

/// One mosaiced convolution with shift `(r, c)`.
pub fn mconv<T: Real>(g: &mut Graph<T>, x: Var, r: usize, c: usize, kernel: Var, bias: Var) -> Result<Var> {
    if r > 1 || c > 1 {
        return Err(Error::Domain(format!("mconv shift ({r}, {c}) outside {{0, 1}}")));
    }
    check_even(g, x)?;
    let shifted = g.crop_dup(x, r, c)?;
    let conv = g.conv2d(shifted, kernel, Some(bias), 2, Padding::Valid)?;
    let act = g.relu(conv);
    let up = g.upscale2x(act)?;
    g.mask_tile(up, BRANCH_MASKS[2 * r + c])
}

/// Sum of the four mosaiced convolutions; preserves height and width.
pub fn mconv_block<T: Real>(g: &mut Graph<T>, x: Var, p: &MConvVars) -> Result<Var> {
    let mut outs = [x; 4];
    for (k, &(r, c)) in BRANCHES.iter().enumerate() {
        outs[k] = mconv(g, x, r, c, p.kernels[k], p.biases[k])?;
    }
    g.sum(&outs)
}
