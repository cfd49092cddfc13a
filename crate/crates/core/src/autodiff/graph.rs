//! Tape-based reverse-mode differentiation over image tensors.

use super::kernels::{self, ConvGeom};
use super::ssim;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Spatial padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// No padding; the output shrinks by `k - 1`.
    Valid,
    /// Edge replication by the given number of pixels on every side.
    Replicate(usize),
}

/// A 2x2 binary mask tiled over the image by pixel parity.
pub type TileMask = [[bool; 2]; 2];

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: Var,
        k: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Relu(Var),
    Add(Var, Var),
    Affine(Var, T),
    Upscale2x(Var),
    MaskTile(Var, TileMask),
    CropDup(Var, usize, usize),
    SpaceToDepth(Var),
    NormalizePairs(Var, T),
    L1(Var, Var, Option<Vec<T>>),
    L2(Var, Var, Option<Vec<T>>),
    Ssim(Var, Var, Option<Vec<T>>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by leaf variable.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input; no gradient is accumulated for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn image(&self, v: Var, what: &str) -> Result<(usize, usize, usize)> {
        let t = self.value(v);
        if t.rank() != 3 {
            return Err(Error::ShapeMismatch(format!("{what} expects an HWC image, got {:?}", t.shape())));
        }
        Ok(t.hwc())
    }

    fn check_bias(&self, b: Option<Var>, c: usize) -> Result<()> {
        if let Some(b) = b {
            let s = self.value(b).shape();
            if s != [c] {
                return Err(mismatch("bias", s, &[c]));
            }
        }
        Ok(())
    }

    /// Cross-correlation with kernel `[kh, kw, c_in, c_out]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, padding: Padding) -> Result<Var> {
        let (h, w, c) = self.image(x, "conv2d")?;
        let ks = self.value(k).shape().to_vec();
        if ks.len() != 4 || ks[2] != c {
            return Err(mismatch("conv2d kernel", &ks, &[0, 0, c, 0]));
        }
        let c_out = ks[3];
        self.check_bias(b, c_out)?;
        let pad = match padding {
            Padding::Valid => 0,
            Padding::Replicate(p) => p,
        };
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let geom = ConvGeom::new(ph, pw, c, ks[0], ks[1], stride, 0)
            .ok_or_else(|| Error::ShapeMismatch(format!("kernel {ks:?} larger than input {ph}x{pw}")))?;
        let xv = self.value(x).data();
        let padded;
        let src: &[T] = if pad > 0 {
            padded = kernels::replicate_pad(xv, h, w, c, pad);
            &padded
        } else {
            xv
        };
        let y = kernels::conv_forward(src, &geom, self.value(k).data(), c_out, b.map(|b| self.value(b).data()));
        let rg = self.rg(x) || self.rg(k) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![geom.out_h, geom.out_w, c_out], y)?;
        Ok(self.push(value, Op::Conv2d { x, k, b, stride, pad }, rg))
    }

    /// Transposed convolution with kernel `[kh, kw, c_out, c_in]`: the adjoint
    /// of a `stride` conv with implicit zero padding `pad` mapping an
    /// `out_h x out_w x c_out` image onto the input's grid.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        k: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        out_h: usize,
        out_w: usize,
    ) -> Result<Var> {
        let (h, w, c) = self.image(x, "conv_transpose2d")?;
        let ks = self.value(k).shape().to_vec();
        if ks.len() != 4 || ks[3] != c {
            return Err(mismatch("conv_transpose2d kernel", &ks, &[0, 0, 0, c]));
        }
        let c_out = ks[2];
        self.check_bias(b, c_out)?;
        let geom = ConvGeom::new(out_h, out_w, c_out, ks[0], ks[1], stride, pad)
            .filter(|g| g.out_h == h && g.out_w == w)
            .ok_or_else(|| {
                Error::ShapeMismatch(format!("transposed conv cannot map {h}x{w} onto {out_h}x{out_w} with stride {stride}"))
            })?;
        let y = kernels::conv_transpose_forward(
            self.value(x).data(),
            &geom,
            self.value(k).data(),
            c,
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(x) || self.rg(k) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![out_h, out_w, c_out], y)?;
        Ok(self.push(value, Op::ConvTranspose2d { x, k, b, geom }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(T::zero()));
        let rg = self.rg(x);
        self.push(v, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va.shape(), vb.shape()));
        }
        let mut v = va.clone();
        v.add_assign(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    /// Sum of several same-shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars.split_first().ok_or(Error::Empty("sum of no terms"))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let v = self.value(x).map(|a| scale * a + shift);
        let rg = self.rg(x);
        self.push(v, Op::Affine(x, scale), rg)
    }

    /// Nearest-neighbour 2x upscale.
    pub fn upscale2x(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = self.image(x, "upscale2x")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(4 * h * w * c);
        for i in 0..2 * h {
            for j in 0..2 * w {
                out.extend_from_slice(&src[((i / 2) * w + j / 2) * c..][..c]);
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![2 * h, 2 * w, c], out)?;
        Ok(self.push(value, Op::Upscale2x(x), rg))
    }

    /// Zeroes every pixel whose parity cell is off in `mask`.
    pub fn mask_tile(&mut self, x: Var, mask: TileMask) -> Result<Var> {
        let (_, w, c) = self.image(x, "mask_tile")?;
        let mut v = self.value(x).clone();
        apply_tile_mask(v.data_mut(), w, c, &mask);
        let rg = self.rg(x);
        Ok(self.push(v, Op::MaskTile(x, mask), rg))
    }

    /// Shifts the image up by `r` rows and left by `c` columns, duplicating the
    /// last row/column into the vacated border.
    pub fn crop_dup(&mut self, x: Var, r: usize, c: usize) -> Result<Var> {
        let (h, w, ch) = self.image(x, "crop_dup")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(h * w * ch);
        for i in 0..h {
            let si = (i + r).min(h - 1);
            for j in 0..w {
                let sj = (j + c).min(w - 1);
                out.extend_from_slice(&src[(si * w + sj) * ch..][..ch]);
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![h, w, ch], out)?;
        Ok(self.push(value, Op::CropDup(x, r, c), rg))
    }

    /// Packs each 2x2 block into channels, block order (0,0), (1,0), (0,1), (1,1)
    /// as (row, column) offsets.
    pub fn space_to_depth(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = self.image(x, "space_to_depth")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::DimensionMismatch(format!("space_to_depth needs even dimensions, got {h}x{w}")));
        }
        let src = self.value(x).data();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(h * w * c);
        for u in 0..oh {
            for v in 0..ow {
                for (dr, dc) in S2D_ORDER {
                    out.extend_from_slice(&src[((2 * u + dr) * w + 2 * v + dc) * c..][..c]);
                }
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![oh, ow, 4 * c], out)?;
        Ok(self.push(value, Op::SpaceToDepth(x), rg))
    }

    /// Normalizes consecutive channel pairs to unit length: `x / (|x| + eps)`.
    pub fn normalize_pairs(&mut self, x: Var, eps: T) -> Result<Var> {
        let (_, _, c) = self.image(x, "normalize_pairs")?;
        if c % 2 != 0 {
            return Err(Error::ChannelMismatch { expected: 2, found: c });
        }
        let mut v = self.value(x).clone();
        for p in v.data_mut().chunks_exact_mut(2) {
            let d = (p[0] * p[0] + p[1] * p[1]).sqrt() + eps;
            p[0] = p[0] / d;
            p[1] = p[1] / d;
        }
        let rg = self.rg(x);
        Ok(self.push(v, Op::NormalizePairs(x, eps), rg))
    }

    fn loss_weights(&self, a: Var, b: Var, weights: Option<&[T]>, what: &str) -> Result<(usize, usize, usize)> {
        let (h, w, c) = self.image(a, what)?;
        let sb = self.value(b).shape();
        if sb != [h, w, c] {
            return Err(mismatch(what, &[h, w, c], sb));
        }
        if let Some(wt) = weights {
            if wt.len() != h * w {
                return Err(Error::DimensionMismatch(format!(
                    "{what} weights have {} entries for a {h}x{w} image",
                    wt.len()
                )));
            }
            if wt.iter().any(|&v| v < T::zero() || !v.is_finite()) {
                return Err(Error::Domain(format!("{what} weights must be finite and non-negative")));
            }
        }
        Ok((h, w, c))
    }

    fn pixel_norm(weights: Option<&[T]>, h: usize, w: usize, c: usize) -> Result<T> {
        let total = weights.map_or(T::of((h * w) as f64), |wt| wt.iter().copied().sum()) * T::of(c as f64);
        if total <= T::zero() {
            return Err(Error::Empty("loss has no pixels with positive weight"));
        }
        Ok(total)
    }

    /// Weighted mean absolute difference. `weights` is per pixel (`h * w`).
    pub fn l1_loss(&mut self, a: Var, b: Var, weights: Option<&[T]>) -> Result<Var> {
        let (h, w, c) = self.loss_weights(a, b, weights, "l1_loss")?;
        let norm = Self::pixel_norm(weights, h, w, c)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let s: T = (0..va.len())
            .map(|i| weights.map_or(T::one(), |wt| wt[i / c]) * (va[i] - vb[i]).abs())
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s / norm), Op::L1(a, b, weights.map(<[T]>::to_vec)), rg))
    }

    /// Weighted mean squared difference.
    pub fn l2_loss(&mut self, a: Var, b: Var, weights: Option<&[T]>) -> Result<Var> {
        let (h, w, c) = self.loss_weights(a, b, weights, "l2_loss")?;
        let norm = Self::pixel_norm(weights, h, w, c)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let s: T = (0..va.len())
            .map(|i| {
                let d = va[i] - vb[i];
                weights.map_or(T::one(), |wt| wt[i / c]) * d * d
            })
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s / norm), Op::L2(a, b, weights.map(<[T]>::to_vec)), rg))
    }

    /// Mean SSIM over valid 11x11 windows, weighted by the weight of each
    /// window's centre pixel.
    pub fn ssim(&mut self, a: Var, b: Var, weights: Option<&[T]>) -> Result<Var> {
        let (h, w, c) = self.loss_weights(a, b, weights, "ssim")?;
        if !ssim::ssim_defined(h, w) {
            return Err(Error::DimensionMismatch(format!(
                "ssim needs at least {0}x{0} pixels, got {h}x{w}",
                ssim::SSIM_WINDOW
            )));
        }
        let s = ssim::ssim_value(self.value(a).data(), self.value(b).data(), h, w, c, weights)
            .ok_or(Error::Empty("ssim has no window with positive weight"))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s), Op::Ssim(a, b, weights.map(<[T]>::to_vec)), rg))
    }

    /// Reverse pass from `root`, seeded with ones. Only gradients of leaves
    /// created with [`Graph::param`] are kept.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let n = root.0 + 1;
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(Tensor::filled(self.value(root).shape(), T::one()));
        }
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(node, gy, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Vec<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, g).expect("gradient matches its node's shape"));
            }
        }
    }

    fn propagate(&self, node: &Node<T>, gy: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let dy = gy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, stride, pad } => {
                let (h, w, c) = self.value(*x).hwc();
                let ks = self.value(*k).shape();
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let geom = ConvGeom::new(ph, pw, c, ks[0], ks[1], *stride, 0).expect("validated in forward");
                let xv = self.value(*x).data();
                let padded;
                let src: &[T] = if *pad > 0 {
                    padded = kernels::replicate_pad(xv, h, w, c, *pad);
                    &padded
                } else {
                    xv
                };
                let g = kernels::conv_backward(
                    src,
                    &geom,
                    self.value(*k).data(),
                    ks[3],
                    dy,
                    self.rg(*x),
                    self.rg(*k),
                    b.is_some_and(|b| self.rg(b)),
                );
                if let Some(gx) = g.input {
                    let gx = if *pad > 0 {
                        kernels::replicate_pad_adjoint(&gx, h, w, c, *pad)
                    } else {
                        gx
                    };
                    self.accumulate(grads, *x, gx);
                }
                if let Some(gk) = g.kernel {
                    self.accumulate(grads, *k, gk);
                }
                if let (Some(b), Some(gb)) = (b, g.bias) {
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::ConvTranspose2d { x, k, b, geom } => {
                let c_in = self.value(*x).hwc().2;
                let g = kernels::conv_transpose_backward(
                    self.value(*x).data(),
                    geom,
                    self.value(*k).data(),
                    c_in,
                    dy,
                    self.rg(*x),
                    self.rg(*k),
                    b.is_some_and(|b| self.rg(b)),
                );
                if let Some(gx) = g.input {
                    self.accumulate(grads, *x, gx);
                }
                if let Some(gk) = g.kernel {
                    self.accumulate(grads, *k, gk);
                }
                if let (Some(b), Some(gb)) = (b, g.bias) {
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Relu(x) => {
                let g = node
                    .value
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, g);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.to_vec());
                self.accumulate(grads, *b, dy.to_vec());
            }
            Op::Affine(x, s) => {
                self.accumulate(grads, *x, dy.iter().map(|&d| d * *s).collect());
            }
            Op::Upscale2x(x) => {
                let (h, w, c) = self.value(*x).hwc();
                let mut g = vec![T::zero(); h * w * c];
                for i in 0..2 * h {
                    for j in 0..2 * w {
                        let dst = &mut g[((i / 2) * w + j / 2) * c..][..c];
                        for (a, &d) in dst.iter_mut().zip(&dy[(i * 2 * w + j) * c..][..c]) {
                            *a += d;
                        }
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::MaskTile(x, mask) => {
                let (_, w, c) = self.value(*x).hwc();
                let mut g = dy.to_vec();
                apply_tile_mask(&mut g, w, c, mask);
                self.accumulate(grads, *x, g);
            }
            Op::CropDup(x, r, cc) => {
                let (h, w, ch) = self.value(*x).hwc();
                let mut g = vec![T::zero(); h * w * ch];
                for i in 0..h {
                    let si = (i + r).min(h - 1);
                    for j in 0..w {
                        let sj = (j + cc).min(w - 1);
                        let dst = &mut g[(si * w + sj) * ch..][..ch];
                        for (a, &d) in dst.iter_mut().zip(&dy[(i * w + j) * ch..][..ch]) {
                            *a += d;
                        }
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::SpaceToDepth(x) => {
                let (h, w, c) = self.value(*x).hwc();
                let mut g = vec![T::zero(); h * w * c];
                let mut it = dy.chunks_exact(c);
                for u in 0..h / 2 {
                    for v in 0..w / 2 {
                        for (dr, dc) in S2D_ORDER {
                            let src = it.next().expect("space_to_depth gradient size");
                            g[((2 * u + dr) * w + 2 * v + dc) * c..][..c].copy_from_slice(src);
                        }
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::NormalizePairs(x, eps) => {
                let xv = self.value(*x).data();
                let mut g = vec![T::zero(); xv.len()];
                for ((gp, p), d) in g.chunks_exact_mut(2).zip(xv.chunks_exact(2)).zip(dy.chunks_exact(2)) {
                    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    let den = r + *eps;
                    // y = x / (r + eps); dy/dx = I/den - x x^T / (r den^2)
                    let dot = if r > T::zero() {
                        (p[0] * d[0] + p[1] * d[1]) / (r * den * den)
                    } else {
                        T::zero()
                    };
                    gp[0] = d[0] / den - p[0] * dot;
                    gp[1] = d[1] / den - p[1] * dot;
                }
                self.accumulate(grads, *x, g);
            }
            Op::L1(a, b, wt) => {
                let up = dy[0];
                let (h, w, c) = self.value(*a).hwc();
                let norm = Self::pixel_norm(wt.as_deref(), h, w, c).expect("validated in forward");
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let ga: Vec<T> = (0..va.len())
                    .map(|i| {
                        let d = va[i] - vb[i];
                        let s = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        up * s * wt.as_ref().map_or(T::one(), |wt| wt[i / c]) / norm
                    })
                    .collect();
                self.accumulate(grads, *b, ga.iter().map(|&v| -v).collect());
                self.accumulate(grads, *a, ga);
            }
            Op::L2(a, b, wt) => {
                let up = dy[0];
                let (h, w, c) = self.value(*a).hwc();
                let norm = Self::pixel_norm(wt.as_deref(), h, w, c).expect("validated in forward");
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let two = T::of(2.0);
                let ga: Vec<T> = (0..va.len())
                    .map(|i| up * two * (va[i] - vb[i]) * wt.as_ref().map_or(T::one(), |wt| wt[i / c]) / norm)
                    .collect();
                self.accumulate(grads, *b, ga.iter().map(|&v| -v).collect());
                self.accumulate(grads, *a, ga);
            }
            Op::Ssim(a, b, wt) => {
                let (h, w, c) = self.value(*a).hwc();
                let (ga, gb) = ssim::ssim_grad(
                    self.value(*a).data(),
                    self.value(*b).data(),
                    h,
                    w,
                    c,
                    wt.as_deref(),
                    dy[0],
                );
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
        }
    }
}

const S2D_ORDER: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn apply_tile_mask<T: Real>(data: &mut [T], w: usize, c: usize, mask: &TileMask) {
    for (p, px) in data.chunks_exact_mut(c).enumerate() {
        let (i, j) = (p / w, p % w);
        if !mask[i % 2][j % 2] {
            px.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f64) -> Tensor<f64> {
        Tensor::new(vec![h, w, c], (0..h * w * c).map(f).collect()).unwrap()
    }

    #[test]
    fn space_to_depth_block_order() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.space_to_depth(x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 4]);
        assert_eq!(g.value(y).data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn crop_dup_duplicates_border() {
        let mut g = Graph::<f64>::new();
        let x = g.input(img(2, 3, 1, |i| i as f64));
        let y = g.crop_dup(x, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 5.0, 5.0, 4.0, 5.0, 5.0]);
    }

    #[test]
    fn mask_and_upscale() {
        let mut g = Graph::<f64>::new();
        let x = g.input(img(1, 1, 2, |i| i as f64 + 1.0));
        let u = g.upscale2x(x).unwrap();
        assert_eq!(g.value(u).data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let m = g.mask_tile(u, [[false, true], [false, false]]).unwrap();
        assert_eq!(g.value(m).data(), &[0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_pairs_unit_length() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![1, 2, 2], vec![3.0, 4.0, 0.0, 0.0]).unwrap());
        let y = g.normalize_pairs(x, 1e-8).unwrap();
        let v = g.value(y).data();
        assert!((v[0] - 0.6).abs() < 1e-8 && (v[1] - 0.8).abs() < 1e-8);
        assert_eq!(&v[2..], &[0.0, 0.0]);
    }

    #[test]
    fn valid_and_replicate_conv_shapes() {
        let mut g = Graph::<f64>::new();
        let x = g.input(img(5, 6, 2, |i| i as f64));
        let k = g.param(Tensor::filled(&[3, 3, 2, 4], 0.1));
        let v = g.conv2d(x, k, None, 1, Padding::Valid).unwrap();
        assert_eq!(g.value(v).shape(), &[3, 4, 4]);
        let r = g.conv2d(x, k, None, 1, Padding::Replicate(1)).unwrap();
        assert_eq!(g.value(r).shape(), &[5, 6, 4]);
    }

    #[test]
    fn replicate_conv_of_constant_is_constant() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::filled(&[4, 4, 1], 2.0));
        let k = g.input(Tensor::filled(&[3, 3, 1, 1], 1.0));
        let y = g.conv2d(x, k, None, 1, Padding::Replicate(1)).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 18.0).abs() < 1e-12));
    }

    #[test]
    fn losses_on_known_values() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::new(vec![1, 2, 1], vec![1.0, 3.0]).unwrap());
        let b = g.input(Tensor::new(vec![1, 2, 1], vec![0.0, 1.0]).unwrap());
        let l1 = g.l1_loss(a, b, None).unwrap();
        let l2 = g.l2_loss(a, b, None).unwrap();
        assert_eq!(g.value(l1).item(), 1.5);
        assert_eq!(g.value(l2).item(), 2.5);
        let lw = g.l1_loss(a, b, Some(&[0.0, 1.0])).unwrap();
        assert_eq!(g.value(lw).item(), 2.0);
        assert!(g.l1_loss(a, b, Some(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap());
        let y = g.add(x, x).unwrap();
        let z = g.input(Tensor::zeros(&[1, 1, 1]));
        let l = g.l2_loss(y, z, None).unwrap();
        let grads = g.backward(l);
        // l = (2x)^2, dl/dx = 8x
        assert!((grads.get(x).unwrap().item() - 16.0).abs() < 1e-12);
        assert!(grads.get(z).is_none());
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::zeros(&[2, 2, 1]));
        let b = g.input(Tensor::zeros(&[2, 3, 1]));
        assert!(g.add(a, b).is_err());
        let odd = g.input(Tensor::zeros(&[3, 2, 1]));
        assert!(g.space_to_depth(odd).is_err());
        let k = g.input(Tensor::zeros(&[3, 3, 2, 1]));
        assert!(g.conv2d(a, k, None, 1, Padding::Valid).is_err());
    }
}
