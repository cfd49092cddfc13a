//! Convolution kernels on HWC buffers, lowered to GEMM through im2col.
//!
//! Kernel tensors are laid out `[kh, kw, c_in, c_out]`, which read row-major
//! is exactly the `(kh*kw*c_in) x c_out` matrix multiplying an im2col buffer
//! whose columns are ordered `(ky, kx, ci)`.

use super::tensor::Real;

/// Geometry of a strided correlation from an `in_h x in_w x c_in` image.
/// Out-of-range taps (implicit padding) read as zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(in_h: usize, in_w: usize, c_in: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        let eh = in_h + 2 * pad;
        let ew = in_w + 2 * pad;
        if stride == 0 || eh < kh || ew < kw {
            return None;
        }
        Some(Self {
            in_h,
            in_w,
            c_in,
            kh,
            kw,
            stride,
            pad,
            out_h: (eh - kh) / stride + 1,
            out_w: (ew - kw) / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn cols(&self) -> usize {
        self.kh * self.kw * self.c_in
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source row of tap `ky` for output row `oy`, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        let p = (o * self.stride + k) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < n).then_some(p as usize)
    }
}

pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let k = g.cols();
    let mut cols = vec![T::zero(); g.rows() * k];
    let c = g.c_in;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut cols[(oy * g.out_w + ox) * k..][..k];
            for ky in 0..g.kh {
                let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                for kx in 0..g.kw {
                    let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                    let src = &input[(iy * g.in_w + ix) * c..][..c];
                    row[(ky * g.kw + kx) * c..][..c].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `out`.
pub(crate) fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, out: &mut [T]) {
    let k = g.cols();
    let c = g.c_in;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &cols[(oy * g.out_w + ox) * k..][..k];
            for ky in 0..g.kh {
                let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                for kx in 0..g.kw {
                    let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                    let dst = &mut out[(iy * g.in_w + ix) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(&row[(ky * g.kw + kx) * c..][..c]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    let n = bias.len();
    for px in out.chunks_exact_mut(n) {
        for (o, &b) in px.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn bias_grad<T: Real>(dy: &[T], c_out: usize) -> Vec<T> {
    let mut g = vec![T::zero(); c_out];
    for px in dy.chunks_exact(c_out) {
        for (a, &d) in g.iter_mut().zip(px) {
            *a += d;
        }
    }
    g
}

/// Correlation `y = cols(x) * W + b`; returns `out_h x out_w x c_out`.
pub(crate) fn conv_forward<T: Real>(x: &[T], g: &ConvGeom, kernel: &[T], c_out: usize, bias: Option<&[T]>) -> Vec<T> {
    let (m, k) = (g.rows(), g.cols());
    let owned;
    let cols: &[T] = if g.is_pointwise() {
        x
    } else {
        owned = im2col(x, g);
        &owned
    };
    let mut y = vec![T::zero(); m * c_out];
    T::gemm(m, k, c_out, T::one(), cols, (k as isize, 1), kernel, (c_out as isize, 1), T::zero(), &mut y, (c_out as isize, 1));
    if let Some(b) = bias {
        add_bias(&mut y, b);
    }
    y
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    g: &ConvGeom,
    kernel: &[T],
    c_out: usize,
    dy: &[T],
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> ConvGrads<T> {
    let (m, k) = (g.rows(), g.cols());
    let owned;
    let cols: &[T] = if !want_kernel {
        &[]
    } else if g.is_pointwise() {
        x
    } else {
        owned = im2col(x, g);
        &owned
    };
    let kernel_grad = want_kernel.then(|| {
        let mut dw = vec![T::zero(); k * c_out];
        T::gemm(k, m, c_out, T::one(), cols, (1, k as isize), dy, (c_out as isize, 1), T::zero(), &mut dw, (c_out as isize, 1));
        dw
    });
    let input_grad = want_input.then(|| {
        let mut dcols = vec![T::zero(); m * k];
        T::gemm(m, c_out, k, T::one(), dy, (c_out as isize, 1), kernel, (1, c_out as isize), T::zero(), &mut dcols, (k as isize, 1));
        if g.is_pointwise() {
            dcols
        } else {
            let mut dx = vec![T::zero(); g.in_h * g.in_w * g.c_in];
            col2im_add(&dcols, g, &mut dx);
            dx
        }
    });
    ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: want_bias.then(|| bias_grad(dy, c_out)),
    }
}

/// Transposed correlation: the adjoint of [`conv_forward`] for geometry `g`
/// (whose input is the transposed conv's output). `x` is `g.out_h x g.out_w x c_in`
/// and the kernel matrix is `(kh*kw*g.c_in) x c_in`.
pub(crate) fn conv_transpose_forward<T: Real>(x: &[T], g: &ConvGeom, kernel: &[T], c_in: usize, bias: Option<&[T]>) -> Vec<T> {
    let (m, k) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); m * k];
    T::gemm(m, c_in, k, T::one(), x, (c_in as isize, 1), kernel, (1, c_in as isize), T::zero(), &mut cols, (k as isize, 1));
    let mut y = vec![T::zero(); g.in_h * g.in_w * g.c_in];
    col2im_add(&cols, g, &mut y);
    if let Some(b) = bias {
        add_bias(&mut y, b);
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose_backward<T: Real>(
    x: &[T],
    g: &ConvGeom,
    kernel: &[T],
    c_in: usize,
    dy: &[T],
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> ConvGrads<T> {
    let (m, k) = (g.rows(), g.cols());
    let dcols = im2col(dy, g);
    let input_grad = want_input.then(|| {
        let mut dx = vec![T::zero(); m * c_in];
        T::gemm(m, k, c_in, T::one(), &dcols, (k as isize, 1), kernel, (c_in as isize, 1), T::zero(), &mut dx, (c_in as isize, 1));
        dx
    });
    let kernel_grad = want_kernel.then(|| {
        let mut dw = vec![T::zero(); k * c_in];
        T::gemm(k, m, c_in, T::one(), &dcols, (1, k as isize), x, (c_in as isize, 1), T::zero(), &mut dw, (c_in as isize, 1));
        dw
    });
    ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: want_bias.then(|| bias_grad(dy, g.c_in)),
    }
}

/// Replicate-pads an HWC image by `p` on every side.
pub(crate) fn replicate_pad<T: Real>(x: &[T], h: usize, w: usize, c: usize, p: usize) -> Vec<T> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = Vec::with_capacity(ph * pw * c);
    for i in 0..ph {
        let si = i.saturating_sub(p).min(h - 1);
        for j in 0..pw {
            let sj = j.saturating_sub(p).min(w - 1);
            out.extend_from_slice(&x[(si * w + sj) * c..][..c]);
        }
    }
    out
}

/// Adjoint of [`replicate_pad`].
pub(crate) fn replicate_pad_adjoint<T: Real>(dp: &[T], h: usize, w: usize, c: usize, p: usize) -> Vec<T> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); h * w * c];
    for i in 0..ph {
        let si = i.saturating_sub(p).min(h - 1);
        for j in 0..pw {
            let sj = j.saturating_sub(p).min(w - 1);
            let dst = &mut out[(si * w + sj) * c..][..c];
            for (d, &s) in dst.iter_mut().zip(&dp[(i * pw + j) * c..][..c]) {
                *d += s;
            }
        }
    }
    out
}
