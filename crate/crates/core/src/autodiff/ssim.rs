//! Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over "valid" window
//! positions, and its analytic gradient.

use super::tensor::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable "valid" Gaussian filter of an HWC buffer.
fn filter<T: Real>(x: &[T], h: usize, w: usize, c: usize, g: &[T]) -> Vec<T> {
    let n = g.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![T::zero(); h * ow * c];
    for i in 0..h {
        for j in 0..ow {
            let dst = &mut tmp[(i * ow + j) * c..][..c];
            for (k, &gk) in g.iter().enumerate() {
                let src = &x[(i * w + j + k) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += gk * s;
                }
            }
        }
    }
    let mut out = vec![T::zero(); oh * ow * c];
    for i in 0..oh {
        let dst = &mut out[i * ow * c..][..ow * c];
        for (k, &gk) in g.iter().enumerate() {
            let src = &tmp[(i + k) * ow * c..][..ow * c];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += gk * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter`].
fn filter_t<T: Real>(y: &[T], h: usize, w: usize, c: usize, g: &[T]) -> Vec<T> {
    let n = g.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![T::zero(); h * ow * c];
    for i in 0..oh {
        let src = &y[i * ow * c..][..ow * c];
        for (k, &gk) in g.iter().enumerate() {
            let dst = &mut tmp[(i + k) * ow * c..][..ow * c];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += gk * s;
            }
        }
    }
    let mut out = vec![T::zero(); h * w * c];
    for i in 0..h {
        for j in 0..ow {
            let src = &tmp[(i * ow + j) * c..][..c];
            for (k, &gk) in g.iter().enumerate() {
                let dst = &mut out[(i * w + j + k) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += gk * s;
                }
            }
        }
    }
    out
}

struct Moments<T> {
    mx: Vec<T>,
    my: Vec<T>,
    vx: Vec<T>,
    vy: Vec<T>,
    cxy: Vec<T>,
}

fn moments<T: Real>(x: &[T], y: &[T], h: usize, w: usize, c: usize, g: &[T]) -> Moments<T> {
    let f = |v: &[T]| filter(v, h, w, c, g);
    let mx = f(x);
    let my = f(y);
    let xx: Vec<T> = x.iter().map(|&a| a * a).collect();
    let yy: Vec<T> = y.iter().map(|&a| a * a).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a * b).collect();
    let mut vx = f(&xx);
    let mut vy = f(&yy);
    let mut cxy = f(&xy);
    for i in 0..mx.len() {
        vx[i] -= mx[i] * mx[i];
        vy[i] -= my[i] * my[i];
        cxy[i] -= mx[i] * my[i];
    }
    Moments { mx, my, vx, vy, cxy }
}

/// Per-position weights (window-centre pixel weight) and their total over
/// positions and channels. `None` means uniform weights.
fn position_weights<T: Real>(weights: Option<&[T]>, h: usize, w: usize, c: usize) -> (Vec<T>, T) {
    let r = SSIM_WINDOW / 2;
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            out.push(weights.map_or(T::one(), |wt| wt[(i + r) * w + j + r]));
        }
    }
    let total = out.iter().copied().sum::<T>() * T::of(c as f64);
    (out, total)
}

/// True when the image is large enough for at least one window.
pub fn ssim_defined(h: usize, w: usize) -> bool {
    h >= SSIM_WINDOW && w >= SSIM_WINDOW
}

fn taps<T: Real>() -> Vec<T> {
    gaussian_taps().iter().map(|&v| T::of(v)).collect()
}

/// Weighted mean SSIM of two `h x w x c` buffers; `None` if no window has
/// positive weight.
pub fn ssim_value<T: Real>(x: &[T], y: &[T], h: usize, w: usize, c: usize, weights: Option<&[T]>) -> Option<T> {
    let g = taps::<T>();
    let m = moments(x, y, h, w, c, &g);
    let (pw, total) = position_weights(weights, h, w, c);
    if total <= T::zero() {
        return None;
    }
    let (c1, c2) = (T::of(C1), T::of(C2));
    let two = T::of(2.0);
    let mut acc = T::zero();
    for (p, &wp) in pw.iter().enumerate() {
        if wp == T::zero() {
            continue;
        }
        for ch in 0..c {
            let i = p * c + ch;
            let (mx, my) = (m.mx[i], m.my[i]);
            let s = (two * mx * my + c1) * (two * m.cxy[i] + c2)
                / ((mx * mx + my * my + c1) * (m.vx[i] + m.vy[i] + c2));
            acc += wp * s;
        }
    }
    Some(acc / total)
}

/// Gradients of `upstream * ssim_value` with respect to `x` and `y`.
pub fn ssim_grad<T: Real>(
    x: &[T],
    y: &[T],
    h: usize,
    w: usize,
    c: usize,
    weights: Option<&[T]>,
    upstream: T,
) -> (Vec<T>, Vec<T>) {
    let g = taps::<T>();
    let m = moments(x, y, h, w, c, &g);
    let (pw, total) = position_weights(weights, h, w, c);
    let n = m.mx.len();
    let (c1, c2) = (T::of(C1), T::of(C2));
    let two = T::of(2.0);
    // Coefficient maps: dS/dmu, dS/dsigma^2, dS/dsigma_xy, each scaled by the
    // window weight, then pre-combined so only four adjoint filters are needed.
    let mut px = vec![T::zero(); n];
    let mut py = vec![T::zero(); n];
    let mut bb = vec![T::zero(); n];
    let mut cc = vec![T::zero(); n];
    for i in 0..n {
        let om = upstream * pw[i / c] / total;
        if om == T::zero() {
            continue;
        }
        let (mx, my, vx, vy, cxy) = (m.mx[i], m.my[i], m.vx[i], m.vy[i], m.cxy[i]);
        let n1 = two * mx * my + c1;
        let n2 = two * cxy + c2;
        let d1 = mx * mx + my * my + c1;
        let d2 = vx + vy + c2;
        let s = n1 * n2 / (d1 * d2);
        let ax = two * my * n2 / (d1 * d2) - s * two * mx / d1;
        let ay = two * mx * n2 / (d1 * d2) - s * two * my / d1;
        let b = -s / d2 * om;
        let cv = two * n1 / (d1 * d2) * om;
        px[i] = ax * om - two * mx * b - my * cv;
        py[i] = ay * om - two * my * b - mx * cv;
        bb[i] = b;
        cc[i] = cv;
    }
    let ft = |v: &[T]| filter_t(v, h, w, c, &g);
    let (fpx, fpy, fb, fc) = (ft(&px), ft(&py), ft(&bb), ft(&cc));
    let gx = (0..x.len()).map(|i| fpx[i] + two * x[i] * fb[i] + y[i] * fc[i]).collect();
    let gy = (0..y.len()).map(|i| fpy[i] + two * y[i] * fb[i] + x[i] * fc[i]).collect();
    (gx, gy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let g = gaussian_taps();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..SSIM_WINDOW {
            assert!((g[i] - g[SSIM_WINDOW - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_images_score_one() {
        let x: Vec<f64> = (0..16 * 16).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let s = ssim_value(&x, &x, 16, 16, 1, None).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_adjointness() {
        let g: Vec<f64> = taps();
        let (h, w, c) = (14, 12, 2);
        let x: Vec<f64> = (0..h * w * c).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..(h - 10) * (w - 10) * c).map(|i| (i as f64 * 0.7).cos()).collect();
        let lhs: f64 = filter(&x, h, w, c, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = filter_t(&y, h, w, c, &g).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_undefined() {
        let x = vec![0.5f64; 11 * 11];
        assert!(ssim_value(&x, &x, 11, 11, 1, Some(&vec![0.0; 121])).is_none());
        assert!(!ssim_defined(10, 20));
    }
}
