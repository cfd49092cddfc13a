//! Direct position-dependent window sum for the MConv block.

use pfadn_core::autodiff::{Graph, Tensor};
use pfadn_core::mconv::{mconv_block, MConvParams, MConvVars};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pixel `(i, j)` uses the bank of its own parity on the 2x2 window whose
/// top-left corner is `(i, j)`, with the last row/column replicated.
pub fn oracle(x: &Tensor<f64>, p: &MConvParams<f64>) -> Vec<f64> {
    let (h, w, c) = x.hwc();
    let d = p.depth();
    let mut out = vec![0.0; h * w * d];
    for i in 0..h {
        for j in 0..w {
            let k = 2 * (i % 2) + j % 2;
            let (kern, bias) = (p.kernels[k].data(), p.biases[k].data());
            for o in 0..d {
                let mut acc = bias[o];
                for a in 0..2 {
                    for b in 0..2 {
                        let (si, sj) = ((i + a).min(h - 1), (j + b).min(w - 1));
                        for ch in 0..c {
                            acc += kern[((a * 2 + b) * c + ch) * d + o] * x.data()[(si * w + sj) * c + ch];
                        }
                    }
                }
                out[(i * w + j) * d + o] = acc.max(0.0);
            }
        }
    }
    out
}

/// Largest deviation between the block and the oracle over `trials` random
/// tensors up to 8x8x3 with depth up to 5.
pub fn max_block_deviation(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let h = 2 * rng.random_range(1..=4);
        let w = 2 * rng.random_range(1..=4);
        let c = rng.random_range(1..=3);
        let d = rng.random_range(1..=5);
        let x = Tensor::new(vec![h, w, c], (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut p = MConvParams::<f64>::init(c, d, &mut rng);
        for b in &mut p.biases {
            b.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let vars = MConvVars::constants(&mut g, &p);
        let y = mconv_block(&mut g, xv, &vars).unwrap();
        assert_eq!(g.value(y).shape(), &[h, w, d]);
        for (a, b) in g.value(y).data().iter().zip(&oracle(&x, &p)) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
