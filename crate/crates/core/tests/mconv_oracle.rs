//! MConv block against a direct position-dependent window sum.

mod common;

use common::mconv_oracle::max_block_deviation;
use pfadn_core::autodiff::{Graph, Tensor};
use pfadn_core::mconv::{mconv_block, MConvParams, MConvVars, BRANCH_MASKS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn block_matches_window_oracle() {
    let worst = max_block_deviation(100, 2024);
    assert!(worst <= 1e-6, "max deviation {worst:e}");
}

#[test]
fn masks_partition_unity() {
    for i in 0..2 {
        for j in 0..2 {
            let cover: usize = BRANCH_MASKS.iter().map(|m| usize::from(m[i][j])).sum();
            assert_eq!(cover, 1, "cell ({i}, {j})");
        }
    }
}

/// An impulse only reaches outputs whose window contains it.
#[test]
fn impulse_receptive_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = MConvParams::<f64>::init(1, 3, &mut rng);
    for (i, j) in [(3, 4), (0, 0), (5, 5), (2, 1)] {
        let mut x = Tensor::zeros(&[6, 6, 1]);
        x.data_mut()[i * 6 + j] = 1.0;
        let mut g = Graph::new();
        let xv = g.input(x);
        let vars = MConvVars::constants(&mut g, &p);
        let base = g.input(Tensor::zeros(&[6, 6, 1]));
        let y = mconv_block(&mut g, xv, &vars).unwrap();
        let y0 = mconv_block(&mut g, base, &vars).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let changed = (0..3).any(|o| {
                    let k = (r * 6 + c) * 3 + o;
                    g.value(y).data()[k] != g.value(y0).data()[k]
                });
                if changed {
                    assert!((i.saturating_sub(1)..=i).contains(&r) && (j.saturating_sub(1)..=j).contains(&c), "({r},{c}) from ({i},{j})");
                }
            }
        }
    }
}
