//! 256-bin histograms on [0, 1] and monotone histogram matching.

use crate::error::{Error, Result};
use crate::image::PlanarImage;

pub const BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; BINS],
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self { counts: [0; BINS] }
    }
}

fn bin_of(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1)
}

impl Histogram256 {
    /// Values are clamped into [0, 1] before binning.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self::default();
        for v in values {
            h.counts[bin_of(v)] += 1;
        }
        h
    }

    /// Histogram of the pixels of a single-channel image where `mask` is set.
    pub fn from_image(img: &PlanarImage, mask: Option<&[bool]>) -> Self {
        match mask {
            Some(m) => Self::from_values(img.data().iter().zip(m).filter(|(_, &k)| k).map(|(&v, _)| v)),
            None => Self::from_values(img.data().iter().copied()),
        }
    }

    pub fn counts(&self) -> &[u64; BINS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Piecewise-linear CDF evaluated at the bin edges `k / 256`, `k = 0..=256`.
    pub fn edge_cdf(&self) -> Result<Vec<f64>> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Empty("target histogram"));
        }
        let mut out = Vec::with_capacity(BINS + 1);
        let mut acc = 0u64;
        out.push(0.0);
        for &c in &self.counts {
            acc += c;
            out.push(acc as f64 / n as f64);
        }
        Ok(out)
    }

    /// Inverse of the piecewise-linear CDF for `q` in (0, 1].
    pub fn quantile(&self, q: f64) -> Result<f64> {
        Ok(inverse_cdf(&self.edge_cdf()?, q))
    }

    /// Piecewise-linear CDF at `x` in [0, 1].
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let f = self.edge_cdf()?;
        let t = x.clamp(0.0, 1.0) * BINS as f64;
        let k = (t as usize).min(BINS - 1);
        Ok(f[k] + (t - k as f64) * (f[k + 1] - f[k]))
    }
}

fn inverse_cdf(f: &[f64], q: f64) -> f64 {
    // First edge index with F >= q; the preceding bin holds the quantile.
    let hi = f.partition_point(|&v| v < q).clamp(1, BINS);
    let lo = hi - 1;
    let span = f[hi] - f[lo];
    let frac = if span > 0.0 { ((q - f[lo]) / span).clamp(0.0, 1.0) } else { 0.0 };
    ((lo as f64 + frac) / BINS as f64).clamp(0.0, 1.0)
}

/// Maps `source` through a monotone transfer so its distribution follows
/// `target`. The source CDF is the mid-rank empirical CDF of the pixels in
/// `mask` (all pixels if `None`); every pixel is transferred.
pub fn histogram_match(source: &PlanarImage, target: &Histogram256, mask: Option<&[bool]>) -> Result<PlanarImage> {
    let f = target.edge_cdf()?;
    if source.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: source.channels(),
        });
    }
    if let Some(m) = mask {
        if m.len() != source.data().len() {
            return Err(Error::DimensionMismatch("histogram_match mask size".into()));
        }
    }
    let mut sorted: Vec<f64> = match mask {
        Some(m) => source.data().iter().zip(m).filter(|(_, &k)| k).map(|(&v, _)| v).collect(),
        None => source.data().to_vec(),
    };
    if sorted.is_empty() {
        return Err(Error::Empty("source region"));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(source.map(|v| {
        let below = sorted.partition_point(|&s| s < v);
        let at_or_below = sorted.partition_point(|&s| s <= v);
        let c = (below as f64 + 0.5 * (at_or_below - below) as f64) / n;
        inverse_cdf(&f, c)
    }))
}
