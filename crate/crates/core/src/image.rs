//! Raster value types shared by every stage of the pipeline.
//!
//! All rasters are row-major with a top-left origin and channel-interleaved
//! samples, indexed as `(row, column, channel)`.

use crate::error::{Error, Result};

/// A 2-D float raster with an explicit channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PlanarImage {
    /// Wraps `data`, checking its length and that every sample is finite.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::DimensionMismatch("image needs at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0 && value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a single-channel image from a per-pixel function.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                assert!(v.is_finite(), "from_fn produced a non-finite value at ({r}, {c})");
                data.push(v);
            }
        }
        Self {
            height,
            width,
            channels: 1,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, ch: usize) -> PlanarImage {
        assert!(ch < self.channels);
        let data = self.data.iter().skip(ch).step_by(self.channels).copied().collect();
        PlanarImage {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Interleaves single-channel images of equal size.
    pub fn stack(planes: &[&PlanarImage]) -> Result<PlanarImage> {
        let first = planes.first().ok_or(Error::Empty("planes to stack"))?;
        let (h, w) = (first.height, first.width);
        for p in planes {
            if p.channels != 1 || p.height != h || p.width != w {
                return Err(Error::DimensionMismatch("stack expects equal single-channel planes".into()));
            }
        }
        let n = planes.len();
        let mut data = vec![0.0; h * w * n];
        for (k, p) in planes.iter().enumerate() {
            for (i, v) in p.data.iter().enumerate() {
                data[i * n + k] = *v;
            }
        }
        Ok(PlanarImage {
            height: h,
            width: w,
            channels: n,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PlanarImage {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()));
        PlanarImage { data, ..*self }
    }

    /// Copies the `height x width` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<PlanarImage> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {height}x{width}@({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(height * width * ch);
        for r in row..row + height {
            let start = (r * self.width + col) * ch;
            data.extend_from_slice(&self.data[start..start + width * ch]);
        }
        Ok(PlanarImage {
            height,
            width,
            channels: ch,
            data,
        })
    }

    pub fn same_dims(&self, other: &PlanarImage) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn from_raw_unchecked(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }
}

/// The 2x2 micro-polarizer layout of the sensor.
///
/// ```text
///  90  45
/// 135   0
/// ```
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PfaPattern;

impl PfaPattern {
    /// Filter angle in degrees at the given row/column parity.
    pub fn angle_at(&self, row_parity: usize, col_parity: usize) -> f64 {
        match (row_parity & 1, col_parity & 1) {
            (0, 0) => 90.0,
            (0, 1) => 45.0,
            (1, 0) => 135.0,
            _ => 0.0,
        }
    }

    /// Position `(row, col)` inside the macro-pixel of the filter with the given angle.
    pub fn offset_of(&self, angle_deg: u32) -> Option<(usize, usize)> {
        match angle_deg {
            90 => Some((0, 0)),
            45 => Some((0, 1)),
            135 => Some((1, 0)),
            0 => Some((1, 1)),
            _ => None,
        }
    }
}

/// A raw single-channel sensor image behind a [`PfaPattern`].
#[derive(Clone, Debug, PartialEq)]
pub struct MosaicedImage {
    image: PlanarImage,
    pattern: PfaPattern,
}

impl MosaicedImage {
    pub fn new(image: PlanarImage) -> Result<Self> {
        if image.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                found: image.channels(),
            });
        }
        if image.height() % 2 != 0 || image.width() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "mosaiced image must have even dimensions, got {}x{}",
                image.height(),
                image.width()
            )));
        }
        Ok(Self {
            image,
            pattern: PfaPattern,
        })
    }

    pub fn image(&self) -> &PlanarImage {
        &self.image
    }

    pub fn into_image(self) -> PlanarImage {
        self.image
    }

    pub fn pattern(&self) -> PfaPattern {
        self.pattern
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.image.get(row, col, 0)
    }
}

/// Per-pixel `(S0, S1, S2)` stored as a 3-channel raster.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesImage(PlanarImage);

impl StokesImage {
    pub fn new(image: PlanarImage) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                found: image.channels(),
            });
        }
        Ok(Self(image))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(PlanarImage::zeros(height, width, 3))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn as_image(&self) -> &PlanarImage {
        &self.0
    }

    pub fn into_image(self) -> PlanarImage {
        self.0
    }

    pub fn pixel(&self, row: usize, col: usize) -> crate::stokes::StokesPixel {
        crate::stokes::StokesPixel {
            s0: self.0.get(row, col, 0),
            s1: self.0.get(row, col, 1),
            s2: self.0.get(row, col, 2),
        }
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, p: crate::stokes::StokesPixel) {
        self.0.set(row, col, 0, p.s0);
        self.0.set(row, col, 1, p.s1);
        self.0.set(row, col, 2, p.s2);
    }

    pub fn s0(&self) -> PlanarImage {
        self.0.channel(0)
    }

    /// AoLP per pixel; pixels with `(s1, s2) = (0, 0)` get 0 and are reported in the mask.
    pub fn aolp(&self) -> (PlanarImage, Vec<bool>) {
        let (h, w) = (self.height(), self.width());
        let mut valid = Vec::with_capacity(h * w);
        let mut out = PlanarImage::zeros(h, w, 1);
        for r in 0..h {
            for c in 0..w {
                let p = self.pixel(r, c);
                match crate::stokes::aolp(p.s1, p.s2) {
                    Ok(phi) => {
                        out.set(r, c, 0, phi);
                        valid.push(true);
                    }
                    Err(_) => valid.push(false),
                }
            }
        }
        (out, valid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_matches_sensor_layout() {
        let p = PfaPattern;
        assert_eq!(p.angle_at(0, 0), 90.0);
        assert_eq!(p.angle_at(0, 1), 45.0);
        assert_eq!(p.angle_at(1, 0), 135.0);
        assert_eq!(p.angle_at(1, 1), 0.0);
        // parity only
        assert_eq!(p.angle_at(6, 3), 45.0);
        for angle in [0, 45, 90, 135] {
            let (r, c) = p.offset_of(angle).unwrap();
            assert_eq!(p.angle_at(r, c), angle as f64);
        }
    }

    #[test]
    fn rejects_bad_images() {
        assert!(PlanarImage::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(PlanarImage::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(MosaicedImage::new(PlanarImage::zeros(3, 4, 1)).is_err());
        assert!(MosaicedImage::new(PlanarImage::zeros(4, 4, 2)).is_err());
    }

    #[test]
    fn stack_and_channel_are_inverse() {
        let a = PlanarImage::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let b = a.map(|v| -v);
        let s = PlanarImage::stack(&[&a, &b]).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.channel(0), a);
        assert_eq!(s.channel(1), b);
    }

    #[test]
    fn crop_window() {
        let a = PlanarImage::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let w = a.crop(1, 2, 2, 2).unwrap();
        assert_eq!(w.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(a.crop(3, 3, 2, 2).is_err());
    }
}
