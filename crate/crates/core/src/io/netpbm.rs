//! Binary PGM (P5) and PFM ("Pf"/"PF") codecs.
//!
//! PGM samples are scaled to `[0, 1]` by the header maxval. PFM stores rows
//! bottom-to-top; rows are flipped at this boundary so that in-memory images
//! always have a top-left origin.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::PlanarImage;

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn magic(&mut self) -> Result<&'a [u8]> {
        if self.bytes.len() < 2 {
            return Err(Error::MalformedHeader("file too short for magic".into()));
        }
        self.pos = 2;
        Ok(&self.bytes[..2])
    }

    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::MalformedHeader("non-ascii header token".into()))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::MalformedHeader(format!("invalid {what}: {tok:?}")))
    }

    /// Consumes the single whitespace byte separating header and raster.
    fn payload(self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::MalformedHeader("missing separator before raster".into())),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes a binary PGM, returning the image and its maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<(PlanarImage, u16)> {
    let mut hdr = HeaderReader::new(bytes);
    let magic = hdr.magic()?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat(format!(
            "expected binary PGM (P5), found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width: usize = hdr.number("width")?;
    let height: usize = hdr.number("height")?;
    let maxval: u32 = hdr.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    let payload = hdr.payload()?;
    let bps = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * bps;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    // Divide rather than multiply by the reciprocal so k / maxval is
    // correctly rounded and re-encodes to k.
    let m = maxval as f64;
    let data = if bps == 1 {
        payload[..expected].iter().map(|&b| (b as u32).min(maxval) as f64 / m).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|b| (u16::from_be_bytes([b[0], b[1]]) as u32).min(maxval) as f64 / m)
            .collect()
    };
    Ok((PlanarImage::from_raw_unchecked(height, width, 1, data), maxval as u16))
}

/// Encodes a single-channel image as P5; values are clamped to `[0, 1]` and quantized.
pub fn encode_pgm(image: &PlanarImage, maxval: u16) -> Result<Vec<u8>> {
    if image.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: image.channels(),
        });
    }
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval must be positive".into()));
    }
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    let m = maxval as f64;
    let quant = |v: f64| (v.clamp(0.0, 1.0) * m).round() as u16;
    if maxval < 256 {
        out.extend(image.data().iter().map(|&v| quant(v) as u8));
    } else {
        for &v in image.data() {
            out.extend_from_slice(&quant(v).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PlanarImage> {
    read_pgm_with_maxval(path).map(|(img, _)| img)
}

pub fn read_pgm_with_maxval(path: impl AsRef<Path>) -> Result<(PlanarImage, u16)> {
    decode_pgm(&read_file(path.as_ref())?)
}

pub fn write_pgm(image: &PlanarImage, path: impl AsRef<Path>, maxval: u16) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(image, maxval)?)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PlanarImage> {
    let mut hdr = HeaderReader::new(bytes);
    let channels = match hdr.magic()? {
        b"Pf" => 1,
        b"PF" => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "bad PFM magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width: usize = hdr.number("width")?;
    let height: usize = hdr.number("height")?;
    let scale: f64 = hdr.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("invalid scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let payload = hdr.payload()?;
    let n = width * height * channels;
    if payload.len() < n * 4 {
        return Err(Error::Truncated {
            expected: n * 4,
            found: payload.len(),
        });
    }
    let row_len = width * channels;
    let mut data = vec![0.0f64; n];
    for (k, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(Error::NonFinite("PFM payload"));
        }
        let file_row = k / row_len;
        let within = k % row_len;
        data[(height - 1 - file_row) * row_len + within] = v as f64;
    }
    Ok(PlanarImage::from_raw_unchecked(height, width, channels, data))
}

/// Encodes a 1- or 3-channel image as little-endian PFM (scale −1.0).
pub fn encode_pfm(image: &PlanarImage) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        1 => "Pf",
        3 => "PF",
        found => return Err(Error::ChannelMismatch { expected: 3, found }),
    };
    let (h, w, ch) = image.dims();
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * ch * 4);
    let row_len = w * ch;
    for r in (0..h).rev() {
        for &v in &image.data()[r * row_len..(r + 1) * row_len] {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite("PFM payload"));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PlanarImage> {
    decode_pfm(&read_file(path.as_ref())?)
}

pub fn write_pfm(image: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pfm(image)?)
}

/// Reads a `.pgm` or `.pfm` file, chosen by extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "pgm" => read_pgm(path),
        Some(ext) if ext == "pfm" => read_pfm(path),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected a .pgm or .pfm file",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_8bit_scaling() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\xff\x00";
        let (img, maxval) = decode_pgm(bytes).unwrap();
        assert_eq!(maxval, 255);
        assert_eq!(img.dims(), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(encode_pgm(&img, 255).unwrap(), bytes.to_vec());
    }

    #[test]
    fn pgm_16bit_is_big_endian() {
        let bytes = b"P5\n1 2\n65535\n\x80\x00\xff\xff";
        let (img, _) = decode_pgm(bytes).unwrap();
        assert_eq!(img.get(0, 0, 0), 32768.0 / 65535.0);
        assert_eq!(img.get(1, 0, 0), 1.0);
        assert_eq!(encode_pgm(&img, 65535).unwrap(), bytes.to_vec());
    }

    #[test]
    fn pgm_header_with_comment() {
        let bytes = b"P5\n# made by hand\n1 1\n# another\n255\n\x80";
        let (img, _) = decode_pgm(bytes).unwrap();
        assert_eq!(img.get(0, 0, 0), 128.0 / 255.0);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00"), Err(Error::Truncated { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 x\n255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1\n0\n\x00"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn pfm_single_pixel() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&0x3F80_0000u32.to_le_bytes());
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.data(), &[1.0]);
        assert_eq!(encode_pfm(&img).unwrap(), bytes);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let img = PlanarImage::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &2.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_big_endian_positive_scale() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-3.0f32).to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data(), &[0.5, -3.0]);
    }

    #[test]
    fn pfm_errors() {
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_pfm(&nan), Err(Error::NonFinite(_))));
        assert!(matches!(decode_pfm(b"PX\n1 1\n-1.0\n\0\0\0\0"), Err(Error::UnsupportedFormat(_))));
        let two = PlanarImage::zeros(2, 2, 2);
        assert!(matches!(encode_pfm(&two), Err(Error::ChannelMismatch { expected: 3, found: 2 })));
    }

    #[test]
    fn pfm_three_channels() {
        let img = PlanarImage::new(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        assert!(bytes.starts_with(b"PF\n2 1\n"));
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }
}
