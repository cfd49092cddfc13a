//! JSON-lines dataset manifests.
//!
//! One entry per line; paths are relative to the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{MosaicedImage, PlanarImage};
use crate::io::netpbm::read_image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub input: PathBuf,
    pub intensity: PathBuf,
    pub aolp: PathBuf,
    pub split: Split,
    /// Optional validity mask (PGM, nonzero = valid).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

/// A loaded sample: mosaiced input with its intensity and AoLP targets.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: MosaicedImage,
    pub intensity: PlanarImage,
    pub aolp: PlanarImage,
    pub mask: Option<Vec<bool>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            entries: Vec::new(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line)?);
        }
        Ok(Self {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<Sample> {
        let input = MosaicedImage::new(read_image(self.resolve(&entry.input))?)?;
        let intensity = read_image(self.resolve(&entry.intensity))?;
        let aolp = read_image(self.resolve(&entry.aolp))?;
        let mask = match &entry.mask {
            Some(m) => Some(read_image(self.resolve(m))?.data().iter().map(|&v| v > 0.0).collect()),
            None => None,
        };
        let (h, w) = (input.height(), input.width());
        let ok = |img: &PlanarImage| img.height() == h && img.width() == w && img.channels() == 1;
        if !ok(&intensity) || !ok(&aolp) || mask.as_ref().is_some_and(|m: &Vec<bool>| m.len() != h * w) {
            return Err(Error::DimensionMismatch(format!(
                "entry {} has inconsistent raster sizes",
                entry.input.display()
            )));
        }
        Ok(Sample {
            input,
            intensity,
            aolp,
            mask,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.split(split).map(|e| self.load(e)).collect()
    }

    /// Checks that every referenced file exists and that sizes agree.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            self.load(e)?;
        }
        Ok(())
    }
}
