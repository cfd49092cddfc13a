//! File formats: PGM/PFM rasters, the weight container and dataset manifests.

pub mod manifest;
pub mod netpbm;
pub mod weights;

pub use manifest::{DatasetManifest, ManifestEntry, Sample, Split};
pub use netpbm::{
    decode_pfm, decode_pgm, encode_pfm, encode_pgm, read_image, read_pfm, read_pgm, read_pgm_with_maxval, write_pfm,
    write_pgm,
};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, NamedTensors};
