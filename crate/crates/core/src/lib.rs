//! Polarization-filter-array demosaicing: Stokes algebra, PFA forward model,
//! classic interpolators, a mosaic-aware CNN with its own differentiation
//! engine, LCD-screen ground-truth construction and evaluation harnesses.

pub mod autodiff;
pub mod classic;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod lcdgt;
pub mod mconv;
pub mod mosaic;
pub mod pfadn;
pub mod stokes;

pub use error::{Error, Result};
pub use image::{MosaicedImage, PfaPattern, PlanarImage, StokesImage};
pub use stokes::StokesPixel;
