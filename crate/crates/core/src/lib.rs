//! Frequency-prior guided augmentation.
//!
//! The crate learns a radial amplitude profile from the boundary band of
//! labeled objects ([`prior`]) and nudges the amplitude spectrum of other
//! images toward it while keeping their phase ([`augment`]). Around that
//! core sit the spectral primitives ([`spectral`]), forward-only loss kernels
//! for semi-supervised training ([`ssl`]), segmentation metrics
//! ([`metrics`]), signature studies ([`analysis`]) and file formats ([`io`]).
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod analysis;
pub mod augment;
pub mod error;
pub mod io;
pub mod metrics;
pub mod prior;
pub mod raster;
pub mod spectral;
pub mod ssl;

pub use augment::{fpgm_augment, AlignmentConfig, AlignmentMode};
pub use error::{FpgmError, Result};
pub use prior::{AggregationMode, FrequencyPrior, LabeledSample};
pub use raster::{BinaryMask, Grid, RasterImage};
pub use spectral::{CenteredSpectrum, RadialProfile};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/prior.md")]
    mod prior {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
