//! Pointwise regularity estimation and segmentation of scale-free textures.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`multiscale`]: a periodic, L1-normalized 2D Daubechies wavelet transform
//!    and wavelet leaders upsampled to the finest-scale grid.
//! 2. [`regression`]: per-pixel log-leader regression across scales giving a
//!    Hölder exponent map, and a Gaussian smoothing baseline.
//! 3. [`proxcore`]: discrete gradients, total variation, and the closed-form
//!    proximity operators and projections shared by the solvers.
//! 4. [`segmenters`]: TV denoising, joint regularity/weights estimation,
//!    relaxed-Potts labeling and histogram thresholding.
//!
//! [`scoring`] holds the pure parts of benchmark evaluation (misclassification
//! with median-ordered label matching, histograms).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, random field
//! synthesis and the command line live in the `fracseg` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod error;
mod field;
pub(crate) mod math;

pub mod multiscale;
pub mod proxcore;
pub mod regression;
pub mod scoring;
pub mod segmenters;

pub use error::{Error, Result};
pub use field::{Field2D, LabelMask};
