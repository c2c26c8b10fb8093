//! Document image binarization.
//!
//! Two families of binarizers live here:
//!
//! * classical thresholding ([`classical`]): Otsu's global threshold and the
//!   Niblack / Sauvola / Wolf local thresholds over integral-image statistics;
//! * selectional auto-encoders ([`sae`]): fully convolutional encoder-decoder
//!   networks that map a square window of a page to a same-size map of
//!   foreground confidences, which is then thresholded.
//!
//! The networks run on a small reverse-mode differentiation engine
//! ([`tensor`]) and are trained with Adam on a soft F-measure loss
//! ([`training`]). [`evaluation`] holds the metrics and experiment drivers,
//! and [`cli`] wires everything into the `binkit` command.

pub mod classical;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod imagery;
pub mod sae;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use imagery::{BinaryMask, GrayImage, PatchGrid, Raster};
