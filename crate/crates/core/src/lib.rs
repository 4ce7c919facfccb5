//! Double-Gaussian two-photon optics toolkit.
//!
//! The crate models transverse two-photon states with Gaussian sum and
//! difference coordinates end to end:
//!
//! * [`dg`] — closed-form states, propagated widths, and figure-of-merit
//!   formulas (Schmidt number, Fedorov ratio, balanced plane);
//! * [`optics`] — Fresnel propagation, lens folds, coordinate scaling, and
//!   double-slit far fields for sampled complex fields;
//! * [`camera`] — binary single-photon camera simulation (pair sampling,
//!   detection efficiency, background, blooming) and the packed frame-stack
//!   format;
//! * [`recon`] — correlation-based reconstruction of joint distributions
//!   from frame stacks, including fused reduced-coordinate estimation,
//!   Gaussian/double-Gaussian fitting, and width-ratio protocols;
//! * [`denoise`] — mass-aware cleaning stages (baseline subtraction,
//!   Butterworth band-pass, wavelet shrinkage machinery, total-variation
//!   smoothing, kernel smoothing);
//! * [`analysis`] — marginals, correlation residuals, fringe visibility,
//!   focus sweeps, and the double-slit experiment driver;
//! * [`gridfile`] — binary file formats for frame stacks and sampled maps.

pub mod analysis;
pub mod camera;
pub mod denoise;
pub mod dg;
mod error;
mod fft;
pub mod grid;
pub mod gridfile;
pub mod optics;
pub mod recon;

pub use error::{Error, Result};
