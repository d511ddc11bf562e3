//! Brushstroke-driven image editing.
//!
//! Users edit an image with three brushes (add, subtract, color). Strokes
//! are compiled into an edge condition, a color condition and an editing
//! mask ([`condition`]); a latent diffusion denoiser extended with an
//! inpainting branch and a control branch regenerates the masked region
//! ([`diffusion`]). A pluggable intent predictor guesses what the user is
//! drawing ([`guess`]), [`dataset`] builds training records for such a
//! predictor, [`eval`] scores results and [`service`] exposes editing
//! sessions over HTTP.

pub mod condition;
pub mod dataset;
pub mod diffusion;
pub mod eval;
pub mod guess;
pub mod image;
pub mod raster;
pub mod resample;
pub mod service;
