//! Synthetic pitch-contour toolkit: the parametric contour model, dataset
//! generation, additive synthesis, time-frequency features, a harmonic-kernel
//! pitch tracker, model-fitting contour classification and evaluation metrics.

pub mod contour;
pub mod dataset_io;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod features;
pub mod fitter;
pub mod par;
pub mod sampler;
pub mod synth;
pub mod tracker;
pub mod wav;

pub use contour::{ContourParams, ContourType, PitchContour, PsiKind};
pub use error::{Result, SpcError};
pub use synth::AudioClip;
