//! Rink-agnostic hockey rink registration toolkit.
//!
//! The crate covers the full loop: parametric rink templates
//! ([`rink`]), projective geometry ([`homography`], [`warp`]), synthetic
//! dataset construction ([`synth`]), classical estimation with iterative
//! refinement ([`register`]), and IOU_part evaluation ([`metrics`]).

pub mod camera;
pub mod cli;
pub mod clip;
pub mod components;
pub mod error;
pub mod homography;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod register;
pub mod rink;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};

// Keep the guide's code blocks compiling: every chapter doubles as a
// doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/templates.md")]
    mod templates {}
    #[doc = include_str!("../../../book/src/homography.md")]
    mod homography {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/registration.md")]
    mod registration {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
