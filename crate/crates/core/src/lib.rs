//! Functional diffusion: diffusion models whose samples are functions over a
//! continuous domain rather than fixed-size arrays.
//!
//! The crate is organized bottom-up:
//!
//! - [`adcore`]: dense `f64` tensors with a define-by-run reverse-mode tape.
//! - [`schedule`]: the `alpha_t = 1/sqrt(t^2+1)`, `sigma_t = t/sqrt(t^2+1)` schedule,
//!   timestep grids and loss weighting.
//! - [`noise_field`]: continuous noise functions built from Gaussian values on a grid.
//! - [`geometry`]: analytic SDFs, isocontours, Chamfer / F-score.
//! - [`dataset`]: function families, context and query sampling.
//! - [`denoiser`]: the latent-set transformer `D(context, condition, t, x)`.
//! - [`diffusion`]: forward noising, training and the deterministic sampler.
//! - [`metrics`]: function-space and PDE residual metrics, evaluation reports.
//! - [`cli`]: configuration and the `fundiff` command-line driver.
//!
//! Signed distance functions follow the positive-inside convention throughout:
//! `f(x) = dist(x, boundary)` inside the shape and `-dist(x, boundary)` outside.

pub mod adcore;
pub mod cli;




pub mod domain;
pub mod error;
pub mod field;
pub mod dataset;
pub mod denoiser;
pub mod diffusion;
pub mod geometry;
pub mod metrics;

pub mod noise_field;
pub mod rng;
pub mod schedule;

pub use domain::{DomainSpec, Manifold, Points};
pub use error::{Error, Result};
pub use field::Field;
