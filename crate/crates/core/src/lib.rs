//! Procedurally generated 2D-shape streams for continual classification,
//! plus a reference pipeline that classifies by regressing each input's
//! affine pose, normalizing it, and matching against stored exemplars.
//!
//! Modules:
//! - [`shapegen`]: random closed shapes, canonical form.
//! - [`raster`]: rendering, ground-truth matrices, differentiable warps.
//! - [`stream`]: task assembly, splits, bounded balanced test set, file IO.
//! - [`regressor`]: analytic pose estimator, trainable MLP with Adam.
//! - [`memory`]: exemplar buffer, nearest-neighbor lookup, novelty rule.
//! - [`baselines`]: fine-tuning, replay variants, contrastive baseline.
//! - [`harness`]: experiment orchestration, metrics, plots.

pub mod error;
mod format;
pub mod geom;
pub mod memory;
pub mod plot;
pub mod pngio;
pub mod raster;
pub mod regressor;
pub mod reservoir;
pub mod rng;
pub mod shapegen;
pub mod stream;

pub use error::{Error, Result};
