//! Frechet cumulative covariance (FCCov) and neural nonlinear sufficient
//! dimension reduction for metric-space valued responses.
//!
//! The crate is organised bottom-up:
//!
//! * [`metrics`] — response objects, their metrics and the small dense
//!   linear algebra the SPD metrics need.
//! * [`fccov`] — the fourth-order U-statistic estimator in three tiers
//!   (enumeration, slice form, anchor-sorted prefix sums), its gradient
//!   and a permutation test.
//! * [`objective`] — the regularised loss over a minibatch of network
//!   outputs.
//! * [`networks`] — fully-connected and ResNet-type 1D convolutional
//!   networks with reverse-mode gradients and Adam.
//! * [`trainer`] — minibatch training and structural-dimension selection.
//! * [`evaluation`] — distance correlation and the orthogonal-invariant
//!   kappa distance.
//! * [`datagen`] — seeded simulation designs.
//! * [`experiment`] and [`io`] — replicate harness and file formats used by
//!   the command-line tool.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod fccov;
pub mod io;
pub mod metrics;
pub mod networks;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};

/// Library version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
