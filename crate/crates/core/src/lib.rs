//! Hybrid analog/digital beamforming for multiuser massive MIMO-OFDM.
//!
//! The crate maximizes the weighted spectral efficiency
//! `sum_k sum_u z_u R_u[k]` of a fully connected phase-shifter architecture
//! and ships the pieces needed to compare the designs:
//!
//! * [`channel`]: clustered geometric mmWave channels, OFDM frequency
//!   conversion and imperfect-CSI models.
//! * [`metrics`]: rates, MMSE receivers, MSEs, SINRs and the AM/GM gap of the
//!   per-user MSEs together with its SINR-spread bound.
//! * [`manifold`]: Riemannian conjugate gradient over the constant-modulus
//!   analog precoder.
//! * [`digital`]: per-subcarrier digital precoding, both the locally optimal
//!   SOCP-based iteration and the weighted-MMSE iteration.
//! * [`cmdd`]: closed-form hybrid precoding from phase-projected channel
//!   eigenvectors.
//! * [`framework`]: alternating maximization (LAOHB / AOHB), the fully
//!   digital benchmark and Monte-Carlo scenarios.
//! * [`harness`]: configuration files, sweeps, 16-QAM BER simulation and CSV
//!   output.
//!
//! Conventions used throughout: subcarriers are indexed `k = 0..K-1`, the
//! transmit symbols have unit power and the noise variance is `1/theta`.

pub mod channel;
pub mod cmdd;
pub mod config;
pub mod digital;
mod error;
pub mod framework;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod rng;

pub use channel::{ChannelSet, EffectiveChannel, TimeDomainChannel};
pub use config::{StreamAllocation, SystemConfig};
pub use error::{Error, ErrorCategory, Result};
pub use framework::{Algorithm, RunResult};
pub use linalg::{CMatrix, CVector, Complex64};
pub use metrics::{AnalogPrecoder, DigitalPrecoderSet, MetricsReport};
