//! Semiclassical dynamics of a four-mirror optomechanical cavity whose two
//! transverse end mirrors are mechanically driven, together with the chaos
//! diagnostics built on top of it: stroboscopic Poincaré sections, the
//! Lyapunov spectrum and the Kolmogorov-Sinai entropy.
//!
//! Independent work items (initial conditions, sweep points) run on a rayon
//! pool when the default `parallel` feature is on, sequentially otherwise.
//! Results are assembled by index either way, so outputs do not depend on
//! the thread count.

pub mod config;
pub mod error;
pub mod exec;
pub mod integrator;
pub mod lyapunov;
pub mod model;
pub mod output;
pub mod poincare;
pub mod run;
pub mod scenarios;
pub mod si;

pub use config::{parse_config, AnalysisKind, AnalysisSpec, RunRequest};
pub use error::{Error, ErrorClass, Result};
pub use exec::Exec;
pub use model::{ModelParams, SystemState};
pub use run::{execute, RunOutput};
