//! Closed-loop simulation of `n` parallel DC-DC converters feeding a shared
//! DC bus with a ZIP (impedance / current / power) load.
//!
//! The bus voltage is regulated by an adaptive backstepping controller that
//! works on a barrier-transformed voltage coordinate: the transform maps the
//! open band `(v_min, v_max)` onto the whole real line, so any bounded
//! trajectory of the transformed state keeps the physical voltage strictly
//! inside the band. The controller measures only the bus voltage and the
//! filter currents; every electrical parameter (source voltages, filter
//! R/L/C, load composition) is estimated on line.
//!
//! Crate layout:
//!
//! - [`barrier`] — the band transform and its inverse derivatives
//! - [`plant`] — ground-truth averaged converter/load dynamics and an RK4 stepper
//! - [`controller`] — error signals, control laws, adaptation laws
//! - [`engine`] — sampled-data co-simulation loop with load/setpoint events
//! - [`analysis`] — Lyapunov audit and regulation/sharing metrics
//! - [`config`] — TOML scenario schema, validation, sweep patches
//! - [`trace`] — per-sample records and CSV I/O
//! - [`preset`] — bundled scenarios
//! - [`plot`] — minimal SVG renderings of a run
//! - [`sim`] — run-and-summarize orchestration and parallel sweeps

// Validation deliberately writes `!(x > 0.0)`-style guards so that NaN
// fails closed; the positive phrasing clippy prefers would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod barrier;
pub mod config;
pub mod controller;
pub mod engine;
pub mod plant;
pub mod plot;
pub mod preset;
pub mod sim;
pub mod trace;

pub use analysis::RunSummary;
pub use barrier::{Barrier, BarrierSpec, TanhBarrier};
pub use config::ConfigError;
pub use controller::{ControllerState, Gains};
pub use engine::{RunResult, RunStatus, Scenario};
pub use plant::{DguParams, PlantState, ZipLoad};
pub use trace::TraceRecord;
