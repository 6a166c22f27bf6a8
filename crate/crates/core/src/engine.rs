//! Sampled-data co-simulation of the plant and controller.
//!
//! The controller runs at a fixed period `dt_ctrl` with zero-order hold: at
//! each period boundary any due events are applied, the plant state is
//! sampled (optionally with measurement noise), one control step is taken,
//! and the resulting duty vector is held while the plant advances through
//! `dt_ctrl / dt_plant` RK4 substeps. Load parameters are constant within
//! every substep.
//!
//! A run never panics on dynamic failures: band violations and plant
//! singularities terminate the loop and are reported in [`RunStatus`].

use crate::barrier::TanhBarrier;
use crate::config::ConfigError;
use crate::controller::{self, ControllerState, Gains};
use crate::plant::{self, DguParams, PlantState, ZipLoad};
use crate::trace::TraceRecord;

/// A piecewise-constant change of load and/or setpoint. Events snap to the
/// first controller-period boundary at or after `t` and are applied before
/// that period's sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub load: Option<ZipLoad>,
    pub v_star: Option<f64>,
}

/// Uniform measurement noise on the controller inputs, off by default.
/// Amplitudes are half-widths; the plant state itself is never perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub amplitude_v: f64,
    pub amplitude_i: f64,
}

/// A fully validated, ready-to-run experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dgus: Vec<DguParams>,
    pub load: ZipLoad,
    pub events: Vec<Event>,
    pub v_star: f64,
    pub barrier: crate::barrier::BarrierSpec,
    pub gains: Gains,
    pub initial_state: PlantState,
    pub initial_estimates: ControllerState,
    pub t_end: f64,
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    pub seed: u64,
    /// Log every k-th controller sample (the terminal sample is always kept).
    pub trace_every: usize,
    pub noise: Option<NoiseSpec>,
    /// Clamp duty commands into [0, 1] before they reach the plant.
    pub saturate_duty: bool,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.dgus.len()
    }

    /// RK4 substeps per controller period.
    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_plant).round() as usize
    }

    /// Controller periods in the run.
    pub fn control_steps(&self) -> usize {
        (self.t_end / self.dt_ctrl).round() as usize
    }

    /// Structural checks. Field paths in messages refer to the scenario
    /// config schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: &str, msg: String| Err(ConfigError::new(path, msg));
        let n = self.n();
        if n == 0 {
            return err("dgu", "at least one converter is required".into());
        }
        for (k, d) in self.dgus.iter().enumerate() {
            if !(d.e > 0.0) {
                return err(
                    &format!("dgu[{k}].e"),
                    format!("input voltage must be > 0, got {}", d.e),
                );
            }
            if !(d.r_t >= 0.0) {
                return err(
                    &format!("dgu[{k}].r_t"),
                    format!("resistance must be >= 0, got {}", d.r_t),
                );
            }
            if !(d.l_t > 0.0) {
                return err(
                    &format!("dgu[{k}].l_t"),
                    format!("inductance must be > 0, got {}", d.l_t),
                );
            }
            if !(d.c_t >= 0.0) {
                return err(
                    &format!("dgu[{k}].c_t"),
                    format!("capacitance must be >= 0, got {}", d.c_t),
                );
            }
        }
        if !(plant::total_capacitance(&self.dgus) > 0.0) {
            return err("dgu", "total bus capacitance must be > 0".into());
        }
        validate_load(&self.load, "load")?;
        if !self.barrier.contains(self.v_star) {
            return err(
                "v_set",
                format!(
                    "setpoint {} V must lie strictly inside the band ({}, {})",
                    self.v_star,
                    self.barrier.v_min(),
                    self.barrier.v_max()
                ),
            );
        }
        self.gains
            .validate(n)
            .map_err(|msg| ConfigError::new("gains", msg))?;
        if self.initial_state.i_t.len() != n {
            return err(
                "initial.i_t",
                format!(
                    "expected {n} currents, got {}",
                    self.initial_state.i_t.len()
                ),
            );
        }
        for (name, len) in [
            ("l_inv", self.initial_estimates.l_inv_hat.len()),
            ("lambda", self.initial_estimates.lambda_hat.len()),
            ("mu", self.initial_estimates.mu_hat.len()),
        ] {
            if len != n {
                return err(
                    &format!("controller.init.{name}"),
                    format!("expected {n} entries, got {len}"),
                );
            }
        }
        for (k, &m) in self.initial_estimates.mu_hat.iter().enumerate() {
            if !(m >= controller::MU_FLOOR) {
                return err(
                    &format!("controller.init.mu[{k}]"),
                    format!(
                        "initial mu estimate {m} below the floor {}",
                        controller::MU_FLOOR
                    ),
                );
            }
        }
        if !(self.t_end > 0.0) {
            return err("t_end", format!("must be > 0, got {}", self.t_end));
        }
        if !(self.dt_plant > 0.0) {
            return err("dt_plant", format!("must be > 0, got {}", self.dt_plant));
        }
        if !(self.dt_ctrl > 0.0) {
            return err("dt_ctrl", format!("must be > 0, got {}", self.dt_ctrl));
        }
        let ratio = self.dt_ctrl / self.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio < 1.0 - 1e-9 {
            return err(
                "dt_ctrl",
                format!("must be an integer multiple of dt_plant, got ratio {ratio}"),
            );
        }
        let steps = self.t_end / self.dt_ctrl;
        if (steps - steps.round()).abs() > 1e-6 {
            return err(
                "t_end",
                format!("must be a whole number of control periods, got {steps}"),
            );
        }
        if self.trace_every == 0 {
            return err("trace_every", "must be >= 1".into());
        }
        let mut prev = 0.0;
        for (k, ev) in self.events.iter().enumerate() {
            if !(ev.t > prev) {
                return err(
                    &format!("events[{k}].t"),
                    format!(
                        "event times must be strictly increasing and > 0, got {}",
                        ev.t
                    ),
                );
            }
            if !(ev.t < self.t_end) {
                return err(
                    &format!("events[{k}].t"),
                    format!("event at {} s is not before t_end", ev.t),
                );
            }
            prev = ev.t;
            if let Some(load) = &ev.load {
                validate_load(load, &format!("events[{k}].load"))?;
            }
            if let Some(vs) = ev.v_star {
                if !self.barrier.contains(vs) {
                    return err(
                        &format!("events[{k}].v_set"),
                        format!("setpoint {vs} V outside the open band"),
                    );
                }
            }
            if ev.load.is_none() && ev.v_star.is_none() {
                return err(
                    &format!("events[{k}]"),
                    "event changes neither load nor setpoint".into(),
                );
            }
        }
        if let Some(ns) = &self.noise {
            if !(ns.amplitude_v >= 0.0) || !(ns.amplitude_i >= 0.0) {
                return err("noise", "noise amplitudes must be >= 0".into());
            }
        }
        Ok(())
    }
}

fn validate_load(load: &ZipLoad, path: &str) -> Result<(), ConfigError> {
    for (field, v) in [("g_l", load.g_l), ("i_l", load.i_l), ("p_l", load.p_l)] {
        if !v.is_finite() || v < 0.0 {
            return Err(ConfigError::new(
                &format!("{path}.{field}"),
                format!("must be finite and >= 0, got {v}"),
            ));
        }
    }
    Ok(())
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum FailureKind {
    /// The initial bus voltage was not strictly inside the band; nothing ran.
    InitialVoltageOutOfBand { v_o: f64 },
    /// The bus voltage reached the band edge at a controller sample.
    BarrierDomain { t: f64, v_o: f64 },
    /// The bus voltage collapsed below the constant-power singularity guard.
    PlantSingularity { t: f64, v_o: f64 },
    /// The scenario failed structural validation.
    InvalidConfig(String),
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureKind::InitialVoltageOutOfBand { v_o } => {
                write!(f, "initial voltage {v_o} V is not strictly inside the band")
            }
            FailureKind::BarrierDomain { t, v_o } => {
                write!(f, "voltage {v_o} V reached the band edge at t = {t} s")
            }
            FailureKind::PlantSingularity { t, v_o } => {
                write!(
                    f,
                    "voltage {v_o} V collapsed below the singularity guard at t = {t} s"
                )
            }
            FailureKind::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(FailureKind),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }
}

/// Everything a run produces before analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    /// Retained trace records (decimated per `trace_every`).
    pub records: Vec<TraceRecord>,
    /// Controller samples evaluated, including the terminal sample.
    pub samples: usize,
    /// Samples whose true bus voltage was on or outside a band edge.
    pub violations: usize,
    /// Worst distance beyond the closed band (V); 0 when a sample sat
    /// exactly on an edge, 0 when there was no violation.
    pub worst_excursion: f64,
    /// Control steps in which the `mu_hat` floor clamp activated.
    pub clamp_events: usize,
}

// splitmix64: tiny, seedable, stable across platforms. Only used for the
// optional measurement noise, so reproducibility beats statistical quality.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    fn next_signed(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }
}

/// Execute one scenario. Structural problems and dynamic failures are both
/// reported through [`RunResult::status`]; the trace always contains every
/// successfully evaluated (retained) sample.
pub fn run(scenario: &Scenario) -> RunResult {
    let mut result = RunResult {
        status: RunStatus::Ok,
        records: Vec::new(),
        samples: 0,
        violations: 0,
        worst_excursion: 0.0,
        clamp_events: 0,
    };
    if let Err(e) = scenario.validate() {
        result.status = RunStatus::Failed(FailureKind::InvalidConfig(e.to_string()));
        return result;
    }
    let barrier = TanhBarrier::new(scenario.barrier);
    if !scenario.barrier.contains(scenario.initial_state.v_o) {
        result.status = RunStatus::Failed(FailureKind::InitialVoltageOutOfBand {
            v_o: scenario.initial_state.v_o,
        });
        return result;
    }

    let n_steps = scenario.control_steps();
    let substeps = scenario.substeps();
    result.records.reserve(n_steps / scenario.trace_every + 2);

    let mut state = scenario.initial_state.clone();
    let mut estimates = scenario.initial_estimates.clone();
    let mut load = scenario.load;
    let mut v_star = scenario.v_star;
    let mut next_event = 0;
    let mut rng = SplitMix64(scenario.seed ^ 0x5dee_c0de);

    for k in 0..=n_steps {
        let t = k as f64 * scenario.dt_ctrl;

        // Events snap to this period boundary, before sampling.
        while next_event < scenario.events.len()
            && scenario.events[next_event].t <= t + 0.5 * scenario.dt_ctrl
        {
            let ev = &scenario.events[next_event];
            if let Some(l) = ev.load {
                load = l;
            }
            if let Some(vs) = ev.v_star {
                v_star = vs;
            }
            next_event += 1;
        }

        result.samples += 1;
        let edge_distance =
            (scenario.barrier.v_min() - state.v_o).max(state.v_o - scenario.barrier.v_max());
        if edge_distance >= 0.0 {
            result.violations += 1;
            result.worst_excursion = result.worst_excursion.max(edge_distance);
        }

        // Measurement, optionally noisy. The trace logs the measurement the
        // controller acted on.
        let (v_meas, i_meas) = match &scenario.noise {
            None => (state.v_o, state.i_t.clone()),
            Some(ns) => (
                state.v_o + ns.amplitude_v * rng.next_signed(),
                state
                    .i_t
                    .iter()
                    .map(|i| i + ns.amplitude_i * rng.next_signed())
                    .collect(),
            ),
        };

        let (output, next_estimates) = match controller::control_step(
            v_meas,
            &i_meas,
            &estimates,
            &scenario.gains,
            &barrier,
            v_star,
            scenario.dt_ctrl,
        ) {
            Ok(x) => x,
            Err(_) => {
                // The sample fell outside the barrier domain (or below the
                // regressor guard, which the singularity guard catches first
                // in practice).
                result.status = RunStatus::Failed(FailureKind::BarrierDomain { t, v_o: state.v_o });
                return result;
            }
        };
        if output.clamped {
            result.clamp_events += 1;
        }

        if k % scenario.trace_every == 0 || k == n_steps {
            result.records.push(TraceRecord {
                t,
                v_o: v_meas,
                i_t: i_meas.clone(),
                u: output.u.clone(),
                xi: output.xi,
                z1: output.z1,
                z2: output.z2,
                z2i: output.z2i.clone(),
                theta_hat: estimates.theta_hat,
                theta_c_hat: estimates.theta_c_hat,
                c_inv_hat: estimates.c_inv_hat,
                l_inv_hat: estimates.l_inv_hat.clone(),
                lambda_hat: estimates.lambda_hat.clone(),
                mu_hat: estimates.mu_hat.clone(),
                i_l_star_hat: output.i_l_star_hat,
                lyapunov: f64::NAN,
                clamp: output.clamped,
            });
        }
        if k == n_steps {
            break;
        }
        estimates = next_estimates;

        let mut u = output.u;
        if scenario.saturate_duty {
            for uj in &mut u {
                *uj = uj.clamp(0.0, 1.0);
            }
        }
        for s in 0..substeps {
            match plant::rk4_step(&scenario.dgus, load, &state, &u, scenario.dt_plant) {
                Ok(next) => state = next,
                Err(_) => {
                    let t_sub = t + (s + 1) as f64 * scenario.dt_plant;
                    result.status = RunStatus::Failed(FailureKind::PlantSingularity {
                        t: t_sub,
                        v_o: state.v_o,
                    });
                    return result;
                }
            }
        }
    }
    result
}
