//! Scenario configuration: TOML schema, defaulting rules, validation, and
//! sweep patches.
//!
//! A scenario file is plain TOML with SI units throughout. Vector-valued
//! gains accept either a scalar (broadcast over the converters) or an
//! explicit array. Initial estimates default to values derived from the
//! plant parameters so that a bare config runs out of the box; any of them
//! can be overridden under `[controller.init]`.

use crate::barrier::BarrierSpec;
use crate::controller::{ControllerState, Gains};
use crate::engine::{Event, NoiseSpec, Scenario};
use crate::plant::{self, DguParams, ZipLoad};
use serde::Deserialize;
use std::fmt;

/// A configuration problem, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &str, message: String) -> Self {
        Self {
            path: path.to_string(),
            message,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Scalar-or-array field: scalars broadcast to the required length.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumOrVec {
    Num(f64),
    Vec(Vec<f64>),
}

impl NumOrVec {
    fn resolve(&self, len: usize, path: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            NumOrVec::Num(x) => Ok(vec![*x; len]),
            NumOrVec::Vec(v) => {
                if v.len() == len {
                    Ok(v.clone())
                } else {
                    Err(ConfigError::new(
                        path,
                        format!("expected {len} entries or a scalar, got {}", v.len()),
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBarrier {
    v_min: f64,
    v_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDgu {
    e: f64,
    r_t: f64,
    l_t: f64,
    c_t: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    g_l: f64,
    i_l: f64,
    p_l: f64,
}

impl From<RawLoad> for ZipLoad {
    fn from(r: RawLoad) -> Self {
        ZipLoad {
            g_l: r.g_l,
            i_l: r.i_l,
            p_l: r.p_l,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    t: f64,
    load: Option<RawLoad>,
    v_set: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    kappa1: f64,
    kappa2: f64,
    kappa2i: NumOrVec,
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
    gamma4: NumOrVec,
    gamma5: NumOrVec,
    gamma6: NumOrVec,
    ratios: Vec<f64>,
}

/// Initial currents: the share-balanced equilibrium for the initial load, a
/// uniform value, or an explicit vector.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawInitialCurrents {
    Mode(String),
    Num(f64),
    Vec(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    v_o: Option<f64>,
    i_t: Option<RawInitialCurrents>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawControllerInit {
    /// Relative error applied to the derived nominal `l_inv`, `lambda`, `mu`.
    rel_err: Option<f64>,
    /// Fraction of the nominal load triple used for `theta(0)`.
    theta_frac: Option<f64>,
    theta: Option<[f64; 3]>,
    theta_c: Option<[f64; 3]>,
    c_inv: Option<f64>,
    l_inv: Option<NumOrVec>,
    lambda: Option<NumOrVec>,
    mu: Option<NumOrVec>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawController {
    init: Option<RawControllerInit>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    amplitude_v: f64,
    amplitude_i: f64,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    saturate_duty: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[allow(dead_code)]
    title: Option<String>,
    t_end: f64,
    dt_plant: f64,
    dt_ctrl: f64,
    seed: Option<u64>,
    trace_every: Option<usize>,
    v_set: f64,
    /// Converter switching frequency (Hz). Recorded for provenance; the
    /// averaged model has no switching waveform, so it is unused.
    #[allow(dead_code)]
    switching_hz: Option<f64>,
    barrier: RawBarrier,
    dgu: Vec<RawDgu>,
    load: RawLoad,
    #[serde(default)]
    events: Vec<RawEvent>,
    gains: RawGains,
    initial: Option<RawInitial>,
    controller: Option<RawController>,
    noise: Option<RawNoise>,
    limits: Option<RawLimits>,
}

/// Default relative error applied to the derived `l_inv` / `lambda` / `mu`
/// estimates when the config does not override them.
pub const DEFAULT_REL_ERR: f64 = 0.02;

/// Default fraction of the nominal load triple used for `theta(0)`, leaving
/// the demand estimate visibly wrong at start so the adaptation is exercised.
pub const DEFAULT_THETA_FRAC: f64 = 0.9;

/// Parse and fully resolve a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ConfigError::new("(parse)", e.to_string()))?;
    resolve(raw)
}

/// Resolve a scenario from an already-parsed TOML value (used by sweeps).
pub fn scenario_from_value(value: toml::Value) -> Result<Scenario, ConfigError> {
    let raw: RawScenario = value
        .try_into()
        .map_err(|e| ConfigError::new("(parse)", e.to_string()))?;
    resolve(raw)
}

fn resolve(raw: RawScenario) -> Result<Scenario, ConfigError> {
    let n = raw.dgu.len();
    if n == 0 {
        return Err(ConfigError::new(
            "dgu",
            "at least one converter is required".into(),
        ));
    }
    let barrier = BarrierSpec::new(raw.barrier.v_min, raw.barrier.v_max)
        .map_err(|e| ConfigError::new("barrier.v_min", e.to_string()))?;
    let dgus: Vec<DguParams> = raw
        .dgu
        .iter()
        .map(|d| DguParams {
            e: d.e,
            r_t: d.r_t,
            l_t: d.l_t,
            c_t: d.c_t,
        })
        .collect();
    for (k, d) in dgus.iter().enumerate() {
        if !(d.l_t > 0.0) {
            return Err(ConfigError::new(
                &format!("dgu[{k}].l_t"),
                format!("inductance must be > 0, got {}", d.l_t),
            ));
        }
        if !(d.e > 0.0) {
            return Err(ConfigError::new(
                &format!("dgu[{k}].e"),
                format!("input voltage must be > 0, got {}", d.e),
            ));
        }
    }
    let load: ZipLoad = raw.load.into();

    let gains = Gains {
        kappa1: raw.gains.kappa1,
        kappa2: raw.gains.kappa2,
        kappa2i: raw
            .gains
            .kappa2i
            .resolve(n.saturating_sub(1), "gains.kappa2i")?,
        gamma1: raw.gains.gamma1,
        gamma2: raw.gains.gamma2,
        gamma3: raw.gains.gamma3,
        gamma4: raw.gains.gamma4.resolve(n, "gains.gamma4")?,
        gamma5: raw.gains.gamma5.resolve(n, "gains.gamma5")?,
        gamma6: raw.gains.gamma6.resolve(n, "gains.gamma6")?,
        ratios: raw.gains.ratios.clone(),
    };

    let v_o0 = raw
        .initial
        .as_ref()
        .and_then(|i| i.v_o)
        .unwrap_or(raw.v_set);
    let i_t0 = match raw.initial.as_ref().and_then(|i| i.i_t.as_ref()) {
        None => equilibrium_currents(&dgus, load, raw.v_set, &gains.ratios),
        Some(RawInitialCurrents::Mode(m)) if m == "equilibrium" => {
            equilibrium_currents(&dgus, load, raw.v_set, &gains.ratios)
        }
        Some(RawInitialCurrents::Mode(m)) => {
            return Err(ConfigError::new(
                "initial.i_t",
                format!("unknown mode {m:?}; use \"equilibrium\", a number, or an array"),
            ));
        }
        Some(RawInitialCurrents::Num(x)) => vec![*x; n],
        Some(RawInitialCurrents::Vec(v)) => {
            if v.len() != n {
                return Err(ConfigError::new(
                    "initial.i_t",
                    format!("expected {n} currents, got {}", v.len()),
                ));
            }
            v.clone()
        }
    };

    let init = raw.controller.unwrap_or_default().init.unwrap_or_default();
    let initial_estimates = resolve_estimates(&init, &dgus, load)?;

    let events = raw
        .events
        .iter()
        .map(|e| Event {
            t: e.t,
            load: e.load.map(Into::into),
            v_star: e.v_set,
        })
        .collect();

    let scenario = Scenario {
        dgus,
        load,
        events,
        v_star: raw.v_set,
        barrier,
        gains,
        initial_state: plant::PlantState::new(v_o0, i_t0),
        initial_estimates,
        t_end: raw.t_end,
        dt_plant: raw.dt_plant,
        dt_ctrl: raw.dt_ctrl,
        seed: raw
            .noise
            .as_ref()
            .and_then(|ns| ns.seed)
            .or(raw.seed)
            .unwrap_or(0),
        trace_every: raw.trace_every.unwrap_or(1),
        noise: raw.noise.as_ref().and_then(|ns| {
            if ns.amplitude_v == 0.0 && ns.amplitude_i == 0.0 {
                None
            } else {
                Some(NoiseSpec {
                    amplitude_v: ns.amplitude_v,
                    amplitude_i: ns.amplitude_i,
                })
            }
        }),
        saturate_duty: raw.limits.and_then(|l| l.saturate_duty).unwrap_or(false),
    };
    scenario.validate()?;
    Ok(scenario)
}

fn equilibrium_currents(dgus: &[DguParams], load: ZipLoad, v_set: f64, ratios: &[f64]) -> Vec<f64> {
    if ratios.len() != dgus.len() || v_set <= 0.0 {
        // Let Scenario::validate produce the real diagnostic.
        return vec![0.0; dgus.len()];
    }
    plant::equilibrium(dgus, load, v_set, ratios).i_t_star
}

fn resolve_estimates(
    init: &RawControllerInit,
    dgus: &[DguParams],
    load: ZipLoad,
) -> Result<ControllerState, ConfigError> {
    let n = dgus.len();
    let c_t = plant::total_capacitance(dgus);
    let rel = 1.0 + init.rel_err.unwrap_or(DEFAULT_REL_ERR);
    let frac = init.theta_frac.unwrap_or(DEFAULT_THETA_FRAC);
    let nominal = [load.g_l, load.p_l, load.i_l];
    let theta_hat = init
        .theta
        .unwrap_or([frac * nominal[0], frac * nominal[1], frac * nominal[2]]);
    let theta_c_hat =
        init.theta_c
            .unwrap_or([nominal[0] / c_t, nominal[1] / c_t, nominal[2] / c_t]);
    let c_inv_hat = init.c_inv.unwrap_or(1.0 / c_t);
    let l_inv_hat = match &init.l_inv {
        Some(v) => v.resolve(n, "controller.init.l_inv")?,
        None => dgus.iter().map(|d| rel * d.l_inv()).collect(),
    };
    let lambda_hat = match &init.lambda {
        Some(v) => v.resolve(n, "controller.init.lambda")?,
        None => dgus.iter().map(|d| rel * d.lambda()).collect(),
    };
    let mu_hat = match &init.mu {
        Some(v) => v.resolve(n, "controller.init.mu")?,
        None => dgus.iter().map(|d| rel * d.mu()).collect(),
    };
    Ok(ControllerState {
        theta_hat,
        theta_c_hat,
        c_inv_hat,
        l_inv_hat,
        lambda_hat,
        mu_hat,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One named patch: dotted-path assignments applied to the base scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    pub name: String,
    pub set: toml::value::Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    base: Option<toml::Value>,
    base_path: Option<String>,
    #[serde(default)]
    patch: Vec<Patch>,
}

/// A parsed sweep: the base scenario as raw TOML plus the patch list.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: toml::Value,
    pub patches: Vec<Patch>,
}

impl SweepConfig {
    /// Build the per-patch scenarios. Each result is independent; a bad
    /// patch yields an error entry rather than failing the whole sweep.
    pub fn jobs(&self) -> Vec<(String, Result<Scenario, ConfigError>)> {
        self.patches
            .iter()
            .map(|p| {
                let mut value = self.base.clone();
                let scenario =
                    apply_patch(&mut value, &p.set).and_then(|_| scenario_from_value(value));
                (p.name.clone(), scenario)
            })
            .collect()
    }
}

/// Parse a sweep config. `base_dir` anchors a relative `base_path`.
pub fn parse_sweep(
    text: &str,
    base_dir: Option<&std::path::Path>,
) -> Result<SweepConfig, ConfigError> {
    let raw: RawSweep =
        toml::from_str(text).map_err(|e| ConfigError::new("(parse)", e.to_string()))?;
    let base = match (raw.base, raw.base_path) {
        (Some(v), None) => v,
        (None, Some(path)) => {
            let full = match base_dir {
                Some(dir) => dir.join(&path),
                None => std::path::PathBuf::from(&path),
            };
            let text = std::fs::read_to_string(&full).map_err(|e| {
                ConfigError::new("base_path", format!("cannot read {}: {e}", full.display()))
            })?;
            toml::from_str(&text).map_err(|e| ConfigError::new("base_path", e.to_string()))?
        }
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                "base",
                "give either base or base_path, not both".into(),
            ))
        }
        (None, None) => {
            return Err(ConfigError::new(
                "base",
                "a sweep needs base (inline) or base_path".into(),
            ))
        }
    };
    Ok(SweepConfig {
        base,
        patches: raw.patch,
    })
}

/// Apply dotted-path assignments (`"load.p_l" = 240.0`, `"dgu.2.l_t" = 1e-3`)
/// onto a TOML value. Intermediate tables are created as needed; indexing a
/// non-array or out-of-range element is an error.
pub fn apply_patch(value: &mut toml::Value, set: &toml::value::Table) -> Result<(), ConfigError> {
    for (path, new_value) in set {
        set_path(value, path, new_value.clone())?;
    }
    Ok(())
}

fn set_path(root: &mut toml::Value, path: &str, new_value: toml::Value) -> Result<(), ConfigError> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = root;
    for (pos, seg) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        cursor = if let Ok(index) = seg.parse::<usize>() {
            match cursor {
                toml::Value::Array(arr) => {
                    if index >= arr.len() {
                        return Err(ConfigError::new(
                            path,
                            format!("index {index} out of range (len {})", arr.len()),
                        ));
                    }
                    if last {
                        arr[index] = new_value;
                        return Ok(());
                    }
                    &mut arr[index]
                }
                _ => {
                    return Err(ConfigError::new(
                        path,
                        format!("segment {seg:?} indexes a non-array"),
                    ))
                }
            }
        } else {
            match cursor {
                toml::Value::Table(table) => {
                    if last {
                        table.insert(seg.to_string(), new_value);
                        return Ok(());
                    }
                    table
                        .entry(seg.to_string())
                        .or_insert_with(|| toml::Value::Table(Default::default()))
                }
                _ => {
                    return Err(ConfigError::new(
                        path,
                        format!("segment {seg:?} indexes a non-table"),
                    ))
                }
            }
        };
    }
    Ok(())
}
