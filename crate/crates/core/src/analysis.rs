//! Post-run verification: Lyapunov audit, regulation/sharing metrics, and
//! the algebraic steady-state oracle.
//!
//! The audit evaluates the closed-loop storage function
//!
//! ```text
//! W = C_t Z1²/2 + |Θ~|²/(2γ1) + Z2²/2 + Σ Z2i²/2 + |Θc~|²/(2γ2)
//!   + (C~)²/(2γ3) + Σ (L~)²/(2γ4i) + Σ (λ~)²/(2γ5i) + Σ (μ~)²/(2γ6i)
//! ```
//!
//! where every tilde is truth minus estimate. Truth is simulation-only
//! knowledge, so W is a diagnostic, never a controller input. Along exact
//! closed-loop trajectories W is non-increasing while the load is constant;
//! load steps change the tildes discontinuously and reset W upward, so a
//! short window after each event is exempt from the monotonicity check.

use crate::controller::Gains;
use crate::engine::{RunResult, RunStatus, Scenario};
use crate::plant::{self, DguParams, ZipLoad};
use crate::trace::TraceRecord;
use serde::Serialize;

/// Per-sample Lyapunov tolerance factor: `tol = 1e-6 * max(W(0), 1)`.
pub const W_TOL_FACTOR: f64 = 1e-6;

/// Records whose time falls within this many logged samples after an event
/// are exempt from the monotonicity check.
pub const EVENT_EXEMPT_SAMPLES: usize = 2;

/// Closed-loop storage function value for one record, given ground truth.
pub fn lyapunov(record: &TraceRecord, dgus: &[DguParams], load: ZipLoad, gains: &Gains) -> f64 {
    let c_t = plant::total_capacitance(dgus);
    let theta = [load.g_l, load.p_l, load.i_l];
    let mut w = 0.5 * c_t * record.z1 * record.z1 + 0.5 * record.z2 * record.z2;
    for z in &record.z2i {
        w += 0.5 * z * z;
    }
    for (k, th) in theta.iter().enumerate() {
        let t1 = th - record.theta_hat[k];
        let t2 = th / c_t - record.theta_c_hat[k];
        w += 0.5 / gains.gamma1 * t1 * t1 + 0.5 / gains.gamma2 * t2 * t2;
    }
    let tc = 1.0 / c_t - record.c_inv_hat;
    w += 0.5 / gains.gamma3 * tc * tc;
    for (j, d) in dgus.iter().enumerate() {
        let tl = d.l_inv() - record.l_inv_hat[j];
        let tlam = d.lambda() - record.lambda_hat[j];
        let tmu = d.mu() - record.mu_hat[j];
        w += 0.5 / gains.gamma4[j] * tl * tl
            + 0.5 / gains.gamma5[j] * tlam * tlam
            + 0.5 / gains.gamma6[j] * tmu * tmu;
    }
    w
}

/// One constant-(load, setpoint) interval of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub load: ZipLoad,
    pub v_star: f64,
}

/// Split the scenario timeline at its events.
pub fn segments(scenario: &Scenario) -> Vec<Segment> {
    let mut out = Vec::with_capacity(scenario.events.len() + 1);
    let mut load = scenario.load;
    let mut v_star = scenario.v_star;
    let mut start = 0.0;
    for ev in &scenario.events {
        out.push(Segment {
            start,
            end: ev.t,
            load,
            v_star,
        });
        if let Some(l) = ev.load {
            load = l;
        }
        if let Some(vs) = ev.v_star {
            v_star = vs;
        }
        start = ev.t;
    }
    out.push(Segment {
        start,
        end: scenario.t_end,
        load,
        v_star,
    });
    out
}

/// Fill the `lyapunov` field of every record using the load active at the
/// record's time.
pub fn annotate_lyapunov(records: &mut [TraceRecord], scenario: &Scenario) {
    let segs = segments(scenario);
    let eps = 0.5 * scenario.dt_ctrl;
    for r in records.iter_mut() {
        let seg = segs
            .iter()
            .find(|s| r.t < s.end - eps)
            .unwrap_or_else(|| segs.last().expect("at least one segment"));
        r.lyapunov = lyapunov(r, &scenario.dgus, seg.load, &scenario.gains);
    }
}

/// Steady-state and transient figures for one segment. Fields are `None`
/// when the trace does not cover the segment (aborted run) or the
/// steady-state window holds too few samples.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub start_s: f64,
    pub end_s: f64,
    pub v_star_v: f64,
    pub load: ZipLoad,
    /// Demand `G_l V* + I_l + P_l/V*` from the steady-state oracle (A).
    pub i_l_star_oracle_a: f64,
    /// Whether the trace covers the segment through its end.
    pub complete: bool,
    /// Time from segment start until `|V - V*| <= 0.01 V*` holds to the end.
    pub settling_time_s: Option<f64>,
    /// Max `|V - V*|` over the final 20% of the segment (V).
    pub tail_v_dev_v: Option<f64>,
    /// `|V - V*|` at the last sample of the segment (V).
    pub final_v_dev_v: Option<f64>,
    /// Mean `|I_ti - r_i I_L*| / I_L*` per converter over the tail window.
    pub sharing_err_rel: Option<Vec<f64>>,
    /// Mean `|I_L*_hat - I_L*| / I_L*` over the tail window.
    pub demand_err_rel: Option<f64>,
    /// Tail-mean bus voltage against the oracle setpoint, relative.
    pub oracle_v_err_rel: Option<f64>,
    /// Tail-mean branch currents against the oracle shares, relative.
    pub oracle_i_err_rel: Option<Vec<f64>>,
    /// Tail-mean duty commands against the oracle duties, relative.
    pub oracle_u_err_rel: Option<Vec<f64>>,
    pub w_peak: Option<f64>,
    pub w_end: Option<f64>,
    /// `(w_peak - w_end) / w_peak`.
    pub w_decrease_frac: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovAudit {
    pub w_initial: f64,
    /// Per-sample increase tolerance, `1e-6 * max(W(0), 1)`.
    pub tol: f64,
    /// Largest increase between consecutive retained samples outside the
    /// post-event exemption windows.
    pub max_delta_w: f64,
    /// Time at which `max_delta_w` occurred.
    pub max_delta_w_t: f64,
    /// Sample pairs exceeding `tol`, outside exemption windows.
    pub increasing_samples: usize,
    pub compared_samples: usize,
    pub fraction_increasing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub ok: bool,
    /// "ok", or the failure description.
    pub status: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_excursion_v: f64,
    pub clamp_events: usize,
    /// Time of the last retained sample (s).
    pub t_last_s: f64,
    pub final_v_o: Option<f64>,
    pub segments: Vec<SegmentSummary>,
    pub lyapunov: Option<LyapunovAudit>,
}

impl RunSummary {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("summary serialization cannot fail")
    }
}

fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(1e-12)
}

/// Compute the full post-run summary. Records must already be annotated via
/// [`annotate_lyapunov`].
pub fn metrics(records: &[TraceRecord], scenario: &Scenario, run: &RunResult) -> RunSummary {
    let segs = segments(scenario);
    let spacing = scenario.dt_ctrl * scenario.trace_every as f64;
    let eps = 1e-9 * scenario.t_end.max(1.0);

    let mut seg_summaries = Vec::with_capacity(segs.len());
    for seg in &segs {
        let oracle =
            plant::equilibrium(&scenario.dgus, seg.load, seg.v_star, &scenario.gains.ratios);
        let in_seg: Vec<&TraceRecord> = records
            .iter()
            .filter(|r| r.t >= seg.start - eps && r.t < seg.end - eps)
            .collect();
        let complete = in_seg
            .last()
            .map(|r| r.t >= seg.end - spacing - eps)
            .unwrap_or(false);

        let tail_start = seg.end - 0.2 * (seg.end - seg.start);
        let tail: Vec<&&TraceRecord> = in_seg.iter().filter(|r| r.t >= tail_start - eps).collect();
        let tail_ok = complete && tail.len() >= 3;

        let settling_time_s = if complete {
            let band = 0.01 * seg.v_star;
            // Last sample violating the band determines the settling instant.
            let mut last_bad: Option<f64> = None;
            for r in &in_seg {
                if (r.v_o - seg.v_star).abs() > band {
                    last_bad = Some(r.t);
                }
            }
            match last_bad {
                None => Some(0.0),
                Some(t) if t + spacing < seg.end - eps => Some(t + spacing - seg.start),
                Some(_) => None, // never settled
            }
        } else {
            None
        };

        let mean = |f: &dyn Fn(&TraceRecord) -> f64| -> f64 {
            tail.iter().map(|r| f(r)).sum::<f64>() / tail.len() as f64
        };
        let n = scenario.n();
        let (sharing, demand, ov, oi, ou) = if tail_ok && oracle.i_l_star > 0.0 {
            let sharing = (0..n)
                .map(|j| mean(&|r| (r.i_t[j] - oracle.i_t_star[j]).abs()) / oracle.i_l_star)
                .collect();
            let demand = mean(&|r| (r.i_l_star_hat - oracle.i_l_star).abs()) / oracle.i_l_star;
            let ov = rel_err(mean(&|r| r.v_o), seg.v_star);
            let oi = (0..n)
                .map(|j| rel_err(mean(&|r| r.i_t[j]), oracle.i_t_star[j]))
                .collect();
            let ou = (0..n)
                .map(|j| rel_err(mean(&|r| r.u[j]), oracle.u_star[j]))
                .collect();
            (Some(sharing), Some(demand), Some(ov), Some(oi), Some(ou))
        } else if tail_ok {
            // Zero-demand segment: share/demand errors are undefined, the
            // voltage oracle still applies.
            (
                None,
                None,
                Some(rel_err(mean(&|r| r.v_o), seg.v_star)),
                None,
                None,
            )
        } else {
            (None, None, None, None, None)
        };

        let (w_peak, w_end, w_decrease) = if complete && !in_seg.is_empty() {
            let peak = in_seg.iter().map(|r| r.lyapunov).fold(f64::MIN, f64::max);
            let end = in_seg.last().unwrap().lyapunov;
            let frac = if peak > 0.0 { (peak - end) / peak } else { 0.0 };
            (Some(peak), Some(end), Some(frac))
        } else {
            (None, None, None)
        };

        seg_summaries.push(SegmentSummary {
            start_s: seg.start,
            end_s: seg.end,
            v_star_v: seg.v_star,
            load: seg.load,
            i_l_star_oracle_a: oracle.i_l_star,
            complete,
            settling_time_s,
            tail_v_dev_v: if tail_ok {
                Some(
                    tail.iter()
                        .map(|r| (r.v_o - seg.v_star).abs())
                        .fold(0.0, f64::max),
                )
            } else {
                None
            },
            final_v_dev_v: if complete {
                in_seg.last().map(|r| (r.v_o - seg.v_star).abs())
            } else {
                None
            },
            sharing_err_rel: sharing,
            demand_err_rel: demand,
            oracle_v_err_rel: ov,
            oracle_i_err_rel: oi,
            oracle_u_err_rel: ou,
            w_peak,
            w_end,
            w_decrease_frac: w_decrease,
        });
    }

    let lyap = if records.len() >= 2 {
        let w0 = records[0].lyapunov;
        let tol = W_TOL_FACTOR * w0.max(1.0);
        let exempt = |t: f64| {
            scenario.events.iter().any(|ev| {
                t >= ev.t - eps && t <= ev.t + EVENT_EXEMPT_SAMPLES as f64 * spacing + eps
            })
        };
        let mut max_dw = f64::MIN;
        let mut max_dw_t = 0.0;
        let mut increasing = 0;
        let mut compared = 0;
        for pair in records.windows(2) {
            if exempt(pair[1].t) {
                continue;
            }
            compared += 1;
            let dw = pair[1].lyapunov - pair[0].lyapunov;
            if dw > tol {
                increasing += 1;
            }
            if dw > max_dw {
                max_dw = dw;
                max_dw_t = pair[1].t;
            }
        }
        Some(LyapunovAudit {
            w_initial: w0,
            tol,
            max_delta_w: max_dw,
            max_delta_w_t: max_dw_t,
            increasing_samples: increasing,
            compared_samples: compared,
            fraction_increasing: if compared > 0 {
                increasing as f64 / compared as f64
            } else {
                0.0
            },
        })
    } else {
        None
    };

    RunSummary {
        ok: run.status.is_ok() && run.violations == 0,
        status: match &run.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed(kind) => format!("failed: {kind}"),
        },
        samples: run.samples,
        violations: run.violations,
        worst_excursion_v: run.worst_excursion,
        clamp_events: run.clamp_events,
        t_last_s: records.last().map(|r| r.t).unwrap_or(0.0),
        final_v_o: records.last().map(|r| r.v_o),
        segments: seg_summaries,
        lyapunov: lyap,
    }
}

/// Compare the numerically differenced `dW/dt` against the predicted
/// dissipation `-κ1 Z1² - κ2 Z2² - Σ κ2i Z2i²` wherever the prediction
/// dominates discretization noise. Returns `(worst relative mismatch,
/// compared pairs)`.
pub fn wdot_shape_check(
    records: &[TraceRecord],
    scenario: &Scenario,
    dominance: f64,
) -> (f64, usize) {
    let spacing = scenario.dt_ctrl * scenario.trace_every as f64;
    let eps = 1e-12;
    let exempt = |t: f64| {
        scenario
            .events
            .iter()
            .any(|ev| t >= ev.t - eps && t <= ev.t + EVENT_EXEMPT_SAMPLES as f64 * spacing + eps)
    };
    let predicted = |r: &TraceRecord| {
        let g = &scenario.gains;
        -g.kappa1 * r.z1 * r.z1
            - g.kappa2 * r.z2 * r.z2
            - r.z2i
                .iter()
                .zip(&g.kappa2i)
                .map(|(z, k)| k * z * z)
                .sum::<f64>()
    };
    let mut worst = 0.0_f64;
    let mut compared = 0;
    // Centered difference: the secant over one interval is biased where the
    // dissipation itself oscillates within a sample.
    for triple in records.windows(3) {
        if triple.iter().any(|r| exempt(r.t)) {
            continue;
        }
        let pred = predicted(&triple[1]);
        if pred.abs() < dominance {
            continue;
        }
        let measured = (triple[2].lyapunov - triple[0].lyapunov) / (triple[2].t - triple[0].t);
        compared += 1;
        worst = worst.max((measured - pred).abs() / pred.abs());
    }
    (worst, compared)
}
