//! Two-step adaptive backstepping control law with on-line parameter
//! estimation.
//!
//! The controller sees only the bus voltage and the branch currents. Step
//! one stabilizes the barrier-transformed voltage error `Z1` by assigning the
//! total current a virtual reference `xi`; step two drives the total-current
//! error `Z2` and the per-branch sharing errors `Z2i` to zero through the
//! duty commands. Seven families of adaptation laws estimate the load triple
//! (twice: raw and divided by the bus capacitance), the inverse capacitance,
//! and the per-branch `1/L`, `R/L`, `E/L` ratios, each shaped so that its
//! estimation-error term cancels in the Lyapunov derivative.
//!
//! All estimate dynamics are advanced by one forward-Euler step per control
//! period, with every derivative evaluated on the pre-update state.

use crate::barrier::{Barrier, BarrierError};
use crate::plant::EPS_V;
use thiserror::Error;

/// Lower clamp for the input-gain estimates `mu_hat` (A/s per unit duty).
/// The duty laws divide by `mu_hat`; an unguarded zero crossing would be a
/// division singularity. Clamp activations are reported per step so runs
/// that depend on the clamp are visibly flagged.
pub const MU_FLOOR: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("measured voltage {v} V below the {EPS_V} V regressor guard")]
    LowVoltage { v: f64 },
}

/// Controller gains and sharing ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Per-branch sharing-error gains, one for each of the first n-1 branches.
    pub kappa2i: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: Vec<f64>,
    pub gamma5: Vec<f64>,
    pub gamma6: Vec<f64>,
    /// Sharing ratios, summing to one.
    pub ratios: Vec<f64>,
}

impl Gains {
    /// Check positivity and shape against the number of converters.
    pub fn validate(&self, n: usize) -> Result<(), String> {
        let scalars = [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
        ];
        for (name, v) in scalars {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let vectors = [
            ("kappa2i", &self.kappa2i, n - 1),
            ("gamma4", &self.gamma4, n),
            ("gamma5", &self.gamma5, n),
            ("gamma6", &self.gamma6, n),
        ];
        for (name, vec, want) in vectors {
            if vec.len() != want {
                return Err(format!(
                    "{name} must have {want} entries, got {}",
                    vec.len()
                ));
            }
            for (k, &v) in vec.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(format!("{name}[{k}] must be positive, got {v}"));
                }
            }
        }
        if self.ratios.len() != n {
            return Err(format!(
                "ratios must have {n} entries, got {}",
                self.ratios.len()
            ));
        }
        for (k, &r) in self.ratios.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(format!("ratios[{k}] must lie in (0, 1), got {r}"));
            }
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("ratios must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

/// All on-line estimates. `theta_hat` is the load triple `[G_l, P_l, I_l]`;
/// `theta_c_hat` estimates the same triple divided by the bus capacitance.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub theta_hat: [f64; 3],
    pub theta_c_hat: [f64; 3],
    pub c_inv_hat: f64,
    pub l_inv_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
}

/// Error signals of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSignals {
    /// Barrier-coordinate voltage error.
    pub z1: f64,
    /// Total-current error against the virtual reference.
    pub z2: f64,
    /// Sharing errors for the first n-1 branches.
    pub z2i: Vec<f64>,
    /// Virtual total-current reference (A).
    pub xi: f64,
}

/// Duty commands plus per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: Vec<f64>,
    pub z1: f64,
    pub z2: f64,
    pub z2i: Vec<f64>,
    pub xi: f64,
    pub phi: f64,
    pub theta_dot: [f64; 3],
    /// Estimated steady-state current demand at the setpoint (A).
    pub i_l_star_hat: f64,
    /// True when the `mu_hat` floor clamp activated during the update.
    pub clamped: bool,
}

/// Load regressor `[V, 1/V, 1]`; paired with the triple `[G_l, P_l, I_l]`
/// it expresses the demand linearly in the unknowns.
pub fn regressor(v: f64) -> Result<[f64; 3], ControlError> {
    if !(v >= EPS_V) {
        return Err(ControlError::LowVoltage { v });
    }
    Ok([v, 1.0 / v, 1.0])
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Error signals and the virtual input for a given measurement.
pub fn errors(
    v: f64,
    i_t: &[f64],
    state: &ControllerState,
    gains: &Gains,
    barrier: &dyn Barrier,
    v_star: f64,
) -> Result<ErrorSignals, ControlError> {
    let z1 = barrier.inverse(v)? - barrier.inverse(v_star)?;
    let (d1, _) = barrier.inverse_derivatives(v)?;
    let psi_v = regressor(v)?;
    let psi_star = regressor(v_star)?;
    let xi = -gains.kappa1 / d1 * z1 + dot3(&psi_v, &state.theta_hat);
    let z2 = i_t.iter().sum::<f64>() - xi;
    let i_l_star_hat = dot3(&psi_star, &state.theta_hat);
    let z2i = i_t[..i_t.len() - 1]
        .iter()
        .zip(&gains.ratios)
        .map(|(&i, r)| i - r * i_l_star_hat)
        .collect();
    Ok(ErrorSignals { z1, z2, z2i, xi })
}

/// Adaptation derivative of the load-triple estimate. Returned rather than
/// integrated because the duty laws consume it algebraically.
pub fn theta_dot(
    v: f64,
    z1: f64,
    barrier: &dyn Barrier,
    gamma1: f64,
) -> Result<[f64; 3], ControlError> {
    let (d1, _) = barrier.inverse_derivatives(v)?;
    let psi = regressor(v)?;
    Ok([
        -gamma1 * d1 * psi[0] * z1,
        -gamma1 * d1 * psi[1] * z1,
        -gamma1 * d1 * psi[2] * z1,
    ])
}

/// Feedforward coefficient multiplying the voltage derivative inside the
/// virtual-input rate: the barrier curvature term plus the voltage-dependent
/// part of the estimated demand slope.
pub fn phi(
    v: f64,
    z1: f64,
    state: &ControllerState,
    gains: &Gains,
    barrier: &dyn Barrier,
) -> Result<f64, ControlError> {
    let (d1, d2) = barrier.inverse_derivatives(v)?;
    Ok(
        gains.kappa1 / (d1 * d1) * d2 * z1 - gains.kappa1 + state.theta_hat[0]
            - state.theta_hat[1] / (v * v),
    )
}

/// One full control step: error signals, duty commands for every branch, and
/// the forward-Euler advance of all estimates over `dt`.
///
/// The returned state has the `mu_hat` floor already applied; `clamped` in
/// the output reports whether it was needed.
pub fn control_step(
    v: f64,
    i_t: &[f64],
    state: &ControllerState,
    gains: &Gains,
    barrier: &dyn Barrier,
    v_star: f64,
    dt: f64,
) -> Result<(StepOutput, ControllerState), ControlError> {
    let n = i_t.len();
    let (d1, _) = barrier.inverse_derivatives(v)?;
    let psi_v = regressor(v)?;
    let psi_star = regressor(v_star)?;
    let sig = errors(v, i_t, state, gains, barrier, v_star)?;
    let i_t_sum: f64 = i_t.iter().sum();

    let th_dot = theta_dot(v, sig.z1, barrier, gains.gamma1)?;
    let phi_v = phi(v, sig.z1, state, gains, barrier)?;
    let psi_th_dot = dot3(&psi_v, &th_dot);
    let psi_star_th_dot = dot3(&psi_star, &th_dot);

    // Aggregate duty demand; the branch commands below are constructed so
    // that sum(mu_hat_i * u_i) reproduces it exactly.
    let mut u_agg = -d1 * sig.z1 - gains.kappa2 * sig.z2 + phi_v * i_t_sum * state.c_inv_hat
        - phi_v * dot3(&psi_v, &state.theta_c_hat)
        + psi_th_dot;
    for (j, &i_tj) in i_t.iter().enumerate() {
        u_agg += state.l_inv_hat[j] * v + state.lambda_hat[j] * i_tj;
    }

    let mut u = vec![0.0; n];
    let mut weighted = 0.0;
    for j in 0..n - 1 {
        u[j] = (-gains.kappa2i[j] * sig.z2i[j]
            + state.l_inv_hat[j] * v
            + state.lambda_hat[j] * i_t[j]
            + gains.ratios[j] * psi_star_th_dot)
            / state.mu_hat[j];
        weighted += state.mu_hat[j] * u[j];
    }
    u[n - 1] = (u_agg - weighted) / state.mu_hat[n - 1];

    // Adaptation derivatives, all on pre-update estimates.
    let mut next = state.clone();
    for k in 0..3 {
        next.theta_hat[k] += dt * th_dot[k];
        next.theta_c_hat[k] += dt * gains.gamma2 * psi_v[k] * phi_v * sig.z2;
    }
    next.c_inv_hat += dt * (-gains.gamma3 * phi_v * i_t_sum * sig.z2);
    let mut clamped = false;
    for (j, &i_tj) in i_t.iter().enumerate() {
        let s = sig.z2 + if j < n - 1 { sig.z2i[j] } else { 0.0 };
        next.l_inv_hat[j] += dt * (-gains.gamma4[j] * v * s);
        next.lambda_hat[j] += dt * (-gains.gamma5[j] * i_tj * s);
        next.mu_hat[j] += dt * (gains.gamma6[j] * u[j] * s);
        if next.mu_hat[j] < MU_FLOOR {
            next.mu_hat[j] = MU_FLOOR;
            clamped = true;
        }
    }

    let i_l_star_hat = dot3(&psi_star, &state.theta_hat);
    Ok((
        StepOutput {
            u,
            z1: sig.z1,
            z2: sig.z2,
            z2i: sig.z2i,
            xi: sig.xi,
            phi: phi_v,
            theta_dot: th_dot,
            i_l_star_hat,
            clamped,
        },
        next,
    ))
}
