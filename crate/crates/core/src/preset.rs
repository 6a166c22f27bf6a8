//! Bundled scenario presets.
//!
//! `paper-fig3` is the four-converter worst-case load-step study: a full ZIP
//! load, disconnection of the impedance and current components at 0.2 s, a
//! doubling of the remaining constant-power load at 0.4 s, and a step back
//! at 0.6 s. Electrical parameters, gains, sharing ratios, band, and the
//! event schedule are the reference values this study is defined by.
//!
//! Two companions ship with it:
//!
//! - `paper-fig3-20khz` is the same experiment with the controller emulated
//!   at its nominal 20 kHz sample rate. The explicit sampled emulation of
//!   this control law is unstable at that rate (see the README findings), so
//!   the run terminates early with a band-edge diagnostic; it is bundled as
//!   the reproducible demonstration of that effect.
//! - `disconnect-study` keeps every constant-power interval inside the
//!   stability margin of the control design, giving a load-step scenario
//!   that completes cleanly end to end.

use crate::config::{self, ConfigError};
use crate::engine::Scenario;

const PAPER_FIG3: &str = r#"
title = "Four-converter worst-case ZIP load-step study"
t_end = 0.8
dt_plant = 1e-6
dt_ctrl = 2e-6
trace_every = 25
v_set = 12.0
switching_hz = 50000.0

[barrier]
v_min = 11.8
v_max = 12.2

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.3e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.2e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.6e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.4e-3
c_t = 10e-3

[load]
g_l = 1.0
i_l = 5.0
p_l = 120.0

[[events]]
t = 0.2
load = { g_l = 1e-6, i_l = 0.0, p_l = 120.0 }

[[events]]
t = 0.4
load = { g_l = 1e-6, i_l = 0.0, p_l = 240.0 }

[[events]]
t = 0.6
load = { g_l = 1e-6, i_l = 0.0, p_l = 120.0 }

[gains]
kappa1 = 1.0
kappa2 = 10.0
kappa2i = 15.0
gamma1 = 100.0
gamma2 = 100.0
gamma3 = 100.0
gamma4 = 100.0
gamma5 = 100.0
gamma6 = 200.0
ratios = [0.4, 0.3, 0.2, 0.1]

[initial]
v_o = 12.0
i_t = "equilibrium"

[controller.init]
rel_err = 0.02
theta_frac = 0.9
"#;

const DISCONNECT_STUDY: &str = r#"
title = "ZIP disconnect and moderate constant-power steps"
t_end = 0.8
dt_plant = 1e-6
dt_ctrl = 2e-6
trace_every = 25
v_set = 12.0
switching_hz = 50000.0

[barrier]
v_min = 11.8
v_max = 12.2

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.3e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.2e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.6e-3
c_t = 10e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.4e-3
c_t = 10e-3

[load]
g_l = 1.0
i_l = 5.0
p_l = 120.0

[[events]]
t = 0.2
load = { g_l = 1e-6, i_l = 0.0, p_l = 120.0 }

[[events]]
t = 0.4
load = { g_l = 1e-6, i_l = 0.0, p_l = 60.0 }

[[events]]
t = 0.6
load = { g_l = 1e-6, i_l = 0.0, p_l = 120.0 }

[gains]
kappa1 = 1.0
kappa2 = 10.0
kappa2i = 15.0
gamma1 = 100.0
gamma2 = 100.0
gamma3 = 100.0
gamma4 = 100.0
gamma5 = 100.0
gamma6 = 200.0
ratios = [0.4, 0.3, 0.2, 0.1]

[initial]
v_o = 12.0
i_t = "equilibrium"

[controller.init]
rel_err = 0.02
theta_frac = 0.9
"#;

/// Names of every bundled preset, in listing order.
pub fn names() -> &'static [&'static str] {
    &["paper-fig3", "paper-fig3-20khz", "disconnect-study"]
}

/// Raw TOML text of a preset.
pub fn toml_text(name: &str) -> Option<String> {
    match name {
        "paper-fig3" => Some(PAPER_FIG3.trim_start().to_string()),
        // Identical physics at the nominal controller sample rate.
        "paper-fig3-20khz" => Some(
            PAPER_FIG3
                .trim_start()
                .replace("dt_plant = 1e-6", "dt_plant = 1e-5")
                .replace("dt_ctrl = 2e-6", "dt_ctrl = 5e-5")
                .replace("trace_every = 25", "trace_every = 1"),
        ),
        "disconnect-study" => Some(DISCONNECT_STUDY.trim_start().to_string()),
        _ => None,
    }
}

/// One-line description for listings.
pub fn describe(name: &str) -> Option<&'static str> {
    match name {
        "paper-fig3" => {
            Some("worst-case ZIP disconnect + 240 W constant-power steps (four converters)")
        }
        "paper-fig3-20khz" => Some(
            "same study emulated at the nominal 20 kHz sample rate (terminates early; see README)",
        ),
        "disconnect-study" => Some("ZIP disconnect + 60 W constant-power steps; completes cleanly"),
        _ => None,
    }
}

/// Parse and resolve a bundled preset.
pub fn scenario(name: &str) -> Option<Result<Scenario, ConfigError>> {
    toml_text(name).map(|text| config::parse_scenario(&text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in names() {
            let s = scenario(name).expect("listed preset exists");
            assert!(s.is_ok(), "{name}: {:?}", s.err());
        }
    }

    #[test]
    fn unknown_preset_is_none() {
        assert!(scenario("nope").is_none());
        assert!(toml_text("nope").is_none());
    }

    /// The study preset pins its reference test-system values exactly.
    #[test]
    fn paper_fig3_fidelity() {
        let s = scenario("paper-fig3").unwrap().unwrap();
        assert_eq!(s.n(), 4);
        for d in &s.dgus {
            assert_eq!(d.e, 24.0);
            assert_eq!(d.r_t, 0.1);
        }
        let l: Vec<f64> = s.dgus.iter().map(|d| d.l_t).collect();
        assert_eq!(l, vec![1.3e-3, 1.2e-3, 1.6e-3, 1.4e-3]);
        let c_t: f64 = s.dgus.iter().map(|d| d.c_t).sum();
        assert!((c_t - 40e-3).abs() < 1e-15);
        // ZIP load: 1 ohm impedance branch, 5 A, 120 W.
        assert_eq!(s.load.g_l, 1.0);
        assert_eq!(s.load.i_l, 5.0);
        assert_eq!(s.load.p_l, 120.0);
        assert_eq!(s.v_star, 12.0);
        assert_eq!(s.barrier.v_min(), 11.8);
        assert_eq!(s.barrier.v_max(), 12.2);
        assert_eq!(s.gains.ratios, vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(s.gains.kappa1, 1.0);
        assert_eq!(s.gains.kappa2, 10.0);
        assert_eq!(s.gains.kappa2i, vec![15.0; 3]);
        assert_eq!(s.gains.gamma1, 100.0);
        assert_eq!(s.gains.gamma2, 100.0);
        assert_eq!(s.gains.gamma3, 100.0);
        assert_eq!(s.gains.gamma4, vec![100.0; 4]);
        assert_eq!(s.gains.gamma5, vec![100.0; 4]);
        assert_eq!(s.gains.gamma6, vec![200.0; 4]);
        // Event schedule.
        assert_eq!(s.t_end, 0.8);
        let times: Vec<f64> = s.events.iter().map(|e| e.t).collect();
        assert_eq!(times, vec![0.2, 0.4, 0.6]);
        let loads: Vec<_> = s.events.iter().map(|e| e.load.unwrap()).collect();
        assert_eq!(loads[0].p_l, 120.0);
        assert_eq!(loads[1].p_l, 240.0);
        assert_eq!(loads[2].p_l, 120.0);
        for load in &loads {
            assert_eq!(load.g_l, 1e-6); // impedance branch opened
            assert_eq!(load.i_l, 0.0);
        }
        // Retained trace cadence matches the nominal 20 kHz sampling.
        assert!((s.dt_ctrl * s.trace_every as f64 - 5e-5).abs() < 1e-18);
        // Equilibrium initial currents.
        let want = [10.8, 8.1, 5.4, 2.7];
        for (got, want) in s.initial_state.i_t.iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn twenty_khz_variant_differs_only_in_rates() {
        let a = scenario("paper-fig3").unwrap().unwrap();
        let b = scenario("paper-fig3-20khz").unwrap().unwrap();
        assert_eq!(b.dt_ctrl, 5e-5);
        assert_eq!(b.dt_plant, 1e-5);
        assert_eq!(b.trace_every, 1);
        assert_eq!(a.dgus, b.dgus);
        assert_eq!(a.gains, b.gains);
        assert_eq!(a.events, b.events);
        assert_eq!(a.initial_estimates, b.initial_estimates);
    }
}
