//! End-to-end tests of the `dcgrid` binary: exit codes, file outputs, and
//! the overwrite guard.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcgrid"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "dcgrid-cli-test-{}-{}-{}",
        std::process::id(),
        tag,
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process not killed by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A two-converter scenario small enough for tight test loops.
const TINY: &str = r#"
t_end = 0.01
dt_plant = 1e-5
dt_ctrl = 5e-5
v_set = 12.0

[barrier]
v_min = 11.8
v_max = 12.2

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.3e-3
c_t = 20e-3

[[dgu]]
e = 24.0
r_t = 0.1
l_t = 1.2e-3
c_t = 20e-3

[load]
g_l = 1.0
i_l = 5.0
p_l = 120.0

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
ratios = [0.6, 0.4]

[controller.init]
rel_err = 0.0
theta_frac = 1.0
"#;

#[test]
fn preset_list_names_the_bundled_scenarios() {
    let out = bin().arg("preset-list").output().unwrap();
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    for name in ["paper-fig3", "paper-fig3-20khz", "disconnect-study"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn validate_accepts_what_run_accepts() {
    let dir = scratch_dir("validate");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, TINY).unwrap();

    let v = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(exit_code(&v), 0, "{}", stderr(&v));

    let r = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&r), 0, "{}", stderr(&r));
}

#[test]
fn validate_rejects_inverted_band_with_field_path() {
    let dir = scratch_dir("badband");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, TINY.replace("v_min = 11.8", "v_min = 12.4")).unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("barrier.v_min"), "{}", stderr(&out));
    // The same config must fail `run` the same way.
    let r = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_ne!(exit_code(&r), 0);
}

#[test]
fn validate_rejects_nonpositive_gain() {
    let dir = scratch_dir("badgain");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, TINY.replace("gamma1 = 100.0", "gamma1 = 0.0")).unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("gains"), "{}", stderr(&out));
}

#[test]
fn run_writes_outputs_and_honors_force() {
    let dir = scratch_dir("run");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out_dir = dir.join("out");

    let run = |extra: &[&str]| {
        let mut cmd = bin();
        cmd.args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir);
        cmd.args(extra);
        cmd.output().unwrap()
    };

    let first = run(&["--plot"]);
    assert_eq!(exit_code(&first), 0, "{}", stderr(&first));
    assert!(out_dir.join("trace.csv").is_file());
    assert!(out_dir.join("summary.toml").is_file());
    for plot in ["voltage.svg", "currents.svg", "lyapunov.svg"] {
        assert!(out_dir.join("plots").join(plot).is_file(), "missing {plot}");
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    assert!(summary.contains("status = \"ok\""));
    assert!(summary.contains("violations = 0"));

    // Second run without --force must refuse to overwrite.
    let second = run(&[]);
    assert_eq!(exit_code(&second), 2);
    assert!(stderr(&second).contains("--force"), "{}", stderr(&second));

    // And with --force it succeeds again.
    let third = run(&["--force"]);
    assert_eq!(exit_code(&third), 0, "{}", stderr(&third));
}

#[test]
fn run_uses_env_var_output_root() {
    let dir = scratch_dir("envroot");
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("DCGRID_OUT", &dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    // Output lands under $DCGRID_OUT/<sanitized config label>/.
    let produced: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            p.join("trace.csv").is_file().then_some(p)
        })
        .collect();
    assert_eq!(produced.len(), 1, "expected one run dir under {dir:?}");
}

#[test]
fn run_rejects_initial_voltage_outside_band() {
    let dir = scratch_dir("badinit");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, format!("{TINY}\n[initial]\nv_o = 13.0\n")).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    let err = stderr(&out);
    assert!(
        err.contains("band"),
        "diagnostic should cite the band: {err}"
    );
}

#[test]
fn run_refine_reports_endpoint_shift() {
    let dir = scratch_dir("refine");
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--refine")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("refinement check"),
        "{}",
        stdout(&out)
    );
}

/// The bundled worst-case study does not finish clean; the exit contract
/// (nonzero with the cause on stderr) is part of the interface.
#[test]
fn paper_fig3_preset_exits_nonzero_with_diagnostic() {
    let dir = scratch_dir("fig3");
    let out = bin()
        .args(["run", "--preset", "paper-fig3", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    let err = stderr(&out);
    assert!(
        err.contains("band"),
        "stderr should cite the band violation: {err}"
    );
    assert!(dir.join("out").join("trace.csv").is_file());
    assert!(dir.join("out").join("summary.toml").is_file());
}

#[test]
fn disconnect_study_preset_exits_zero() {
    let dir = scratch_dir("demo");
    let out = bin()
        .args(["run", "--preset", "disconnect-study", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
}

#[test]
fn validate_accepts_bundled_presets() {
    for name in ["paper-fig3", "paper-fig3-20khz", "disconnect-study"] {
        let out = bin().args(["validate", "--preset", name]).output().unwrap();
        assert_eq!(exit_code(&out), 0, "{name}: {}", stderr(&out));
    }
}

#[test]
fn unknown_preset_is_an_error() {
    let out = bin()
        .args(["run", "--preset", "no-such-preset"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("preset-list"));
}

fn write_sweep(dir: &Path, patches: &[(&str, &str, f64)]) -> PathBuf {
    let base: toml::Value = toml::from_str(TINY).unwrap();
    let mut doc = toml::value::Table::new();
    doc.insert("base".into(), base);
    let mut list = Vec::new();
    for (name, key, value) in patches {
        let mut set = toml::value::Table::new();
        set.insert((*key).into(), toml::Value::Float(*value));
        let mut patch = toml::value::Table::new();
        patch.insert("name".into(), toml::Value::String((*name).into()));
        patch.insert("set".into(), toml::Value::Table(set));
        list.push(toml::Value::Table(patch));
    }
    doc.insert("patch".into(), toml::Value::Array(list));
    let path = dir.join("sweep.toml");
    std::fs::write(&path, toml::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn sweep_aggregates_and_flags_failures() {
    let dir = scratch_dir("sweep");
    let sweep = write_sweep(
        &dir,
        &[
            ("p60", "load.p_l", 60.0),
            ("p120", "load.p_l", 120.0),
            ("bad-dt", "dt_plant", 3e-5),
        ],
    );
    let out_dir = dir.join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&sweep)
        .arg("--out")
        .arg(&out_dir)
        .args(["--parallel", "2"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1, "{}", stderr(&out));

    let aggregate = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    let lines: Vec<&str> = aggregate.lines().collect();
    assert_eq!(lines.len(), 4); // header + three entries
    assert!(lines[0].starts_with("name,status"));
    assert!(lines[1].starts_with("p60,ok"));
    assert!(lines[2].starts_with("p120,ok"));
    assert!(lines[3].starts_with("bad-dt,failed"));
    for name in ["p60", "p120"] {
        assert!(out_dir.join(name).join("trace.csv").is_file());
        assert!(out_dir.join(name).join("summary.toml").is_file());
    }
    assert!(out_dir.join("bad-dt").join("summary.toml").is_file());
}

#[test]
fn sweep_of_clean_entries_exits_zero() {
    let dir = scratch_dir("sweep-ok");
    let sweep = write_sweep(&dir, &[("a", "load.p_l", 60.0), ("b", "load.i_l", 2.0)]);
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&sweep)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
}

#[test]
fn empty_sweep_writes_header_only_aggregate() {
    let dir = scratch_dir("sweep-empty");
    let sweep = write_sweep(&dir, &[]);
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&sweep)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let aggregate = std::fs::read_to_string(dir.join("out").join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1);
}
