//! `dcgrid` — run, sweep, and validate microgrid scenarios.
//!
//! Exit codes: `run` returns 0 only when the run completed with zero band
//! violations; `sweep` returns 0 only when every entry did; `validate`
//! returns 0 when the config resolves. Details land in `summary.toml` /
//! `aggregate.csv` under the output directory (see FORMATS.md).

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dcgrid_core::{config, plot, preset, sim, trace};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable providing the default output root.
const OUT_ENV: &str = "DCGRID_OUT";

#[derive(Parser)]
#[command(
    name = "dcgrid",
    version,
    about = "Parallel DC-DC converter microgrid simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioSource {
    /// Scenario config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `preset-list`).
    #[arg(long)]
    preset: Option<String>,
}

impl ScenarioSource {
    fn label(&self) -> String {
        match (&self.config, &self.preset) {
            (Some(p), _) => p.display().to_string(),
            (_, Some(name)) => format!("preset:{name}"),
            _ => "<none>".to_string(),
        }
    }

    fn toml_text(&self) -> Result<String> {
        match (&self.config, &self.preset) {
            (Some(path), None) => {
                fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
            }
            (None, Some(name)) => preset::toml_text(name)
                .ok_or_else(|| anyhow!("unknown preset {name:?}; see `dcgrid preset-list`")),
            _ => bail!("give exactly one of --config or --preset"),
        }
    }
}

#[derive(Args)]
struct OutputOpts {
    /// Output directory (default: $DCGRID_OUT or ./out, plus a run name).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: trace.csv + summary.toml (+ plots).
    Run {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        output: OutputOpts,
        /// Also write SVG plots (voltage, currents, Lyapunov).
        #[arg(long)]
        plot: bool,
        /// Re-run with dt_plant halved and report the final-voltage shift.
        #[arg(long)]
        refine: bool,
    },
    /// Run a sweep config: per-entry outputs + aggregate.csv.
    Sweep {
        /// Sweep config file (TOML with `base`/`base_path` and `[[patch]]`).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputOpts,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        parallel: Option<usize>,
        /// Also write SVG plots for each entry.
        #[arg(long)]
        plot: bool,
    },
    /// Parse and validate a scenario config without running it.
    Validate {
        #[command(flatten)]
        source: ScenarioSource,
    },
    /// List bundled presets.
    PresetList,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            source,
            output,
            plot,
            refine,
        } => cmd_run(source, output, plot, refine),
        Command::Sweep {
            config,
            output,
            parallel,
            plot,
        } => cmd_sweep(config, output, parallel, plot),
        Command::Validate { source } => cmd_validate(source),
        Command::PresetList => {
            for name in preset::names() {
                println!("{name}  -  {}", preset::describe(name).unwrap_or(""));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn default_out(label: &str) -> PathBuf {
    let stem: String = label
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    out_root().join(stem)
}

/// Refuse to overwrite prior outputs unless forced.
fn guard_outputs(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for name in names {
        let path = dir.join(name);
        if path.exists() {
            bail!(
                "{} already exists; pass --force to overwrite",
                path.display()
            );
        }
    }
    Ok(())
}

fn write_plots(
    dir: &Path,
    records: &[trace::TraceRecord],
    scenario: &dcgrid_core::Scenario,
) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    fs::write(
        plots.join("voltage.svg"),
        plot::voltage_svg(records, scenario),
    )?;
    fs::write(
        plots.join("currents.svg"),
        plot::currents_svg(records, scenario),
    )?;
    fs::write(
        plots.join("lyapunov.svg"),
        plot::lyapunov_svg(records, scenario),
    )?;
    Ok(())
}

fn cmd_run(
    source: ScenarioSource,
    output: OutputOpts,
    plot: bool,
    refine: bool,
) -> Result<ExitCode> {
    let text = source.toml_text()?;
    let scenario = config::parse_scenario(&text)
        .map_err(|e| anyhow!("{}: invalid scenario: {e}", source.label()))?;

    let dir = output.out.unwrap_or_else(|| default_out(&source.label()));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    guard_outputs(&dir, &["trace.csv", "summary.toml"], output.force)?;

    let (records, summary) = sim::run_scenario(&scenario);

    let mut csv = Vec::new();
    trace::write_csv(&records, scenario.n(), &mut csv)?;
    fs::write(dir.join("trace.csv"), csv)?;
    fs::write(dir.join("summary.toml"), summary.to_toml())?;
    if plot {
        write_plots(&dir, &records, &scenario)?;
    }

    if refine {
        let mut fine = scenario.clone();
        fine.dt_plant /= 2.0;
        let (fine_records, _) = sim::run_scenario(&fine);
        match (records.last(), fine_records.last()) {
            (Some(a), Some(b)) if (a.t - b.t).abs() < 1e-12 => {
                println!(
                    "refinement check: |dV_final| = {:.3e} V at halved dt_plant",
                    (a.v_o - b.v_o).abs()
                );
            }
            _ => println!("refinement check: runs ended at different times; see summaries"),
        }
    }

    println!(
        "{}: {} - {} samples, {} violations, outputs in {}",
        source.label(),
        summary.status,
        summary.samples,
        summary.violations,
        dir.display()
    );
    if summary.ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("run not clean: {}", summary.status);
        if summary.violations > 0 {
            eprintln!(
                "voltage band violated {} time(s), worst excursion {} V",
                summary.violations, summary.worst_excursion_v
            );
        }
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_sweep(
    config_path: PathBuf,
    output: OutputOpts,
    parallel: Option<usize>,
    plot: bool,
) -> Result<ExitCode> {
    let text = fs::read_to_string(&config_path)
        .with_context(|| format!("cannot read {}", config_path.display()))?;
    let base_dir = config_path.parent().map(Path::to_path_buf);
    let sweep_cfg = config::parse_sweep(&text, base_dir.as_deref())
        .map_err(|e| anyhow!("{}: invalid sweep: {e}", config_path.display()))?;

    let dir = output
        .out
        .unwrap_or_else(|| default_out(&config_path.display().to_string()));
    fs::create_dir_all(&dir)?;
    guard_outputs(&dir, &["aggregate.csv"], output.force)?;

    let workers = parallel
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let jobs = sweep_cfg.jobs();
    let scenarios: Vec<Option<dcgrid_core::Scenario>> =
        jobs.iter().map(|(_, s)| s.as_ref().ok().cloned()).collect();
    let outcomes = sim::sweep(jobs, workers);

    let mut aggregate = String::from(
        "name,status,samples,violations,worst_excursion_V,clamp_events,final_v_o_V,t_last_s\n",
    );
    let mut all_ok = true;
    for (outcome, scenario) in outcomes.iter().zip(&scenarios) {
        all_ok &= outcome.summary.ok;
        let sub = dir.join(&outcome.name);
        fs::create_dir_all(&sub)?;
        guard_outputs(&sub, &["trace.csv", "summary.toml"], output.force)?;
        if let Some(s) = scenario {
            let mut csv = Vec::new();
            trace::write_csv(&outcome.records, s.n(), &mut csv)?;
            fs::write(sub.join("trace.csv"), csv)?;
            if plot {
                write_plots(&sub, &outcome.records, s)?;
            }
        }
        fs::write(sub.join("summary.toml"), outcome.summary.to_toml())?;
        aggregate.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            outcome.name,
            outcome.summary.status.replace(',', ";"),
            outcome.summary.samples,
            outcome.summary.violations,
            outcome.summary.worst_excursion_v,
            outcome.summary.clamp_events,
            outcome
                .summary
                .final_v_o
                .map(|v| v.to_string())
                .unwrap_or_default(),
            outcome.summary.t_last_s,
        ));
    }
    fs::write(dir.join("aggregate.csv"), aggregate)?;
    println!(
        "sweep: {}/{} entries clean, aggregate in {}",
        outcomes.iter().filter(|o| o.summary.ok).count(),
        outcomes.len(),
        dir.display()
    );
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_validate(source: ScenarioSource) -> Result<ExitCode> {
    let text = source.toml_text()?;
    match config::parse_scenario(&text) {
        Ok(s) => {
            println!(
                "{}: valid - {} converters, t_end = {} s, {} events, {} control steps",
                source.label(),
                s.n(),
                s.t_end,
                s.events.len(),
                s.control_steps()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{}: invalid: {e}", source.label());
            Ok(ExitCode::FAILURE)
        }
    }
}
