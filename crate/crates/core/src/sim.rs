//! Run orchestration: execute a scenario, annotate its trace, summarize it,
//! and fan sweeps out across worker threads.

use crate::analysis::{self, RunSummary};
use crate::config::ConfigError;
use crate::engine::{self, FailureKind, RunResult, RunStatus, Scenario};
use crate::trace::TraceRecord;

/// Execute one scenario end to end: run, Lyapunov annotation, metrics.
pub fn run_scenario(scenario: &Scenario) -> (Vec<TraceRecord>, RunSummary) {
    let mut result = engine::run(scenario);
    analysis::annotate_lyapunov(&mut result.records, scenario);
    let records = std::mem::take(&mut result.records);
    let summary = analysis::metrics(&records, scenario, &result);
    (records, summary)
}

/// Outcome of one sweep entry.
#[derive(Debug)]
pub struct SweepOutcome {
    pub name: String,
    pub summary: RunSummary,
    pub records: Vec<TraceRecord>,
}

/// Run every job, `parallelism` at a time. Results come back in job order;
/// per-job failures (invalid patches included) are recorded in the summary,
/// never panicked or dropped.
pub fn sweep(
    jobs: Vec<(String, Result<Scenario, ConfigError>)>,
    parallelism: usize,
) -> Vec<SweepOutcome> {
    let workers = parallelism.max(1);
    let total = jobs.len();
    let jobs: Vec<(usize, String, Result<Scenario, ConfigError>)> = jobs
        .into_iter()
        .enumerate()
        .map(|(i, (name, s))| (i, name, s))
        .collect();

    let mut outcomes: Vec<Option<SweepOutcome>> = Vec::new();
    outcomes.resize_with(total, || None);

    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut outcomes);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(total.max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= total {
                    break;
                }
                let (index, name, scenario) = &jobs[k];
                let outcome = match scenario {
                    Ok(s) => {
                        let (records, summary) = run_scenario(s);
                        SweepOutcome {
                            name: name.clone(),
                            summary,
                            records,
                        }
                    }
                    Err(e) => {
                        let failed = RunResult {
                            status: RunStatus::Failed(FailureKind::InvalidConfig(e.to_string())),
                            records: Vec::new(),
                            samples: 0,
                            violations: 0,
                            worst_excursion: 0.0,
                            clamp_events: 0,
                        };
                        // Metrics need a scenario; synthesize an empty summary.
                        SweepOutcome {
                            name: name.clone(),
                            summary: RunSummary {
                                ok: false,
                                status: format!("failed: invalid configuration: {e}"),
                                samples: 0,
                                violations: 0,
                                worst_excursion_v: 0.0,
                                clamp_events: 0,
                                t_last_s: 0.0,
                                final_v_o: None,
                                segments: Vec::new(),
                                lyapunov: None,
                            },
                            records: failed.records,
                        }
                    }
                };
                slots.lock().expect("sweep worker poisoned")[*index] = Some(outcome);
            });
        }
    });
    outcomes
        .into_iter()
        .map(|o| o.expect("every sweep slot filled"))
        .collect()
}
