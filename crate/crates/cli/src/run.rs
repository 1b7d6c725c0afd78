//! Monte-Carlo orchestration.
//!
//! Every `(scheme, sweep value)` pair is one job: it picks `theta` (the outer
//! loop on the root seed, or the fixed midpoint) and then evaluates `T_e` at
//! that `theta` on `n_realizations` fresh realizations. The evaluation seeds
//! come from [`evaluation_seeds`] and are shared by all schemes and sweep
//! values, so comparisons are paired.

use std::sync::Mutex;
use std::time::Instant;

use cffl_core::baselines::{evaluation_seeds, paired_means, PairedMeans, SchemeContext, SchemeId};
use cffl_core::Error;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{sibling, write_table, ResultRow, ScaTraceRow, StreamWriter, SummaryRow, TraceRow};
use crate::HarnessError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    /// Ordered by scheme (config order), sweep value, realization.
    pub rows: Vec<ResultRow>,
    pub trace: Vec<TraceRow>,
    pub sca_trace: Vec<ScaTraceRow>,
    pub summary: Vec<SummaryRow>,
}

impl RunOutput {
    pub fn rows_of(&self, scheme: SchemeId, value: f64) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.scheme == scheme.as_str() && r.sweep_value == value).collect()
    }

    pub fn summary_of(&self, scheme: SchemeId, value: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.scheme == scheme.as_str() && s.sweep_value == value)
    }

    /// Means of `a` and `b` at `value` over the realizations both solved.
    pub fn paired(&self, a: SchemeId, b: SchemeId, value: f64) -> Result<PairedMeans, HarnessError> {
        let times = |s| -> Vec<cffl_core::Result<f64>> {
            self.rows_of(s, value)
                .iter()
                .map(|r| r.t_e.ok_or_else(|| Error::InfeasibleScenario(r.detail.clone())))
                .collect()
        };
        Ok(paired_means(&times(a), &times(b))?)
    }
}

pub fn status_of(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::InfeasibleEvaluation(_) => "infeasible_evaluation",
        Error::InfeasibleScenario(_) => "infeasible_scenario",
        Error::Solver(_) => "solver_failure",
    }
}

struct JobOutput {
    rows: Vec<ResultRow>,
    trace: Vec<TraceRow>,
    sca_trace: Vec<ScaTraceRow>,
}

fn run_job(
    cfg: &ExperimentConfig,
    ctx: &SchemeContext,
    scheme: SchemeId,
    value: f64,
    stream: Option<&Mutex<StreamWriter>>,
) -> Result<JobOutput, HarnessError> {
    let var = cfg.sweep.variable.as_str().to_string();
    let seeds = evaluation_seeds(cfg.root_seed, cfg.n_realizations);
    let started = Instant::now();
    let choice = ctx.choose_theta(scheme, &cfg.long_term, cfg.root_seed);
    let push = |row: &ResultRow| -> Result<(), HarnessError> {
        if let Some(s) = stream {
            s.lock().expect("writer lock").push(row)?;
        }
        Ok(())
    };
    let base = ResultRow {
        scheme: scheme.as_str().to_string(),
        sweep_var: var.clone(),
        sweep_value: value,
        realization: 0,
        seed: 0,
        t_e: None,
        theta: None,
        iterations: 0,
        resamples: 0,
        status: String::new(),
        detail: String::new(),
        wall_time_s: 0.0,
    };

    let choice = match choice {
        Ok(c) => c,
        Err(e) => {
            log::warn!("{scheme} at {var}={value}: outer loop failed: {e}");
            let mut rows = Vec::with_capacity(seeds.len());
            for (j, &seed) in seeds.iter().enumerate() {
                let row = ResultRow {
                    realization: j,
                    seed,
                    status: status_of(&e).to_string(),
                    detail: format!("outer loop: {e}"),
                    ..base.clone()
                };
                push(&row)?;
                rows.push(row);
            }
            return Ok(JobOutput { rows, trace: Vec::new(), sca_trace: Vec::new() });
        }
    };
    let (iterations, resamples) = choice.outer.as_ref().map(|o| (o.history.len(), o.resamples)).unwrap_or((0, 0));
    log::info!(
        "{scheme} at {var}={value}: theta {:.4e} after {iterations} outer iterations ({:.1} s)",
        choice.theta,
        started.elapsed().as_secs_f64()
    );
    let trace = match (&choice.outer, cfg.trace) {
        (Some(o), true) => o
            .history
            .iter()
            .map(|h| TraceRow {
                scheme: base.scheme.clone(),
                sweep_var: var.clone(),
                sweep_value: value,
                n: h.n,
                theta: h.theta,
                time_s: h.time,
                t_e_running_s: h.t_e_running,
                resampled: h.resampled,
            })
            .collect(),
        _ => Vec::new(),
    };

    let factor = ctx.flp.effective_factor();
    let evaluated: Vec<Result<(ResultRow, Vec<ScaTraceRow>), HarnessError>> = seeds
        .par_iter()
        .enumerate()
        .map(|(j, &seed)| {
            let t0 = Instant::now();
            let out = ctx.short_term(scheme, seed, choice.theta);
            let mut row = ResultRow {
                realization: j,
                seed,
                theta: Some(choice.theta),
                iterations,
                resamples,
                ..base.clone()
            };
            let mut sca = Vec::new();
            match out {
                Ok(out) => {
                    row.t_e = Some(factor * out.time);
                    row.status = "ok".into();
                    if cfg.trace {
                        sca = out
                            .trace
                            .iter()
                            .map(|t| ScaTraceRow {
                                scheme: base.scheme.clone(),
                                sweep_var: var.clone(),
                                sweep_value: value,
                                realization: j,
                                iter: t.iter,
                                objective: t.objective,
                                max_violation: t.max_violation,
                            })
                            .collect();
                    }
                }
                Err(e) => {
                    log::warn!("{scheme} at {var}={value}, realization {j} ({seed:#x}): {e}");
                    row.status = status_of(&e).to_string();
                    row.detail = e.to_string();
                }
            }
            row.wall_time_s = t0.elapsed().as_secs_f64();
            push(&row)?;
            Ok((row, sca))
        })
        .collect();
    let mut rows = Vec::with_capacity(seeds.len());
    let mut sca_trace = Vec::new();
    for r in evaluated {
        let (row, sca) = r?;
        rows.push(row);
        sca_trace.extend(sca);
    }
    Ok(JobOutput { rows, trace, sca_trace })
}

/// Runs every job and returns the canonically ordered tables. Rows are also
/// appended to `stream`, in completion order, as soon as they are known.
pub fn execute(cfg: &ExperimentConfig, stream: Option<&Mutex<StreamWriter>>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(SchemeId, f64, SchemeContext)> = cfg
        .schemes
        .iter()
        .flat_map(|&s| cfg.sweep.values.iter().map(move |&v| (s, v)))
        .map(|(s, v)| cfg.context(v).map(|ctx| (s, v, ctx)))
        .collect::<Result<_, _>>()?;
    // collect keeps job order, which is the canonical order
    let outputs: Vec<Result<JobOutput, HarnessError>> =
        jobs.par_iter().map(|(s, v, ctx)| run_job(cfg, ctx, *s, *v, stream)).collect();
    let mut out = RunOutput::default();
    for o in outputs {
        let o = o?;
        out.summary.push(SummaryRow::from_rows(&o.rows.iter().collect::<Vec<_>>()));
        out.rows.extend(o.rows);
        out.trace.extend(o.trace);
        out.sca_trace.extend(o.sca_trace);
    }
    Ok(out)
}

/// Runs `cfg` and writes `output`, `<stem>_summary.csv` and, with tracing
/// on, `<stem>_trace.csv` and `<stem>_sca_trace.csv`. While running, rows are
/// streamed to `<stem>.partial.csv`, which is removed once the final file is
/// in place.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let partial = sibling(&cfg.output, ".partial");
    let stream = Mutex::new(StreamWriter::create(&partial)?);
    let out = execute(cfg, Some(&stream))?;
    drop(stream);
    write_table(&cfg.output, &ResultRow::HEADER, out.rows.iter().map(ResultRow::record))?;
    write_table(&sibling(&cfg.output, "_summary"), &SummaryRow::HEADER, out.summary.iter().map(SummaryRow::record))?;
    if cfg.trace {
        write_table(&sibling(&cfg.output, "_trace"), &TraceRow::HEADER, out.trace.iter().map(TraceRow::record))?;
        write_table(
            &sibling(&cfg.output, "_sca_trace"),
            &ScaTraceRow::HEADER,
            out.sca_trace.iter().map(ScaTraceRow::record),
        )?;
    }
    std::fs::remove_file(&partial)?;
    Ok(out)
}
