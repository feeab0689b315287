//! Repeated timing of validated candidates and the aggregate design score.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::ProfileCondition;
use crate::trace::ConditionMetrics;
use crate::validation::sandbox::{isolated_command, run_with_timeout, ProcessOutput};

pub const MEASURE_BEGIN: &str = "MEASURE_BEGIN";
pub const MEASURE_END: &str = "MEASURE_END";

/// Shortest runtime a measurement can report; markers that arrive together
/// are clamped to this.
pub const MIN_RUNTIME: f64 = 1e-9;

const CAPTURE_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSettings {
    pub reps: u32,
    pub timeout_secs: f64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            reps: 3,
            timeout_secs: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_condition: Vec<ConditionMetrics>,
    pub score: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("runtime {0} is not a positive finite number")]
pub struct MeasurementError(pub f64);

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("condition `{condition}` repetition {rep}: {report}")]
    RunFailed { condition: String, rep: u32, report: String },
    #[error("no profiling conditions")]
    NoConditions,
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Negated geometric mean of the per-condition mean runtimes.
pub fn aggregate_score(means: &[f64]) -> Result<f64, MeasurementError> {
    if means.is_empty() {
        return Err(MeasurementError(f64::NAN));
    }
    let mut log_sum = 0.0;
    for &m in means {
        if !(m > 0.0 && m.is_finite()) {
            return Err(MeasurementError(m));
        }
        log_sum += m.ln();
    }
    Ok(-(log_sum / means.len() as f64).exp())
}

/// Time between the measurement markers, or `None` if either is missing.
pub fn marker_interval(output: &ProcessOutput) -> Option<Duration> {
    let begin = output.stdout.iter().find(|l| l.text.trim() == MEASURE_BEGIN)?;
    let end = output
        .stdout
        .iter()
        .rev()
        .find(|l| l.text.trim() == MEASURE_END)?;
    end.at.checked_sub(begin.at)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Runs `executable` `settings.reps` times on every condition and scores it.
pub fn evaluate(
    executable: &Path,
    conditions: &[ProfileCondition],
    settings: &EvaluationSettings,
    workdir: &Path,
) -> Result<EvaluationReport, EvaluationError> {
    if conditions.is_empty() {
        return Err(EvaluationError::NoConditions);
    }
    std::fs::create_dir_all(workdir).map_err(|source| EvaluationError::Io {
        path: workdir.to_path_buf(),
        source,
    })?;
    let timeout = Duration::from_secs_f64(settings.timeout_secs);
    let mut per_condition = Vec::with_capacity(conditions.len());
    for cond in conditions {
        let output_path = workdir.join(format!("profile-{}.out", cond.id));
        let mut reps = Vec::with_capacity(settings.reps as usize);
        let mut fallback = false;
        for rep in 1..=settings.reps {
            let mut cmd = isolated_command(executable, workdir);
            cmd.arg(&cond.input).arg(&output_path);
            let out = run_with_timeout(&mut cmd, timeout, CAPTURE_CAP).map_err(|source| EvaluationError::Io {
                path: executable.to_path_buf(),
                source,
            })?;
            let fail = |report: String| EvaluationError::RunFailed {
                condition: cond.id.clone(),
                rep,
                report,
            };
            if out.timed_out {
                return Err(fail(format!("exceeded the {:.0} s time limit", settings.timeout_secs)));
            }
            if !out.success() {
                let status = out.status.map_or("unknown".to_string(), |s| s.to_string());
                return Err(fail(format!("program {status}\nstderr:\n{}", out.stderr)));
            }
            let secs = match marker_interval(&out) {
                Some(d) => d.as_secs_f64(),
                None => {
                    fallback = true;
                    out.elapsed.as_secs_f64()
                }
            };
            reps.push(secs.max(MIN_RUNTIME));
        }
        let _ = std::fs::remove_file(&output_path);
        if fallback {
            log::warn!("condition `{}`: measurement markers missing, using process wall time", cond.id);
        }
        per_condition.push(ConditionMetrics {
            condition: cond.id.clone(),
            mean: mean(&reps),
            reps,
            fallback_timing: fallback,
        });
    }
    let means: Vec<f64> = per_condition.iter().map(|c| c.mean).collect();
    let score = aggregate_score(&means)?;
    Ok(EvaluationReport { per_condition, score })
}
