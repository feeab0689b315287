//! Compile success rates and validation status counts.

use serde::Serialize;

use designloop::{DesignRecord, ValidationStatus};

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileStats {
    /// Checked attempts that produced code.
    pub attempts: usize,
    /// Of those, attempts that compiled.
    pub compiled_attempts: usize,
    pub attempt_rate: Option<f64>,
    /// Iterations whose first checked attempt compiled, over iterations
    /// with at least one checked attempt.
    pub first_attempt_rate: Option<f64>,
    pub iterations: usize,
    /// Iterations whose final artifact compiled, over all iterations.
    pub compiled_iterations: usize,
    pub iteration_rate: Option<f64>,
    /// Final status counts in `ValidationStatus::ALL` order.
    pub final_status: Vec<(ValidationStatus, usize)>,
    /// Per-attempt status counts in `ValidationStatus::ALL` order.
    pub attempt_status: Vec<(ValidationStatus, usize)>,
}

pub fn compile_stats(records: &[DesignRecord]) -> CompileStats {
    let mut attempts = 0;
    let mut compiled_attempts = 0;
    let mut first_total = 0;
    let mut first_pass = 0;
    let count = |pick: &dyn Fn(ValidationStatus) -> usize| -> Vec<(ValidationStatus, usize)> {
        ValidationStatus::ALL.iter().map(|&s| (s, pick(s))).collect()
    };
    for r in records {
        let checked: Vec<ValidationStatus> = r
            .validation
            .history
            .iter()
            .copied()
            .filter(|s| *s != ValidationStatus::NoCode)
            .collect();
        attempts += checked.len();
        compiled_attempts += checked.iter().filter(|s| s.compiled()).count();
        if let Some(first) = checked.first() {
            first_total += 1;
            first_pass += first.compiled() as usize;
        }
    }
    let compiled_iterations = records.iter().filter(|r| r.validation.status.compiled()).count();
    CompileStats {
        attempts,
        compiled_attempts,
        attempt_rate: percent(compiled_attempts, attempts),
        first_attempt_rate: percent(first_pass, first_total),
        iterations: records.len(),
        compiled_iterations,
        iteration_rate: percent(compiled_iterations, records.len()),
        final_status: count(&|s| records.iter().filter(|r| r.validation.status == s).count()),
        attempt_status: count(&|s| {
            records
                .iter()
                .flat_map(|r| r.validation.history.iter())
                .filter(|&&h| h == s)
                .count()
        }),
    }
}
