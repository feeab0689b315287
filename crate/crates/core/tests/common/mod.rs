#![allow(dead_code)]

use designloop::agent::{ScriptedBackend, ScriptedReply};
use designloop::orchestrator::RunConfig;
use designloop::problems::DatasetOptions;
use designloop::ProblemKind;

pub const NAIVE: &str = include_str!("../fixtures/matmul_naive.c");
pub const BLOCKED: &str = include_str!("../fixtures/matmul_blocked.c");
pub const WRONG: &str = include_str!("../fixtures/matmul_wrong.c");
pub const KINETICS_BE: &str = include_str!("../fixtures/kinetics_backward_euler.c");
pub const BROKEN: &str = "int main(void) {\n    return undeclared_value\n}\n";

/// Correct matmul that also sleeps `micros` inside the measured region, so
/// designs have well-separated runtimes.
pub fn sleeper(micros: u32) -> String {
    let body = NAIVE.replace(
        "    printf(\"MEASURE_END\\n\");",
        &format!("    usleep({micros});\n    printf(\"MEASURE_END\\n\");"),
    );
    format!("#define _DEFAULT_SOURCE\n#include <unistd.h>\n{body}")
}

pub fn fenced(code: &str) -> String {
    format!("Here is the program.\n\n```c\n{code}```\n")
}

pub fn decision(strategy: &str, instructions: &str) -> String {
    format!("STRATEGY: {strategy}\nINSTRUCTIONS:\n{instructions}\n")
}

/// Replies with fixed reported usage so token counts do not depend on
/// prompt contents.
pub fn backend(replies: impl IntoIterator<Item = String>) -> ScriptedBackend {
    ScriptedBackend::new(
        replies
            .into_iter()
            .map(|r| ScriptedReply::with_usage(r, 1000, 100))
            .collect(),
    )
}

/// Matmul run with a tiny dataset and one timing repetition.
pub fn small_matmul(iterations: u32) -> RunConfig {
    let mut config = RunConfig::new(ProblemKind::Matmul);
    config.iterations = iterations;
    config.seed = 11;
    config.evaluation.reps = 1;
    config.evaluation.timeout_secs = 30.0;
    config.dataset = DatasetOptions {
        correctness_sizes: Some(vec![7, 20]),
        profile_sizes: Some(vec![16, 32]),
        ..DatasetOptions::default()
    };
    config
}
