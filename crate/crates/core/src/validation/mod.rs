//! Compile, run and correctness checks with feedback-driven correction.

mod correctness;
pub mod sandbox;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correctness::{compare_tables, relative_error, Comparison, CorrectnessCase, CorrectnessSuite, Mismatch};

use crate::agent::AgentError;
use sandbox::{isolated_command, run_with_timeout};

/// Bytes of candidate stdout/stderr kept per run.
const RUN_CAPTURE_CAP: usize = 64 * 1024;
/// Bytes of runtime stderr quoted back in feedback.
const RUNTIME_ERROR_TAIL: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationStatus {
    Valid,
    CompileFailed,
    RunFailed,
    Incorrect,
    NoCode,
}

impl ValidationStatus {
    pub const ALL: [ValidationStatus; 5] = [
        ValidationStatus::Valid,
        ValidationStatus::CompileFailed,
        ValidationStatus::RunFailed,
        ValidationStatus::Incorrect,
        ValidationStatus::NoCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValidationStatus::Valid => "valid",
            ValidationStatus::CompileFailed => "compile-failed",
            ValidationStatus::RunFailed => "run-failed",
            ValidationStatus::Incorrect => "incorrect",
            ValidationStatus::NoCode => "no-code",
        }
    }

    /// Whether code was produced and got past the compiler.
    pub fn compiled(self) -> bool {
        matches!(
            self,
            ValidationStatus::Valid | ValidationStatus::RunFailed | ValidationStatus::Incorrect
        )
    }
}

impl fmt::Display for ValidationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub status: ValidationStatus,
    /// Number of regenerations requested after failed checks.
    pub attempts_used: u32,
    pub last_error: Option<String>,
    /// Status of every checked attempt, initial one first.
    #[serde(default)]
    pub history: Vec<ValidationStatus>,
}

impl ValidationOutcome {
    pub fn valid(attempts_used: u32) -> Self {
        let mut history = vec![ValidationStatus::CompileFailed; attempts_used as usize];
        history.push(ValidationStatus::Valid);
        ValidationOutcome {
            status: ValidationStatus::Valid,
            attempts_used,
            last_error: None,
            history,
        }
    }

    pub fn failed(status: ValidationStatus, attempts_used: u32, error: String) -> Self {
        ValidationOutcome {
            status,
            attempts_used,
            last_error: Some(error),
            history: vec![status; attempts_used as usize + 1],
        }
    }

    pub fn no_code(reason: impl Into<String>) -> Self {
        ValidationOutcome {
            status: ValidationStatus::NoCode,
            attempts_used: 0,
            last_error: Some(reason.into()),
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("toolchain binary `{0}` not found")]
    MissingToolchain(String),
    #[error("toolchain command is empty")]
    EmptyToolchain,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("implementor failed: {0}")]
    Agent(#[from] AgentError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ValidationError + '_ {
    move |source| ValidationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Compiler invocation. `{src}` and `{exe}` in the command are replaced by
/// the source and executable file names inside the attempt directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toolchain {
    pub command: Vec<String>,
    pub source_name: String,
    pub executable_name: String,
    /// Diagnostics beyond this many bytes are cut.
    pub diagnostics_cap: usize,
    pub timeout_secs: f64,
    /// Info string used for code fences in prompts.
    pub language: String,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            command: ["cc", "-O2", "-std=c11", "-o", "{exe}", "{src}", "-lm"]
                .map(String::from)
                .to_vec(),
            source_name: "candidate.c".into(),
            executable_name: "candidate".into(),
            diagnostics_cap: 16 * 1024,
            timeout_secs: 60.0,
            language: "c".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileOutcome {
    Pass { executable: PathBuf },
    Fail { diagnostics: String },
}

/// Keeps the first `cap` bytes of `text` (backing off to a char boundary).
pub fn truncate_diagnostics(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].to_string()
}

fn tail(text: &str, max: usize) -> &str {
    if text.len() <= max {
        return text;
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}

/// Writes `artifact` into `workdir` and compiles it.
pub fn check_compile(artifact: &str, toolchain: &Toolchain, workdir: &Path) -> Result<CompileOutcome, ValidationError> {
    let (program, args) = toolchain.command.split_first().ok_or(ValidationError::EmptyToolchain)?;
    std::fs::create_dir_all(workdir).map_err(io_err(workdir))?;
    let src = workdir.join(&toolchain.source_name);
    std::fs::write(&src, artifact).map_err(io_err(&src))?;
    let exe = workdir.join(&toolchain.executable_name);
    let _ = std::fs::remove_file(&exe);

    let substitute = |arg: &String| {
        arg.replace("{src}", &toolchain.source_name)
            .replace("{exe}", &toolchain.executable_name)
    };
    let mut cmd = std::process::Command::new(program);
    cmd.args(args.iter().map(substitute)).current_dir(workdir);
    let timeout = Duration::from_secs_f64(toolchain.timeout_secs);
    let output = match run_with_timeout(&mut cmd, timeout, toolchain.diagnostics_cap.max(1) * 2) {
        Ok(out) => out,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ValidationError::MissingToolchain(program.clone()))
        }
        Err(e) => return Err(io_err(workdir)(e)),
    };

    let mut diagnostics = output.stderr.clone();
    let stdout = output.stdout_text();
    if !stdout.is_empty() {
        if !diagnostics.is_empty() && !diagnostics.ends_with('\n') {
            diagnostics.push('\n');
        }
        diagnostics.push_str(&stdout);
    }
    if output.timed_out {
        diagnostics = format!("compilation timed out after {:.0} s\n{diagnostics}", toolchain.timeout_secs);
    } else if output.success() && exe.is_file() {
        return Ok(CompileOutcome::Pass { executable: exe });
    } else if output.success() {
        diagnostics.push_str("compiler reported success but produced no executable");
    }
    Ok(CompileOutcome::Fail {
        diagnostics: truncate_diagnostics(&diagnostics, toolchain.diagnostics_cap),
    })
}

/// Result of running one candidate against every correctness case.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckResult {
    Pass,
    Fail { status: ValidationStatus, report: String },
}

/// Runs `executable` on each case (`prog <input> <output>`) and compares
/// the output file with the expected values.
pub fn check_correctness(
    executable: &Path,
    suite: &CorrectnessSuite,
    workdir: &Path,
) -> Result<CheckResult, ValidationError> {
    for case in &suite.cases {
        let output_path = workdir.join(format!("out-{}.csv", case.id));
        let _ = std::fs::remove_file(&output_path);
        let mut cmd = isolated_command(executable, workdir);
        cmd.arg(&case.input).arg(&output_path);
        let run = run_with_timeout(&mut cmd, suite.timeout, RUN_CAPTURE_CAP).map_err(io_err(executable))?;
        if run.timed_out {
            return Ok(CheckResult::Fail {
                status: ValidationStatus::RunFailed,
                report: format!(
                    "case `{}`: killed after exceeding the {:.0} s time limit",
                    case.id,
                    suite.timeout.as_secs_f64()
                ),
            });
        }
        if !run.success() {
            let status = run.status.map_or("unknown".to_string(), |s| s.to_string());
            return Ok(CheckResult::Fail {
                status: ValidationStatus::RunFailed,
                report: format!(
                    "case `{}`: program {status}\nstderr:\n{}",
                    case.id,
                    tail(&run.stderr, RUNTIME_ERROR_TAIL)
                ),
            });
        }
        let produced = match std::fs::read_to_string(&output_path) {
            Ok(text) => text,
            Err(_) => {
                return Ok(CheckResult::Fail {
                    status: ValidationStatus::Incorrect,
                    report: format!("case `{}`: no output file was written (expected argv[2])", case.id),
                })
            }
        };
        match compare_tables(&case.id, &produced, &case.expected, suite.tolerance) {
            Comparison::Pass { .. } => {}
            Comparison::Mismatch(m) => {
                return Ok(CheckResult::Fail {
                    status: ValidationStatus::Incorrect,
                    report: m.to_string(),
                })
            }
            Comparison::Malformed(reason) => {
                return Ok(CheckResult::Fail {
                    status: ValidationStatus::Incorrect,
                    report: format!("case `{}`: malformed output: {reason}", case.id),
                })
            }
        }
    }
    Ok(CheckResult::Pass)
}

/// Source of regenerated artifacts after a failed check.
pub trait Reviser {
    /// Sends `feedback` and returns the revised program, or `None` when the
    /// reply held no code.
    fn revise(&mut self, feedback: &str) -> Result<Option<String>, AgentError>;
}

impl<F> Reviser for F
where
    F: FnMut(&str) -> Result<Option<String>, AgentError>,
{
    fn revise(&mut self, feedback: &str) -> Result<Option<String>, AgentError> {
        self(feedback)
    }
}

/// Everything needed to check candidates for one problem.
#[derive(Debug, Clone, Copy)]
pub struct Validator<'a> {
    pub toolchain: &'a Toolchain,
    pub suite: &'a CorrectnessSuite,
    /// Per-iteration directory; each attempt gets its own subdirectory.
    pub workdir: &'a Path,
}

#[derive(Debug)]
pub struct ValidationRun {
    /// Most recent artifact that was produced.
    pub artifact: Option<String>,
    pub outcome: ValidationOutcome,
    /// Feedback messages sent to the implementor, in order.
    pub feedback: Vec<String>,
    /// Executable of the passing attempt.
    pub executable: Option<PathBuf>,
    /// Non-fatal agent error that ended the correction loop early.
    pub interrupted: Option<AgentError>,
}

pub fn feedback_message(status: ValidationStatus, report: &str) -> String {
    let what = match status {
        ValidationStatus::CompileFailed => "The program failed to compile. Compiler output:",
        ValidationStatus::RunFailed => "The program compiled but failed at run time:",
        ValidationStatus::Incorrect => "The program ran but its output is incorrect:",
        ValidationStatus::NoCode => "Your reply did not contain a fenced code block.",
        ValidationStatus::Valid => "The program passed all checks.",
    };
    format!(
        "{what}\n\n{}\n\nFix the problem and reply with the complete corrected program in a single fenced code block.",
        report.trim_end()
    )
}

impl Validator<'_> {
    /// Compile plus correctness for one attempt, in `workdir/attempt-<n>`.
    pub fn check_attempt(&self, artifact: &str, attempt: u32) -> Result<(CheckResult, Option<PathBuf>), ValidationError> {
        let dir = self.workdir.join(format!("attempt-{attempt}"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let executable = match check_compile(artifact, self.toolchain, &dir)? {
            CompileOutcome::Pass { executable } => executable,
            CompileOutcome::Fail { diagnostics } => {
                return Ok((
                    CheckResult::Fail {
                        status: ValidationStatus::CompileFailed,
                        report: diagnostics,
                    },
                    None,
                ))
            }
        };
        let result = check_correctness(&executable, self.suite, &dir)?;
        let exe = matches!(result, CheckResult::Pass).then_some(executable);
        Ok((result, exe))
    }

    /// Checks `initial`, feeding failures back to `reviser` for at most
    /// `max_corrections` regenerations. `None` stands for a reply without
    /// code.
    pub fn validate_with_retries(
        &self,
        initial: Option<String>,
        reviser: &mut dyn Reviser,
        max_corrections: u32,
    ) -> Result<ValidationRun, ValidationError> {
        let mut artifact: Option<String> = None;
        let mut candidate = initial;
        let mut attempts_used = 0u32;
        let mut history = Vec::new();
        let mut feedback = Vec::new();

        loop {
            let (result, executable) = match candidate.take() {
                Some(code) => {
                    let checked = self.check_attempt(&code, attempts_used)?;
                    artifact = Some(code);
                    checked
                }
                None => (
                    CheckResult::Fail {
                        status: ValidationStatus::NoCode,
                        report: "no fenced code block found in the reply".into(),
                    },
                    None,
                ),
            };
            let (status, report) = match result {
                CheckResult::Pass => {
                    history.push(ValidationStatus::Valid);
                    return Ok(ValidationRun {
                        artifact,
                        outcome: ValidationOutcome {
                            status: ValidationStatus::Valid,
                            attempts_used,
                            last_error: None,
                            history,
                        },
                        feedback,
                        executable,
                        interrupted: None,
                    });
                }
                CheckResult::Fail { status, report } => (status, report),
            };
            history.push(status);
            let failed = |history, interrupted| ValidationRun {
                artifact: artifact.clone(),
                outcome: ValidationOutcome {
                    status,
                    attempts_used,
                    last_error: Some(report.clone()),
                    history,
                },
                feedback: feedback.clone(),
                executable: None,
                interrupted,
            };
            if attempts_used >= max_corrections {
                return Ok(failed(history, None));
            }
            let message = feedback_message(status, &report);
            match reviser.revise(&message) {
                Ok(next) => {
                    feedback.push(message);
                    attempts_used += 1;
                    candidate = next;
                }
                Err(e) if !e.is_fatal() => {
                    log::warn!("correction loop interrupted: {e}");
                    return Ok(failed(history, Some(e)));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}
