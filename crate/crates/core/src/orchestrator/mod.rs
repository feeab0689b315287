//! The optimization loop: curate, decide, implement, validate, evaluate,
//! record, for a fixed number of iterations.

mod config;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use config::{default_curation, EndpointConfig, RunConfig, API_KEY_ENV, BASE_URL_ENV};

use crate::agent::{
    implementor_task, strategist_decide, AgentEndpoint, AgentError, ChatBackend, HttpBackend, ImplementorSession,
    ScriptedBackend, StrategistRequest, Strategy, TurnUsage,
};
use crate::evaluator::{evaluate, EvaluationError};
use crate::problems::{self, Dataset, DatasetError, ProfileCondition};
use crate::trace::{curate_context, DesignRecord, TokenUsage, Trace, TraceError, TraceHeader, TraceWriter, Transcripts};
use crate::validation::{CorrectnessSuite, ValidationError, ValidationOutcome, ValidationStatus, Validator};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("trace {0} already exists; resume it or choose another path")]
    TraceExists(PathBuf),
    #[error("trace {0} has no header; it was not written by a run")]
    MissingHeader(PathBuf),
    #[error("configuration fingerprint {found} differs from the trace's {expected}; refusing to resume")]
    FingerprintMismatch { expected: String, found: String },
    #[error("agent failure: {0}")]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Validation(ValidationError),
    #[error("evaluation: {0}")]
    Evaluation(EvaluationError),
}

impl From<ValidationError> for RunError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Agent(a) => RunError::Agent(a),
            other => RunError::Validation(other),
        }
    }
}

/// Chat backends for both agents.
pub struct Agents {
    pub strategist: Box<dyn ChatBackend>,
    pub implementor: Box<dyn ChatBackend>,
}

impl Agents {
    pub fn new(strategist: impl ChatBackend + 'static, implementor: impl ChatBackend + 'static) -> Self {
        Agents {
            strategist: Box::new(strategist),
            implementor: Box::new(implementor),
        }
    }

    /// Scripted backends where a script is configured, HTTP otherwise. The
    /// credential comes from the environment.
    pub fn from_config(config: &RunConfig) -> Result<Self, RunError> {
        let api_key = std::env::var(API_KEY_ENV).ok();
        let make = |ep: &EndpointConfig| -> Result<Box<dyn ChatBackend>, RunError> {
            Ok(match &ep.script {
                Some(path) => Box::new(ScriptedBackend::load(path)?),
                None => Box::new(HttpBackend::new(api_key.clone())?),
            })
        };
        Ok(Agents {
            strategist: make(&config.strategist)?,
            implementor: make(&config.implementor)?,
        })
    }
}

/// Scratch directory of a run: the dataset and per-iteration builds.
/// The path is absolute because candidates run with their own working
/// directory.
pub fn work_dir(trace_path: &Path) -> PathBuf {
    let trace_path = std::path::absolute(trace_path).unwrap_or_else(|_| trace_path.to_path_buf());
    let mut name = trace_path.file_name().unwrap_or_default().to_os_string();
    name.push(".work");
    trace_path.with_file_name(name)
}

fn ensure_dataset(config: &RunConfig, dir: &Path) -> Result<Dataset, RunError> {
    if let Ok(ds) = Dataset::load(dir) {
        let m = &ds.manifest;
        if m.problem == config.problem && m.seed == config.seed && m.options == config.dataset {
            return Ok(ds);
        }
    }
    log::info!("generating {} dataset in {}", config.problem, dir.display());
    Ok(problems::generate_dataset(config.problem, dir, config.seed, &config.dataset)?)
}

struct Loop<'a> {
    config: &'a RunConfig,
    agents: &'a mut Agents,
    strategist_ep: AgentEndpoint,
    implementor_ep: AgentEndpoint,
    suite: CorrectnessSuite,
    conditions: Vec<ProfileCondition>,
    work: PathBuf,
    brief: String,
}

impl<'a> Loop<'a> {
    fn new(config: &'a RunConfig, trace_path: &Path, agents: &'a mut Agents) -> Result<Self, RunError> {
        config.validate()?;
        let work = work_dir(trace_path);
        let dataset = ensure_dataset(config, &work.join("dataset"))?;
        let timeout = Duration::from_secs_f64(config.evaluation.timeout_secs);
        let base_override = std::env::var(BASE_URL_ENV).ok().filter(|s| !s.is_empty());
        Ok(Loop {
            strategist_ep: config.strategist.endpoint(config.temperature, base_override.as_deref()),
            implementor_ep: config.implementor.endpoint(config.temperature, base_override.as_deref()),
            suite: dataset.correctness_suite(timeout)?,
            conditions: dataset.profile_conditions(),
            brief: problems::brief(config.problem),
            config,
            agents,
            work,
        })
    }

    fn run(&mut self, writer: &mut TraceWriter) -> Result<(), RunError> {
        let start = writer.trace().last_iteration() + 1;
        for t in start..=self.config.iterations {
            let record = self.iteration(t, &writer.trace().records)?;
            log::info!(
                "iteration {t}: {} {} score {}",
                record.strategy,
                record.validation.status,
                record.score.map_or("-".to_string(), |s| format!("{s:.6e}"))
            );
            writer.append(record)?;
        }
        Ok(())
    }

    fn iteration(&mut self, t: u32, history: &[DesignRecord]) -> Result<DesignRecord, RunError> {
        let started = Instant::now();
        let config = self.config;
        let context = curate_context(history, config.curation());
        let request = StrategistRequest {
            context: &context,
            brief: &self.brief,
            sketch: config.sketch.map(|s| problems::sketch(config.problem, s)),
            hints: if config.hints { problems::hints(config.problem) } else { "" },
            iteration: t,
            history_len: history.len(),
            code_lang: &config.toolchain.language,
        };
        let turn = strategist_decide(self.agents.strategist.as_mut(), &self.strategist_ep, &request);
        let mut record = DesignRecord {
            iteration: t,
            strategy: Strategy::NotAvailable,
            instructions: String::new(),
            artifact: None,
            validation: ValidationOutcome::no_code("strategist reply held no usable decision"),
            metrics: Vec::new(),
            score: None,
            transcripts: Transcripts {
                strategist: turn.transcript,
                implementor: Vec::new(),
            },
            tokens: TokenUsage::default(),
            wall_clock: 0.0,
        };
        add_usage(&mut record.tokens, turn.usage, true);

        let decision = match turn.outcome {
            Ok(d) => d,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                log::warn!("iteration {t}: strategist failed: {e}");
                record.validation = ValidationOutcome::no_code(format!("strategist request failed: {e}"));
                record.wall_clock = started.elapsed().as_secs_f64();
                return Ok(record);
            }
        };
        record.strategy = decision.strategy;
        record.instructions = decision.instructions;
        if !decision.strategy.is_available() {
            record.wall_clock = started.elapsed().as_secs_f64();
            return Ok(record);
        }

        let iter_dir = self.work.join(format!("iter-{t:04}"));
        if iter_dir.exists() {
            std::fs::remove_dir_all(&iter_dir).map_err(|e| RunError::Config(format!("{}: {e}", iter_dir.display())))?;
        }
        let mut session = ImplementorSession::new(
            self.agents.implementor.as_mut(),
            &self.implementor_ep,
            problems::implementor_system(&config.toolchain.language),
        );
        let validator = Validator {
            toolchain: &config.toolchain,
            suite: &self.suite,
            workdir: &iter_dir,
        };
        let first = session.generate(implementor_task(&self.brief, &record.instructions));
        let run = match first {
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                log::warn!("iteration {t}: implementor failed: {e}");
                let (transcript, usage) = session.into_parts();
                record.transcripts.implementor = transcript;
                add_usage(&mut record.tokens, usage, false);
                record.validation = ValidationOutcome::no_code(format!("implementor request failed: {e}"));
                record.wall_clock = started.elapsed().as_secs_f64();
                return Ok(record);
            }
            Ok(code) => validator.validate_with_retries(code, &mut session, config.max_corrections)?,
        };
        let (transcript, usage) = session.into_parts();
        record.transcripts.implementor = transcript;
        add_usage(&mut record.tokens, usage, false);
        record.artifact = run.artifact;
        record.validation = run.outcome;

        if let Some(exe) = run.executable.filter(|_| record.is_valid()) {
            match evaluate(&exe, &self.conditions, &config.evaluation, &iter_dir.join("profile")) {
                Ok(report) => {
                    record.metrics = report.per_condition;
                    record.score = Some(report.score);
                }
                Err(EvaluationError::RunFailed { condition, rep, report }) => {
                    record.validation.status = ValidationStatus::RunFailed;
                    record.validation.last_error =
                        Some(format!("profiling condition `{condition}` repetition {rep}: {report}"));
                    if let Some(last) = record.validation.history.last_mut() {
                        *last = ValidationStatus::RunFailed;
                    }
                }
                Err(EvaluationError::Measurement(e)) => {
                    record.validation.status = ValidationStatus::RunFailed;
                    record.validation.last_error = Some(format!("measurement error: {e}"));
                }
                Err(e) => return Err(RunError::Evaluation(e)),
            }
        }
        record.wall_clock = started.elapsed().as_secs_f64();
        Ok(record)
    }
}

fn add_usage(tokens: &mut TokenUsage, usage: TurnUsage, strategist: bool) {
    if strategist {
        tokens.strategist_in += usage.input;
        tokens.strategist_out += usage.output;
        tokens.strategist_calls += usage.calls;
    } else {
        tokens.implementor_in += usage.input;
        tokens.implementor_out += usage.output;
        tokens.implementor_calls += usage.calls;
    }
    tokens.estimated |= usage.estimated;
}

/// Runs all `config.iterations` iterations into a new trace at
/// `trace_path`. On a fatal agent error the records written so far stay
/// on disk.
pub fn run_optimization(config: &RunConfig, trace_path: &Path, agents: &mut Agents) -> Result<Trace, RunError> {
    if trace_path.exists() && std::fs::metadata(trace_path).is_ok_and(|m| m.len() > 0) {
        return Err(RunError::TraceExists(trace_path.to_path_buf()));
    }
    let mut runner = Loop::new(config, trace_path, agents)?;
    let mut writer = TraceWriter::create(trace_path, Some(TraceHeader::for_config(config)))?;
    runner.run(&mut writer)?;
    Ok(writer.into_trace())
}

/// Continues an interrupted run. The trace must have been written under a
/// configuration with the same fingerprint.
pub fn resume(config: &RunConfig, trace_path: &Path, agents: &mut Agents) -> Result<Trace, RunError> {
    let mut writer = TraceWriter::open(trace_path)?;
    let header = writer
        .trace()
        .header
        .clone()
        .ok_or_else(|| RunError::MissingHeader(trace_path.to_path_buf()))?;
    let found = config.fingerprint();
    if header.fingerprint != found {
        return Err(RunError::FingerprintMismatch {
            expected: header.fingerprint,
            found,
        });
    }
    let records = &writer.trace().records;
    let strategist_calls: u64 = records.iter().map(|r| u64::from(r.tokens.strategist_calls)).sum();
    let implementor_calls: u64 = records.iter().map(|r| u64::from(r.tokens.implementor_calls)).sum();
    agents.strategist.resume_at(strategist_calls);
    agents.implementor.resume_at(implementor_calls);
    log::info!("resuming {} after iteration {}", trace_path.display(), writer.trace().last_iteration());
    let mut runner = Loop::new(config, trace_path, agents)?;
    runner.run(&mut writer)?;
    Ok(writer.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn work_dir_sits_next_to_trace() {
        assert_eq!(work_dir(Path::new("/runs/k1.jsonl")), PathBuf::from("/runs/k1.jsonl.work"));
        let rel = work_dir(Path::new("t"));
        assert!(rel.is_absolute());
        assert!(rel.ends_with("t.work"));
    }

    #[test]
    fn usage_accumulates_per_agent() {
        let mut tokens = TokenUsage::default();
        add_usage(&mut tokens, TurnUsage { input: 10, output: 2, estimated: false, calls: 1 }, true);
        add_usage(&mut tokens, TurnUsage { input: 30, output: 9, estimated: true, calls: 3 }, false);
        assert_eq!((tokens.strategist_in, tokens.strategist_out, tokens.strategist_calls), (10, 2, 1));
        assert_eq!((tokens.implementor_in, tokens.implementor_out, tokens.implementor_calls), (30, 9, 3));
        assert!(tokens.estimated);
    }
}
