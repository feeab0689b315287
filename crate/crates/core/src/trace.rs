//! The design trace: an append-only log of every optimization iteration.
//!
//! On disk a trace is a line-delimited JSON file. The first line may be a
//! header (`{"header": {...}}`) carrying the run configuration and its
//! fingerprint; every following line is one [`DesignRecord`]. A torn final
//! line left by a crash is dropped on load, so at most the in-flight
//! iteration is lost.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{ChatMessage, Role, Strategy};
use crate::orchestrator::RunConfig;
use crate::validation::{ValidationOutcome, ValidationStatus};

/// Current on-disk trace format version.
pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("iteration index {got} breaks contiguity (expected {expected})")]
    NonContiguous { expected: u32, got: u32 },
    #[error("invalid record for iteration {iteration}: {reason}")]
    InvalidRecord { iteration: u32, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: header must be the first line (found at line {line})")]
    MisplacedHeader { path: PathBuf, line: usize },
}

impl TraceError {
    fn io(path: &Path, source: io::Error) -> Self {
        TraceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Timing of one profiling condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition: String,
    /// Mean runtime in seconds.
    pub mean: f64,
    /// Per-repetition runtimes in seconds.
    pub reps: Vec<f64>,
    /// True when the candidate printed no measurement markers and the whole
    /// process wall time was used instead.
    #[serde(default)]
    pub fallback_timing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcripts {
    pub strategist: Vec<ChatMessage>,
    pub implementor: Vec<ChatMessage>,
}

/// Token and request accounting for one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub strategist_in: u64,
    pub strategist_out: u64,
    pub implementor_in: u64,
    pub implementor_out: u64,
    /// Set when at least one count was estimated from byte length because the
    /// endpoint did not report usage.
    #[serde(default)]
    pub estimated: bool,
    /// Number of chat requests issued to each agent (including failed ones).
    #[serde(default)]
    pub strategist_calls: u32,
    #[serde(default)]
    pub implementor_calls: u32,
}

/// One optimization iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub iteration: u32,
    pub strategy: Strategy,
    pub instructions: String,
    pub artifact: Option<String>,
    pub validation: ValidationOutcome,
    pub metrics: Vec<ConditionMetrics>,
    pub score: Option<f64>,
    pub transcripts: Transcripts,
    pub tokens: TokenUsage,
    /// Wall-clock seconds spent on the iteration.
    pub wall_clock: f64,
}

impl DesignRecord {
    pub fn is_valid(&self) -> bool {
        self.validation.status == ValidationStatus::Valid
    }

    pub fn has_code(&self) -> bool {
        self.artifact.is_some()
    }

    /// Aggregate runtime (seconds) of a valid design, i.e. the negated score.
    pub fn runtime(&self) -> Option<f64> {
        self.score.map(|s| -s)
    }

    /// Equality on everything except measured quantities (wall clock,
    /// runtimes and the score value). Two replays of a scripted run agree
    /// under this relation even though timings differ. Strategist prompts
    /// quote earlier measurements, so only their roles are compared.
    pub fn same_design(&self, other: &DesignRecord) -> bool {
        self.iteration == other.iteration
            && self.strategy == other.strategy
            && self.instructions == other.instructions
            && self.artifact == other.artifact
            && self.validation == other.validation
            && self.score.is_some() == other.score.is_some()
            && self.metrics.len() == other.metrics.len()
            && self
                .metrics
                .iter()
                .zip(&other.metrics)
                .all(|(a, b)| a.condition == b.condition && a.reps.len() == b.reps.len())
            && same_strategist_transcript(&self.transcripts.strategist, &other.transcripts.strategist)
            && self.transcripts.implementor == other.transcripts.implementor
            && self.tokens == other.tokens
    }

    fn check(&self) -> Result<(), TraceError> {
        let invalid = |reason: &str| TraceError::InvalidRecord {
            iteration: self.iteration,
            reason: reason.to_string(),
        };
        if self.iteration == 0 {
            return Err(invalid("iteration indices start at 1"));
        }
        if self.score.is_some() != self.is_valid() {
            return Err(invalid("score must be present exactly when validation is valid"));
        }
        if let Some(score) = self.score {
            if !score.is_finite() {
                return Err(invalid("score must be finite"));
            }
        }
        if self.is_valid() && self.validation.last_error.is_some() {
            return Err(invalid("valid outcome carries an error"));
        }
        Ok(())
    }
}

fn same_strategist_transcript(a: &[ChatMessage], b: &[ChatMessage]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.role == y.role && (x.role == Role::User || x.content == y.content))
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub fingerprint: String,
    pub config: RunConfig,
}

impl TraceHeader {
    pub fn for_config(config: &RunConfig) -> Self {
        TraceHeader {
            format: TRACE_FORMAT,
            fingerprint: config.fingerprint(),
            config: config.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

/// In-memory trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub records: Vec<DesignRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_header(header: TraceHeader) -> Self {
        Trace {
            header: Some(header),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_iteration(&self) -> u32 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// Appends a record after checking contiguity and record invariants.
    pub fn append(&mut self, record: DesignRecord) -> Result<(), TraceError> {
        let expected = self.last_iteration() + 1;
        if record.iteration != expected {
            return Err(TraceError::NonContiguous {
                expected,
                got: record.iteration,
            });
        }
        record.check()?;
        self.records.push(record);
        Ok(())
    }

    /// The highest-scoring design; ties go to the earlier iteration.
    pub fn best(&self) -> Option<&DesignRecord> {
        self.records
            .iter()
            .filter_map(|r| r.score.map(|s| (s, r)))
            .fold(None, |best: Option<(f64, &DesignRecord)>, (s, r)| match best {
                Some((bs, _)) if bs >= s => best,
                _ => Some((s, r)),
            })
            .map(|(_, r)| r)
    }

    /// Records strictly before `iteration` (the design database at that point).
    pub fn prefix(&self, iteration: u32) -> &[DesignRecord] {
        let end = self.records.partition_point(|r| r.iteration < iteration);
        &self.records[..end]
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(header) = &self.header {
            out.push_str(&header_line(header));
            out.push('\n');
        }
        for record in &self.records {
            out.push_str(&record_line(record));
            out.push('\n');
        }
        out
    }

    /// Parses trace text. A final line without a terminating newline that
    /// fails to parse is treated as a torn write and dropped.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Trace, TraceError> {
        let mut trace = Trace::new();
        let torn_tail = !text.is_empty() && !text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let last = idx + 1 == lines.len();
            let value: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(_) if last && torn_tail => {
                    log::warn!("{}: dropping torn final line", path.display());
                    break;
                }
                Err(source) => {
                    return Err(TraceError::Parse {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        source,
                    })
                }
            };
            let parse_err = |source| TraceError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            };
            if value.get("header").is_some() {
                if trace.header.is_some() || !trace.records.is_empty() {
                    return Err(TraceError::MisplacedHeader {
                        path: path.to_path_buf(),
                        line: idx + 1,
                    });
                }
                let h: HeaderLine = serde_json::from_value(value).map_err(parse_err)?;
                trace.header = Some(h.header);
            } else {
                let record: DesignRecord = serde_json::from_value(value).map_err(parse_err)?;
                trace.append(record)?;
            }
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Trace, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
        Trace::from_jsonl(&text, path)
    }
}

fn header_line(header: &TraceHeader) -> String {
    serde_json::to_string(&HeaderLine {
        header: header.clone(),
    })
    .expect("trace header serializes")
}

fn record_line(record: &DesignRecord) -> String {
    serde_json::to_string(record).expect("design record serializes")
}

/// Durable single-writer handle on a trace file.
#[derive(Debug)]
pub struct TraceWriter {
    path: PathBuf,
    file: File,
    trace: Trace,
}

impl TraceWriter {
    /// Creates (or truncates) a trace file, writing the header if given.
    pub fn create(path: &Path, header: Option<TraceHeader>) -> Result<Self, TraceError> {
        let mut file = File::create(path).map_err(|e| TraceError::io(path, e))?;
        if let Some(h) = &header {
            writeln!(file, "{}", header_line(h)).map_err(|e| TraceError::io(path, e))?;
            file.sync_data().map_err(|e| TraceError::io(path, e))?;
        }
        Ok(TraceWriter {
            path: path.to_path_buf(),
            file,
            trace: Trace {
                header,
                records: Vec::new(),
            },
        })
    }

    /// Opens an existing trace for appending, cutting off any torn tail.
    pub fn open(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
        let trace = Trace::from_jsonl(&text, path)?;
        let keep = text.rfind('\n').map_or(0, |i| i + 1) as u64;
        let mut file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| TraceError::io(path, e))?;
        file.set_len(keep).map_err(|e| TraceError::io(path, e))?;
        file.seek(SeekFrom::End(0))
            .map_err(|e| TraceError::io(path, e))?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            file,
            trace,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Validates and durably appends one record.
    pub fn append(&mut self, record: DesignRecord) -> Result<(), TraceError> {
        let line = record_line(&record);
        self.trace.append(record)?;
        let path = &self.path;
        writeln!(self.file, "{line}").map_err(|e| TraceError::io(path, e))?;
        self.file.sync_data().map_err(|e| TraceError::io(path, e))?;
        Ok(())
    }
}

/// Streams records from a trace file without holding the whole trace.
pub fn read_records(path: &Path) -> Result<Vec<DesignRecord>, TraceError> {
    let file = File::open(path).map_err(|e| TraceError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TraceError::io(path, e))?;
        text.push_str(&line);
        text.push('\n');
    }
    Ok(Trace::from_jsonl(&text, path)?.records)
}

/// Curation pool sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curation {
    pub top: usize,
    pub bottom: usize,
    pub recent: usize,
}

/// The subset of the design database shown to the strategist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedContext<'a> {
    /// Best designs, score descending.
    pub top: Vec<&'a DesignRecord>,
    /// Worst designs, score ascending.
    pub bottom: Vec<&'a DesignRecord>,
    /// Most recent remaining designs, iteration descending.
    pub recent: Vec<&'a DesignRecord>,
}

impl<'a> CuratedContext<'a> {
    pub fn len(&self) -> usize {
        self.top.len() + self.bottom.len() + self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a DesignRecord> + '_ {
        self.top
            .iter()
            .chain(&self.bottom)
            .chain(&self.recent)
            .copied()
    }
}

/// Selects the top, bottom and recent pools from `records`.
///
/// Only scored records compete for top and bottom. A record already taken by
/// a higher-priority pool (top > bottom > recent) is skipped and the next
/// candidate fills the slot. Equal scores rank the earlier iteration first.
pub fn curate_context(records: &[DesignRecord], curation: Curation) -> CuratedContext<'_> {
    let mut scored: Vec<(f64, &DesignRecord)> = records
        .iter()
        .filter_map(|r| r.score.map(|s| (s, r)))
        .collect();

    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.iteration.cmp(&b.1.iteration)));
    let top: Vec<&DesignRecord> = scored.iter().take(curation.top).map(|(_, r)| *r).collect();
    let taken = |set: &[&DesignRecord], r: &DesignRecord| set.iter().any(|t| t.iteration == r.iteration);

    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.iteration.cmp(&b.1.iteration)));
    let bottom: Vec<&DesignRecord> = scored
        .iter()
        .map(|(_, r)| *r)
        .filter(|r| !taken(&top, r))
        .take(curation.bottom)
        .collect();

    let recent: Vec<&DesignRecord> = records
        .iter()
        .rev()
        .filter(|r| !taken(&top, r) && !taken(&bottom, r))
        .take(curation.recent)
        .collect();

    CuratedContext {
        top,
        bottom,
        recent,
    }
}
