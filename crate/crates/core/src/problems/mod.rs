//! Problem packs: reference oracles, dataset generation and the material
//! shown to the agents.

pub mod io;
pub mod kinetics;
pub mod matmul;
mod text;

use std::fmt;
use std::io as stdio;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validation::{CorrectnessCase, CorrectnessSuite};
use io::{format_table, parse_table, Table};
use kinetics::{DEFAULT_DT, DEFAULT_STEPS, DEFAULT_SUBSTEPS};
use matmul::Matrix;

pub use text::{brief, hints, implementor_system, sketch, Sketch};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Kinetics,
    Matmul,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Kinetics => "kinetics",
            ProblemKind::Matmul => "matmul",
        }
    }

    /// Maximum relative error accepted by the correctness check.
    pub fn tolerance(self) -> f64 {
        match self {
            ProblemKind::Kinetics => 1e-4,
            ProblemKind::Matmul => 1e-6,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kinetics" => Ok(ProblemKind::Kinetics),
            "matmul" => Ok(ProblemKind::Matmul),
            other => Err(format!("unknown problem `{other}` (expected kinetics or matmul)")),
        }
    }
}

/// Dataset sizing. Unset fields take the desk-scale or full-scale defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub full_scale: bool,
    /// Matmul: matrix dimensions checked for correctness.
    pub correctness_sizes: Option<Vec<usize>>,
    /// Kinetics: cell counts; matmul: matrix dimensions.
    pub profile_sizes: Option<Vec<usize>>,
    /// Kinetics: initial conditions in the correctness set.
    pub conditions: Option<usize>,
    /// Kinetics: time steps per condition.
    pub steps: Option<u64>,
}

impl DatasetOptions {
    pub fn full() -> Self {
        DatasetOptions {
            full_scale: true,
            ..Self::default()
        }
    }

    fn correctness_sizes(&self) -> Vec<usize> {
        self.correctness_sizes.clone().unwrap_or_else(|| {
            if self.full_scale {
                vec![10, 1000]
            } else {
                vec![10, 100, 256]
            }
        })
    }

    fn profile_sizes(&self, kind: ProblemKind) -> Vec<usize> {
        if let Some(sizes) = &self.profile_sizes {
            return sizes.clone();
        }
        match (kind, self.full_scale) {
            (ProblemKind::Kinetics, false) => vec![10, 100, 1_000, 10_000],
            (ProblemKind::Kinetics, true) => vec![10, 100, 1_000, 10_000, 100_000, 1_000_000],
            (ProblemKind::Matmul, false) => vec![32, 64, 128, 256, 512],
            (ProblemKind::Matmul, true) => vec![32, 64, 128, 256, 512, 1024, 2048, 4096],
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: stdio::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("invalid dataset options: {0}")]
    Options(String),
}

fn io_err(path: &Path) -> impl FnOnce(stdio::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessEntry {
    pub id: String,
    pub input: String,
    pub expected: String,
    /// Rows in the input file (kinetics) or matrix dimension (matmul).
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub id: String,
    pub input: String,
    pub size: usize,
}

/// Index of a generated dataset; file names are relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub problem: ProblemKind,
    pub seed: u64,
    pub tolerance: f64,
    pub options: DatasetOptions,
    pub correctness: Vec<CorrectnessEntry>,
    pub profile: Vec<ProfileEntry>,
}

/// A dataset on disk with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// A profiling input for the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCondition {
    pub id: String,
    pub input: PathBuf,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest = serde_json::from_str(&text).map_err(|source| DatasetError::Manifest { path, source })?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Reads all expected outputs into a correctness suite.
    pub fn correctness_suite(&self, timeout: Duration) -> Result<CorrectnessSuite, DatasetError> {
        let cases = self
            .manifest
            .correctness
            .iter()
            .map(|e| {
                let path = self.dir.join(&e.expected);
                let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                let expected = parse_table(&text).map_err(|err| DatasetError::Data {
                    path: path.clone(),
                    reason: err.to_string(),
                })?;
                Ok(CorrectnessCase {
                    id: e.id.clone(),
                    input: self.dir.join(&e.input),
                    expected,
                })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        Ok(CorrectnessSuite {
            cases,
            tolerance: self.manifest.tolerance,
            timeout,
        })
    }

    pub fn profile_conditions(&self) -> Vec<ProfileCondition> {
        self.manifest
            .profile
            .iter()
            .map(|e| ProfileCondition {
                id: e.id.clone(),
                input: self.dir.join(&e.input),
            })
            .collect()
    }
}

fn write_readonly(path: &Path, contents: &str) -> Result<(), DatasetError> {
    std::fs::write(path, contents).map_err(io_err(path))?;
    let mut perms = std::fs::metadata(path).map_err(io_err(path))?.permissions();
    perms.set_readonly(true);
    std::fs::set_permissions(path, perms).map_err(io_err(path))
}

/// Stream-separated generator so each file's contents depend only on the
/// seed and its position in the dataset.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Writes the dataset for `kind` into `dir`, replacing any previous one.
pub fn generate_dataset(
    kind: ProblemKind,
    dir: &Path,
    seed: u64,
    options: &DatasetOptions,
) -> Result<Dataset, DatasetError> {
    let profile_sizes = options.profile_sizes(kind);
    if profile_sizes.is_empty() || profile_sizes.contains(&0) {
        return Err(DatasetError::Options("profile sizes must be non-empty and positive".into()));
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut correctness = Vec::new();
    let mut profile = Vec::new();
    let emit = |name: String, table: &Table| -> Result<String, DatasetError> {
        write_readonly(&dir.join(&name), &format_table(table))?;
        Ok(name)
    };

    match kind {
        ProblemKind::Kinetics => {
            let n = options.conditions.unwrap_or(100);
            let steps = options.steps.unwrap_or(DEFAULT_STEPS);
            if n == 0 {
                return Err(DatasetError::Options("at least one initial condition is required".into()));
            }
            let pairs = kinetics::generate_kinetics_truth(&mut rng_for(seed, 0), n, DEFAULT_DT, steps, DEFAULT_SUBSTEPS);
            let input: Table = pairs.iter().map(|(s, _)| kinetics::input_row(s, DEFAULT_DT, steps)).collect();
            let expected: Table = pairs.iter().map(|(_, f)| kinetics::output_row(f)).collect();
            let id = format!("conditions-{n}");
            correctness.push(CorrectnessEntry {
                input: emit(format!("{id}.input.csv"), &input)?,
                expected: emit(format!("{id}.expected.csv"), &expected)?,
                id,
                size: n,
            });
            for (i, &cells) in profile_sizes.iter().enumerate() {
                let mut rng = rng_for(seed, 1000 + i as u64);
                let rows: Table = (0..cells)
                    .map(|_| kinetics::input_row(&kinetics::sample_initial(&mut rng), DEFAULT_DT, steps))
                    .collect();
                let id = format!("cells-{cells}");
                profile.push(ProfileEntry {
                    input: emit(format!("profile-{id}.input.csv"), &rows)?,
                    id,
                    size: cells,
                });
            }
        }
        ProblemKind::Matmul => {
            let sizes = options.correctness_sizes();
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(DatasetError::Options("correctness sizes must be non-empty and positive".into()));
            }
            for (i, &n) in sizes.iter().enumerate() {
                let mut rng = rng_for(seed, i as u64);
                let a = Matrix::random(&mut rng, n);
                let b = Matrix::random(&mut rng, n);
                let c = matmul::matmul_truth(&a, &b).expect("square inputs of equal size");
                let id = format!("n-{n}");
                correctness.push(CorrectnessEntry {
                    input: emit(format!("{id}.input.csv"), &matmul::input_rows(&a, &b))?,
                    expected: emit(format!("{id}.expected.csv"), &matmul::output_rows(&c))?,
                    id,
                    size: n,
                });
            }
            for (i, &n) in profile_sizes.iter().enumerate() {
                let mut rng = rng_for(seed, 1000 + i as u64);
                let a = Matrix::random(&mut rng, n);
                let b = Matrix::random(&mut rng, n);
                let id = format!("n-{n}");
                profile.push(ProfileEntry {
                    input: emit(format!("profile-{id}.input.csv"), &matmul::input_rows(&a, &b))?,
                    id,
                    size: n,
                });
            }
        }
    }

    let manifest = Manifest {
        problem: kind,
        seed,
        tolerance: kind.tolerance(),
        options: options.clone(),
        correctness,
        profile,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_readonly(&dir.join(MANIFEST_NAME), &(text + "\n"))?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}
