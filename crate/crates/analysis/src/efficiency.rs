//! Agreement between the strategist's intent, a GP-UCB proposer and the
//! implementor's realized design.

use serde::Serialize;

use designloop::trace::{curate_context, Curation};
use designloop::DesignRecord;

use crate::bo::{bo_propose, Bounds};
use crate::pca::Pca;
use crate::phi::{classify_phi, classify_strategist, Label};
use crate::vectorize::Corpus;
use crate::{AnalysisError, Result};

/// Which earlier designs form the reference set at each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextMode {
    /// Every earlier design that produced code.
    AllPrior,
    /// The curated context the strategist saw.
    Curated(Curation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyOptions {
    pub xi: f64,
    pub seed: u64,
    pub context: ContextMode,
    /// Restrict the reference set to valid designs.
    pub valid_only: bool,
    /// Project code vectors onto this many principal components first.
    pub pca_dims: Option<usize>,
}

impl EfficiencyOptions {
    pub fn new(xi: f64, seed: u64) -> Self {
        EfficiencyOptions {
            xi,
            seed,
            context: ContextMode::AllPrior,
            valid_only: false,
            pca_dims: None,
        }
    }
}

/// Source of the Bayesian-optimization sample point for an iteration.
pub trait Proposer {
    fn propose(&mut self, iteration: u32, observed: &[(Vec<f64>, f64)], bounds: &Bounds) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct UcbProposer {
    pub xi: f64,
    pub seed: u64,
}

impl Proposer for UcbProposer {
    fn propose(&mut self, iteration: u32, observed: &[(Vec<f64>, f64)], bounds: &Bounds) -> Result<Vec<f64>> {
        let seed = self.seed ^ (iteration as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Ok(bo_propose(observed, self.xi, bounds, seed)?.point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationAlignment {
    pub iteration: u32,
    pub strategist: Label,
    pub optimizer: Label,
    pub implementor: Label,
    pub context_size: usize,
}

impl IterationAlignment {
    pub fn strategist_optimizer(&self) -> bool {
        self.strategist == self.optimizer
    }

    pub fn strategist_implementor(&self) -> bool {
        self.strategist == self.implementor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub xi: f64,
    pub percent: f64,
    pub iterations: Vec<IterationAlignment>,
    /// Iterations left out, with the reason.
    pub excluded: Vec<(u32, String)>,
}

/// Mean of both agreement indicators over the iterations, in percent.
pub fn efficiency_percent(alignments: &[IterationAlignment]) -> Option<f64> {
    if alignments.is_empty() {
        return None;
    }
    let hits: usize = alignments
        .iter()
        .map(|a| a.strategist_optimizer() as usize + a.strategist_implementor() as usize)
        .sum();
    Some(hits as f64 / (2 * alignments.len()) as f64 * 100.0)
}

pub fn search_efficiency(records: &[DesignRecord], options: &EfficiencyOptions) -> Result<EfficiencyReport> {
    let mut proposer = UcbProposer {
        xi: options.xi,
        seed: options.seed,
    };
    search_efficiency_with(records, options, &mut proposer)
}

/// Like [`search_efficiency`] with a caller-supplied proposer.
pub fn search_efficiency_with(
    records: &[DesignRecord],
    options: &EfficiencyOptions,
    proposer: &mut dyn Proposer,
) -> Result<EfficiencyReport> {
    if !records.iter().any(|r| r.has_code()) {
        return Err(AnalysisError::Undefined("no iteration produced code".into()));
    }
    let corpus = Corpus::from_records(records)?;
    let mut points = corpus.points();
    if let Some(dims) = options.pca_dims {
        points = Pca::fit(&points, dims)?.project_all(&points);
    }
    let point_of = |iteration: u32| -> Option<&Vec<f64>> {
        corpus
            .vectors
            .iter()
            .position(|v| v.source_iteration == Some(iteration))
            .map(|i| &points[i])
    };

    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for (t, record) in records.iter().enumerate() {
        let Some(x_impl) = point_of(record.iteration) else {
            excluded.push((record.iteration, "no code".to_string()));
            continue;
        };
        let Some(intent) = classify_strategist(record.strategy) else {
            excluded.push((record.iteration, "strategy not available".to_string()));
            continue;
        };
        let prior = &records[..t];
        let context: Vec<&DesignRecord> = match options.context {
            ContextMode::AllPrior => prior.iter().collect(),
            ContextMode::Curated(c) => curate_context(prior, c).iter().collect(),
        };
        let context: Vec<&DesignRecord> = context
            .into_iter()
            .filter(|r| r.has_code() && (!options.valid_only || r.is_valid()))
            .collect();
        if context.is_empty() {
            excluded.push((record.iteration, "empty reference set".to_string()));
            continue;
        }
        let ref_points: Vec<Vec<f64>> = context
            .iter()
            .map(|r| point_of(r.iteration).expect("code-producing record has a vector").clone())
            .collect();
        let floor = context.iter().filter_map(|r| r.score).reduce(f64::min).unwrap_or(0.0);
        let observed: Vec<(Vec<f64>, f64)> = ref_points
            .iter()
            .zip(&context)
            .map(|(p, r)| (p.clone(), r.score.unwrap_or(floor)))
            .collect();
        let bounds = Bounds::around(&ref_points, options.pca_dims.is_none())?;
        let x_bo = proposer.propose(record.iteration, &observed, &bounds)?;
        included.push(IterationAlignment {
            iteration: record.iteration,
            strategist: intent,
            optimizer: classify_phi(&x_bo, &ref_points)?,
            implementor: classify_phi(x_impl, &ref_points)?,
            context_size: ref_points.len(),
        });
    }
    let percent = efficiency_percent(&included)
        .ok_or_else(|| AnalysisError::Undefined("no iteration with code, a strategy and earlier designs".into()))?;
    Ok(EfficiencyReport {
        xi: options.xi,
        percent,
        iterations: included,
        excluded,
    })
}
