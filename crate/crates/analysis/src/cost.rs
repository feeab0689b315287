//! Token statistics and priced cost estimates for traces.

use serde::Serialize;
use thiserror::Error;

use designloop::agent::estimate_tokens;
use designloop::DesignRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Price {
    pub model: String,
    /// Dollars per million input tokens.
    pub input_per_1m: f64,
    /// Dollars per million output tokens.
    pub output_per_1m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PriceTable {
    pub rows: Vec<Price>,
}

#[derive(Debug, Error, PartialEq)]
#[error("price table line {line}: {message}")]
pub struct PriceParseError {
    pub line: usize,
    pub message: String,
}

impl PriceTable {
    /// Parses `model, input_per_1M, output_per_1M` rows. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, PriceParseError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PriceParseError { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 || fields[0].is_empty() {
                return Err(err(format!("expected `model, input_per_1M, output_per_1M`, got `{line}`")));
            }
            let rate = |s: &str| -> Result<f64, PriceParseError> {
                match s.trim_start_matches('$').parse::<f64>() {
                    Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
                    _ => Err(err(format!("`{s}` is not a non-negative price"))),
                }
            };
            rows.push(Price {
                model: fields[0].to_string(),
                input_per_1m: rate(fields[1])?,
                output_per_1m: rate(fields[2])?,
            });
        }
        Ok(PriceTable { rows })
    }

    pub fn get(&self, model: &str) -> Option<&Price> {
        self.rows.iter().find(|p| p.model == model)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Price {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.input_per_1m + output_tokens as f64 * self.output_per_1m) / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCost {
    pub model: String,
    pub per_iteration: Vec<f64>,
    pub average: f64,
    pub total: f64,
}

/// Cost of every iteration if both agents' tokens were billed at each
/// model's rates. With `models` empty, every priced model is reported;
/// unpriced models are skipped with a warning.
pub fn cost_report(records: &[DesignRecord], prices: &PriceTable, models: &[String]) -> Vec<ModelCost> {
    let selected: Vec<&Price> = if models.is_empty() {
        prices.rows.iter().collect()
    } else {
        models
            .iter()
            .filter_map(|m| {
                let p = prices.get(m);
                if p.is_none() {
                    log::warn!("model `{m}` has no price entry; skipped");
                }
                p
            })
            .collect()
    };
    selected
        .into_iter()
        .map(|price| {
            let per_iteration: Vec<f64> = records
                .iter()
                .map(|r| {
                    let t = &r.tokens;
                    price.cost(t.strategist_in + t.implementor_in, t.strategist_out + t.implementor_out)
                })
                .collect();
            let total = per_iteration.iter().fold(0.0, |a, c| a + c);
            let average = if per_iteration.is_empty() { 0.0 } else { total / per_iteration.len() as f64 };
            ModelCost {
                model: price.model.clone(),
                per_iteration,
                average,
                total,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenStats {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    /// Population standard deviation relative to the mean, in percent.
    pub std_percent: f64,
    /// Mean relative to the context window, in percent.
    pub context_percent: f64,
    pub samples: usize,
}

impl TokenStats {
    pub fn from_samples(label: &str, samples: &[f64], max_context: u64) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let avg = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - avg) * (s - avg)).sum::<f64>() / n;
        Some(TokenStats {
            label: label.to_string(),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            avg,
            std_percent: if avg != 0.0 { var.sqrt() / avg * 100.0 } else { 0.0 },
            context_percent: avg / max_context as f64 * 100.0,
            samples: samples.len(),
        })
    }
}

/// Estimated tokens per source line of an artifact.
pub fn tokens_per_line(artifact: &str) -> Option<f64> {
    let lines = artifact.lines().filter(|l| !l.trim().is_empty()).count();
    (lines > 0).then(|| estimate_tokens(artifact.len()) as f64 / lines as f64)
}

/// Per-iteration token statistics for each agent and direction, plus
/// tokens per line of generated code. Agents are only sampled in
/// iterations where they were called.
pub fn token_stats(records: &[DesignRecord], max_context: u64) -> Vec<TokenStats> {
    let implementor: Vec<&DesignRecord> = records.iter().filter(|r| r.tokens.implementor_calls > 0).collect();
    let strategist: Vec<&DesignRecord> = records.iter().filter(|r| r.tokens.strategist_calls > 0).collect();
    let series = |rs: &[&DesignRecord], f: fn(&DesignRecord) -> u64| -> Vec<f64> { rs.iter().map(|r| f(r) as f64).collect() };
    let per_line: Vec<f64> = records.iter().filter_map(|r| r.artifact.as_deref()).filter_map(tokens_per_line).collect();
    [
        TokenStats::from_samples("Implementor (input)", &series(&implementor, |r| r.tokens.implementor_in), max_context),
        TokenStats::from_samples("Implementor (output)", &series(&implementor, |r| r.tokens.implementor_out), max_context),
        TokenStats::from_samples("Strategist (input)", &series(&strategist, |r| r.tokens.strategist_in), max_context),
        TokenStats::from_samples("Strategist (output)", &series(&strategist, |r| r.tokens.strategist_out), max_context),
        TokenStats::from_samples("Per line of code", &per_line, max_context),
    ]
    .into_iter()
    .flatten()
    .collect()
}
