use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use designloop::orchestrator::{self, Agents, RunConfig};
use designloop::problems::{generate_dataset, DatasetOptions, MANIFEST_NAME};
use designloop::trace::Curation;
use designloop::{ProblemKind, Trace};
use designloop_analysis::clustering::DEFAULT_THRESHOLD;
use designloop_analysis::compile::compile_stats;
use designloop_analysis::convergence::convergence_series;
use designloop_analysis::cost::{cost_report, token_stats, PriceTable};
use designloop_analysis::efficiency::{search_efficiency, ContextMode, EfficiencyOptions};
use designloop_analysis::{consensus_cluster, Corpus};

mod table;

use table::{opt, Table};

const FORMATS_HELP: &str = "\
File formats:
  config   TOML run configuration (problem, iterations, max_corrections, temperature,
           seed, [strategist], [implementor], [toolchain], [evaluation], [dataset]).
  trace    JSON lines: a header line with the config and its fingerprint, then one
           design record per iteration.
  prices   Plain text rows `model, input_per_1M, output_per_1M`; `#` starts a comment.

Environment:
  DESIGNLOOP_BASE_URL   overrides the chat endpoint base URL of both agents
  DESIGNLOOP_API_KEY    bearer credential for the chat endpoint
  RUST_LOG              log filter (default: warn, or info with --verbose)";

#[derive(Parser)]
#[command(name = "designloop", version, about = "Strategist/implementor design optimization loop", after_help = FORMATS_HELP)]
struct Cli {
    /// Output format for reports.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new optimization run.
    #[command(after_help = FORMATS_HELP)]
    Run(RunArgs),
    /// Continue an interrupted run from its trace.
    #[command(after_help = FORMATS_HELP)]
    Resume(RunArgs),
    /// Generate a seeded ground-truth dataset.
    GenTruth(GenTruthArgs),
    /// Analyze a trace.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Token and cost reports.
    #[command(subcommand)]
    Report(Report),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Trace file (JSON lines); scratch files go to `<trace>.work/`.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct GenTruthArgs {
    #[arg(long)]
    problem: ProblemKind,
    /// Output directory; an existing dataset there is replaced.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the full-scale size grids.
    #[arg(long)]
    full: bool,
}

#[derive(Subcommand)]
enum Analyze {
    /// Search efficiency against a GP-UCB proposer, one value per exploration factor.
    Efficiency {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated exploration factors.
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
        xi: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference set at each iteration.
        #[arg(long, value_enum, default_value_t = ContextArg::All)]
        context: ContextArg,
        /// Only valid designs enter the reference set.
        #[arg(long)]
        valid_only: bool,
        /// Project code vectors onto this many principal components.
        #[arg(long)]
        pca: Option<usize>,
        /// Also print the per-iteration labels.
        #[arg(long)]
        detail: bool,
    },
    /// Consensus clustering of code vectors.
    Clusters {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// k-means runs per k.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Relative code change and best-so-far runtime per iteration.
    Convergence {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compile success rates and status counts.
    Compile {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Code vectors with consensus cluster labels, for external plotting.
    ExportEmbedding {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ContextArg {
    /// Every earlier design with code.
    All,
    /// The curated context from the run configuration.
    Curated,
}

#[derive(Subcommand)]
enum Report {
    /// Per-iteration and total cost under each priced model.
    Cost {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        /// Restrict to these models (repeatable).
        #[arg(long)]
        model: Vec<String>,
        /// Also list every iteration.
        #[arg(long)]
        detail: bool,
    },
    /// Per-iteration token statistics.
    Tokens {
        #[arg(long)]
        trace: PathBuf,
        /// Context window for the usage column; defaults to the trace's configuration.
        #[arg(long)]
        max_context: Option<u64>,
    },
}

fn emit<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) {
    match format {
        Format::Structured => println!("{}", serde_json::to_string_pretty(value).expect("report serializes")),
        Format::Text => print!("{}", text()),
    }
}

fn load_trace(path: &Path) -> Result<Trace> {
    Ok(Trace::load(path)?)
}

fn run(args: &RunArgs, resume: bool, format: Format) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let mut agents = Agents::from_config(&config)?;
    let trace = if resume {
        orchestrator::resume(&config, &args.trace, &mut agents)?
    } else {
        orchestrator::run_optimization(&config, &args.trace, &mut agents)?
    };
    let valid = trace.records.iter().filter(|r| r.is_valid()).count();
    let best = trace.best();
    let summary = json!({
        "trace": args.trace,
        "iterations": trace.len(),
        "valid": valid,
        "best_iteration": best.map(|r| r.iteration),
        "best_score": best.and_then(|r| r.score),
    });
    emit(format, &summary, || {
        let mut s = format!("{} iterations, {valid} valid, trace {}\n", trace.len(), args.trace.display());
        match best {
            Some(b) => s.push_str(&format!(
                "best: iteration {} ({}), score {:.6e}\n",
                b.iteration,
                b.strategy,
                b.score.unwrap_or(f64::NAN)
            )),
            None => s.push_str("no valid design\n"),
        }
        s
    });
    Ok(())
}

fn gen_truth(args: &GenTruthArgs, format: Format) -> Result<()> {
    if args.out.exists() && !args.out.join(MANIFEST_NAME).exists() {
        let non_empty = std::fs::read_dir(&args.out)
            .with_context(|| format!("{}", args.out.display()))?
            .next()
            .is_some();
        if non_empty {
            bail!("{} exists and is not a dataset directory; refusing to replace it", args.out.display());
        }
    }
    let options = if args.full { DatasetOptions::full() } else { DatasetOptions::default() };
    let dataset = generate_dataset(args.problem, &args.out, args.seed, &options)?;
    let m = &dataset.manifest;
    emit(format, m, || {
        let mut t = Table::new(["kind", "id", "size", "file"]);
        for c in &m.correctness {
            t.row(["correctness".into(), c.id.clone(), c.size.to_string(), c.input.clone()]);
        }
        for p in &m.profile {
            t.row(["profile".into(), p.id.clone(), p.size.to_string(), p.input.clone()]);
        }
        format!("{} dataset in {} (seed {})\n{}", m.problem, args.out.display(), m.seed, t.render())
    });
    Ok(())
}

fn k_values(k_min: usize, k_max: usize) -> Result<Vec<usize>> {
    if k_min == 0 || k_min > k_max {
        bail!("need 1 <= k-min <= k-max, got {k_min}..{k_max}");
    }
    Ok((k_min..=k_max).collect())
}

fn analyze(cmd: &Analyze, format: Format) -> Result<()> {
    match cmd {
        Analyze::Efficiency {
            trace,
            xi,
            seed,
            context,
            valid_only,
            pca,
            detail,
        } => {
            let trace = load_trace(trace)?;
            let curation: Curation = match (&trace.header, context) {
                (Some(h), _) => h.config.curation(),
                (None, ContextArg::Curated) => bail!("trace has no header; curated context needs the run configuration"),
                (None, ContextArg::All) => Curation { top: 0, bottom: 0, recent: 0 },
            };
            let mut rows = Vec::new();
            for &x in xi {
                let options = EfficiencyOptions {
                    xi: x,
                    seed: *seed,
                    context: match context {
                        ContextArg::All => ContextMode::AllPrior,
                        ContextArg::Curated => ContextMode::Curated(curation),
                    },
                    valid_only: *valid_only,
                    pca_dims: *pca,
                };
                rows.push(match search_efficiency(&trace.records, &options) {
                    Ok(r) => json!({"xi": x, "efficiency": r.percent, "iterations": r.iterations.len(), "detail": r.iterations, "excluded": r.excluded}),
                    Err(e) => json!({"xi": x, "efficiency": null, "undefined": e.to_string()}),
                });
            }
            emit(format, &rows, || {
                let mut t = Table::new(["xi", "efficiency %", "iterations"]);
                for r in &rows {
                    t.row([
                        format!("{}", r["xi"]),
                        r["efficiency"].as_f64().map_or("undefined".into(), |v| format!("{v:.2}")),
                        r["iterations"].as_u64().map_or("-".into(), |v| v.to_string()),
                    ]);
                }
                let mut s = t.render();
                if let Some(reason) = rows.iter().find_map(|r| r["undefined"].as_str()) {
                    s.push_str(&format!("undefined: {reason}\n"));
                }
                if *detail {
                    for r in &rows {
                        let mut d = Table::new(["iteration", "strategist", "optimizer", "implementor"]);
                        for a in r["detail"].as_array().into_iter().flatten() {
                            d.row([a["iteration"].to_string(), a["strategist"].as_str().unwrap_or("").into(), a["optimizer"].as_str().unwrap_or("").into(), a["implementor"].as_str().unwrap_or("").into()]);
                        }
                        s.push_str(&format!("\nxi = {}\n{}", r["xi"], d.render()));
                    }
                }
                s
            });
        }
        Analyze::Clusters {
            trace,
            k_min,
            k_max,
            runs,
            seed,
            threshold,
        } => {
            let trace = load_trace(trace)?;
            let corpus = Corpus::from_records(&trace.records)?;
            let c = consensus_cluster(&corpus.points(), &k_values(*k_min, *k_max)?, *runs, *seed, *threshold)?;
            let iters = |members: &[usize]| -> Vec<u32> { members.iter().filter_map(|&i| corpus.vectors[i].source_iteration).collect() };
            let clusters: Vec<Vec<u32>> = c.clusters.iter().map(|m| iters(m)).collect();
            let value = json!({"threshold": c.threshold, "runs": c.runs, "clusters": clusters, "co_occurrence": c.co_occurrence});
            emit(format, &value, || {
                let mut t = Table::new(["cluster", "size", "iterations"]);
                for (i, members) in clusters.iter().enumerate() {
                    let list: Vec<String> = members.iter().map(u32::to_string).collect();
                    t.row([(i + 1).to_string(), members.len().to_string(), list.join(" ")]);
                }
                format!("{} clusters from {} k-means runs (merge rate > {})\n{}", clusters.len(), c.runs, c.threshold, t.render())
            });
        }
        Analyze::Convergence { trace } => {
            let trace = load_trace(trace)?;
            let series = convergence_series(&trace.records)?;
            emit(format, &series, || {
                let mut t = Table::new(["iteration", "relative distance", "runtime s", "best solution %"]);
                for p in &series {
                    t.row([p.iteration.to_string(), opt(p.relative_distance, 4), p.runtime.map_or("-".into(), |r| format!("{r:.4e}")), opt(p.best_solution, 2)]);
                }
                t.render()
            });
        }
        Analyze::Compile { trace } => {
            let trace = load_trace(trace)?;
            let s = compile_stats(&trace.records);
            emit(format, &s, || {
                let mut out = format!(
                    "attempts compiled: {} of {} ({}%)\nfirst attempt compiled: {}%\niterations compiled: {} of {} ({}%)\n\n",
                    s.compiled_attempts,
                    s.attempts,
                    opt(s.attempt_rate, 2),
                    opt(s.first_attempt_rate, 2),
                    s.compiled_iterations,
                    s.iterations,
                    opt(s.iteration_rate, 2)
                );
                let mut t = Table::new(["status", "final", "attempts"]);
                for ((status, n), (_, a)) in s.final_status.iter().zip(&s.attempt_status) {
                    t.row([status.to_string(), n.to_string(), a.to_string()]);
                }
                out.push_str(&t.render());
                out
            });
        }
        Analyze::ExportEmbedding {
            trace,
            k_min,
            k_max,
            runs,
            seed,
        } => {
            let trace = load_trace(trace)?;
            let corpus = Corpus::from_records(&trace.records)?;
            let ks: Vec<usize> = k_values(*k_min, *k_max)?.into_iter().filter(|&k| k <= corpus.vectors.len()).collect();
            let labels = if ks.is_empty() {
                vec![0; corpus.vectors.len()]
            } else {
                consensus_cluster(&corpus.points(), &ks, *runs, *seed, DEFAULT_THRESHOLD)?.labels()
            };
            let rows: Vec<_> = corpus
                .vectors
                .iter()
                .zip(&labels)
                .map(|(v, l)| json!({"iteration": v.source_iteration, "cluster": l, "lexical_fallback": v.lexical_fallback, "vector": v.values}))
                .collect();
            let value = json!({"vocabulary": corpus.vocabulary, "points": rows});
            emit(format, &value, || {
                let mut s = format!("iteration,cluster,{}\n", corpus.vocabulary.join(","));
                for (v, l) in corpus.vectors.iter().zip(&labels) {
                    let vals: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
                    s.push_str(&format!("{},{l},{}\n", v.source_iteration.unwrap_or(0), vals.join(",")));
                }
                s
            });
        }
    }
    Ok(())
}

fn report(cmd: &Report, format: Format) -> Result<()> {
    match cmd {
        Report::Cost {
            trace,
            prices,
            model,
            detail,
        } => {
            let trace = load_trace(trace)?;
            let text = std::fs::read_to_string(prices).with_context(|| format!("{}", prices.display()))?;
            let table = PriceTable::parse(&text).with_context(|| format!("{}", prices.display()))?;
            if table.is_empty() {
                bail!("{}: no prices", prices.display());
            }
            let costs = cost_report(&trace.records, &table, model);
            emit(format, &costs, || {
                let mut t = Table::new(["model", "per iteration $", "total $", "iterations"]);
                for c in &costs {
                    t.row([c.model.clone(), format!("{:.2}", c.average), format!("{:.2}", c.total), c.per_iteration.len().to_string()]);
                }
                let mut s = t.render();
                if *detail {
                    let mut header = vec!["iteration".to_string()];
                    header.extend(costs.iter().map(|c| c.model.clone()));
                    let mut d = Table::new(header);
                    for (i, r) in trace.records.iter().enumerate() {
                        let mut row = vec![r.iteration.to_string()];
                        row.extend(costs.iter().map(|c| format!("{:.4}", c.per_iteration[i])));
                        d.row(row);
                    }
                    s.push('\n');
                    s.push_str(&d.render());
                }
                s
            });
        }
        Report::Tokens { trace, max_context } => {
            let trace = load_trace(trace)?;
            let window = max_context
                .or_else(|| trace.header.as_ref().map(|h| h.config.strategist.max_context))
                .unwrap_or(128_000);
            let stats = token_stats(&trace.records, window);
            emit(format, &stats, || {
                let mut t = Table::new(["token type", "min", "max", "avg", "std %", "context %"]);
                for s in &stats {
                    t.row([s.label.clone(), format!("{:.0}", s.min), format!("{:.0}", s.max), format!("{:.0}", s.avg), format!("{:.0}", s.std_percent), format!("{:.2}", s.context_percent)]);
                }
                t.render()
            });
        }
    }
    Ok(())
}

/// The error and its causes, skipping causes already quoted by an outer message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run(args) => run(args, false, cli.format),
        Command::Resume(args) => run(args, true, cli.format),
        Command::GenTruth(args) => gen_truth(args, cli.format),
        Command::Analyze(cmd) => analyze(cmd, cli.format),
        Command::Report(cmd) => report(cmd, cli.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
