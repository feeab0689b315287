//! Prompt assembly for both agents. Assembly is a pure function of its
//! inputs so identical requests produce byte-identical prompts.

use std::fmt::Write as _;

use super::{estimate_tokens, ChatMessage};
use crate::trace::{CuratedContext, DesignRecord};

/// Iterations during which the strategist is told to favour innovation.
pub const INNOVATE_PRIORITY_ITERATIONS: u32 = 10;

/// Marker line present in the strategist system prompt during the initial
/// exploration phase.
pub const INNOVATE_PRIORITY_DIRECTIVE: &str = "EXPLORATION PHASE:";

const STRATEGIST_SYSTEM: &str = "\
You are the Strategist in an iterative design optimization loop. Every iteration you study the \
problem, the optional sketch, the optimization hints and a curated set of earlier designs with their \
validation results and measurements. You then pick exactly one sampling strategy and write \
instructions for the Implementor, a separate agent that writes the program. The Implementor sees \
the problem description and your instructions, nothing else.

Choosing a strategy:
- innovate: most designs so far share one approach and score about the same; or a fundamentally \
different approach could plausibly give a large jump; or the recent designs keep failing validation \
and no fix is apparent.
- combine: several designs are each strong in a different respect (for example one has a better \
memory access pattern, another a better inner loop); their ideas are complementary and a hybrid \
could keep the advantages of both.
- refine: one design is close to a significant improvement; or a concrete bottleneck or a small \
validation error has an evident fix; or the overall design is sound and needs tuning.

Guidelines:
- Be specific. Say \"block the i/j loops into 32x32 tiles and copy the B tile into a contiguous \
local buffer\", not \"optimize memory access\". Give parameter values.
- Use the optimization hints when they apply.
- Consider whether the validation constraints (compiles, runs, correct output) are attainable with \
your instructions and what improvement you expect.
- When you refine or combine, restate the relevant parts of the earlier designs in your \
instructions, including code excerpts if needed, since the Implementor cannot see them.

Reply format (exactly):
STRATEGY: <refine | combine | innovate>
INSTRUCTIONS:
<detailed implementation instructions>";

/// Everything the strategist prompt is built from.
#[derive(Debug, Clone)]
pub struct StrategistRequest<'a> {
    pub context: &'a CuratedContext<'a>,
    pub brief: &'a str,
    pub sketch: Option<&'a str>,
    pub hints: &'a str,
    /// The iteration being decided (1-based).
    pub iteration: u32,
    /// Number of designs recorded so far.
    pub history_len: usize,
    /// Info string for code fences, e.g. `c`.
    pub code_lang: &'a str,
}

fn strategist_system(iteration: u32) -> String {
    let mut system = STRATEGIST_SYSTEM.to_string();
    if iteration <= INNOVATE_PRIORITY_ITERATIONS {
        write!(
            system,
            "\n\n{INNOVATE_PRIORITY_DIRECTIVE} this is iteration {iteration}, within the first \
             {INNOVATE_PRIORITY_ITERATIONS} iterations. Prioritize the innovate strategy so the \
             design landscape is explored broadly before it is exploited."
        )
        .unwrap();
    }
    system
}

const MAX_ERROR_BYTES: usize = 2000;

fn clip(text: &str, max: usize) -> &str {
    if text.len() <= max {
        return text;
    }
    let mut end = max;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn render_design(out: &mut String, record: &DesignRecord, code_lang: &str, with_code: bool) {
    let v = &record.validation;
    writeln!(out, "### Design from iteration {}", record.iteration).unwrap();
    writeln!(out, "strategy: {}", record.strategy).unwrap();
    writeln!(out, "status: {} (correction attempts: {})", v.status, v.attempts_used).unwrap();
    match record.score {
        Some(score) => writeln!(out, "score: {score:.6e} (higher is better)").unwrap(),
        None => writeln!(out, "score: none").unwrap(),
    }
    if !record.metrics.is_empty() {
        out.push_str("mean runtime per condition (s):");
        for m in &record.metrics {
            write!(out, " {}={:.6e}", m.condition, m.mean).unwrap();
        }
        out.push('\n');
    }
    if let Some(err) = &v.last_error {
        let clipped = clip(err, MAX_ERROR_BYTES);
        writeln!(out, "last error:\n{clipped}").unwrap();
        if clipped.len() < err.len() {
            out.push_str("[error output truncated]\n");
        }
    }
    if !record.instructions.is_empty() {
        writeln!(out, "instructions given:\n{}", record.instructions.trim()).unwrap();
    }
    match (&record.artifact, with_code) {
        (None, _) => out.push_str("code: none produced\n"),
        (Some(code), true) => {
            writeln!(out, "code:\n```{code_lang}\n{}", code.trim_end()).unwrap();
            out.push_str("```\n");
        }
        (Some(_), false) => out.push_str("code: [omitted to fit the context window]\n"),
    }
    out.push('\n');
}

fn strategist_user(req: &StrategistRequest<'_>, elided: usize) -> String {
    let mut out = String::new();
    writeln!(out, "# Problem\n{}\n", req.brief.trim()).unwrap();
    if let Some(sketch) = req.sketch {
        writeln!(out, "# Sketch\n```\n{}\n```\n", sketch.trim_end()).unwrap();
    }
    if !req.hints.trim().is_empty() {
        writeln!(out, "# Optimization hints\n{}\n", req.hints.trim()).unwrap();
    }
    writeln!(
        out,
        "# Design history\nYou are deciding iteration {}. {} design(s) have been recorded so far.\n",
        req.iteration, req.history_len
    )
    .unwrap();

    // Code is elided from the end of the presentation order first.
    let total = req.context.len();
    let mut position = 0;
    let sections: [(&str, &[&DesignRecord]); 3] = [
        ("Top-scoring designs", &req.context.top),
        ("Lowest-scoring designs", &req.context.bottom),
        ("Most recent designs", &req.context.recent),
    ];
    for (title, records) in sections {
        if records.is_empty() {
            continue;
        }
        writeln!(out, "## {title}\n").unwrap();
        for record in records {
            let with_code = position < total - elided.min(total);
            render_design(&mut out, record, req.code_lang, with_code);
            position += 1;
        }
    }
    if total == 0 {
        out.push_str("No designs yet.\n\n");
    }
    out.push_str("Choose a strategy and reply in the required format.");
    out
}

/// Builds the `[system, user]` messages for the strategist, omitting design
/// code (latest-presented first) while the estimated size exceeds
/// `max_context` tokens.
pub fn assemble_strategist_prompt(req: &StrategistRequest<'_>, max_context: u64) -> Vec<ChatMessage> {
    let system = strategist_system(req.iteration);
    let mut elided = 0;
    loop {
        let user = strategist_user(req, elided);
        let tokens = estimate_tokens(system.len() + user.len());
        if tokens <= max_context || elided >= req.context.len() {
            if tokens > max_context {
                log::warn!("strategist prompt (~{tokens} tokens) exceeds the context window ({max_context})");
            }
            return vec![ChatMessage::system(system), ChatMessage::user(user)];
        }
        elided += 1;
    }
}

/// The implementor's initial task message.
pub fn implementor_task(brief: &str, instructions: &str) -> String {
    format!(
        "# Problem\n{}\n\n# Instructions from the Strategist\n{}\n\n\
         Reply with the complete program in a single fenced code block.",
        brief.trim(),
        instructions.trim()
    )
}
