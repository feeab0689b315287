//! Tolerant parsing of agent replies.
//!
//! The strategist is asked to answer with a `STRATEGY:` line followed by an
//! `INSTRUCTIONS:` section; the implementor with a fenced code block. Models
//! decorate these with markdown, so tags are matched case-insensitively after
//! stripping emphasis and list markers.

use super::{Strategy, StrategistDecision};

const DECORATION: &[char] = &['#', '*', '-', '>', '`', '_', ' ', '\t'];

/// Returns the text following `tag:` when `line` is a tag line.
fn tag_value<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    let body = line.trim_start_matches(DECORATION);
    if body.len() < tag.len() || !body[..tag.len()].eq_ignore_ascii_case(tag) {
        return None;
    }
    let rest = body[tag.len()..].trim_start_matches(['*', '_', ' ']);
    rest.strip_prefix(':')
}

fn strategy_word(value: &str) -> Strategy {
    let word: String = value
        .trim_matches(|c: char| !c.is_ascii_alphabetic())
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase();
    match word.as_str() {
        "refine" => Strategy::Refine,
        "combine" => Strategy::Combine,
        "innovate" => Strategy::Innovate,
        _ => Strategy::NotAvailable,
    }
}

/// Finds the first `STRATEGY:` line with a recognised value.
fn find_strategy(raw: &str) -> Option<(usize, Strategy)> {
    raw.lines().enumerate().find_map(|(idx, line)| {
        let value = tag_value(line, "strategy")?;
        match strategy_word(value) {
            Strategy::NotAvailable => None,
            s => Some((idx, s)),
        }
    })
}

pub fn parse_strategy(raw: &str) -> Strategy {
    find_strategy(raw).map_or(Strategy::NotAvailable, |(_, s)| s)
}

/// Parses a full strategist reply. A recognised strategy without any
/// instruction text is still reported as not-available.
pub fn parse_decision(raw: &str) -> StrategistDecision {
    let Some((strategy_line, strategy)) = find_strategy(raw) else {
        return StrategistDecision::not_available(raw);
    };
    let start = line_offset(raw, strategy_line);
    let instructions = match find_instructions_tag(&raw[start..]) {
        Some(offset) => raw[start + offset..].trim_start_matches(['*', '_']),
        None => raw[start..].split_once('\n').map_or("", |(_, rest)| rest),
    };
    let instructions = instructions.trim().to_string();
    if instructions.is_empty() {
        return StrategistDecision::not_available(raw);
    }
    StrategistDecision {
        strategy,
        instructions,
        raw_response: raw.to_string(),
    }
}

fn line_offset(raw: &str, line: usize) -> usize {
    raw.split_inclusive('\n').take(line).map(str::len).sum()
}

/// Byte offset just past the first `INSTRUCTIONS:` tag (emphasis allowed
/// between the word and the colon).
fn find_instructions_tag(text: &str) -> Option<usize> {
    const TAG: &str = "instructions";
    let lower = text.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(TAG) {
        let after = from + pos + TAG.len();
        let rest = &text[after..];
        let skipped = rest.len() - rest.trim_start_matches(['*', '_', ' ']).len();
        if rest[skipped..].starts_with(':') {
            return Some(after + skipped + 1);
        }
        from = after;
    }
    None
}

/// Formats a decision in the reply format the strategist is asked to use.
pub fn render_decision(strategy: Strategy, instructions: &str) -> String {
    format!("STRATEGY: {strategy}\nINSTRUCTIONS:\n{instructions}")
}

/// Returns the body of the first complete fenced code block.
///
/// A fence opens with three or more backticks (or tildes) and an optional
/// info string, and closes with a bare fence of the same character at least
/// as long. An unclosed block is ignored.
pub fn extract_code_block(reply: &str) -> Option<String> {
    let mut lines = reply.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        let Some(fence_char) = trimmed.chars().next().filter(|c| *c == '`' || *c == '~') else {
            continue;
        };
        let fence_len = trimmed.chars().take_while(|c| *c == fence_char).count();
        if fence_len < 3 {
            continue;
        }
        let mut body = String::new();
        for inner in lines.by_ref() {
            let t = inner.trim();
            if t.len() >= fence_len && t.chars().all(|c| c == fence_char) {
                return Some(body);
            }
            body.push_str(inner);
            body.push('\n');
        }
        return None;
    }
    None
}
