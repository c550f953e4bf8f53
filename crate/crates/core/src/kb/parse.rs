//! Extraction of concept labels from free-form model output.

use std::collections::HashSet;

use serde_json::Value;

use crate::concept::normalize;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedList {
    pub items: Vec<String>,
    /// No JSON array was found and the line-based fallback was used.
    pub used_fallback: bool,
    /// Nothing could be extracted.
    pub warning: bool,
}

/// Pulls the first JSON array of strings out of `raw`, fenced or not. If no
/// such array parses, falls back to one item per line with list markers
/// stripped. Items are trimmed, empties dropped, and duplicates (by norm)
/// removed keeping the first occurrence.
pub fn parse_concept_list(raw: &str) -> ParsedList {
    let (items, used_fallback) = match first_string_array(raw) {
        Some(items) => (items, false),
        None => (fallback_lines(raw), true),
    };
    let mut seen = HashSet::new();
    let items: Vec<String> = items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(normalize(s)))
        .collect();
    ParsedList {
        warning: items.is_empty(),
        items,
        used_fallback,
    }
}

fn first_string_array(raw: &str) -> Option<Vec<String>> {
    for (pos, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(values))) = stream.next() {
            let strings: Option<Vec<String>> = values
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Some(s),
                    _ => None,
                })
                .collect();
            if let Some(strings) = strings {
                return Some(strings);
            }
        }
    }
    None
}

fn fallback_lines(raw: &str) -> Vec<String> {
    raw.lines()
        .map(str::trim)
        .filter(|line| !(line.starts_with("```") || line.starts_with("'''")))
        .filter(|line| !matches!(*line, "[" | "]" | "{" | "}"))
        .map(|line| {
            let line = strip_marker(line);
            let line = line.trim_end_matches(',').trim();
            line.trim_matches(|c| c == '"' || c == '\'').to_string()
        })
        .collect()
}

fn strip_marker(line: &str) -> &str {
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_array() {
        let parsed = parse_concept_list("```json\n[\"hate speech\", \"harassment\"]\n```");
        assert_eq!(parsed.items, vec!["hate speech", "harassment"]);
        assert!(!parsed.used_fallback && !parsed.warning);
    }

    #[test]
    fn trims_and_dedups_by_norm() {
        let parsed = parse_concept_list("[\"a\", \"a\", \"B \"]");
        assert_eq!(parsed.items, vec!["a", "B"]);
        let parsed = parse_concept_list("[\"Hate Speech\", \"hate  speech\", \"  \"]");
        assert_eq!(parsed.items, vec!["Hate Speech"]);
    }

    #[test]
    fn numbered_lines_fallback() {
        let parsed = parse_concept_list("1. doxxing\n2. brigading");
        assert_eq!(parsed.items, vec!["doxxing", "brigading"]);
        assert!(parsed.used_fallback);
    }

    #[test]
    fn bullet_and_quoted_lines_fallback() {
        let parsed = parse_concept_list("Here you go:\n- trolling\n* \"flaming\",\n3) spam\n");
        assert_eq!(parsed.items, vec!["Here you go:", "trolling", "flaming", "spam"]);
    }

    #[test]
    fn skips_non_string_arrays() {
        let parsed = parse_concept_list("[1, 2] then [\"x\", \"y\"]");
        assert_eq!(parsed.items, vec!["x", "y"]);
        let parsed = parse_concept_list("prefix [broken, then\n'''json\n[\"ok\"]\n'''");
        assert_eq!(parsed.items, vec!["ok"]);
    }

    #[test]
    fn continuation_after_frame_opener() {
        let parsed = parse_concept_list("[\n  \"cyberbullying\",\n  \"trolling\"\n]\n'''");
        assert_eq!(parsed.items, vec!["cyberbullying", "trolling"]);
    }

    #[test]
    fn empty_output_warns() {
        let parsed = parse_concept_list("   \n\n");
        assert!(parsed.items.is_empty());
        assert!(parsed.warning);
        let parsed = parse_concept_list("[]");
        assert!(parsed.warning && !parsed.used_fallback);
    }
}
