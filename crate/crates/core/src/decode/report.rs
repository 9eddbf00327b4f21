//! WER tables in TSV and Markdown.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write;

/// One system (a table row) and its WER on each test set it was scored on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub arch: String,
    pub feature: String,
    pub strategy: String,
    pub adaptation: String,
    pub seeds: Vec<u64>,
    pub provenance: String,
    /// `(test set, WER %)`; missing test sets render as `-`.
    pub wer: Vec<(String, f64)>,
}

const KEY_COLUMNS: [&str; 4] = ["arch", "feature", "strategy", "adaptation"];

fn test_sets(results: &[SystemResult]) -> Vec<String> {
    let set: BTreeSet<&String> = results.iter().flat_map(|r| r.wer.iter().map(|(t, _)| t)).collect();
    set.into_iter().cloned().collect()
}

fn cells(r: &SystemResult, sets: &[String]) -> Vec<String> {
    let mut c = vec![r.arch.clone(), r.feature.clone(), r.strategy.clone(), r.adaptation.clone()];
    for t in sets {
        c.push(
            r.wer
                .iter()
                .find(|(name, _)| name == t)
                .map_or_else(|| "-".to_string(), |(_, w)| format!("{w:.2}")),
        );
    }
    let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
    c.push(seeds.join(","));
    c.push(r.provenance.clone());
    c
}

fn header(sets: &[String]) -> Vec<String> {
    KEY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(sets.iter().map(|t| format!("wer:{t}")))
        .chain(["seeds".to_string(), "provenance".to_string()])
        .collect()
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '|'], " ")
}

pub fn render_tsv(results: &[SystemResult]) -> String {
    let sets = test_sets(results);
    let mut out = header(&sets).join("\t");
    out.push('\n');
    for r in results {
        let row: Vec<String> = cells(r, &sets).iter().map(|c| clean(c)).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

pub fn render_markdown(results: &[SystemResult]) -> String {
    let sets = test_sets(results);
    let h = header(&sets);
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", h.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(h.len()));
    for r in results {
        let row: Vec<String> = cells(r, &sets).iter().map(|c| clean(c)).collect();
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}
