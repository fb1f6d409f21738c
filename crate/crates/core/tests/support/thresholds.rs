//! Literal scan of rule logic in a rulepack directory.

use std::collections::BTreeMap;
use std::path::Path;

/// Criterion name and the literals its logic must contain verbatim.
pub const EXPECTED: &[(&str, &[&str])] = &[
    ("pre_total_dose", &["75Gy", "79.2Gy"]),
    ("pre_fractions", &["44"]),
    ("pre_dose_per_fraction", &["1.8Gy"]),
    ("dose_bladder", &["15%", "17%"]),
    ("dose_ptv_v100", &["98%"]),
    ("dose_ptv_max_point", &["107%"]),
    ("dose_penile_bulb_mean", &["52.5Gy"]),
    ("struct_small_bowel_v45", &["195cc"]),
    ("quality_conformity", &["1.4"]),
    ("quality_homogeneity", &["0.98"]),
    ("quality_cold_spots", &["0"]),
];

fn strip_comment(line: &str) -> &str {
    match line.find("//") {
        Some(i) => &line[..i],
        None => line,
    }
}

fn numeric_tokens(logic: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in logic.chars().chain(std::iter::once(' ')) {
        let continues = c.is_ascii_digit()
            || c == '.'
            || (!cur.is_empty() && (c.is_ascii_alphabetic() || c == '%' || c == '/'));
        if continues && (!cur.is_empty() || c.is_ascii_digit()) {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    out
}

/// Numeric literals in each rule's logic slot, keyed by rule name.
pub fn scan(dir: &Path) -> BTreeMap<String, Vec<String>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "mlm"))
        .collect();
    files.sort();
    let mut out = BTreeMap::new();
    for f in files {
        let text: String = std::fs::read_to_string(&f)
            .unwrap()
            .lines()
            .map(strip_comment)
            .collect::<Vec<_>>()
            .join("\n");
        for block in text.split("mlm:").skip(1) {
            let name = block
                .split("name")
                .nth(1)
                .and_then(|s| s.split(';').next())
                .map(|s| s.trim().to_string())
                .unwrap_or_default();
            let logic = block
                .split("logic:")
                .nth(1)
                .and_then(|s| s.split(';').next())
                .unwrap_or("");
            out.insert(name, numeric_tokens(logic));
        }
    }
    out
}

/// Mismatches between the expected literals and the scanned logic.
pub fn check(dir: &Path) -> Vec<String> {
    let found = scan(dir);
    let mut problems = Vec::new();
    for (rule, literals) in EXPECTED {
        let Some(tokens) = found.get(*rule) else {
            problems.push(format!("{rule}: not found"));
            continue;
        };
        for lit in *literals {
            if !tokens.iter().any(|t| t == lit) {
                problems.push(format!("{rule}: literal {lit} missing from {tokens:?}"));
            }
        }
    }
    problems
}
