//! Rulepacks: a directory of `.mlm` and `.dtab` files plus a
//! `rulepack.json` manifest, and the compiled rulebase built from one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::Ontology;
use crate::rulelang::{
    check_completeness, compile_rule, has_errors, parse_decision_table, parse_mlm_file,
    validate_rulebase, CompiledRule, IssueKind, Mlm, RuleIssue, RuleKind,
};

pub const MANIFEST_FILE: &str = "rulepack.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub id: String,
    pub version: String,
    pub files: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RulepackError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("rulepack has {} error(s)", .0.iter().filter(|i| i.is_error()).count())]
    Invalid(Vec<RuleIssue>),
}

/// Source form of a rulepack, held in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rulepack {
    pub manifest: Manifest,
    /// `(file name, contents)` in manifest order.
    pub sources: Vec<(String, String)>,
}

fn is_plain_file_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\'])
        && (name.ends_with(".mlm") || name.ends_with(".dtab"))
}

pub fn is_valid_pack_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Rulepack {
    pub fn load_dir(dir: &Path) -> Result<Self, RulepackError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| RulepackError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let manifest: Manifest =
            serde_json::from_str(&read(&manifest_path)?).map_err(|e| RulepackError::Manifest {
                path: manifest_path.clone(),
                detail: e.to_string(),
            })?;
        let bad = |detail: String| RulepackError::Manifest {
            path: manifest_path.clone(),
            detail,
        };
        if !is_valid_pack_id(&manifest.id) || !is_valid_pack_id(&manifest.version) {
            return Err(bad(
                "id and version may only use letters, digits, `_`, `-` and `.`".into(),
            ));
        }
        let mut sources = Vec::with_capacity(manifest.files.len());
        for name in &manifest.files {
            if !is_plain_file_name(name) {
                return Err(bad(format!("{name:?} is not a .mlm or .dtab file name")));
            }
            if sources.iter().any(|(n, _)| n == name) {
                return Err(bad(format!("{name:?} listed twice")));
            }
            sources.push((name.clone(), read(&dir.join(name))?));
        }
        Ok(Self { manifest, sources })
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
        for (name, text) in &self.sources {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }

    /// SHA-256 over the manifest and every file, in manifest order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.manifest).expect("manifest serializes"));
        for (name, text) in &self.sources {
            h.update([0]);
            h.update(name.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Parses every file. Files that fail to parse contribute one issue each;
    /// the remaining modules are still returned.
    pub fn parse(&self) -> (Vec<Mlm>, Vec<RuleIssue>) {
        let mut mlms = Vec::new();
        let mut issues = Vec::new();
        for (name, text) in &self.sources {
            let in_file = |mut issue: RuleIssue| {
                issue.detail = format!("{name}: {}", issue.detail);
                issue
            };
            if name.ends_with(".dtab") {
                match parse_decision_table(text) {
                    Ok(table) => {
                        if let Err(e) = check_completeness(&table) {
                            let table_name = table.header.as_ref().map_or("", |h| h.name.as_str());
                            issues.push(in_file(RuleIssue::error(
                                IssueKind::Syntax,
                                table_name,
                                e.to_string(),
                            )));
                        }
                        match table.to_rules() {
                            Some(rules) => mlms.extend(rules),
                            None => issues.push(in_file(RuleIssue::error(
                                IssueKind::Syntax,
                                "",
                                "decision table in a rulepack needs a `table:` header line",
                            ))),
                        }
                    }
                    Err(e) => issues.push(in_file(e)),
                }
            } else {
                match parse_mlm_file(text) {
                    Ok(m) => mlms.extend(m),
                    Err(e) => issues.push(in_file(e)),
                }
            }
        }
        (mlms, issues)
    }

    /// All parse and validation issues, sorted.
    pub fn lint(&self, ontology: &Ontology) -> Vec<RuleIssue> {
        let (mlms, mut issues) = self.parse();
        issues.extend(validate_rulebase(&mlms, ontology));
        issues.sort();
        issues
    }

    pub fn compile(&self, ontology: &Ontology) -> Result<Rulebase, RulepackError> {
        let (mlms, mut issues) = self.parse();
        issues.extend(validate_rulebase(&mlms, ontology));
        if has_errors(&issues) {
            issues.sort();
            return Err(RulepackError::Invalid(issues));
        }
        let mut classification = Vec::new();
        let mut criteria = Vec::new();
        for m in &mlms {
            let rule = compile_rule(m).map_err(|e| {
                RulepackError::Invalid(vec![RuleIssue::error(
                    IssueKind::Syntax,
                    &m.name,
                    e.to_string(),
                )])
            })?;
            match rule.kind {
                RuleKind::Classification => classification.push(rule),
                RuleKind::Criterion => criteria.push(rule),
            }
        }
        classification.sort_by(|a, b| a.mlm_name.cmp(&b.mlm_name));
        criteria.sort_by(|a, b| a.mlm_name.cmp(&b.mlm_name));
        Ok(Rulebase {
            id: self.manifest.id.clone(),
            version: self.manifest.version.clone(),
            content_hash: self.content_hash(),
            classification,
            criteria,
        })
    }
}

/// Executable rulepack: immutable once built and shared between sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rulebase {
    pub id: String,
    pub version: String,
    pub content_hash: String,
    pub classification: Vec<CompiledRule>,
    pub criteria: Vec<CompiledRule>,
}

impl Rulebase {
    pub fn rules(&self) -> impl Iterator<Item = &CompiledRule> {
        self.classification.iter().chain(&self.criteria)
    }

    pub fn listing(&self) -> String {
        let mut out = format!(
            "# rulepack {} {} sha256:{}\n",
            self.id, self.version, self.content_hash
        );
        for r in self.rules() {
            out.push('\n');
            out.push_str(&r.listing());
        }
        out
    }
}
