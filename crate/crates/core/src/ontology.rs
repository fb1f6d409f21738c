//! Mini domain terminology: coded concepts, TNM staging and structure
//! nomenclature.
//!
//! The ontology is a flat code list. It is loaded once and shared read-only
//! between evaluation sessions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// JSON of the ontology that ships with the crate.
pub const BUILTIN_ONTOLOGY_JSON: &str = include_str!("../data/ontology.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeSystem {
    #[serde(rename = "ICDO")]
    Icdo,
    #[serde(rename = "TNM")]
    Tnm,
    #[serde(rename = "STRUCT")]
    Struct,
    #[serde(rename = "LOCAL")]
    Local,
}

impl CodeSystem {
    pub const ALL: [CodeSystem; 4] = [
        CodeSystem::Icdo,
        CodeSystem::Tnm,
        CodeSystem::Struct,
        CodeSystem::Local,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CodeSystem::Icdo => "ICDO",
            CodeSystem::Tnm => "TNM",
            CodeSystem::Struct => "STRUCT",
            CodeSystem::Local => "LOCAL",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeSystem {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CodeSystem::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| OntologyError::UnknownSystem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptCode {
    pub system: CodeSystem,
    pub code: String,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TnmStage {
    pub t: String,
    pub n: String,
    pub m: String,
}

impl fmt::Display for TnmStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}N{}M{}", self.t, self.n, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NomenclatureRule {
    #[serde(rename = "canonical")]
    pub canonical_name: String,
    #[serde(rename = "color", default, skip_serializing_if = "Option::is_none")]
    pub expected_color: Option<String>,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("malformed TNM stage {text:?}: {reason}")]
    MalformedStage { text: String, reason: &'static str },
    #[error("unknown concept {system}:{code}{}", suggestion_suffix(.suggestions))]
    UnknownConcept {
        system: CodeSystem,
        code: String,
        suggestions: Vec<String>,
    },
    #[error("unknown structure name {0:?}")]
    UnknownStructureName(String),
    #[error("unknown code system {0:?}")]
    UnknownSystem(String),
    #[error("duplicate concept {0}")]
    DuplicateConcept(String),
    #[error("duplicate structure name or alias {0:?}")]
    DuplicateStructureName(String),
    #[error("empty concept code")]
    EmptyCode,
    #[error("invalid ontology file: {0}")]
    Format(String),
}

fn suggestion_suffix(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!(" (did you mean {}?)", s.join(", "))
    }
}

pub fn normalize_code(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

/// Colors are compared by name; case, hyphens, underscores and repeated
/// whitespace are ignored ("Dark-Blue" == "dark blue").
pub fn normalize_color(color: &str) -> String {
    color
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fixed palette accepted for contour colors.
pub const COLOR_PALETTE: &[&str] = &[
    "dark blue",
    "blue",
    "light blue",
    "red",
    "dark red",
    "green",
    "dark green",
    "yellow",
    "orange",
    "magenta",
    "cyan",
    "purple",
    "pink",
    "brown",
    "white",
];

pub fn is_palette_color(color: &str) -> bool {
    COLOR_PALETTE.contains(&normalize_color(color).as_str())
}

/// Splits a stage such as `T2aN0M0` into its T, N and M components.
///
/// Markers are case-insensitive and normalized to uppercase, T suffix letters
/// to lowercase. Components must appear in T, N, M order.
pub fn parse_tnm(text: &str) -> Result<TnmStage, OntologyError> {
    let malformed = |reason| OntologyError::MalformedStage {
        text: text.to_string(),
        reason,
    };
    let s = text.trim();
    if s.is_empty() {
        return Err(malformed("empty stage"));
    }
    let chars: Vec<char> = s.chars().collect();
    let mut pos = 0;

    let expect_marker = |pos: &mut usize, marker: char| -> Result<(), OntologyError> {
        match chars.get(*pos) {
            Some(c) if c.to_ascii_uppercase() == marker => {
                *pos += 1;
                Ok(())
            }
            Some(c) if matches!(c.to_ascii_uppercase(), 'T' | 'N' | 'M') => {
                Err(malformed("components out of T, N, M order"))
            }
            _ => Err(malformed("missing stage marker")),
        }
    };

    expect_marker(&mut pos, 'T')?;
    let t_digit = match chars.get(pos) {
        Some(c) if c.is_ascii_digit() => *c,
        _ => return Err(malformed("T component needs a digit")),
    };
    pos += 1;
    let mut t = t_digit.to_string();
    if let Some(c) = chars.get(pos) {
        if c.is_ascii_alphabetic() && !matches!(c.to_ascii_uppercase(), 'N' | 'M') {
            t.push(c.to_ascii_lowercase());
            pos += 1;
        }
    }

    expect_marker(&mut pos, 'N')?;
    let n = match chars.get(pos) {
        Some(c) if c.is_ascii_digit() => c.to_string(),
        _ => return Err(malformed("N component needs a single digit")),
    };
    pos += 1;

    expect_marker(&mut pos, 'M')?;
    let m = match chars.get(pos) {
        Some(c) if c.is_ascii_digit() => c.to_string(),
        _ => return Err(malformed("M component needs a single digit")),
    };
    pos += 1;

    if pos != chars.len() {
        return Err(malformed("trailing characters after M component"));
    }
    Ok(TnmStage { t, n, m })
}

/// Resolves `raw` against the nomenclature table, matching canonical names and
/// aliases case-insensitively.
pub fn canonical_structure_name(
    table: &[NomenclatureRule],
    raw: &str,
) -> Result<String, OntologyError> {
    let needle = raw.trim();
    table
        .iter()
        .find(|rule| {
            rule.canonical_name.eq_ignore_ascii_case(needle)
                || rule.aliases.iter().any(|a| a.eq_ignore_ascii_case(needle))
        })
        .map(|rule| rule.canonical_name.clone())
        .ok_or_else(|| OntologyError::UnknownStructureName(raw.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OntologyFile {
    concepts: Vec<ConceptCode>,
    nomenclature: Vec<NomenclatureRule>,
}

#[derive(Debug, Clone)]
pub struct Ontology {
    concepts: Vec<ConceptCode>,
    nomenclature: Vec<NomenclatureRule>,
    by_code: HashMap<(CodeSystem, String), usize>,
}

impl Ontology {
    pub fn new(
        concepts: Vec<ConceptCode>,
        nomenclature: Vec<NomenclatureRule>,
    ) -> Result<Self, OntologyError> {
        let mut by_code = HashMap::new();
        let mut normalized = Vec::with_capacity(concepts.len());
        for (idx, mut concept) in concepts.into_iter().enumerate() {
            concept.code = normalize_code(&concept.code);
            if concept.code.is_empty() {
                return Err(OntologyError::EmptyCode);
            }
            let key = (concept.system, concept.code.clone());
            if by_code.insert(key, idx).is_some() {
                return Err(OntologyError::DuplicateConcept(format!(
                    "{}:{}",
                    concept.system, concept.code
                )));
            }
            normalized.push(concept);
        }

        let mut names: HashMap<String, ()> = HashMap::new();
        for rule in &nomenclature {
            for name in std::iter::once(&rule.canonical_name).chain(&rule.aliases) {
                if names.insert(name.to_lowercase(), ()).is_some() {
                    return Err(OntologyError::DuplicateStructureName(name.clone()));
                }
            }
        }

        Ok(Self {
            concepts: normalized,
            nomenclature,
            by_code,
        })
    }

    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_ONTOLOGY_JSON).expect("builtin ontology is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| OntologyError::Format(e.to_string()))?;
        Self::new(file.concepts, file.nomenclature)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OntologyError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = OntologyFile {
            concepts: self.concepts.clone(),
            nomenclature: self.nomenclature.clone(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn concepts(&self) -> &[ConceptCode] {
        &self.concepts
    }

    pub fn nomenclature(&self) -> &[NomenclatureRule] {
        &self.nomenclature
    }

    pub fn resolve_concept(
        &self,
        system: CodeSystem,
        code: &str,
    ) -> Result<&ConceptCode, OntologyError> {
        let code = normalize_code(code);
        if let Some(&idx) = self.by_code.get(&(system, code.clone())) {
            return Ok(&self.concepts[idx]);
        }
        Err(OntologyError::UnknownConcept {
            system,
            suggestions: self.suggestions(system, &code),
            code,
        })
    }

    /// Codes of the same system sharing the longest common prefix with `code`.
    fn suggestions(&self, system: CodeSystem, code: &str) -> Vec<String> {
        let common = |a: &str| {
            a.chars()
                .zip(code.chars())
                .take_while(|(x, y)| x == y)
                .count()
        };
        let mut scored: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for c in self.concepts.iter().filter(|c| c.system == system) {
            let n = common(&c.code);
            if n > 0 {
                scored.entry(n).or_default().push(c.code.clone());
            }
        }
        scored
            .into_iter()
            .next_back()
            .map(|(_, mut v)| {
                v.sort();
                v
            })
            .unwrap_or_default()
    }

    pub fn canonical_structure_name(&self, raw: &str) -> Result<String, OntologyError> {
        canonical_structure_name(&self.nomenclature, raw)
    }

    pub fn nomenclature_rule(&self, canonical: &str) -> Option<&NomenclatureRule> {
        self.nomenclature
            .iter()
            .find(|r| r.canonical_name == canonical)
    }
}
