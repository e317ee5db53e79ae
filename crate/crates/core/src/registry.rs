//! Structured walkability metric database.
//!
//! A registry holds the criteria (e.g. `Safety`, `Attractiveness`) and an
//! ordered list of metrics. Each metric exists in two naming variants: a
//! vague name and a quantified name. The order of metrics in the document is
//! the order in which they are presented in prompts.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.json");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("duplicate metric name {0:?}")]
    DuplicateMetric(String),
    #[error("unknown criterion {0:?}")]
    UnknownCriterion(String),
    #[error("invalid criterion name {0:?}: names must be non-empty and contain no whitespace")]
    InvalidCriterion(String),
    #[error("duplicate criterion {0:?}")]
    DuplicateCriterion(String),
    #[error("metric {name:?}: {reason}")]
    InvalidMetric { name: String, reason: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read registry {path}: {message}")]
    Io { path: String, message: String },
}

/// A high-level evaluation theme capping a set of metrics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Criterion(String);

impl Criterion {
    pub fn new(name: impl Into<String>) -> Result<Self, RegistryError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(RegistryError::InvalidCriterion(name));
        }
        Ok(Criterion(name))
    }

    pub fn safety() -> Self {
        Criterion("Safety".to_owned())
    }

    pub fn attractiveness() -> Self {
        Criterion("Attractiveness".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Criterion {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringKind {
    /// Binary: 5 when the feature is present, 1 otherwise.
    Presence,
    /// Ordinal 1..=5.
    Graded,
    /// Direct 1..=105 rating; only valid for a criterion-level score.
    Direct,
}

impl ScoringKind {
    /// The admissible scores for one answer under this rule.
    pub fn score_range(self) -> (u32, u32) {
        match self {
            ScoringKind::Presence | ScoringKind::Graded => (1, 5),
            ScoringKind::Direct => (1, 105),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringRule {
    pub kind: ScoringKind,
    pub rubric: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actionability {
    #[serde(rename = "yes")]
    Actionable,
    #[serde(rename = "no")]
    NotActionable,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Text taken verbatim from the source methodology.
    #[serde(rename = "paper")]
    Verbatim,
    /// Text written for this registry.
    Authored,
}

/// Which name column to present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Naming {
    Vague,
    Quantified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub vague_name: String,
    pub quantified_name: String,
    pub criterion: Criterion,
    #[serde(default)]
    pub description: String,
    pub description_provenance: Provenance,
    pub scoring: ScoringRule,
    pub actionable: Actionability,
    #[serde(default)]
    pub method: String,
    #[serde(default)]
    pub data_source: String,
}

impl MetricSpec {
    pub fn name(&self, naming: Naming) -> &str {
        match naming {
            Naming::Vague => &self.vague_name,
            Naming::Quantified => &self.quantified_name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    criteria: Vec<Criterion>,
    metrics: Vec<MetricSpec>,
}

/// Validated, immutable metric database.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetricRegistry {
    criteria: Vec<Criterion>,
    metrics: Vec<MetricSpec>,
}

/// Result of [`MetricRegistry::actionable_subset`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionableSubset<'a> {
    pub actionable: Vec<&'a MetricSpec>,
    /// Metrics excluded only because their actionability is unknown.
    pub unspecified: Vec<&'a MetricSpec>,
}

fn is_identifier(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl MetricRegistry {
    /// The shipped registry: 21 Safety and 21 Attractiveness metrics.
    pub fn default_registry() -> Self {
        Self::from_json(DEFAULT_REGISTRY).expect("shipped registry is valid")
    }

    /// The raw shipped registry document.
    pub fn default_document() -> &'static str {
        DEFAULT_REGISTRY
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Parses and validates a registry document. A blank document yields an
    /// empty registry.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let doc: RegistryDocument =
            serde_json::from_str(text).map_err(|e| RegistryError::ParseError {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::from_parts(doc.criteria, doc.metrics)
    }

    pub fn from_parts(
        criteria: Vec<Criterion>,
        metrics: Vec<MetricSpec>,
    ) -> Result<Self, RegistryError> {
        let mut seen = HashSet::new();
        for c in &criteria {
            if !is_identifier(c.as_str()) {
                return Err(RegistryError::InvalidCriterion(c.to_string()));
            }
            if !seen.insert(c.clone()) {
                return Err(RegistryError::DuplicateCriterion(c.to_string()));
            }
        }

        let mut vague = HashSet::new();
        let mut quantified = HashSet::new();
        for m in &metrics {
            if !seen.contains(&m.criterion) {
                return Err(RegistryError::UnknownCriterion(m.criterion.to_string()));
            }
            for name in [&m.vague_name, &m.quantified_name] {
                if !is_identifier(name) {
                    return Err(RegistryError::InvalidMetric {
                        name: name.clone(),
                        reason: "names must be non-empty and contain no whitespace".into(),
                    });
                }
            }
            if m.scoring.kind == ScoringKind::Direct {
                return Err(RegistryError::InvalidMetric {
                    name: m.quantified_name.clone(),
                    reason: "direct scoring is reserved for criterion-level ratings".into(),
                });
            }
            if !vague.insert((m.criterion.clone(), m.vague_name.to_ascii_lowercase())) {
                return Err(RegistryError::DuplicateMetric(m.vague_name.clone()));
            }
            if !quantified.insert((m.criterion.clone(), m.quantified_name.to_ascii_lowercase())) {
                return Err(RegistryError::DuplicateMetric(m.quantified_name.clone()));
            }
        }
        Ok(MetricRegistry { criteria, metrics })
    }

    pub fn to_json(&self) -> String {
        let doc = RegistryDocument {
            criteria: self.criteria.clone(),
            metrics: self.metrics.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("registry serializes") + "\n"
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn metrics(&self) -> &[MetricSpec] {
        &self.metrics
    }

    pub fn has_criterion(&self, criterion: &Criterion) -> bool {
        self.criteria.contains(criterion)
    }

    fn check_criterion(&self, criterion: &Criterion) -> Result<(), RegistryError> {
        if self.has_criterion(criterion) {
            Ok(())
        } else {
            Err(RegistryError::UnknownCriterion(criterion.to_string()))
        }
    }

    /// Metrics of one criterion in presentation order, named from the
    /// requested column.
    pub fn metrics_for(
        &self,
        criterion: &Criterion,
        naming: Naming,
    ) -> Result<Vec<(&str, &MetricSpec)>, RegistryError> {
        self.check_criterion(criterion)?;
        Ok(self
            .metrics
            .iter()
            .filter(|m| &m.criterion == criterion)
            .map(|m| (m.name(naming), m))
            .collect())
    }

    pub fn actionable_subset(
        &self,
        criterion: &Criterion,
    ) -> Result<ActionableSubset<'_>, RegistryError> {
        let mut out = ActionableSubset::default();
        for (_, m) in self.metrics_for(criterion, Naming::Quantified)? {
            match m.actionable {
                Actionability::Actionable => out.actionable.push(m),
                Actionability::Unspecified => out.unspecified.push(m),
                Actionability::NotActionable => {}
            }
        }
        Ok(out)
    }

    /// Finds a metric of `criterion` by either of its names (case-insensitive).
    pub fn lookup(&self, criterion: &Criterion, name: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| {
            &m.criterion == criterion
                && (m.vague_name.eq_ignore_ascii_case(name)
                    || m.quantified_name.eq_ignore_ascii_case(name))
        })
    }

    /// Names used by any metric, in either column.
    pub fn all_metric_names(&self) -> BTreeSet<&str> {
        self.metrics
            .iter()
            .flat_map(|m| [m.vague_name.as_str(), m.quantified_name.as_str()])
            .collect()
    }
}
