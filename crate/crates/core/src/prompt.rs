//! Prompt models C1-C4.
//!
//! Each expertise level adds information to the prompt: level 1 asks for a
//! direct 1-105 rating per criterion, level 2 lists vague metric names,
//! level 3 lists quantified metric names and level 4 adds a description and
//! scoring rule for each quantified metric.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{Criterion, MetricRegistry, Naming, RegistryError};

/// Score range of the level-1 direct rating.
pub const DIRECT_RANGE: (u32, u32) = (1, 105);
/// Score range of a single metric at levels 2-4.
pub const METRIC_RANGE: (u32, u32) = (1, 5);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("no criteria requested")]
    NoCriteria,
    #[error("criterion {0:?} has no metrics")]
    EmptyCriterion(String),
    #[error("metric {0:?} has no description")]
    MissingDescription(String),
    #[error("invalid expertise level {0}; expected 1..=4")]
    InvalidLevel(u8),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Prompt expertise level, 1 (no metrics) through 4 (quantified metrics
/// with descriptions).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct ExpertiseLevel(u8);

impl ExpertiseLevel {
    pub const ALL: [ExpertiseLevel; 4] = [
        ExpertiseLevel(1),
        ExpertiseLevel(2),
        ExpertiseLevel(3),
        ExpertiseLevel(4),
    ];

    pub fn new(level: u8) -> Result<Self, PromptError> {
        if (1..=4).contains(&level) {
            Ok(ExpertiseLevel(level))
        } else {
            Err(PromptError::InvalidLevel(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Name column used at this level, `None` for level 1.
    pub fn naming(self) -> Option<Naming> {
        match self.0 {
            1 => None,
            2 => Some(Naming::Vague),
            _ => Some(Naming::Quantified),
        }
    }

    pub fn score_range(self) -> (u32, u32) {
        if self.0 == 1 {
            DIRECT_RANGE
        } else {
            METRIC_RANGE
        }
    }

    /// Display label, e.g. `Model-C3`.
    pub fn model_label(self) -> String {
        format!("Model-C{}", self.0)
    }
}

impl TryFrom<u8> for ExpertiseLevel {
    type Error = PromptError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ExpertiseLevel::new(value)
    }
}

impl From<ExpertiseLevel> for u8 {
    fn from(l: ExpertiseLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for ExpertiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A metric as addressed in one prompt: names can repeat across criteria.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricRef {
    pub criterion: Criterion,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub level: ExpertiseLevel,
    pub criteria: Vec<Criterion>,
    pub body_text: String,
    pub expected_metrics: Vec<MetricRef>,
    pub score_range: (u32, u32),
    pub format_instruction: String,
}

impl PromptBundle {
    /// The full text sent to the model.
    pub fn request_text(&self) -> String {
        format!("{}\n\n{}", self.body_text, self.format_instruction)
    }

    pub fn metrics_of<'a>(&'a self, criterion: &'a Criterion) -> impl Iterator<Item = &'a str> {
        self.expected_metrics
            .iter()
            .filter(move |m| &m.criterion == criterion)
            .map(|m| m.name.as_str())
    }
}

fn join_criteria(criteria: &[Criterion]) -> String {
    let names: Vec<&str> = criteria.iter().map(Criterion::as_str).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

pub fn build_prompt(
    registry: &MetricRegistry,
    level: ExpertiseLevel,
    criteria: &[Criterion],
) -> Result<PromptBundle, PromptError> {
    if criteria.is_empty() {
        return Err(PromptError::NoCriteria);
    }
    let listed = join_criteria(criteria);
    let mut body = String::new();
    let mut expected = Vec::new();

    match level.naming() {
        None => {
            let _ = write!(
                body,
                "You are assessing the walkability of the street shown in the attached image.\n\
                 Rate pedestrian {listed} on a scale from 1 (lowest) to 105 (highest).\n\
                 Give one overall rating per criterion, based only on what is visible in the image."
            );
        }
        Some(naming) => {
            let _ = write!(
                body,
                "You are assessing the walkability of the street shown in the attached image.\n\
                 Evaluate pedestrian {listed} using the metrics listed below.\n\
                 Rate each metric on a scale from 1 (lowest) to 5 (highest), based only on what is visible in the image."
            );
            if level.get() == 4 {
                body.push_str(
                    "\nEach metric is followed by its description and scoring rule; apply them as written.",
                );
            }
            for criterion in criteria {
                let metrics = registry.metrics_for(criterion, naming)?;
                if metrics.is_empty() {
                    return Err(PromptError::EmptyCriterion(criterion.to_string()));
                }
                let _ = write!(body, "\n\n[{criterion}]");
                for (name, spec) in metrics {
                    if level.get() == 4 {
                        if spec.description.trim().is_empty() {
                            return Err(PromptError::MissingDescription(name.to_owned()));
                        }
                        let _ = write!(
                            body,
                            "\nMetric: {name}\nDescription: {}\nScoring: {}\n",
                            spec.description.trim(),
                            spec.scoring.rubric.trim()
                        );
                    } else {
                        let _ = write!(body, "\n- {name}");
                    }
                    expected.push(MetricRef {
                        criterion: criterion.clone(),
                        name: name.to_owned(),
                    });
                }
            }
            if level.get() == 4 {
                // strip the trailing blank line of the last block
                while body.ends_with('\n') {
                    body.pop();
                }
            }
        }
    }

    let format_instruction = format_instruction(level, criteria, &expected);
    Ok(PromptBundle {
        level,
        criteria: criteria.to_vec(),
        body_text: body,
        expected_metrics: expected,
        score_range: level.score_range(),
        format_instruction,
    })
}

/// Response-format block appended to every prompt.
///
/// Level 1 asks for one `<Criterion>: <integer> - <rationale>` line per
/// criterion. Levels 2-4 ask for one `<MetricName>: <integer> - <rationale>`
/// line per metric, grouped under a `[Criterion]` header and closed by an
/// `AGGREGATE: <sum>` line.
pub fn format_instruction(
    level: ExpertiseLevel,
    criteria: &[Criterion],
    expected_metrics: &[MetricRef],
) -> String {
    let (lo, hi) = level.score_range();
    let mut out = String::new();
    if level.get() == 1 {
        let _ = write!(
            out,
            "Respond with exactly one line per criterion in the form below, using a whole number from {lo} to {hi}:"
        );
        for c in criteria {
            let _ = write!(out, "\n{c}: <integer> - <one-sentence rationale>");
        }
        return out;
    }

    let _ = write!(
        out,
        "Respond with the lines below, keeping each [Criterion] header. \
         Replace <integer> with a whole number from {lo} to {hi} and give a one-sentence rationale. \
         End each section with AGGREGATE: <sum> of that section's scores."
    );
    let mut sections: Vec<&Criterion> = Vec::new();
    for m in expected_metrics {
        if !sections.contains(&&m.criterion) {
            sections.push(&m.criterion);
        }
    }
    for c in sections {
        let _ = write!(out, "\n[{c}]");
        for m in expected_metrics.iter().filter(|m| &m.criterion == c) {
            let _ = write!(out, "\n{}: <integer> - <one-sentence rationale>", m.name);
        }
        out.push_str("\nAGGREGATE: <sum>");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both() -> Vec<Criterion> {
        vec![Criterion::safety(), Criterion::attractiveness()]
    }

    #[test]
    fn level_one_direct_scale() {
        let r = MetricRegistry::default_registry();
        let b = build_prompt(&r, ExpertiseLevel::new(1).unwrap(), &both()).unwrap();
        assert!(b.body_text.contains("1 (lowest) to 105 (highest)"));
        assert!(b.body_text.contains("Rate pedestrian Safety and Attractiveness"));
        assert!(b.expected_metrics.is_empty());
        assert_eq!(b.score_range, (1, 105));
        assert!(b.format_instruction.contains("Safety: <integer>"));
        assert!(b.format_instruction.contains("Attractiveness: <integer>"));
    }

    #[test]
    fn level_four_contains_paper_description() {
        let r = MetricRegistry::default_registry();
        let b = build_prompt(
            &r,
            ExpertiseLevel::new(4).unwrap(),
            &[Criterion::attractiveness()],
        )
        .unwrap();
        assert!(b.body_text.contains(
            "Institutional area refers to educational, medical, community and cultural areas."
        ));
        assert!(b.body_text.contains(
            "If one of the above institutional areas is present, score: 5. If not, score: 1."
        ));
        for m in r.metrics().iter().filter(|m| m.criterion == Criterion::attractiveness()) {
            assert!(b.body_text.contains(&m.description));
        }
    }

    #[test]
    fn level_two_uses_vague_names() {
        let r = MetricRegistry::default_registry();
        let b = build_prompt(&r, ExpertiseLevel::new(2).unwrap(), &[Criterion::safety()]).unwrap();
        assert_eq!(b.expected_metrics.len(), 21);
        assert_eq!(b.expected_metrics[0].name, "CrossingAids");
        assert_eq!(b.expected_metrics[1].name, "TrafficSignals");
        assert_eq!(b.score_range, (1, 5));
    }

    #[test]
    fn invalid_levels() {
        assert!(ExpertiseLevel::new(0).is_err());
        assert!(ExpertiseLevel::new(5).is_err());
        assert!(serde_json::from_str::<ExpertiseLevel>("7").is_err());
        assert_eq!(serde_json::from_str::<ExpertiseLevel>("3").unwrap().get(), 3);
    }

    #[test]
    fn empty_criterion_and_missing_description() {
        let mut r = MetricRegistry::default_registry();
        let json = r.to_json().replace(
            "\"criteria\": [\n    \"Safety\",",
            "\"criteria\": [\n    \"Comfort\",\n    \"Safety\",",
        );
        let with_comfort = MetricRegistry::from_json(&json).unwrap();
        let comfort = Criterion::new("Comfort").unwrap();
        assert_eq!(
            build_prompt(&with_comfort, ExpertiseLevel::new(3).unwrap(), std::slice::from_ref(&comfort)),
            Err(PromptError::EmptyCriterion("Comfort".into()))
        );
        // level 1 needs no metrics
        assert!(build_prompt(&with_comfort, ExpertiseLevel::new(1).unwrap(), &[comfort]).is_ok());

        let mut metrics = r.metrics().to_vec();
        metrics[0].description.clear();
        r = MetricRegistry::from_parts(r.criteria().to_vec(), metrics).unwrap();
        assert_eq!(
            build_prompt(&r, ExpertiseLevel::new(4).unwrap(), &[Criterion::safety()]),
            Err(PromptError::MissingDescription("PresenceOfCrossingAids".into()))
        );
        assert!(build_prompt(&r, ExpertiseLevel::new(3).unwrap(), &[Criterion::safety()]).is_ok());
    }

    #[test]
    fn format_instruction_lists_every_metric() {
        let metrics: Vec<_> = ["CrossingAids", "TrafficSignals"]
            .iter()
            .map(|n| MetricRef {
                criterion: Criterion::safety(),
                name: (*n).into(),
            })
            .collect();
        let text = format_instruction(ExpertiseLevel::new(2).unwrap(), &[Criterion::safety()], &metrics);
        assert!(text.contains("\nCrossingAids: <integer> - <one-sentence rationale>"));
        assert!(text.contains("\nTrafficSignals: <integer> - <one-sentence rationale>"));
        assert!(text.contains("[Safety]"));
        assert!(text.ends_with("AGGREGATE: <sum>"));

        let empty = format_instruction(ExpertiseLevel::new(4).unwrap(), &[Criterion::safety()], &[]);
        assert!(!empty.contains("<integer> - <one"));
        assert!(!empty.contains("AGGREGATE: <sum>\n"));
    }

    #[test]
    fn no_criteria_rejected() {
        let r = MetricRegistry::default_registry();
        assert_eq!(
            build_prompt(&r, ExpertiseLevel::new(1).unwrap(), &[]),
            Err(PromptError::NoCriteria)
        );
    }
}
