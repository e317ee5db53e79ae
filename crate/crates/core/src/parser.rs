//! Extracts scores from raw model responses.
//!
//! The parser scans line by line for `<Name>: <integer>` with an optional
//! `- rationale`. Everything else is treated as prose and skipped. Names
//! match case-insensitively and ignoring whitespace. Criterion aggregates
//! are always recomputed from the metric scores; a reported `AGGREGATE`
//! line is only compared against the recomputed sum.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{RawResponse, RequestKey};
use crate::prompt::{ExpertiseLevel, MetricRef, PromptBundle};
use crate::registry::Criterion;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing metrics: {}", .0.join(", "))]
    MissingMetrics(Vec<String>),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("score for {name:?} out of range: {value}")]
    ScoreOutOfRange { name: String, value: i64 },
    #[error("score for {name:?} is not an integer: {value:?}")]
    NonIntegerScore { name: String, value: String },
    #[error("conflicting scores for {0:?}")]
    AmbiguousScore(String),
    #[error("metric {0:?} appears under several criteria; a [Criterion] header is required")]
    AmbiguousMetric(String),
    #[error("bundle is for level {got}, expected {expected}")]
    WrongLevel { expected: String, got: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseWarning {
    /// The model's own sum disagreed with the recomputed one.
    AggregateMismatch {
        criterion: Criterion,
        reported: i64,
        recomputed: u32,
    },
    /// An `AGGREGATE` line appeared outside any criterion section.
    UnplacedAggregate(i64),
}

/// One scored (image, level, replicate) outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub image_id: String,
    pub level: ExpertiseLevel,
    pub replicate: u32,
    /// Aggregate per criterion: the direct rating at level 1, the sum of
    /// metric scores otherwise.
    pub criterion_scores: BTreeMap<Criterion, u32>,
    /// criterion -> metric name -> score; empty at level 1.
    pub metric_scores: BTreeMap<Criterion, BTreeMap<String, u32>>,
    /// criterion -> metric name (or the criterion itself at level 1) -> text.
    pub rationales: BTreeMap<Criterion, BTreeMap<String, String>>,
    pub raw_ref: RequestKey,
}

impl EvaluationRecord {
    pub fn metric_score(&self, criterion: &Criterion, name: &str) -> Option<u32> {
        self.metric_scores.get(criterion)?.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome {
    pub record: EvaluationRecord,
    pub warnings: Vec<ParseWarning>,
}

static SCORE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)^\s*
        (?:[-*•]\s*|\d{1,2}[.)]\s+)?          # bullet or list number
        [*_`]*\s*
        (?P<name>[A-Za-z][A-Za-z0-9_\ \t]*?)  # metric or criterion name
        \s*[*_`]*\s*:\s*[*_`]*\s*
        (?P<score>[-+]?\d+(?:[.,]\d+)?)       # score
        [*_`]*
        (?:\s*(?:/\s*\d+|out\ of\ \d+))?      # optional '/5'
        \s*(?:[-–—:]\s*(?P<rationale>.*?))?
        \s*$",
    )
    .expect("valid regex")
});

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

fn header_name(line: &str) -> String {
    normalize(&line.replace(['#', '*', '[', ']', ':', '_', '`'], ""))
}

struct ScoreLine<'a> {
    name: &'a str,
    score: &'a str,
    rationale: &'a str,
}

fn score_line(line: &str) -> Option<ScoreLine<'_>> {
    let caps = SCORE_LINE.captures(line)?;
    Some(ScoreLine {
        name: caps.name("name")?.as_str().trim(),
        score: caps.name("score")?.as_str(),
        rationale: caps.name("rationale").map_or("", |m| m.as_str().trim()),
    })
}

fn parse_score(name: &str, text: &str, range: (u32, u32)) -> Result<u32, ParseError> {
    if text.contains(['.', ',']) {
        return Err(ParseError::NonIntegerScore {
            name: name.to_owned(),
            value: text.to_owned(),
        });
    }
    let value: i64 = text.parse().unwrap_or(i64::MAX);
    if value < range.0 as i64 || value > range.1 as i64 {
        return Err(ParseError::ScoreOutOfRange {
            name: name.to_owned(),
            value,
        });
    }
    Ok(value as u32)
}

fn criterion_header<'a>(line: &str, criteria: &'a [Criterion]) -> Option<&'a Criterion> {
    let h = header_name(line);
    if h.is_empty() {
        return None;
    }
    criteria.iter().find(|c| normalize(c.as_str()) == h)
}

fn empty_record(raw: &RawResponse, bundle: &PromptBundle, image_id: &str) -> EvaluationRecord {
    EvaluationRecord {
        image_id: image_id.to_owned(),
        level: bundle.level,
        replicate: raw.key.replicate,
        criterion_scores: BTreeMap::new(),
        metric_scores: BTreeMap::new(),
        rationales: BTreeMap::new(),
        raw_ref: raw.key.clone(),
    }
}

/// Parses a response to any level, dispatching on the bundle's level.
pub fn parse_any(
    raw: &RawResponse,
    bundle: &PromptBundle,
    image_id: &str,
) -> Result<ParseOutcome, ParseError> {
    if bundle.level.get() == 1 {
        parse_level1(raw, bundle, image_id)
    } else {
        parse(raw, bundle, image_id)
    }
}

/// Parses a level-1 response: one direct rating per criterion.
pub fn parse_level1(
    raw: &RawResponse,
    bundle: &PromptBundle,
    image_id: &str,
) -> Result<ParseOutcome, ParseError> {
    if bundle.level.get() != 1 {
        return Err(ParseError::WrongLevel {
            expected: "1".into(),
            got: bundle.level.get(),
        });
    }
    let mut record = empty_record(raw, bundle, image_id);
    for line in raw.text.lines() {
        let Some(sl) = score_line(line) else { continue };
        let key = normalize(sl.name);
        if key == "aggregate" {
            continue;
        }
        let Some(criterion) = bundle.criteria.iter().find(|c| normalize(c.as_str()) == key) else {
            return Err(ParseError::UnknownMetric(sl.name.to_owned()));
        };
        let score = parse_score(criterion.as_str(), sl.score, bundle.score_range)?;
        match record.criterion_scores.get(criterion) {
            Some(&prev) if prev != score => {
                return Err(ParseError::AmbiguousScore(criterion.to_string()));
            }
            Some(_) => {}
            None => {
                record.criterion_scores.insert(criterion.clone(), score);
                record
                    .rationales
                    .entry(criterion.clone())
                    .or_default()
                    .insert(criterion.to_string(), sl.rationale.to_owned());
            }
        }
    }
    let missing: Vec<String> = bundle
        .criteria
        .iter()
        .filter(|c| !record.criterion_scores.contains_key(*c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ParseError::MissingMetrics(missing));
    }
    Ok(ParseOutcome {
        record,
        warnings: Vec::new(),
    })
}

/// Parses a level 2-4 response: one score per expected metric.
pub fn parse(
    raw: &RawResponse,
    bundle: &PromptBundle,
    image_id: &str,
) -> Result<ParseOutcome, ParseError> {
    if bundle.level.get() == 1 {
        return Err(ParseError::WrongLevel {
            expected: "2..=4".into(),
            got: 1,
        });
    }
    let mut index: BTreeMap<String, Vec<&MetricRef>> = BTreeMap::new();
    for m in &bundle.expected_metrics {
        index.entry(normalize(&m.name)).or_default().push(m);
    }
    let display = |m: &MetricRef| -> String {
        if index[&normalize(&m.name)].len() > 1 {
            format!("{}/{}", m.criterion, m.name)
        } else {
            m.name.clone()
        }
    };

    let mut record = empty_record(raw, bundle, image_id);
    let mut reported: Vec<(Criterion, i64)> = Vec::new();
    let mut warnings = Vec::new();
    let mut section: Option<&Criterion> = None;
    let single = match bundle.criteria.as_slice() {
        [only] => Some(only),
        _ => None,
    };

    for line in raw.text.lines() {
        let Some(sl) = score_line(line) else {
            if let Some(c) = criterion_header(line, &bundle.criteria) {
                section = Some(c);
            }
            continue;
        };
        let key = normalize(sl.name);
        if key == "aggregate" || key == "total" {
            let value: i64 = sl.score.parse().unwrap_or(i64::MIN);
            match section.or(single) {
                Some(c) => reported.push((c.clone(), value)),
                None => warnings.push(ParseWarning::UnplacedAggregate(value)),
            }
            continue;
        }
        let metric = match index.get(&key).map(Vec::as_slice) {
            Some([only]) => *only,
            Some(several) => match section.and_then(|s| several.iter().find(|m| &m.criterion == s)) {
                Some(m) => *m,
                None => return Err(ParseError::AmbiguousMetric(sl.name.to_owned())),
            },
            None => {
                // a criterion-level total written under the criterion's own name
                if let Some(c) = bundle.criteria.iter().find(|c| normalize(c.as_str()) == key) {
                    reported.push((c.clone(), sl.score.parse().unwrap_or(i64::MIN)));
                    continue;
                }
                return Err(ParseError::UnknownMetric(sl.name.to_owned()));
            }
        };
        let score = parse_score(&metric.name, sl.score, bundle.score_range)?;
        let scores = record.metric_scores.entry(metric.criterion.clone()).or_default();
        match scores.get(&metric.name) {
            Some(&prev) if prev != score => {
                return Err(ParseError::AmbiguousScore(display(metric)));
            }
            Some(_) => {}
            None => {
                scores.insert(metric.name.clone(), score);
                record
                    .rationales
                    .entry(metric.criterion.clone())
                    .or_default()
                    .insert(metric.name.clone(), sl.rationale.to_owned());
            }
        }
    }

    let missing: Vec<String> = bundle
        .expected_metrics
        .iter()
        .filter(|m| record.metric_score(&m.criterion, &m.name).is_none())
        .map(display)
        .collect();
    if !missing.is_empty() {
        return Err(ParseError::MissingMetrics(missing));
    }

    for c in &bundle.criteria {
        let sum: u32 = record
            .metric_scores
            .get(c)
            .map(|m| m.values().sum())
            .unwrap_or(0);
        record.criterion_scores.insert(c.clone(), sum);
    }
    for (c, value) in reported {
        let recomputed = record.criterion_scores[&c];
        if value != recomputed as i64 {
            warnings.push(ParseWarning::AggregateMismatch {
                criterion: c,
                reported: value,
                recomputed,
            });
        }
    }
    Ok(ParseOutcome { record, warnings })
}

/// Renders a record in the canonical response format requested by
/// [`crate::prompt::format_instruction`].
pub fn render_canonical(record: &EvaluationRecord, bundle: &PromptBundle) -> String {
    let mut out = String::new();
    let rationale = |c: &Criterion, name: &str| -> String {
        record
            .rationales
            .get(c)
            .and_then(|r| r.get(name))
            .filter(|r| !r.is_empty())
            .map(|r| format!(" - {r}"))
            .unwrap_or_default()
    };
    if bundle.level.get() == 1 {
        for c in &bundle.criteria {
            if let Some(score) = record.criterion_scores.get(c) {
                let _ = writeln!(out, "{c}: {score}{}", rationale(c, c.as_str()));
            }
        }
        return out;
    }
    for c in &bundle.criteria {
        let _ = writeln!(out, "[{c}]");
        for name in bundle.metrics_of(c) {
            if let Some(score) = record.metric_score(c, name) {
                let _ = writeln!(out, "{name}: {score}{}", rationale(c, name));
            }
        }
        if let Some(total) = record.criterion_scores.get(c) {
            let _ = writeln!(out, "AGGREGATE: {total}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::build_prompt;
    use crate::registry::MetricRegistry;

    fn raw(text: &str, level: u8) -> RawResponse {
        RawResponse::for_test(text, ExpertiseLevel::new(level).unwrap())
    }

    fn bundle(level: u8, criteria: &[Criterion]) -> PromptBundle {
        build_prompt(
            &MetricRegistry::default_registry(),
            ExpertiseLevel::new(level).unwrap(),
            criteria,
        )
        .unwrap()
    }

    fn full_response(b: &PromptBundle, score: impl Fn(usize) -> u32) -> String {
        let mut s = String::from("Here is my assessment.\n\n");
        for c in &b.criteria {
            s.push_str(&format!("[{c}]\n"));
            for (i, name) in b.metrics_of(c).enumerate() {
                s.push_str(&format!("{name}: {} - looks fine\n", score(i)));
            }
        }
        s
    }

    #[test]
    fn template_line() {
        let b = bundle(3, &[Criterion::attractiveness()]);
        let text = full_response(&b, |_| 3).replace(
            "PresenceOfTrees: 3 - looks fine",
            "PresenceOfTrees: 4 - mature roadside trees",
        );
        let out = parse(&raw(&text, 3), &b, "img").unwrap();
        let a = Criterion::attractiveness();
        assert_eq!(out.record.metric_score(&a, "PresenceOfTrees"), Some(4));
        assert_eq!(out.record.rationales[&a]["PresenceOfTrees"], "mature roadside trees");
        assert_eq!(out.record.criterion_scores[&a], 20 * 3 + 4);
    }

    #[test]
    fn missing_metric() {
        let b = bundle(2, &[Criterion::safety()]);
        let text: String = full_response(&b, |_| 2)
            .lines()
            .filter(|l| !l.starts_with("CrimeRate:"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            parse(&raw(&text, 2), &b, "img").unwrap_err(),
            ParseError::MissingMetrics(vec!["CrimeRate".into()])
        );
    }

    #[test]
    fn out_of_range_and_non_integer() {
        let b = bundle(3, &[Criterion::safety()]);
        let text = full_response(&b, |_| 2).replace("NumberOfLights: 2", "NumberOfLights: 9");
        assert_eq!(
            parse(&raw(&text, 3), &b, "img").unwrap_err(),
            ParseError::ScoreOutOfRange {
                name: "NumberOfLights".into(),
                value: 9
            }
        );
        let text = full_response(&b, |_| 2).replace("NumberOfLights: 2", "NumberOfLights: 4.5");
        assert!(matches!(
            parse(&raw(&text, 3), &b, "img").unwrap_err(),
            ParseError::NonIntegerScore { .. }
        ));
        let text = full_response(&b, |_| 2).replace("NumberOfLights: 2", "NumberOfLights: 0");
        assert!(matches!(
            parse(&raw(&text, 3), &b, "img").unwrap_err(),
            ParseError::ScoreOutOfRange { value: 0, .. }
        ));
    }

    #[test]
    fn tolerant_name_matching() {
        let b = bundle(3, &[Criterion::safety()]);
        let text = full_response(&b, |_| 2)
            .replace("NumberOfLights: 2", "  - **number of lights**: 5/5 — bright lamps")
            .replace("VehicleFlow: 2", "Vehicle Flow : 3");
        let out = parse(&raw(&text, 3), &b, "img").unwrap();
        let s = Criterion::safety();
        assert_eq!(out.record.metric_score(&s, "NumberOfLights"), Some(5));
        assert_eq!(out.record.metric_score(&s, "VehicleFlow"), Some(3));
        assert_eq!(out.record.criterion_scores[&s], 19 * 2 + 5 + 3);
    }

    #[test]
    fn unknown_metric() {
        let b = bundle(3, &[Criterion::safety()]);
        let text = full_response(&b, |_| 2) + "NumberOfBenches: 3 - two benches\n";
        assert_eq!(
            parse(&raw(&text, 3), &b, "img").unwrap_err(),
            ParseError::UnknownMetric("NumberOfBenches".into())
        );
    }

    #[test]
    fn aggregate_checked_not_trusted() {
        let b = bundle(2, &[Criterion::safety()]);
        let text = full_response(&b, |_| 2) + "AGGREGATE: 50\n";
        let out = parse(&raw(&text, 2), &b, "img").unwrap();
        assert_eq!(out.record.criterion_scores[&Criterion::safety()], 42);
        assert_eq!(
            out.warnings,
            vec![ParseWarning::AggregateMismatch {
                criterion: Criterion::safety(),
                reported: 50,
                recomputed: 42
            }]
        );
    }

    #[test]
    fn shared_names_resolved_by_section() {
        let both = [Criterion::safety(), Criterion::attractiveness()];
        let b = bundle(3, &both);
        let text = full_response(&b, |i| (i % 5) as u32 + 1);
        let out = parse(&raw(&text, 3), &b, "img").unwrap();
        // LandscapeDiversityIndex is row 20 of Safety and row 16 of Attractiveness
        assert_eq!(out.record.metric_score(&Criterion::safety(), "LandscapeDiversityIndex"), Some(5));
        assert_eq!(
            out.record.metric_score(&Criterion::attractiveness(), "LandscapeDiversityIndex"),
            Some(1)
        );
        let no_headers: String = text.lines().filter(|l| !l.starts_with('[')).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse(&raw(&no_headers, 3), &b, "img").unwrap_err(),
            ParseError::AmbiguousMetric(_)
        ));
    }

    #[test]
    fn level_one() {
        let b = bundle(1, &[Criterion::safety(), Criterion::attractiveness()]);
        let out = parse_level1(&raw("Safety: 75 - wide sidewalks\nAttractiveness: 60", 1), &b, "img").unwrap();
        assert_eq!(out.record.criterion_scores[&Criterion::safety()], 75);
        assert!(out.record.metric_scores.is_empty());
        assert!(matches!(
            parse_level1(&raw("Safety: 0\nAttractiveness: 60", 1), &b, "img").unwrap_err(),
            ParseError::ScoreOutOfRange { value: 0, .. }
        ));
        assert!(matches!(
            parse_level1(&raw("Safety: 106\nAttractiveness: 60", 1), &b, "img").unwrap_err(),
            ParseError::ScoreOutOfRange { value: 106, .. }
        ));
        assert_eq!(
            parse_level1(&raw("Safety: 60\nAttractiveness: 50\nSafety: 80", 1), &b, "img").unwrap_err(),
            ParseError::AmbiguousScore("Safety".into())
        );
        assert_eq!(
            parse_level1(&raw("Safety: 60", 1), &b, "img").unwrap_err(),
            ParseError::MissingMetrics(vec!["Attractiveness".into()])
        );
    }

    #[test]
    fn canonical_round_trip() {
        let b = bundle(4, &[Criterion::safety(), Criterion::attractiveness()]);
        let text = full_response(&b, |i| (i * 7 % 5) as u32 + 1);
        let first = parse(&raw(&text, 4), &b, "img").unwrap().record;
        let rendered = render_canonical(&first, &b);
        let second = parse(&raw(&rendered, 4), &b, "img").unwrap();
        assert_eq!(first, second.record);
        assert!(second.warnings.is_empty());
    }
}
