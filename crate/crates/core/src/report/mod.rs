//! Analysis tables derived from a set of evaluation records.
//!
//! Replicates of the same (image, level) are averaged before anything else,
//! so every statistic sees one observation per image.

mod export;
mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::parser::EvaluationRecord;
use crate::prompt::ExpertiseLevel;
use crate::registry::{Criterion, MetricRegistry, Naming, RegistryError};
use crate::stats::{
    games_howell, kruskal_wallis, levene, t_quantile, welch_anova, DegreesOfFreedom,
    LeveneCenter, PairwiseResult, SampleGroup, StatsError, TestResult,
};

pub use export::{export, CSV_FILES};

/// image id -> street label.
pub type StreetAssignment = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to analyse")]
    EmptyInput,
    #[error("image {0:?} has no street label")]
    UnassignedImage(String),
    #[error("no records for level {level}, criterion {criterion}")]
    EmptyCell {
        level: ExpertiseLevel,
        criterion: Criterion,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Replicate-averaged scores of one image at one level.
#[derive(Debug, Clone)]
struct Cell {
    image_id: String,
    level: ExpertiseLevel,
    aggregates: BTreeMap<Criterion, f64>,
    metrics: BTreeMap<Criterion, BTreeMap<String, f64>>,
}

/// Averages replicates; output is sorted by (level, image_id).
fn collapse(records: &[EvaluationRecord]) -> Vec<Cell> {
    type Sums = BTreeMap<Criterion, (f64, usize)>;
    type MetricSums = BTreeMap<Criterion, BTreeMap<String, (f64, usize)>>;
    let mut acc: BTreeMap<(ExpertiseLevel, &str), (Sums, MetricSums)> = BTreeMap::new();
    for r in records {
        let (aggs, metrics) = acc.entry((r.level, r.image_id.as_str())).or_default();
        for (c, &v) in &r.criterion_scores {
            let e = aggs.entry(c.clone()).or_default();
            e.0 += f64::from(v);
            e.1 += 1;
        }
        for (c, scores) in &r.metric_scores {
            let m = metrics.entry(c.clone()).or_default();
            for (name, &v) in scores {
                let e = m.entry(name.clone()).or_default();
                e.0 += f64::from(v);
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((level, image_id), (aggs, metrics))| Cell {
            image_id: image_id.to_owned(),
            level,
            aggregates: aggs.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect(),
            metrics: metrics
                .into_iter()
                .map(|(c, m)| (c, m.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()))
                .collect(),
        })
        .collect()
}

fn nonempty(records: &[EvaluationRecord]) -> Result<Vec<Cell>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(collapse(records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreetAverage {
    pub street: String,
    pub level: ExpertiseLevel,
    pub criterion: Criterion,
    pub mean: f64,
    pub n_images: usize,
}

/// Mean criterion aggregate per (street, level, criterion).
pub fn street_averages(
    records: &[EvaluationRecord],
    assignment: &StreetAssignment,
) -> Result<Vec<StreetAverage>, ReportError> {
    let cells = nonempty(records)?;
    let mut acc: BTreeMap<(&str, ExpertiseLevel, &Criterion), Vec<f64>> = BTreeMap::new();
    for cell in &cells {
        let street = assignment
            .get(&cell.image_id)
            .ok_or_else(|| ReportError::UnassignedImage(cell.image_id.clone()))?;
        for (c, &v) in &cell.aggregates {
            acc.entry((street.as_str(), cell.level, c)).or_default().push(v);
        }
    }
    Ok(acc
        .into_iter()
        .map(|((street, level, criterion), values)| StreetAverage {
            street: street.to_owned(),
            level,
            criterion: criterion.clone(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            n_images: values.len(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremeEntry {
    pub image_id: String,
    pub score: f64,
    /// Another image has the same score.
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extreme {
    pub level: ExpertiseLevel,
    pub criterion: Criterion,
    pub max: ExtremeEntry,
    pub min: ExtremeEntry,
}

fn extreme_of(cells: &[Cell], level: ExpertiseLevel, criterion: &Criterion) -> Option<Extreme> {
    // cells are sorted by image id within a level, so the first strict
    // improvement wins ties
    let scores: Vec<(&str, f64)> = cells
        .iter()
        .filter(|c| c.level == level)
        .filter_map(|c| Some((c.image_id.as_str(), *c.aggregates.get(criterion)?)))
        .collect();
    let pick = |better: fn(f64, f64) -> bool| -> ExtremeEntry {
        let mut best = scores[0];
        for &s in &scores[1..] {
            if better(s.1, best.1) {
                best = s;
            }
        }
        ExtremeEntry {
            image_id: best.0.to_owned(),
            score: best.1,
            tied: scores.iter().filter(|s| s.1 == best.1).count() > 1,
        }
    };
    if scores.is_empty() {
        return None;
    }
    Some(Extreme {
        level,
        criterion: criterion.clone(),
        max: pick(|a, b| a > b),
        min: pick(|a, b| a < b),
    })
}

/// Highest- and lowest-scoring image of one (level, criterion) cell.
pub fn extreme(
    records: &[EvaluationRecord],
    level: ExpertiseLevel,
    criterion: &Criterion,
) -> Result<Extreme, ReportError> {
    extreme_of(&collapse(records), level, criterion).ok_or_else(|| ReportError::EmptyCell {
        level,
        criterion: criterion.clone(),
    })
}

/// [`extreme`] for every (level, criterion) cell present in the records.
pub fn extremes(records: &[EvaluationRecord]) -> Result<Vec<Extreme>, ReportError> {
    let cells = nonempty(records)?;
    let keys: BTreeSet<(ExpertiseLevel, &Criterion)> = cells
        .iter()
        .flat_map(|c| c.aggregates.keys().map(move |k| (c.level, k)))
        .collect();
    Ok(keys
        .into_iter()
        .filter_map(|(level, c)| extreme_of(&cells, level, c))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub level: ExpertiseLevel,
    pub n: usize,
    pub mean: f64,
}

/// Levene, Welch's ANOVA and Games-Howell on the per-level aggregates of one
/// criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub criterion: Criterion,
    pub groups: Vec<GroupSummary>,
    pub levene: TestResult,
    pub overall: TestResult,
    /// Pairs in (lower level, higher level) order.
    pub pairs: Vec<PairwiseResult>,
}

fn level_groups(cells: &[Cell], criterion: &Criterion) -> Vec<(ExpertiseLevel, SampleGroup)> {
    let mut by_level: BTreeMap<ExpertiseLevel, Vec<f64>> = BTreeMap::new();
    for cell in cells {
        if let Some(&v) = cell.aggregates.get(criterion) {
            by_level.entry(cell.level).or_default().push(v);
        }
    }
    by_level
        .into_iter()
        .map(|(level, values)| (level, SampleGroup::new(level.model_label(), values)))
        .collect()
}

pub fn model_comparison(
    records: &[EvaluationRecord],
    criterion: &Criterion,
    center: LeveneCenter,
    alpha: f64,
) -> Result<ModelComparison, ReportError> {
    let cells = nonempty(records)?;
    let groups = level_groups(&cells, criterion);
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            got: groups.len(),
        }
        .into());
    }
    let samples: Vec<SampleGroup> = groups.iter().map(|(_, g)| g.clone()).collect();
    Ok(ModelComparison {
        criterion: criterion.clone(),
        groups: groups
            .iter()
            .map(|(level, g)| GroupSummary {
                level: *level,
                n: g.len(),
                mean: g.mean(),
            })
            .collect(),
        levene: levene(&samples, center)?,
        overall: welch_anova(&samples)?,
        pairs: games_howell(&samples, alpha)?,
    })
}

pub const DIVERGENCE_LEVELS: [u8; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    /// Quantified name; the vague name is the same metric at level 2.
    pub metric: String,
    pub vague_name: String,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub n_per_level: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDivergence {
    pub criterion: Criterion,
    /// Sorted by statistic descending, then metric name.
    pub rows: Vec<DivergenceRow>,
    pub warnings: Vec<String>,
}

/// Kruskal-Wallis of each metric's scores across levels 2, 3 and 4, ranked
/// by H.
pub fn metric_divergence(
    records: &[EvaluationRecord],
    registry: &MetricRegistry,
    criterion: &Criterion,
    top_n: usize,
) -> Result<MetricDivergence, ReportError> {
    if top_n == 0 {
        return Err(ReportError::InvalidArgument("top_n must be >= 1".into()));
    }
    let cells = nonempty(records)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (_, spec) in registry.metrics_for(criterion, Naming::Quantified)? {
        let groups: Vec<SampleGroup> = DIVERGENCE_LEVELS
            .iter()
            .map(|&l| {
                let name = if l == 2 { &spec.vague_name } else { &spec.quantified_name };
                let values = cells
                    .iter()
                    .filter(|c| c.level.get() == l)
                    .filter_map(|c| c.metrics.get(criterion)?.get(name).copied())
                    .collect();
                SampleGroup::new(format!("Model-C{l}"), values)
            })
            .collect();
        let n_per_level = [groups[0].len(), groups[1].len(), groups[2].len()];
        if let Some(g) = groups.iter().find(|g| g.is_empty()) {
            warnings.push(format!(
                "{criterion}/{}: no scores at {}; excluded",
                spec.quantified_name, g.label
            ));
            continue;
        }
        let (statistic, p_value) = match kruskal_wallis(&groups) {
            Ok(r) => (r.statistic, r.p_value),
            Err(StatsError::DegenerateVariance(_)) => (0.0, 1.0),
            Err(e) => {
                warnings.push(format!("{criterion}/{}: {e}; excluded", spec.quantified_name));
                continue;
            }
        };
        rows.push(DivergenceRow {
            metric: spec.quantified_name.clone(),
            vague_name: spec.vague_name.clone(),
            statistic,
            df: (DIVERGENCE_LEVELS.len() - 1) as f64,
            p_value,
            n_per_level,
        });
    }
    rows.sort_by(|a, b| {
        b.statistic
            .total_cmp(&a.statistic)
            .then_with(|| a.metric.cmp(&b.metric))
    });
    rows.truncate(top_n);
    Ok(MetricDivergence {
        criterion: criterion.clone(),
        rows,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterventionRow {
    pub street: String,
    pub criterion: Criterion,
    pub metric: String,
    pub mean: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterventionView {
    /// Level the metric means were taken from; None if no record has
    /// metric scores.
    pub level: Option<ExpertiseLevel>,
    pub threshold: f64,
    pub rows: Vec<InterventionRow>,
    pub warnings: Vec<String>,
}

/// Per street, the actionable metrics whose mean score is below `threshold`.
/// Uses `level` if given, otherwise the highest level with metric scores.
pub fn intervention_view(
    records: &[EvaluationRecord],
    assignment: &StreetAssignment,
    registry: &MetricRegistry,
    threshold: f64,
    level: Option<ExpertiseLevel>,
) -> Result<InterventionView, ReportError> {
    if !(1.0..=5.0).contains(&threshold) {
        return Err(ReportError::InvalidArgument(format!(
            "threshold {threshold} is outside the metric scale 1..=5"
        )));
    }
    let cells = nonempty(records)?;
    for cell in &cells {
        if !assignment.contains_key(&cell.image_id) {
            return Err(ReportError::UnassignedImage(cell.image_id.clone()));
        }
    }
    let level = level.or_else(|| {
        cells
            .iter()
            .filter(|c| c.level.naming().is_some() && !c.metrics.is_empty())
            .map(|c| c.level)
            .max()
    });
    let mut view = InterventionView {
        level,
        threshold,
        rows: Vec::new(),
        warnings: Vec::new(),
    };
    let Some(level) = level else {
        view.warnings.push("no record carries metric scores".into());
        return Ok(view);
    };
    let Some(naming) = level.naming() else {
        return Err(ReportError::InvalidArgument(format!("level {level} has no metric scores")));
    };
    let streets: BTreeSet<&str> = assignment.values().map(String::as_str).collect();
    for criterion in registry.criteria() {
        let subset = registry.actionable_subset(criterion)?;
        for m in &subset.unspecified {
            view.warnings.push(format!(
                "{criterion}/{}: actionability unspecified; excluded",
                m.quantified_name
            ));
        }
        for &street in &streets {
            for m in &subset.actionable {
                let name = m.name(naming);
                let values: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.level == level && assignment[&c.image_id] == street)
                    .filter_map(|c| c.metrics.get(criterion)?.get(name).copied())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                if mean < threshold {
                    view.rows.push(InterventionRow {
                        street: street.to_owned(),
                        criterion: criterion.clone(),
                        metric: m.quantified_name.clone(),
                        mean,
                        n_images: values.len(),
                    });
                }
            }
        }
    }
    view.rows.sort_by(|a, b| a.street.cmp(&b.street));
    Ok(view)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub level: ExpertiseLevel,
    pub criterion: Criterion,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// 95% t-interval of the mean; None for a single image.
    pub ci95: Option<(f64, f64)>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn distribution_summary(records: &[EvaluationRecord]) -> Result<Vec<DistributionRow>, ReportError> {
    let cells = nonempty(records)?;
    let mut by_cell: BTreeMap<(ExpertiseLevel, &Criterion), Vec<f64>> = BTreeMap::new();
    for cell in &cells {
        for (c, &v) in &cell.aggregates {
            by_cell.entry((cell.level, c)).or_default().push(v);
        }
    }
    by_cell
        .into_iter()
        .map(|((level, criterion), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let (sd, ci95) = if n > 1 {
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                let half = t_quantile(0.975, (n - 1) as f64)? * sd / (n as f64).sqrt();
                (sd, Some((mean - half, mean + half)))
            } else {
                (0.0, None)
            };
            Ok(DistributionRow {
                level,
                criterion: criterion.clone(),
                n,
                mean,
                sd,
                min: v[0],
                q1: quantile_sorted(&v, 0.25),
                median: quantile_sorted(&v, 0.5),
                q3: quantile_sorted(&v, 0.75),
                max: v[n - 1],
                ci95,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub levene_center: LeveneCenter,
    pub alpha: f64,
    pub threshold: f64,
    pub top_n: usize,
    pub intervention_level: Option<ExpertiseLevel>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            levene_center: LeveneCenter::Mean,
            alpha: 0.05,
            threshold: 3.0,
            top_n: 6,
            intervention_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub street_averages: Vec<StreetAverage>,
    pub extremes: Vec<Extreme>,
    pub model_comparison: Vec<ModelComparison>,
    pub metric_divergence: Vec<MetricDivergence>,
    pub distribution_summary: Vec<DistributionRow>,
    pub intervention_view: InterventionView,
}

impl ReportBundle {
    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.metric_divergence
            .iter()
            .flat_map(|d| d.warnings.iter())
            .chain(&self.intervention_view.warnings)
            .map(String::as_str)
    }
}

/// Every report section, for the registry criteria present in the records.
pub fn build_report(
    records: &[EvaluationRecord],
    assignment: &StreetAssignment,
    registry: &MetricRegistry,
    options: &ReportOptions,
) -> Result<ReportBundle, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let present: BTreeSet<&Criterion> =
        records.iter().flat_map(|r| r.criterion_scores.keys()).collect();
    let criteria: Vec<&Criterion> =
        registry.criteria().iter().filter(|c| present.contains(c)).collect();
    let has_metrics = records.iter().any(|r| !r.metric_scores.is_empty());
    Ok(ReportBundle {
        street_averages: street_averages(records, assignment)?,
        extremes: extremes(records)?,
        model_comparison: criteria
            .iter()
            .map(|c| model_comparison(records, c, options.levene_center, options.alpha))
            .collect::<Result<_, _>>()?,
        metric_divergence: if has_metrics {
            criteria
                .iter()
                .map(|c| metric_divergence(records, registry, c, options.top_n))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        },
        distribution_summary: distribution_summary(records)?,
        intervention_view: intervention_view(
            records,
            assignment,
            registry,
            options.threshold,
            options.intervention_level,
        )?,
    })
}

pub(crate) fn df_pair(df: &DegreesOfFreedom) -> (f64, Option<f64>) {
    match *df {
        DegreesOfFreedom::One(a) => (a, None),
        DegreesOfFreedom::Two(a, b) => (a, Some(b)),
    }
}
