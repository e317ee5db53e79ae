//! Statistical battery for comparing score distributions across prompt
//! levels: Levene, Welch's ANOVA, Games-Howell and Kruskal-Wallis, plus the
//! distribution functions behind their p-values.

pub mod distributions;
mod kruskal;
mod levene;
pub mod quadrature;
pub mod special;
mod welch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distributions::{
    chisq_cdf, chisq_sf, f_cdf, f_sf, studentized_range_cdf, studentized_range_quantile,
    studentized_range_sf, t_cdf, t_quantile,
};
pub use kruskal::{kruskal_wallis, mid_ranks};
pub use levene::{levene, LeveneCenter};
pub use welch::{games_howell, welch_anova};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("group {label:?} has {size} values; at least {needed} required")]
    TooSmall {
        label: String,
        size: usize,
        needed: usize,
    },
    #[error("group {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("domain error: {0}")]
    DomainError(String),
}

/// Labelled sample, e.g. the aggregate scores of one prompt level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        SampleGroup {
            label: label.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        variance(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreesOfFreedom {
    One(f64),
    Two(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub pair: (String, String),
    pub mean_difference: f64,
    pub standard_error: f64,
    pub df: f64,
    pub q_statistic: f64,
    pub p_value: f64,
    pub ci95: (f64, f64),
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn check_groups(
    groups: &[SampleGroup],
    min_groups: usize,
    min_size: usize,
) -> Result<(), StatsError> {
    if groups.len() < min_groups {
        return Err(StatsError::TooFewGroups {
            needed: min_groups,
            got: groups.len(),
        });
    }
    for g in groups {
        if g.values.len() < min_size {
            return Err(StatsError::TooSmall {
                label: g.label.clone(),
                size: g.values.len(),
                needed: min_size,
            });
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(g.label.clone()));
        }
    }
    Ok(())
}

/// Renders a p-value the way comparison tables show it: `<0.01***` below
/// 0.01, otherwise two decimals with `**` (< 0.05) or `*` (< 0.1).
pub fn format_p(p: f64) -> String {
    if p < 0.01 {
        "<0.01***".to_owned()
    } else if p < 0.05 {
        format!("{p:.2}**")
    } else if p < 0.1 {
        format!("{p:.2}*")
    } else {
        format!("{p:.2}")
    }
}
