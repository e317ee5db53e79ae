use serde::{Deserialize, Serialize};

use super::{check_groups, f_sf, mean, median, DegreesOfFreedom, SampleGroup, StatsError, TestResult};

/// Center used for the absolute deviations. `Median` is the Brown-Forsythe
/// variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeveneCenter {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for LeveneCenter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(LeveneCenter::Mean),
            "median" => Ok(LeveneCenter::Median),
            other => Err(format!("unknown Levene center {other:?}; expected mean or median")),
        }
    }
}

/// Levene's test for equal variances.
pub fn levene(groups: &[SampleGroup], center: LeveneCenter) -> Result<TestResult, StatsError> {
    check_groups(groups, 2, 2)?;
    let k = groups.len() as f64;
    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = match center {
                LeveneCenter::Mean => mean(&g.values),
                LeveneCenter::Median => median(&g.values),
            };
            g.values.iter().map(|x| (x - c).abs()).collect()
        })
        .collect();
    let n_total: usize = deviations.iter().map(Vec::len).sum();
    let n_total = n_total as f64;
    let group_means: Vec<f64> = deviations.iter().map(|z| mean(z)).collect();
    let grand = deviations.iter().flatten().sum::<f64>() / n_total;

    let between: f64 = deviations
        .iter()
        .zip(&group_means)
        .map(|(z, zm)| z.len() as f64 * (zm - grand).powi(2))
        .sum();
    let within: f64 = deviations
        .iter()
        .zip(&group_means)
        .map(|(z, zm)| z.iter().map(|v| (v - zm).powi(2)).sum::<f64>())
        .sum();

    let df1 = k - 1.0;
    let df2 = n_total - k;
    let method = match center {
        LeveneCenter::Mean => "levene",
        LeveneCenter::Median => "brown-forsythe",
    };
    if within == 0.0 {
        if between == 0.0 {
            return Err(StatsError::DegenerateVariance(
                "absolute deviations are identical in every group".into(),
            ));
        }
        return Ok(TestResult {
            method: method.into(),
            statistic: f64::INFINITY,
            df: DegreesOfFreedom::Two(df1, df2),
            p_value: 0.0,
        });
    }
    let w = (df2 / df1) * between / within;
    Ok(TestResult {
        method: method.into(),
        statistic: w,
        df: DegreesOfFreedom::Two(df1, df2),
        p_value: f_sf(w, df1, df2)?,
    })
}
