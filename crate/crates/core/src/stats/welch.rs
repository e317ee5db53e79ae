use super::{
    check_groups, f_sf, studentized_range_quantile, studentized_range_sf, DegreesOfFreedom,
    PairwiseResult, SampleGroup, StatsError, TestResult,
};

struct Summary {
    n: f64,
    mean: f64,
    var: f64,
}

fn summaries(groups: &[SampleGroup]) -> Result<Vec<Summary>, StatsError> {
    check_groups(groups, 2, 2)?;
    groups
        .iter()
        .map(|g| {
            let var = g.variance();
            if var <= 0.0 {
                return Err(StatsError::DegenerateVariance(format!(
                    "group {:?} has zero variance",
                    g.label
                )));
            }
            Ok(Summary {
                n: g.len() as f64,
                mean: g.mean(),
                var,
            })
        })
        .collect()
}

/// Welch's heteroscedastic one-way ANOVA.
pub fn welch_anova(groups: &[SampleGroup]) -> Result<TestResult, StatsError> {
    let s = summaries(groups)?;
    let k = s.len() as f64;
    let weights: Vec<f64> = s.iter().map(|g| g.n / g.var).collect();
    let w_total: f64 = weights.iter().sum();
    let weighted_mean = s.iter().zip(&weights).map(|(g, w)| w * g.mean).sum::<f64>() / w_total;

    let between = s
        .iter()
        .zip(&weights)
        .map(|(g, w)| w * (g.mean - weighted_mean).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    let lambda: f64 = s
        .iter()
        .zip(&weights)
        .map(|(g, w)| (1.0 - w / w_total).powi(2) / (g.n - 1.0))
        .sum();
    let denom = 1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * lambda;
    let f = between / denom;
    let df1 = k - 1.0;
    let df2 = (k * k - 1.0) / (3.0 * lambda);
    Ok(TestResult {
        method: "welch-anova".into(),
        statistic: f,
        df: DegreesOfFreedom::Two(df1, df2),
        p_value: f_sf(f, df1, df2)?,
    })
}

/// Games-Howell pairwise comparisons, in `(0,1), (0,2), …, (k-2,k-1)` order.
/// Confidence intervals are at level `1 - alpha`.
pub fn games_howell(groups: &[SampleGroup], alpha: f64) -> Result<Vec<PairwiseResult>, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::DomainError(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let s = summaries(groups)?;
    let k = s.len() as u32;
    let mut out = Vec::with_capacity(s.len() * (s.len() - 1) / 2);
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let (a, b) = (&s[i], &s[j]);
            let va = a.var / a.n;
            let vb = b.var / b.n;
            let se = (va + vb).sqrt();
            let df = (va + vb).powi(2) / (va * va / (a.n - 1.0) + vb * vb / (b.n - 1.0));
            let diff = a.mean - b.mean;
            let q = diff.abs() * std::f64::consts::SQRT_2 / se;
            let p = studentized_range_sf(q, k, df)?;
            let q_crit = studentized_range_quantile(1.0 - alpha, k, df)?;
            let half = q_crit / std::f64::consts::SQRT_2 * se;
            out.push(PairwiseResult {
                pair: (groups[i].label.clone(), groups[j].label.clone()),
                mean_difference: diff,
                standard_error: se,
                df,
                q_statistic: q,
                p_value: p,
                ci95: (diff - half, diff + half),
            });
        }
    }
    Ok(out)
}
