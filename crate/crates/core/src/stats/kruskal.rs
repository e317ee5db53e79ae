use super::{check_groups, chisq_sf, DegreesOfFreedom, SampleGroup, StatsError, TestResult};

/// Ranks starting at 1, tied values sharing the mean of their positions.
/// Also returns the sizes of all tie groups.
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Kruskal-Wallis H test with tie correction.
pub fn kruskal_wallis(groups: &[SampleGroup]) -> Result<TestResult, StatsError> {
    check_groups(groups, 2, 1)?;
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let n = pooled.len();
    if n < 3 {
        return Err(StatsError::TooSmall {
            label: "pooled sample".into(),
            size: n,
            needed: 3,
        });
    }
    let nf = n as f64;
    let (ranks, ties) = mid_ranks(&pooled);
    let tie_sum: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(StatsError::DegenerateVariance("all pooled values are identical".into()));
    }

    let centre = (nf + 1.0) / 2.0;
    let mut offset = 0;
    let mut ss = 0.0;
    for g in groups {
        let len = g.values.len();
        let rbar = ranks[offset..offset + len].iter().sum::<f64>() / len as f64;
        ss += len as f64 * (rbar - centre).powi(2);
        offset += len;
    }
    let h = 12.0 / (nf * (nf + 1.0)) * ss / correction;
    let df = groups.len() as f64 - 1.0;
    Ok(TestResult {
        method: "kruskal-wallis".into(),
        statistic: h,
        df: DegreesOfFreedom::One(df),
        p_value: chisq_sf(h, df)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(label: &str, v: &[f64]) -> SampleGroup {
        SampleGroup::new(label, v.to_vec())
    }

    #[test]
    fn mid_ranks_with_ties() {
        let (r, t) = mid_ranks(&[3.0, 1.0, 3.0, 2.0, 3.0]);
        assert_eq!(r, vec![4.0, 1.0, 4.0, 2.0, 4.0]);
        assert_eq!(t, vec![3]);
    }

    #[test]
    fn identical_rank_means() {
        let groups = [g("a", &[1.0, 2.0, 3.0]), g("b", &[1.0, 2.0, 3.0]), g("c", &[1.0, 2.0, 3.0])];
        let r = kruskal_wallis(&groups).unwrap();
        assert!(r.statistic.abs() < 1e-14);
        assert!((r.p_value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn all_ties_degenerate() {
        let groups = [g("a", &[5.0, 5.0]), g("b", &[5.0, 5.0]), g("c", &[5.0, 5.0])];
        assert!(matches!(kruskal_wallis(&groups), Err(StatsError::DegenerateVariance(_))));
    }

    #[test]
    fn separated_pairs() {
        // ranks 1..6 with group rank means 1.5, 3.5, 5.5:
        // H = 12/42 * 2 * (4 + 0 + 4) = 32/7
        let groups = [g("a", &[1.0, 2.0]), g("b", &[3.0, 4.0]), g("c", &[5.0, 6.0])];
        let r = kruskal_wallis(&groups).unwrap();
        assert!((r.statistic - 32.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_observations() {
        let groups = [g("a", &[1.0]), g("b", &[2.0])];
        assert!(matches!(kruskal_wallis(&groups), Err(StatsError::TooSmall { .. })));
    }
}
