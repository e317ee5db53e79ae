use proptest::prelude::*;

use walkeval::gateway::{RawResponse, Timestamp};
use walkeval::parser::render_canonical;
use walkeval::report::metric_divergence;
use walkeval::stats::{games_howell, kruskal_wallis, levene, welch_anova, LeveneCenter, TestResult};
use walkeval::{
    build_prompt, parse_any, CampaignImage, Criterion, ExpertiseLevel, MetricRegistry,
    SampleGroup, SynthProfile,
};

fn groups_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3..15), 2..5)
}

fn labelled(gs: &[Vec<f64>]) -> Vec<SampleGroup> {
    gs.iter()
        .enumerate()
        .map(|(i, v)| SampleGroup::new(format!("g{i}"), v.clone()))
        .collect()
}

type Test = fn(&[SampleGroup]) -> Option<TestResult>;

const TESTS: [(&str, Test); 4] = [
    ("levene-mean", |g| levene(g, LeveneCenter::Mean).ok()),
    ("levene-median", |g| levene(g, LeveneCenter::Median).ok()),
    ("welch", |g| welch_anova(g).ok()),
    ("kruskal", |g| kruskal_wallis(g).ok()),
];

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * a.abs().max(b.abs()).max(1.0)
}

fn level(l: u8) -> ExpertiseLevel {
    ExpertiseLevel::new(l).unwrap()
}

fn both() -> Vec<Criterion> {
    vec![Criterion::safety(), Criterion::attractiveness()]
}

fn image(seed: u64) -> CampaignImage {
    CampaignImage {
        id: format!("img{seed}"),
        street: format!("street{}", seed % 3),
        bytes: seed.to_le_bytes().to_vec(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn registry_document_round_trips(_x in 0..1u8) {
        let reg = MetricRegistry::default_registry();
        let again = MetricRegistry::from_json(&reg.to_json()).unwrap();
        prop_assert_eq!(again.to_json(), reg.to_json());
        prop_assert_eq!(again.metrics(), reg.metrics());
    }

    #[test]
    fn prompts_are_deterministic(l in 1u8..=4, which in 0usize..3) {
        let reg = MetricRegistry::default_registry();
        let criteria = match which {
            0 => vec![Criterion::safety()],
            1 => vec![Criterion::attractiveness()],
            _ => both(),
        };
        let a = build_prompt(&reg, level(l), &criteria).unwrap();
        let b = build_prompt(&reg, level(l), &criteria).unwrap();
        prop_assert_eq!(&a, &b);
        let per_criterion = if l == 1 { 0 } else { 21 };
        prop_assert_eq!(a.expected_metrics.len(), per_criterion * criteria.len());
    }

    #[test]
    fn canonical_rendering_parses_back(seed in any::<u64>(), l in 1u8..=4) {
        let reg = MetricRegistry::default_registry();
        let bundle = build_prompt(&reg, level(l), &both()).unwrap();
        let img = image(seed);
        let truth = SynthProfile { seed, ..SynthProfile::default() }.record(&reg, &img, &bundle, 1).unwrap();
        let raw = RawResponse {
            key: truth.raw_ref.clone(),
            text: render_canonical(&truth, &bundle),
            received_at: Timestamp::default(),
            backend: "test".into(),
            attempt_count: 1,
        };
        let out = parse_any(&raw, &bundle, &img.id).unwrap();
        prop_assert!(out.warnings.is_empty());
        prop_assert_eq!(out.record, truth);
    }

    #[test]
    fn tests_ignore_group_order(gs in groups_strategy(), rot in 0usize..4) {
        let a = labelled(&gs);
        let mut b = a.clone();
        let len = b.len();
        b.rotate_left(rot % len);
        for (name, t) in TESTS {
            if let (Some(x), Some(y)) = (t(&a), t(&b)) {
                prop_assert!(same(x.statistic, y.statistic), "{}: {} vs {}", name, x.statistic, y.statistic);
                prop_assert!(same(x.p_value, y.p_value), "{}", name);
            }
        }
    }

    #[test]
    fn tests_ignore_location_and_scale(gs in groups_strategy(), shift in -1e3f64..1e3, scale in 0.01f64..100.0) {
        let a = labelled(&gs);
        let moved: Vec<Vec<f64>> = gs.iter().map(|g| g.iter().map(|v| v * scale + shift).collect()).collect();
        let b = labelled(&moved);
        for (name, t) in TESTS {
            if let (Some(x), Some(y)) = (t(&a), t(&b)) {
                prop_assert!((x.statistic - y.statistic).abs() <= 1e-6 * x.statistic.abs().max(1.0),
                    "{}: {} vs {}", name, x.statistic, y.statistic);
                prop_assert!((x.p_value - y.p_value).abs() <= 1e-6, "{}", name);
            }
        }
    }

    #[test]
    fn p_values_are_probabilities(gs in groups_strategy()) {
        let a = labelled(&gs);
        for (name, t) in TESTS {
            if let Some(r) = t(&a) {
                prop_assert!(r.statistic >= 0.0, "{}", name);
                prop_assert!((0.0..=1.0).contains(&r.p_value), "{}: p = {}", name, r.p_value);
            }
        }
        if let Ok(pairs) = games_howell(&a, 0.05) {
            prop_assert_eq!(pairs.len(), a.len() * (a.len() - 1) / 2);
            for p in pairs {
                prop_assert!((0.0..=1.0).contains(&p.p_value));
                prop_assert!(p.ci95.0 <= p.mean_difference && p.mean_difference <= p.ci95.1);
            }
        }
    }

    #[test]
    fn games_howell_p_falls_as_means_separate(
        a in prop::collection::vec(-5.0f64..5.0, 4..12),
        b in prop::collection::vec(-5.0f64..5.0, 4..12),
        d1 in 0.0f64..5.0,
        extra in 0.0f64..5.0,
    ) {
        let at = |d: f64| {
            let moved: Vec<f64> = b.iter().map(|v| v + d).collect();
            games_howell(&[SampleGroup::new("a", a.clone()), SampleGroup::new("b", moved)], 0.05)
                .map(|r| r[0].clone())
        };
        let base_diff = b.iter().sum::<f64>() / b.len() as f64 - a.iter().sum::<f64>() / a.len() as f64;
        prop_assume!(base_diff >= 0.0);
        if let (Ok(near), Ok(far)) = (at(d1), at(d1 + extra)) {
            prop_assert!(far.q_statistic >= near.q_statistic - 1e-9);
            prop_assert!(far.p_value <= near.p_value + 1e-9);
        }
    }

    #[test]
    fn kruskal_depends_only_on_ranks(gs in groups_strategy()) {
        let a = labelled(&gs);
        let cubed: Vec<Vec<f64>> = gs.iter().map(|g| g.iter().map(|v| v * v * v + 7.0).collect()).collect();
        if let (Ok(x), Ok(y)) = (kruskal_wallis(&a), kruskal_wallis(&labelled(&cubed))) {
            prop_assert!(same(x.statistic, y.statistic));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn divergence_top_n_is_a_prefix(seed in any::<u64>(), k in 1usize..21) {
        let reg = MetricRegistry::default_registry();
        let profile = SynthProfile { seed, ..SynthProfile::default() };
        let mut records = Vec::new();
        for l in 2..=4 {
            let bundle = build_prompt(&reg, level(l), &both()).unwrap();
            for i in 0..8 {
                records.push(profile.record(&reg, &image(i), &bundle, 1).unwrap());
            }
        }
        for c in both() {
            let all = metric_divergence(&records, &reg, &c, 21).unwrap();
            let top = metric_divergence(&records, &reg, &c, k).unwrap();
            prop_assert_eq!(all.rows.len(), 21);
            prop_assert_eq!(&top.rows[..], &all.rows[..k]);
            prop_assert!(all.rows.windows(2).all(|w| w[0].statistic >= w[1].statistic));
        }
    }
}
