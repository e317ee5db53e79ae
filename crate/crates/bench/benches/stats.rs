use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use walkeval::stats::{
    games_howell, kruskal_wallis, levene, studentized_range_cdf, studentized_range_quantile,
    welch_anova, LeveneCenter, SampleGroup,
};

/// Four groups of 42, the size of one comparison in a full campaign.
fn groups() -> Vec<SampleGroup> {
    (0..4)
        .map(|g| {
            let values = (0..42)
                .map(|i| 60.0 + 10.0 * g as f64 + ((i * 37 + g * 11) % 23) as f64)
                .collect();
            SampleGroup::new(format!("Model-C{}", g + 1), values)
        })
        .collect()
}

fn bench_tests(c: &mut Criterion) {
    let gs = groups();
    c.bench_function("levene_4x42", |b| b.iter(|| levene(black_box(&gs), LeveneCenter::Mean)));
    c.bench_function("welch_anova_4x42", |b| b.iter(|| welch_anova(black_box(&gs))));
    c.bench_function("kruskal_wallis_4x42", |b| b.iter(|| kruskal_wallis(black_box(&gs))));
    c.bench_function("games_howell_4x42", |b| b.iter(|| games_howell(black_box(&gs), 0.05)));
}

fn bench_range(c: &mut Criterion) {
    c.bench_function("ptukey_cdf", |b| {
        b.iter(|| studentized_range_cdf(black_box(3.5), 4, black_box(20.0)))
    });
    c.bench_function("ptukey_quantile", |b| {
        b.iter(|| studentized_range_quantile(black_box(0.95), 3, black_box(10.0)))
    });
}

criterion_group!(benches, bench_tests, bench_range);
criterion_main!(benches);
