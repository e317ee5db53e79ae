use std::path::{Path, PathBuf};

use super::{df_pair, svg, ReportBundle, ReportError};
use crate::records::write_atomic;
use crate::stats::format_p;

pub const CSV_FILES: [&str; 6] = [
    "street_averages.csv",
    "extremes.csv",
    "model_comparison.csv",
    "metric_divergence.csv",
    "distribution_summary.csv",
    "intervention_view.csv",
];

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { writer }
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

fn tables(bundle: &ReportBundle) -> [Vec<u8>; 6] {
    let mut streets = Table::new(&["street", "level", "model", "criterion", "mean", "n_images"]);
    for r in &bundle.street_averages {
        streets.row([
            r.street.clone(),
            r.level.to_string(),
            r.level.model_label(),
            r.criterion.to_string(),
            num(r.mean),
            r.n_images.to_string(),
        ]);
    }

    let mut extremes = Table::new(&[
        "level", "model", "criterion", "max_image", "max_score", "max_tied", "min_image",
        "min_score", "min_tied",
    ]);
    for e in &bundle.extremes {
        extremes.row([
            e.level.to_string(),
            e.level.model_label(),
            e.criterion.to_string(),
            e.max.image_id.clone(),
            num(e.max.score),
            e.max.tied.to_string(),
            e.min.image_id.clone(),
            num(e.min.score),
            e.min.tied.to_string(),
        ]);
    }

    let mut comparison = Table::new(&[
        "criterion", "test", "group_a", "group_b", "statistic", "df1", "df2", "mean_difference",
        "std_error", "ci_low", "ci_high", "p_value", "p_display",
    ]);
    for mc in &bundle.model_comparison {
        for t in [&mc.levene, &mc.overall] {
            let (df1, df2) = df_pair(&t.df);
            comparison.row([
                mc.criterion.to_string(),
                t.method.clone(),
                "all".into(),
                "all".into(),
                num(t.statistic),
                num(df1),
                opt(df2),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(t.p_value),
                format_p(t.p_value),
            ]);
        }
        for p in &mc.pairs {
            comparison.row([
                mc.criterion.to_string(),
                "games-howell".into(),
                p.pair.0.clone(),
                p.pair.1.clone(),
                num(p.q_statistic),
                num(p.df),
                String::new(),
                num(p.mean_difference),
                num(p.standard_error),
                num(p.ci95.0),
                num(p.ci95.1),
                num(p.p_value),
                format_p(p.p_value),
            ]);
        }
    }

    let mut divergence = Table::new(&[
        "criterion", "rank", "metric", "vague_name", "statistic", "df", "p_value", "p_display",
        "n_c2", "n_c3", "n_c4",
    ]);
    for d in &bundle.metric_divergence {
        for (i, r) in d.rows.iter().enumerate() {
            divergence.row([
                d.criterion.to_string(),
                (i + 1).to_string(),
                r.metric.clone(),
                r.vague_name.clone(),
                num(r.statistic),
                num(r.df),
                num(r.p_value),
                format_p(r.p_value),
                r.n_per_level[0].to_string(),
                r.n_per_level[1].to_string(),
                r.n_per_level[2].to_string(),
            ]);
        }
    }

    let mut distribution = Table::new(&[
        "level", "model", "criterion", "n", "mean", "sd", "min", "q1", "median", "q3", "max",
        "ci_low", "ci_high",
    ]);
    for r in &bundle.distribution_summary {
        distribution.row([
            r.level.to_string(),
            r.level.model_label(),
            r.criterion.to_string(),
            r.n.to_string(),
            num(r.mean),
            num(r.sd),
            num(r.min),
            num(r.q1),
            num(r.median),
            num(r.q3),
            num(r.max),
            opt(r.ci95.map(|c| c.0)),
            opt(r.ci95.map(|c| c.1)),
        ]);
    }

    let view = &bundle.intervention_view;
    let mut intervention =
        Table::new(&["street", "criterion", "metric", "level", "mean", "threshold", "n_images"]);
    for r in &view.rows {
        intervention.row([
            r.street.clone(),
            r.criterion.to_string(),
            r.metric.clone(),
            view.level.map(|l| l.to_string()).unwrap_or_default(),
            num(r.mean),
            num(view.threshold),
            r.n_images.to_string(),
        ]);
    }

    [
        streets.into_bytes(),
        extremes.into_bytes(),
        comparison.into_bytes(),
        divergence.into_bytes(),
        distribution.into_bytes(),
        intervention.into_bytes(),
    ]
}

/// Writes one CSV per report section and one distribution SVG per criterion
/// into `dir`. Returns the written paths in a fixed order.
pub fn export(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = CSV_FILES
        .iter()
        .zip(tables(bundle))
        .map(|(name, bytes)| (dir.join(name), bytes))
        .collect();
    for mc in &bundle.model_comparison {
        let rows: Vec<_> = bundle
            .distribution_summary
            .iter()
            .filter(|r| r.criterion == mc.criterion)
            .collect();
        files.push((
            dir.join(format!("distribution_{}.svg", mc.criterion)),
            svg::distribution_figure(&mc.criterion, &rows).into_bytes(),
        ));
    }
    for (path, bytes) in &files {
        write_atomic(path, bytes).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
