//! Experiment reports: per-replicate rows, curve points, summary statistics and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result, ResultExt};

/// One `(model, N, replicate)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub replicate: usize,
    pub auc: f64,
    /// Smallest mean SSE over the sweep, and the edge counts at that point.
    pub min_sse: f64,
    pub tp: f64,
    pub fp: f64,
    pub lambda1_opt: f64,
    pub lambda2: f64,
    /// Penalties chosen by the information criterion (cross-validation only).
    pub selected_lambda1: Option<f64>,
    pub selected_lambda2: Option<f64>,
    /// Mean SSE on the evaluation pool at the selected penalties.
    pub selected_sse: Option<f64>,
    pub failures: usize,
}

/// A point of the cohort-averaged ROC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub replicate: usize,
    pub lambda1: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: f64,
    pub fp: f64,
    pub sse: f64,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: serde::de::DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

pub fn save_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(File::create(path).at(path)?, rows).at(path)
}

pub fn load_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(File::open(path).at(path)?).at(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStat {
    pub model: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    /// Welch statistic for `mean_a - mean_b`.
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub p_bonferroni: f64,
    /// Both samples had zero variance; `t` is reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub models: Vec<ModelStat>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric: String,
    pub rows: Vec<SizeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub bonferroni_factor: usize,
    pub tables: Vec<MetricTable>,
}

/// Mean and sample standard deviation, summed in sorted order so the result
/// does not depend on replicate order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Two-sided Welch test from summary statistics: `(t, df, p, degenerate)`.
pub fn welch(a: &ModelStat, b: &ModelStat) -> (f64, f64, f64, bool) {
    let va = a.std * a.std / a.count as f64;
    let vb = b.std * b.std / b.count as f64;
    let se = (va + vb).sqrt();
    if se == 0.0 || !se.is_finite() || a.count < 2 || b.count < 2 {
        return (0.0, 0.0, 1.0, true);
    }
    let t = (a.mean - b.mean) / se;
    let df = (va + vb).powi(2) / (va * va / (a.count - 1) as f64 + vb * vb / (b.count - 1) as f64);
    let p = match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0),
        Err(_) => 1.0,
    };
    (t, df, p, false)
}

/// Means, standard deviations and pairwise Welch tests per metric and N.
///
/// The Bonferroni factor is the number of model pairs times the number of N rows.
pub fn summarize(experiment: &str, rows: &[ReportRow]) -> ExperimentSummary {
    let mut models: Vec<String> = Vec::new();
    for r in rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    models.sort_by_key(|m| model_rank(m));
    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = rows.iter().map(|r| r.n).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let pairs = models.len() * models.len().saturating_sub(1) / 2;
    let factor = (pairs * sizes.len()).max(1);

    let metrics: [(&str, fn(&ReportRow) -> Option<f64>); 3] = [
        ("auc", |r| Some(r.auc)),
        ("min_sse", |r| Some(r.min_sse)),
        ("selected_sse", |r| r.selected_sse),
    ];
    let mut tables = Vec::new();
    for (metric, get) in metrics {
        if rows.iter().all(|r| get(r).is_none()) {
            continue;
        }
        let mut size_rows = Vec::new();
        for &n in &sizes {
            let stats: Vec<ModelStat> = models
                .iter()
                .map(|m| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.n == n && &r.model == m)
                        .filter_map(get)
                        .collect();
                    let (mean, std) = mean_std(&vals);
                    ModelStat {
                        model: m.clone(),
                        count: vals.len(),
                        mean,
                        std,
                    }
                })
                .collect();
            let mut comparisons = Vec::new();
            for i in 0..stats.len() {
                for j in (i + 1)..stats.len() {
                    let (t, df, p, degenerate) = welch(&stats[j], &stats[i]);
                    comparisons.push(Comparison {
                        model_a: stats[j].model.clone(),
                        model_b: stats[i].model.clone(),
                        t,
                        df,
                        p,
                        p_bonferroni: (p * factor as f64).min(1.0),
                        degenerate,
                    });
                }
            }
            size_rows.push(SizeRow {
                n,
                models: stats,
                comparisons,
            });
        }
        tables.push(MetricTable {
            metric: metric.into(),
            rows: size_rows,
        });
    }
    ExperimentSummary {
        experiment: experiment.into(),
        bonferroni_factor: factor,
        tables,
    }
}

fn model_rank(m: &str) -> (usize, String) {
    let rank = ["GL", "FGL", "GGL"]
        .iter()
        .position(|k| *k == m)
        .unwrap_or(usize::MAX);
    (rank, m.to_string())
}

/// Plain-text rendering of the summary tables.
pub fn render_summary(s: &ExperimentSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} (Bonferroni factor {})",
        s.experiment, s.bonferroni_factor
    );
    for table in &s.tables {
        let _ = writeln!(out, "\n{}", table.metric);
        for row in &table.rows {
            let cells: Vec<String> = row
                .models
                .iter()
                .map(|m| format!("{} {:.4} ({:.4})", m.model, m.mean, m.std))
                .collect();
            let _ = writeln!(out, "  N={:<5} {}", row.n, cells.join("  "));
            for c in &row.comparisons {
                let _ = writeln!(
                    out,
                    "           {} vs {}: t={:.3} p={:.3e} p_bonf={:.3e}{}",
                    c.model_a,
                    c.model_b,
                    c.t,
                    c.p,
                    c.p_bonferroni,
                    if c.degenerate { " (degenerate)" } else { "" }
                );
            }
        }
    }
    out
}

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#66488f", "#333333",
];

/// ROC plot for one N: the replicate-mean curve of every model, in TPR/FPR.
pub fn roc_svg(n: usize, curves: &[CurveRow]) -> String {
    let (w, h, m) = (480.0, 400.0, 50.0);
    let sx = |x: f64| m + x * (w - 2.0 * m);
    let sy = |y: f64| h - m - y * (h - 2.0 * m);
    let mut by_model: BTreeMap<(usize, String), BTreeMap<u64, Vec<(f64, f64)>>> = BTreeMap::new();
    for c in curves.iter().filter(|c| c.n == n) {
        by_model
            .entry(model_rank(&c.model))
            .or_default()
            .entry(c.lambda1.to_bits())
            .or_default()
            .push((c.fpr, c.tpr));
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        sx(0.0),
        sy(1.0),
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(0.0)
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            sx(v),
            sy(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
            sx(0.0) - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">false-positive rate</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">true-positive rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">ROC, N = {n}</text>"#,
        w / 2.0
    );
    for (i, ((_, model), points)) in by_model.iter().enumerate() {
        let mut mean: Vec<(f64, f64)> = points
            .values()
            .map(|ps| {
                let k = ps.len() as f64;
                (
                    ps.iter().map(|p| p.0).sum::<f64>() / k,
                    ps.iter().map(|p| p.1).sum::<f64>() / k,
                )
            })
            .collect();
        mean.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = std::iter::once((0.0, 0.0))
            .chain(mean)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            path.join(" ")
        );
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{model}</text>"#,
            w - m - 70.0,
            w - m - 50.0,
            w - m - 45.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(mean: f64, std: f64, count: usize) -> ModelStat {
        ModelStat {
            model: "m".into(),
            count,
            mean,
            std,
        }
    }

    fn row(model: &str, n: usize, replicate: usize, auc: f64) -> ReportRow {
        ReportRow {
            model: model.into(),
            n,
            replicate,
            auc,
            min_sse: 1.0,
            tp: 3.0,
            fp: 1.0,
            lambda1_opt: 0.1,
            lambda2: 0.0,
            selected_lambda1: None,
            selected_lambda2: None,
            selected_sse: None,
            failures: 0,
        }
    }

    #[test]
    fn welch_hand_computed() {
        let (t, df, p, degenerate) = welch(&stat(0.8, 0.01, 10), &stat(0.6, 0.01, 10));
        assert!((t - 44.7214).abs() < 1e-3, "{t}");
        assert!((df - 18.0).abs() < 1e-9);
        assert!(p < 1e-15 && !degenerate);
    }

    #[test]
    fn zero_variance_is_flagged() {
        assert_eq!(
            welch(&stat(0.5, 0.0, 10), &stat(0.5, 0.0, 10)),
            (0.0, 0.0, 1.0, true)
        );
    }

    #[test]
    fn summary_structure_and_bonferroni() {
        let mut rows = Vec::new();
        for n in [25, 50] {
            for r in 0..5 {
                for (m, base) in [("GL", 0.7), ("FGL", 0.8), ("GGL", 0.75)] {
                    rows.push(row(m, n, r, base + 0.01 * r as f64));
                }
            }
        }
        let s = summarize("gold-driven", &rows);
        assert_eq!(s.bonferroni_factor, 6);
        let auc = &s.tables[0];
        assert_eq!(auc.rows.len(), 2);
        assert_eq!(auc.rows[0].models[0].model, "GL");
        for c in &auc.rows[0].comparisons {
            assert!(c.p_bonferroni >= c.p);
        }
        assert!(s.tables.iter().all(|t| t.metric != "selected_sse"));
        let mut shuffled = rows.clone();
        shuffled.reverse();
        assert_eq!(summarize("gold-driven", &shuffled), s);
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![row("GL", 25, 0, 0.75), row("FGL", 25, 0, 0.8)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,N,replicate,auc,min_sse,tp,fp,"));
        assert_eq!(read_rows::<_, ReportRow>(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn svg_has_one_series_per_model() {
        let curves: Vec<CurveRow> = ["GL", "FGL"]
            .iter()
            .map(|m| CurveRow {
                model: m.to_string(),
                n: 25,
                replicate: 0,
                lambda1: 0.1,
                fpr: 0.1,
                tpr: 0.5,
                tp: 5.0,
                fp: 2.0,
                sse: 1.0,
            })
            .collect();
        let svg = roc_svg(25, &curves);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
