//! The pipeline stages behind each subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sivc_core::gold::{cohort_name, generate_gold, node_names, sample_cohort, GoldStandard};
use sivc_core::joint::{joint_fit, JointConfig, Penalty};
use sivc_core::mixture::{cluster_averages, roi_averages, select_model, ClusterModel, EmConfig};
use sivc_core::rng::derive_seed;
use sivc_core::volume::{extract_regions, RegionData};
use sivc_core::{
    empirical_covariance, glasso_fit, mean_center, partial_correlations, CohortCovariance,
    GlassoConfig, Normalization, PrecisionEstimate, SubjectMatrix,
};

use crate::binary::{load_atlas, load_volume, save_matrix};
use crate::config::{
    ClusterConfig, ClusterMode, CovarianceNorm, ExperimentConfig, FitConfig, ModelName,
    SimulateConfig,
};
use crate::error::{Error, Result, ResultExt};
use crate::experiment::{run_experiment, tag};
use crate::manifest::{
    read_json, save_cluster_model, write_json, GoldManifest, JointManifest, Manifest,
};
use crate::report::{
    load_rows, render_summary, roc_svg, save_rows, summarize, CurveRow, ReportRow,
};
use crate::table::{load_subject_matrix, save_labeled_matrix, save_subject_matrix};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// What a command produced and how many fits failed along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub failures: usize,
    pub warnings: Vec<String>,
    /// Human-readable summary for stdout.
    pub message: String,
}

impl Outcome {
    pub fn is_complete(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Serialize)]
struct Effective<'a, T: Serialize> {
    seed: u64,
    config: &'a T,
}

fn manifest(command: &str, seed: u64, config: &impl Serialize) -> Result<Manifest> {
    let mut m = Manifest::new(command, &Effective { seed, config })?;
    m.seeds.insert("root".into(), seed);
    Ok(m)
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).at(out)
}

fn finish(out: &Path, mut m: Manifest, artifacts: &[PathBuf]) -> Result<PathBuf> {
    m.artifacts = artifacts
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
        .collect();
    let path = out.join(MANIFEST);
    write_json(&path, &m)?;
    Ok(path)
}

/// Rows of `region` belonging to `subjects`, in that order.
fn region_rows(region: &RegionData, subjects: &[usize]) -> RegionData {
    let counts = &region.per_subject_counts;
    RegionData {
        region_id: region.region_id,
        coords: region.coords.clone(),
        per_subject_counts: sivc_core::DMatrix::from_fn(subjects.len(), counts.ncols(), |s, v| {
            counts[(subjects[s], v)]
        }),
    }
}

pub fn cmd_cluster(cfg: &ClusterConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let atlas_path = cfg
        .atlas
        .as_deref()
        .ok_or_else(|| Error::Config("cluster.atlas is required".into()))?;
    if cfg.subjects.is_empty() {
        return Err(Error::Config("cluster.subjects is empty".into()));
    }
    let atlas = load_atlas(atlas_path)?;
    let volumes = cfg
        .subjects
        .iter()
        .map(|s| load_volume(&s.path, &s.subject_id(), &s.cohort))
        .collect::<Result<Vec<_>>>()?;
    let exclude: BTreeSet<u32> = cfg.exclude.iter().copied().collect();
    let regions = extract_regions(&volumes, &atlas, &exclude)?;
    let mut cohorts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, v) in volumes.iter().enumerate() {
        cohorts.entry(v.cohort_id.as_str()).or_default().push(i);
    }

    prepare(out)?;
    let mut m = manifest("cluster", seed, cfg)?;
    let mut artifacts = Vec::new();
    let mut outcome = Outcome::default();
    let model = match cfg.mode {
        ClusterMode::RoiAverage => None,
        ClusterMode::Gmm => {
            if cfg.k_min == 0 || cfg.k_max < cfg.k_min {
                return Err(Error::Config("need 1 <= k_min <= k_max".into()));
            }
            let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
            let em = EmConfig {
                tol: cfg.em_tol,
                max_iter: cfg.em_max_iter,
                ..EmConfig::default()
            };
            let cluster_seed = derive_seed(seed, &[tag::CLUSTER]);
            m.seeds.insert("cluster".into(), cluster_seed);
            let selections = regions
                .par_iter()
                .map(|r| {
                    select_model(&r.pooled(), &ks, cfg.restarts, cluster_seed, &em)
                        .context(|| format!("region {}", r.region_id))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut table = serde_json::Map::new();
            for s in &selections {
                if !s.skipped.is_empty() {
                    outcome.warnings.push(format!(
                        "region {}: skipped K {:?}",
                        s.model.region_id, s.skipped
                    ));
                }
                table.insert(
                    s.model.region_id.to_string(),
                    json!({ "K": s.model.k, "bic_by_k": s.bic_by_k, "skipped": s.skipped }),
                );
            }
            m.details = json!({ "mode": "gmm", "regions": table });
            let model = ClusterModel::new(
                selections
                    .into_iter()
                    .map(|s| (s.model.region_id, s.model))
                    .collect(),
            );
            let path = out.join("cluster_model.json");
            save_cluster_model(&path, &model)?;
            artifacts.push(path);
            outcome.message = format!("clustered {model}");
            Some(model)
        }
    };
    if model.is_none() {
        m.details = json!({ "mode": "roi-average", "regions": regions.iter().map(|r| r.region_id).collect::<Vec<_>>() });
        outcome.message = format!("averaged {} regions", regions.len());
    }
    for (cohort, members) in &cohorts {
        let parts: Vec<RegionData> = regions.iter().map(|r| region_rows(r, members)).collect();
        let ids: Vec<String> = members
            .iter()
            .map(|&i| volumes[i].subject_id.clone())
            .collect();
        let values = match &model {
            Some(model) => cluster_averages(model, &parts, &ids, cohort)?,
            None => roi_averages(&parts, &ids, cohort)?,
        };
        let path = out.join(format!("{cohort}.csv"));
        save_subject_matrix(&path, &values)?;
        artifacts.push(path);
    }
    artifacts.push(finish(out, m, &artifacts)?);
    outcome.artifacts = artifacts;
    Ok(outcome)
}

fn cohort_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn cmd_fit(cfg: &FitConfig, seed: u64, out: &Path) -> Result<Outcome> {
    if cfg.inputs.is_empty() {
        return Err(Error::Config("fit.inputs is empty".into()));
    }
    if cfg.model == ModelName::Fgl && cfg.inputs.len() != 2 {
        return Err(Error::Config(format!(
            "FGL requires exactly two cohort inputs, got {}",
            cfg.inputs.len()
        )));
    }
    let norm = match cfg.normalization {
        CovarianceNorm::Ml => Normalization::MaxLikelihood,
        CovarianceNorm::Unbiased => Normalization::Unbiased,
    };
    let covs = cfg
        .inputs
        .iter()
        .map(|p| {
            let x = load_subject_matrix(p, &cohort_of(p))?;
            empirical_covariance(&mean_center(&x)?, norm).at(p)
        })
        .collect::<Result<Vec<CohortCovariance>>>()?;
    if let Some(c) = covs.iter().find(|c| c.node_labels != covs[0].node_labels) {
        return Err(Error::Config(format!(
            "cohort {} has different node labels",
            c.cohort_id
        )));
    }
    let context = || {
        format!(
            "{:?} at lambda1={}, lambda2={}",
            cfg.model, cfg.lambda1, cfg.lambda2
        )
    };
    let mut m = manifest("fit", seed, cfg)?;
    let estimates: Vec<PrecisionEstimate> = match cfg.model {
        ModelName::Gl => {
            let gl = GlassoConfig {
                lambda: cfg.lambda1,
                penalize_diagonal: cfg.penalize_diagonal,
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                ..GlassoConfig::default()
            };
            let ests = covs
                .iter()
                .map(|c| {
                    glasso_fit(c, &gl)
                        .context(|| format!("{} for cohort {}", context(), c.cohort_id))
                })
                .collect::<Result<Vec<_>>>()?;
            m.details = json!({
                "model": "GL",
                "lambda": cfg.lambda1,
                "objectives": ests.iter().map(|e| e.objective).collect::<Vec<_>>(),
            });
            ests
        }
        ModelName::Fgl | ModelName::Ggl => {
            let penalty = if cfg.model == ModelName::Fgl {
                Penalty::Fused
            } else {
                Penalty::Group
            };
            let jc = JointConfig {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                normalize_n: cfg.normalize_n,
                ..JointConfig::new(penalty, cfg.lambda1, cfg.lambda2)
            };
            let est = joint_fit(&covs, &jc).context(context)?;
            let name = if penalty == Penalty::Fused {
                "fused"
            } else {
                "group"
            };
            m.details = serde_json::to_value(JointManifest::new(name, &est))?;
            est.estimates
        }
    };

    prepare(out)?;
    let mut artifacts = Vec::new();
    let mut edges = Vec::new();
    for e in &estimates {
        let path = out.join(format!("precision_{}.csv", e.cohort_id));
        save_labeled_matrix(&path, &e.node_labels, &e.phi)?;
        artifacts.push(path);
        let path = out.join(format!("precision_{}.sivm", e.cohort_id));
        save_matrix(&path, &e.phi)?;
        artifacts.push(path);
        if cfg.partial_correlations {
            let path = out.join(format!("partial_{}.csv", e.cohort_id));
            save_labeled_matrix(&path, &e.node_labels, &partial_correlations(&e.phi)?)?;
            artifacts.push(path);
        }
        edges.push(sivc_core::linalg::count_edges(&e.phi, 1e-8));
    }
    artifacts.push(finish(out, m, &artifacts)?);
    Ok(Outcome {
        artifacts,
        message: format!(
            "{}: edges per cohort {edges:?}",
            sivc_core::eval::Model::from(cfg.model)
        ),
        ..Outcome::default()
    })
}

/// Write `gold.json` plus one `.sivm` and one `.csv` matrix per cohort.
pub fn save_gold(dir: &Path, gold: &GoldStandard) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let labels = node_names(gold.dim());
    let mut files = Vec::new();
    let mut artifacts = Vec::new();
    for (g, phi) in gold.precisions.iter().enumerate() {
        let name = format!("gold_{}.sivm", cohort_name(g));
        save_matrix(&dir.join(&name), phi)?;
        artifacts.push(dir.join(&name));
        files.push(name);
        let csv = dir.join(format!("gold_{}.csv", cohort_name(g)));
        save_labeled_matrix(&csv, &labels, phi)?;
        artifacts.push(csv);
    }
    let path = dir.join("gold.json");
    write_json(&path, &GoldManifest::new(gold, files))?;
    artifacts.push(path);
    Ok(artifacts)
}

pub fn cmd_simulate(cfg: &SimulateConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let gold_seed = derive_seed(seed, &[tag::GOLD]);
    let gold = generate_gold(&cfg.spec.to_spec(gold_seed))?;
    let mut m = manifest("simulate", seed, cfg)?;
    m.seeds.insert("gold".into(), gold_seed);
    let mut artifacts = save_gold(out, &gold)?;
    for g in 0..gold.groups() {
        if cfg.n == 0 {
            break;
        }
        let s = derive_seed(seed, &[tag::SAMPLE, g as u64]);
        m.seeds.insert(format!("sample_{}", cohort_name(g)), s);
        let x: SubjectMatrix = sample_cohort(&gold, g, cfg.n, s)?;
        let path = out.join(format!("{}.csv", cohort_name(g)));
        save_subject_matrix(&path, &x)?;
        artifacts.push(path);
    }
    m.details = json!({ "shared_fraction": gold.shared_fraction, "edge_counts": gold.edge_counts });
    artifacts.push(finish(out, m, &artifacts)?);
    Ok(Outcome {
        artifacts,
        message: format!(
            "gold standard: {} cohorts, p={}, edges {:?}, shared fraction {:.3}",
            gold.groups(),
            gold.dim(),
            gold.edge_counts,
            gold.shared_fraction
        ),
        ..Outcome::default()
    })
}

fn write_plots(out: &Path, rows: &[ReportRow], curves: &[CurveRow]) -> Result<Vec<PathBuf>> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let path = out.join(format!("roc_N{n}.svg"));
            fs::write(&path, roc_svg(n, curves)).at(&path)?;
            Ok(path)
        })
        .collect()
}

pub fn cmd_experiment(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let result = run_experiment(cfg, seed)?;
    prepare(out)?;
    let mut m = manifest("experiment", seed, cfg)?;
    let mut artifacts = save_gold(&out.join("gold"), &result.gold)?;
    let rows_path = out.join(REPORT_CSV);
    save_rows(&rows_path, &result.rows)?;
    let curves_path = out.join(CURVES_CSV);
    save_rows(&curves_path, &result.curves)?;
    let summary = summarize(result.kind.name(), &result.rows);
    let summary_path = out.join(SUMMARY_JSON);
    write_json(&summary_path, &summary)?;
    artifacts.extend([rows_path, curves_path, summary_path]);
    if cfg.plots {
        artifacts.extend(write_plots(out, &result.rows, &result.curves)?);
    }
    m.details = json!({
        "experiment": result.kind.name(),
        "tuned": result.tuned,
        "failures": result.failures,
        "warnings": result.warnings,
        "gold_shared_fraction": result.gold.shared_fraction,
        "gold_edge_counts": result.gold.edge_counts,
    });
    artifacts.push(finish(out, m, &artifacts)?);
    Ok(Outcome {
        artifacts,
        failures: result.failures,
        warnings: result.warnings,
        message: render_summary(&summary),
    })
}

/// Recompute the summary and plots of a finished experiment directory.
pub fn cmd_report(input: &Path, out: &Path) -> Result<Outcome> {
    let rows: Vec<ReportRow> = load_rows(&input.join(REPORT_CSV))?;
    let curves: Vec<CurveRow> = load_rows(&input.join(CURVES_CSV))?;
    let experiment = read_json::<Manifest>(&input.join(MANIFEST))
        .ok()
        .and_then(|m| {
            m.details
                .get("experiment")
                .and_then(|e| e.as_str())
                .map(String::from)
        })
        .unwrap_or_else(|| "experiment".into());
    let summary = summarize(&experiment, &rows);
    prepare(out)?;
    let path = out.join(SUMMARY_JSON);
    write_json(&path, &summary)?;
    let mut artifacts = vec![path];
    artifacts.extend(write_plots(out, &rows, &curves)?);
    Ok(Outcome {
        artifacts,
        failures: rows.iter().map(|r| r.failures).sum(),
        message: render_summary(&summary),
        ..Outcome::default()
    })
}
