//! Sample-size experiments against a gold standard.
//!
//! Every random stream is derived from the root seed and a fixed tag path,
//! and jobs are collected in a fixed order, so results do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use sivc_core::eval::{
    bic_select_regularization, disjoint_split, fit_model, grid_search_lambda2, roc_sweep, sse,
    stratified_subsets, FitOptions, Model, RocSweep, SubsetPlan,
};
use sivc_core::gold::{generate_gold, sample_cohort, GoldStandard, Provenance};
use sivc_core::rng::derive_seed;
use sivc_core::{
    empirical_covariance, mean_center, CohortCovariance, DMatrix, Normalization, SubjectMatrix,
};

use crate::binary::load_matrix;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result, ResultExt};
use crate::manifest::{read_json, GoldManifest};
use crate::report::{CurveRow, ReportRow};

pub(crate) mod tag {
    pub const GOLD: u64 = 1;
    pub const POOL: u64 = 2;
    pub const TUNE: u64 = 3;
    pub const SUBSETS: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SAMPLE: u64 = 6;
    pub const CLUSTER: u64 = 7;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub gold: GoldStandard,
    /// `lambda2` tuned per joint model (gold-driven only).
    pub tuned: BTreeMap<String, (f64, f64)>,
    pub rows: Vec<ReportRow>,
    pub curves: Vec<CurveRow>,
    /// Fits that failed or did not converge, over all jobs.
    pub failures: usize,
    pub warnings: Vec<String>,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GoldDriven => "gold-driven",
            ExperimentKind::CrossValidation => "cross-validation",
        }
    }
}

pub fn synthetic_gold(cfg: &ExperimentConfig, seed: u64) -> Result<GoldStandard> {
    Ok(generate_gold(
        &cfg.spec.to_spec(derive_seed(seed, &[tag::GOLD])),
    )?)
}

/// Read a gold standard written by `simulate` (or any directory with a gold manifest).
pub fn load_gold(dir: &Path) -> Result<GoldStandard> {
    let manifest: GoldManifest = read_json(&dir.join("gold.json"))?;
    let precisions = manifest
        .matrices
        .iter()
        .map(|f| load_matrix(&dir.join(f)))
        .collect::<Result<Vec<DMatrix<f64>>>>()?;
    if precisions.is_empty() {
        return Err(Error::Config(format!(
            "{}: gold manifest lists no matrices",
            dir.display()
        )));
    }
    Ok(GoldStandard {
        precisions,
        shared_fraction: manifest.shared_fraction,
        edge_counts: manifest.edge_counts,
        seed: manifest.seed,
        provenance: if manifest.provenance == "derived_from_data" {
            Provenance::DerivedFromData
        } else {
            Provenance::Synthetic
        },
        spec: manifest.spec.map(Into::into),
    })
}

pub fn covariance_of(x: &SubjectMatrix) -> Result<CohortCovariance> {
    Ok(empirical_covariance(
        &mean_center(x)?,
        Normalization::MaxLikelihood,
    )?)
}

fn fit_options(cfg: &ExperimentConfig) -> FitOptions {
    FitOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        zero_tol: cfg.zero_tol,
        ..FitOptions::default()
    }
}

fn pools(gold: &GoldStandard, n: usize, seed: u64, stream: u64) -> Result<Vec<SubjectMatrix>> {
    (0..gold.groups())
        .map(|g| {
            Ok(sample_cohort(
                gold,
                g,
                n,
                derive_seed(seed, &[stream, g as u64]),
            )?)
        })
        .collect()
}

fn subset_covs(
    pools: &[SubjectMatrix],
    plan: &SubsetPlan,
    size: usize,
    replicate: usize,
) -> Result<Vec<CohortCovariance>> {
    pools
        .iter()
        .zip(plan.get(size, replicate))
        .map(|(x, idx)| covariance_of(&x.select_rows(idx)))
        .collect()
}

struct Job {
    size: usize,
    n: usize,
    replicate: usize,
    model: Model,
}

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for (size, &n) in cfg.sizes.iter().enumerate() {
        for &m in &cfg.models {
            for replicate in 0..cfg.replicates {
                out.push(Job {
                    size,
                    n,
                    replicate,
                    model: m.into(),
                });
            }
        }
    }
    out
}

fn curve_rows(job: &Job, sweep: &RocSweep) -> Vec<CurveRow> {
    sweep
        .averaged
        .iter()
        .map(|p| CurveRow {
            model: job.model.name().into(),
            n: job.n,
            replicate: job.replicate,
            lambda1: p.lambda1,
            fpr: p.fpr,
            tpr: p.tpr,
            tp: p.tp,
            fp: p.fp,
            sse: p.sse,
        })
        .collect()
}

fn base_row(job: &Job, sweep: &RocSweep) -> ReportRow {
    ReportRow {
        model: job.model.name().into(),
        n: job.n,
        replicate: job.replicate,
        auc: sweep.auc,
        min_sse: sweep.sse_optimal.sse,
        tp: sweep.sse_optimal.tp,
        fp: sweep.sse_optimal.fp,
        lambda1_opt: sweep.sse_optimal.lambda1,
        lambda2: sweep.lambda2,
        selected_lambda1: None,
        selected_lambda2: None,
        selected_sse: None,
        failures: sweep.failures.len(),
    }
}

type JobResult = Result<(ReportRow, Vec<CurveRow>, Vec<String>)>;

fn collect(
    kind: ExperimentKind,
    gold: GoldStandard,
    tuned: BTreeMap<String, (f64, f64)>,
    jobs: &[Job],
    results: Vec<JobResult>,
    grid_len: usize,
    mut failures: usize,
    mut warnings: Vec<String>,
) -> Result<ExperimentOutput> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok((row, c, w)) => {
                failures += row.failures;
                rows.push(row);
                curves.extend(c);
                warnings.extend(w);
            }
            Err(e) => {
                failures += grid_len;
                warnings.push(format!(
                    "{} N={} replicate {}: {e}",
                    job.model, job.n, job.replicate
                ));
            }
        }
    }
    warnings.sort();
    warnings.dedup();
    if rows.is_empty() {
        return Err(Error::Core(sivc_core::Error::GridFailed));
    }
    Ok(ExperimentOutput {
        kind,
        gold,
        tuned,
        rows,
        curves,
        failures,
        warnings,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let gold = match &cfg.gold {
        Some(dir) => load_gold(dir)?,
        None => synthetic_gold(cfg, seed)?,
    };
    if cfg.models.iter().any(|&m| Model::from(m) == Model::Fgl) && gold.groups() > 2 {
        return Err(sivc_core::Error::UnsupportedGroupCount(gold.groups()).into());
    }
    match cfg.kind {
        ExperimentKind::GoldDriven => gold_driven(cfg, seed, gold),
        ExperimentKind::CrossValidation => cross_validation(cfg, seed, gold),
    }
}

fn gold_driven(cfg: &ExperimentConfig, seed: u64, gold: GoldStandard) -> Result<ExperimentOutput> {
    let opts = fit_options(cfg);
    let grid = cfg.sweep_grid()?;
    let tune: Vec<CohortCovariance> = pools(&gold, cfg.tune_n, seed, tag::TUNE)?
        .iter()
        .map(covariance_of)
        .collect::<Result<_>>()?;
    let joint: Vec<Model> = {
        let mut ms: Vec<Model> = cfg
            .models
            .iter()
            .map(|&m| Model::from(m))
            .filter(|m| m.is_joint())
            .collect();
        ms.sort();
        ms.dedup();
        ms
    };
    let mut tune_failures = 0;
    let tuned: BTreeMap<String, (f64, f64)> = joint
        .par_iter()
        .map(|&m| {
            let choice = grid_search_lambda2(
                &tune,
                &gold.precisions,
                m,
                &cfg.tune_lambda1_grid,
                &cfg.lambda2_grid,
                &opts,
            )
            .context(|| format!("tuning lambda2 for {m}"))?;
            let failed = choice.cells.iter().filter(|c| c.score.is_none()).count();
            Ok((
                m.name().to_string(),
                (choice.lambda1, choice.lambda2),
                failed,
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|(name, pair, failed)| {
            tune_failures += failed;
            (name, pair)
        })
        .collect();

    let pool = pools(&gold, cfg.pool_size, seed, tag::POOL)?;
    let sizes: Vec<usize> = pool.iter().map(SubjectMatrix::n_subjects).collect();
    let plan = stratified_subsets(
        &sizes,
        &cfg.sizes,
        cfg.replicates,
        derive_seed(seed, &[tag::SUBSETS]),
        cfg.with_replacement,
    )?;
    let jobs = jobs(cfg);
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|job| {
            let covs = subset_covs(&pool, &plan, job.size, job.replicate)?;
            let lambda2 = tuned.get(job.model.name()).map_or(0.0, |t| t.1);
            let sweep = roc_sweep(&covs, &gold.precisions, job.model, &grid, lambda2, &opts)?;
            Ok((
                base_row(job, &sweep),
                curve_rows(job, &sweep),
                sweep.warnings.clone(),
            ))
        })
        .collect();
    collect(
        ExperimentKind::GoldDriven,
        gold,
        tuned,
        &jobs,
        results,
        grid.len(),
        tune_failures,
        Vec::new(),
    )
}

fn cross_validation(
    cfg: &ExperimentConfig,
    seed: u64,
    gold: GoldStandard,
) -> Result<ExperimentOutput> {
    let opts = fit_options(cfg);
    let grid = cfg.sweep_grid()?;
    let criterion = cfg.criterion.into();
    let pool = pools(&gold, cfg.pool_size, seed, tag::POOL)?;
    let mut selection = Vec::new();
    let mut evaluation = Vec::new();
    for (g, x) in pool.iter().enumerate() {
        let (a, b) = disjoint_split(
            x.n_subjects(),
            x.n_subjects() / 2,
            derive_seed(seed, &[tag::SPLIT, g as u64]),
        )?;
        selection.push(x.select_rows(&a));
        evaluation.push(x.select_rows(&b));
    }
    let sizes_of =
        |p: &[SubjectMatrix]| p.iter().map(SubjectMatrix::n_subjects).collect::<Vec<_>>();
    let plan_sel = stratified_subsets(
        &sizes_of(&selection),
        &cfg.sizes,
        cfg.replicates,
        derive_seed(seed, &[tag::SUBSETS, 0]),
        cfg.with_replacement,
    )?;
    let plan_eval = stratified_subsets(
        &sizes_of(&evaluation),
        &cfg.sizes,
        cfg.replicates,
        derive_seed(seed, &[tag::SUBSETS, 1]),
        cfg.with_replacement,
    )?;
    let jobs = jobs(cfg);
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|job| {
            let sel = subset_covs(&selection, &plan_sel, job.size, job.replicate)?;
            let eval = subset_covs(&evaluation, &plan_eval, job.size, job.replicate)?;
            let choice = bic_select_regularization(
                &sel,
                job.model,
                &grid,
                &cfg.lambda2_grid,
                &opts,
                criterion,
            )?;
            let grid_failures = choice.cells.iter().filter(|c| c.score.is_none()).count();
            let sweep = roc_sweep(
                &eval,
                &gold.precisions,
                job.model,
                &grid,
                choice.lambda2,
                &opts,
            )?;
            let (phis, _) = fit_model(
                &eval,
                job.model,
                choice.lambda1,
                choice.lambda2,
                &opts,
                None,
            )?;
            let mut selected_sse = 0.0;
            for (phi, g) in phis.iter().zip(&gold.precisions) {
                selected_sse += sse(phi, g)?;
            }
            let mut row = base_row(job, &sweep);
            row.selected_lambda1 = Some(choice.lambda1);
            row.selected_lambda2 = Some(choice.lambda2);
            row.selected_sse = Some(selected_sse / phis.len() as f64);
            row.failures += grid_failures;
            Ok((row, curve_rows(job, &sweep), sweep.warnings.clone()))
        })
        .collect();
    collect(
        ExperimentKind::CrossValidation,
        gold,
        BTreeMap::new(),
        &jobs,
        results,
        grid.len(),
        0,
        Vec::new(),
    )
}
