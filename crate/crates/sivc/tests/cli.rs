use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sivc::binary::{save_atlas, save_volume};
use sivc::manifest::{load_cluster_model, read_json, Manifest};
use sivc::table::{load_labeled_matrix, load_subject_matrix};
use sivc_core::{AtlasVolume, LabeledVolume};
use tempfile::TempDir;

fn sivc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sivc"))
        .args(args)
        .output()
        .expect("spawn sivc")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two regions split along x, three subjects in two cohorts.
fn cluster_fixture(dir: &Path) -> PathBuf {
    let dims = [6, 6, 6];
    let labels = (0..216).map(|i| if i % 6 < 3 { 1 } else { 2 }).collect();
    save_atlas(
        &dir.join("atlas.siva"),
        &AtlasVolume::new(dims, labels).unwrap(),
    )
    .unwrap();
    let mut subjects = String::new();
    for (k, cohort) in ["a", "a", "b"].iter().enumerate() {
        let counts = (0..216)
            .map(|i| ((i * 7 + k * 13) % 11) as f64 + 1.0)
            .collect();
        let v =
            LabeledVolume::new(dims, [2.0, 2.0, 2.0], counts, format!("s{k}"), *cohort).unwrap();
        let path = dir.join(format!("s{k}.sivc"));
        save_volume(&path, &v).unwrap();
        subjects.push_str(&format!(
            "[[cluster.subjects]]\npath = {:?}\ncohort = \"{cohort}\"\n\n",
            s(&path)
        ));
    }
    let cfg = dir.join("cluster.toml");
    let text = format!(
        "seed = 11\n[cluster]\natlas = {:?}\nk_min = 1\nk_max = 3\nrestarts = 2\n\n{subjects}",
        s(&dir.join("atlas.siva"))
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn cluster_gmm_writes_mixtures_and_cohort_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = cluster_fixture(tmp.path());
    let out = tmp.path().join("gmm");
    ok(&sivc(&["--config", s(&cfg), "--out", s(&out), "cluster"]));

    let model = load_cluster_model(&out.join("cluster_model.json")).unwrap();
    assert_eq!(model.mixtures.len(), 2);
    let a = load_subject_matrix(&out.join("a.csv"), "a").unwrap();
    let b = load_subject_matrix(&out.join("b.csv"), "b").unwrap();
    assert_eq!(a.n_subjects(), 2);
    assert_eq!(b.n_subjects(), 1);
    assert_eq!(a.n_nodes(), model.n_nodes());
    assert_eq!(a.node_labels, b.node_labels);

    let m: Manifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.command, "cluster");
    assert_eq!(m.seeds["root"], 11);
    assert!(m.details["regions"]["1"]["bic_by_k"].is_array());

    let again = tmp.path().join("gmm2");
    ok(&sivc(&["--config", s(&cfg), "--out", s(&again), "cluster"]));
    assert_eq!(read_dir_sorted(&out), read_dir_sorted(&again));
}

#[test]
fn cluster_roi_average_has_one_node_per_region() {
    let tmp = TempDir::new().unwrap();
    let cfg = cluster_fixture(tmp.path());
    let out = tmp.path().join("roi");
    ok(&sivc(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "cluster",
        "--mode",
        "roi-average",
    ]));
    assert!(!out.join("cluster_model.json").exists());
    let a = load_subject_matrix(&out.join("a.csv"), "a").unwrap();
    assert_eq!(a.n_nodes(), 2);
}

#[test]
fn simulate_then_fit() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&sivc(&[
        "--seed",
        "3",
        "--out",
        s(&sim),
        "simulate",
        "--p",
        "8",
        "--n",
        "60",
    ]));
    for f in [
        "gold.json",
        "gold_g0.sivm",
        "gold_g1.csv",
        "g0.csv",
        "g1.csv",
        "manifest.json",
    ] {
        assert!(sim.join(f).exists(), "{f} missing");
    }
    let g0 = sim.join("g0.csv");
    let g1 = sim.join("g1.csv");

    let gl = tmp.path().join("gl");
    ok(&sivc(&[
        "--out",
        s(&gl),
        "fit",
        "--model",
        "gl",
        "--lambda1",
        "0.1",
        "--input",
        s(&g0),
    ]));
    let (labels, phi) = load_labeled_matrix(&gl.join("precision_g0.csv")).unwrap();
    assert_eq!(labels.len(), 8);
    assert_eq!(phi, phi.transpose());
    let m: Manifest = read_json(&gl.join("manifest.json")).unwrap();
    assert_eq!(m.command, "fit");
    assert!(m.artifacts.contains(&"precision_g0.sivm".to_string()));

    let fgl = tmp.path().join("fgl");
    ok(&sivc(&[
        "--out",
        s(&fgl),
        "fit",
        "--model",
        "fgl",
        "--lambda1",
        "2",
        "--lambda2",
        "2",
        "--input",
        s(&g0),
        "--input",
        s(&g1),
        "--partial-correlations",
    ]));
    let (_, pc) = load_labeled_matrix(&fgl.join("partial_g1.csv")).unwrap();
    assert!((0..8).all(|i| (pc[(i, i)] - 1.0).abs() < 1e-12));

    let bad = sivc(&[
        "--out",
        s(&tmp.path().join("bad")),
        "fit",
        "--model",
        "fgl",
        "--input",
        s(&g0),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("exactly two"));
}

#[test]
fn experiment_and_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "seed = 5\n[experiment]\nreplicates = 2\npool_size = 400\ntune_n = 100\nlambda1_points = 6\n\
         tune_lambda1_grid = [0.01, 0.1]\nlambda2_grid = [0.01, 0.1]\n[experiment.spec]\np = 10\n",
    )
    .unwrap();
    let out = tmp.path().join("exp");
    ok(&sivc(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "experiment",
        "--experiment",
        "gold-driven",
        "--sizes",
        "25,50,100",
    ]));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 * 3 * 2);
    for model in ["GL", "FGL", "GGL"] {
        for n in [25, 50, 100] {
            assert_eq!(
                report
                    .lines()
                    .filter(|l| l.starts_with(&format!("{model},{n},")))
                    .count(),
                2
            );
        }
    }
    for f in [
        "curves.csv",
        "summary.json",
        "roc_N25.svg",
        "gold/gold.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let rep = tmp.path().join("rep");
    let r = sivc(&["--out", s(&rep), "report", "--input", s(&out)]);
    ok(&r);
    assert!(String::from_utf8_lossy(&r.stdout).contains("auc"));
    assert_eq!(
        fs::read(rep.join("summary.json")).unwrap(),
        fs::read(out.join("summary.json")).unwrap()
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[fit]\nlamda1 = 0.1\n").unwrap();
    let out = sivc(&[
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("o")),
        "fit",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda1"));
}
