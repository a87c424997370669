use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvae")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

/// A tiny training config: few epochs, narrow layers, cheap evaluation.
fn small_config(dir: &Path, name: &str, curvature: f64, latent: usize, hidden: usize) -> PathBuf {
    let json = format!(
        r#"{{"model": {{"curvature": {curvature}, "latent_dim": {latent}, "hidden": {hidden}, "epochs": 2, "k_eval": 10}}, "seed": 3}}"#
    );
    write_config(dir, name, &json)
}

fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("data.csv");
    let o = pvae(&["synth-gen", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn trained(dir: &Path, curvature: f64, latent: usize) -> PathBuf {
    let data = synth(dir);
    let cfg = small_config(dir, "cfg.json", curvature, latent, 16);
    let out = dir.join("run");
    let o = pvae(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn dump_defaults_prints_a_loadable_config() {
    let o = pvae(&["--dump-defaults"]);
    assert!(o.status.success());
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("defaults.json");
    std::fs::write(&cfg, &o.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"]["batch_size"], 64);
    assert_eq!(v["data"]["depth"], 6);
    let out = dir.path().join("d.csv");
    assert!(pvae(&["synth-gen", "--config", s(&cfg), "--out", s(&out)]).status.success());
}

#[test]
fn synth_gen_writes_csv_and_provenance() {
    let dir = TempDir::new().unwrap();
    let out = synth(dir.path());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 631);
    assert!(text.lines().next().unwrap().ends_with("x49,node_id,parent_id,depth,split"));
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 0);
    assert_eq!(prov["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn synth_gen_is_deterministic_under_seed() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    for (p, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        assert!(pvae(&["synth-gen", "--out", s(p), "--seed", seed]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", "{\n  \"seed\": 1,\n  \"model\": {\"curvatur\": 1.0}\n}");
    let o = pvae(&["synth-gen", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("curvatur") && err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pvae(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pvae(&["synth-gen"]).status.code(), Some(1));
    assert_eq!(pvae(&["--help"]).status.code(), Some(0));
}

#[test]
fn euclidean_training_smoke() {
    let dir = TempDir::new().unwrap();
    let run = trained(dir.path(), 0.0, 2);
    for f in ["checkpoint.pvae", "metrics.csv", "report.json", "provenance.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(report["test_neg_iwae"].as_f64().unwrap().is_finite());
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn training_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path());
    let cfg = small_config(dir.path(), "cfg.json", 1.0, 2, 8);
    let mut ckpts = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        assert!(pvae(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]).status.success());
        ckpts.push(std::fs::read(out.join("checkpoint.pvae")).unwrap());
    }
    assert_eq!(ckpts[0], ckpts[1]);
}

#[test]
fn resume_checks_the_architecture() {
    let dir = TempDir::new().unwrap();
    let run = trained(dir.path(), 1.0, 2);
    let data = dir.path().join("data.csv");
    let ckpt = run.join("checkpoint.pvae");

    let same = dir.path().join("cfg.json");
    let o = pvae(&["train", "--config", s(&same), "--data", s(&data), "--out", s(&dir.path().join("r2")), "--resume", s(&ckpt)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let wider = small_config(dir.path(), "wide.json", 1.0, 2, 32);
    let o = pvae(&["train", "--config", s(&wider), "--data", s(&data), "--out", s(&dir.path().join("r3")), "--resume", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("architecture hash"), "{}", stderr(&o));
}

#[test]
fn divergent_training_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path());
    let cfg = write_config(dir.path(), "boom.json", r#"{"model": {"hidden": 8, "epochs": 3, "k_eval": 5, "lr": 1e300}}"#);
    let out = dir.path().join("boom");
    let o = pvae(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["unstable"], true);
}

fn eval_rows(stdout: &[u8]) -> Vec<(String, f64, f64)> {
    String::from_utf8_lossy(stdout)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[3].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn eval_reports_both_splits_and_is_consistent_in_k() {
    let dir = TempDir::new().unwrap();
    let run = trained(dir.path(), 0.0, 2);
    let (ckpt, data) = (run.join("checkpoint.pvae"), dir.path().join("data.csv"));
    let small = pvae(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--K", "500"]);
    let large = pvae(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--K", "5000"]);
    assert!(small.status.success(), "{}", stderr(&small));
    let (a, b) = (eval_rows(&small.stdout), eval_rows(&large.stdout));
    assert_eq!(a.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["train", "test"]);
    for (ra, rb) in a.iter().zip(&b) {
        assert!((ra.1 - rb.1).abs() < ra.2 + rb.2, "{ra:?} vs {rb:?}");
    }
}

#[test]
fn eval_missing_checkpoint_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path());
    let o = pvae(&["eval", "--checkpoint", s(&dir.path().join("nope.pvae")), "--data", s(&data), "--K", "5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn embed_and_plot() {
    let dir = TempDir::new().unwrap();
    let run = trained(dir.path(), 1.0, 2);
    let emb = dir.path().join("emb.csv");
    let o = pvae(&["embed", "--checkpoint", s(&run.join("checkpoint.pvae")), "--data", s(&dir.path().join("data.csv")), "--out", s(&emb)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&emb).unwrap().lines().count(), 631);

    let svg_path = dir.path().join("plot.svg");
    let o = pvae(&["plot", "--embeddings", s(&emb), "--out", s(&svg_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg_path).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    let circles: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("circle")).collect();
    let boundary = circles[0];
    let r: f64 = boundary.attribute("r").unwrap().parse().unwrap();
    let cx: f64 = boundary.attribute("cx").unwrap().parse().unwrap();
    assert_eq!(circles.len(), 631);
    for c in &circles[1..] {
        let x: f64 = c.attribute("cx").unwrap().parse().unwrap();
        let y: f64 = c.attribute("cy").unwrap().parse().unwrap();
        assert!(((x - cx).powi(2) + (y - cx).powi(2)).sqrt() <= r);
    }
    assert!(doc.descendants().any(|n| n.has_tag_name("line")));
}

#[test]
fn plot_refuses_other_dimensions() {
    let dir = TempDir::new().unwrap();
    let run = trained(dir.path(), 1.0, 3);
    let emb = dir.path().join("emb.csv");
    assert!(pvae(&["embed", "--checkpoint", s(&run.join("checkpoint.pvae")), "--data", s(&dir.path().join("data.csv")), "--out", s(&emb)])
        .status
        .success());
    let o = pvae(&["plot", "--embeddings", s(&emb), "--out", s(&dir.path().join("p.svg"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("2-dimensional"), "{}", stderr(&o));
}

#[test]
fn sample_zero_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("z.csv");
    let o = pvae(&["sample", "--params", r#"{"mu": [0.1, 0.2], "sigma": 1.0, "c": 1.0}"#, "--n", "0", "--family", "wrapped", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "z0,z1\n");
}

#[test]
fn samples_are_ball_points() {
    for family in ["wrapped", "riemannian"] {
        let o = pvae(&["sample", "--params", r#"{"mu": [0.5, -0.6, 0.1], "sigma": 1.7, "c": 1.4}"#, "--n", "500", "--family", family]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = String::from_utf8(o.stdout).unwrap();
        assert_eq!(text.lines().count(), 501);
        for l in text.lines().skip(1) {
            let n2: f64 = l.split(',').map(|v| v.parse::<f64>().unwrap().powi(2)).sum();
            assert!(1.4 * n2 < 1.0);
        }
    }
}

#[test]
fn heatmap_mass_is_one() {
    let dir = TempDir::new().unwrap();
    for (family, params) in [
        ("wrapped", r#"{"mu": [0.2, -0.1], "sigma": 0.7, "c": 1.0}"#),
        ("riemannian", r#"{"mu": [0.2, -0.1], "sigma": 0.7, "c": 1.0}"#),
        ("riemannian", r#"{"mu": [1.0, 2.0], "sigma": 1.3, "c": 0.0}"#),
        ("wrapped", r#"{"mu": [0.6, -0.3], "sigma": 1.7, "c": 1.4}"#),
        ("riemannian", r#"{"mu": [0.6, -0.3], "sigma": 1.7, "c": 1.4}"#),
    ] {
        let svg_path = dir.path().join("h.svg");
        let o = pvae(&["sample", "--params", params, "--n", "0", "--family", family, "--out", s(&dir.path().join("z.csv")), "--heatmap", s(&svg_path)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(&svg_path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let mass: f64 = doc.root_element().attribute("data-mass").unwrap().parse().unwrap();
        assert!((mass - 1.0).abs() < 1e-2, "{family} {params}: {mass}");
    }
}

#[test]
fn impractical_sampler_is_refused() {
    let o = pvae(&["sample", "--params", r#"{"mu": [0.0], "sigma": 1.0, "c": 1.0}"#, "--n", "3", "--family", "riemannian", "--sampler", "gamma"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}
