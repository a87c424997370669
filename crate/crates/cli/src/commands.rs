use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pvae::ad::{Graph, Tensor};
use pvae::ball::{self, BallPoint, Curvature};
use pvae::data::{generate_branching, load_mnist, Dataset, Split};
use pvae::hypdist::{Family, HypNormalParams};
use pvae::nets::{Model, NetError};
use pvae::par::Exec;
use pvae::radsample::{rng_from_seed, sample_hyp_normal, RadiusSampler};
use pvae::vae::{self, TrainOptions, VaeConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::svg;

/// Training stopped in a numerically unstable regime (exit code 2).
#[derive(Debug)]
pub struct Unstable(pub String);

impl fmt::Display for Unstable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numerical instability: {}", self.0)
    }
}

impl std::error::Error for Unstable {}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    command: &'a str,
    version: &'static str,
    seed: u64,
    config_hash: String,
    config: &'a T,
}

fn write_provenance<T: Serialize>(path: &Path, command: &str, seed: u64, config_hash: String, config: &T) -> Result<()> {
    let p = Provenance { command, version: env!("CARGO_PKG_VERSION"), seed, config_hash, config };
    write_json(path, &p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// `dir/name.csv` → `dir/name.provenance.json`.
fn sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.provenance.json"))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

enum Data {
    Table(Dataset),
    Images { train: Tensor, test: Tensor },
}

impl Data {
    fn load(path: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        if path.is_dir() {
            let (train, test) = load_mnist(path, cfg.data.n_train, cfg.data.n_test)
                .with_context(|| format!("loading images from {}", path.display()))?;
            Ok(Data::Images { train, test })
        } else {
            let ds = Dataset::read_csv(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Data::Table(ds))
        }
    }

    fn is_images(&self) -> bool {
        matches!(self, Data::Images { .. })
    }

    fn input_dim(&self) -> usize {
        match self {
            Data::Table(d) => d.features.cols(),
            Data::Images { train, .. } => train.cols(),
        }
    }

    fn splits(&self) -> (Tensor, Tensor) {
        match self {
            Data::Table(d) => (d.train(), d.test()),
            Data::Images { train, test } => (train.clone(), test.clone()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    experiment: ExperimentConfig,
    vae: VaeConfig,
}

fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let (model, meta) = Model::load_with_meta(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let meta = meta.ok_or_else(|| anyhow!("checkpoint {} carries no experiment metadata", path.display()))?;
    Ok((model, serde_json::from_value(meta)?))
}

fn check_width(data: &Data, vae: &VaeConfig) -> Result<()> {
    if data.input_dim() != vae.arch.input_dim {
        bail!("data has {} features, the model expects {}", data.input_dim(), vae.arch.input_dim);
    }
    Ok(())
}

pub fn synth_gen(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let ds = generate_branching(&cfg.branching())?;
    ds.write_csv(out).with_context(|| format!("writing {}", out.display()))?;
    write_provenance(&sidecar(out), "synth-gen", cfg.seed, cfg.hash(), &cfg)?;
    println!("wrote {} observations to {}", ds.len(), out.display());
    Ok(())
}

pub fn train(config: Option<&Path>, data: &Path, out: Option<&Path>, resume: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let data = Data::load(data, &cfg)?;
    let vae_cfg = cfg.vae(data.input_dim(), data.is_images())?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let (tr, te) = data.splits();
    let metrics = out.join("metrics.csv");
    let opts = TrainOptions { metrics: Some(&metrics), ..Default::default() };

    let (model, report) = match resume {
        Some(ckpt) => {
            let mut rng = rng_from_seed(vae_cfg.seed);
            let mut model = Model::new(vae_cfg.arch.clone(), &mut rng)?;
            match model.load_weights(ckpt) {
                Err(NetError::ArchMismatch { expected, found }) => {
                    bail!("cannot resume from {}: architecture hash {found} does not match the configured {expected}", ckpt.display())
                }
                r => r.with_context(|| format!("loading {}", ckpt.display()))?,
            }
            let report = vae::train_model(&mut model, &vae_cfg, &tr, &te, &opts, &mut rng)?;
            (model, report)
        }
        None => vae::train(&vae_cfg, &tr, &te, &opts)?,
    };

    let meta = serde_json::to_value(CheckpointMeta { experiment: cfg.clone(), vae: vae_cfg })?;
    model.save_with_meta(&out.join("checkpoint.pvae"), Some(&meta))?;
    write_json(&out.join("report.json"), &report)?;
    write_provenance(&out.join("provenance.json"), "train", cfg.seed, cfg.hash(), &cfg)?;

    let last = report.epochs.last().map(|e| e.train_elbo);
    println!(
        "epochs {}  final train ELBO {}  test -L_IWAE {}",
        report.epochs.len(),
        last.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.test_neg_iwae.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    if report.unstable {
        return Err(Unstable(report.diagnostics.unwrap_or_else(|| "unstable run".into())).into());
    }
    Ok(())
}

pub fn eval(checkpoint: &Path, data: &Path, k: Option<usize>, seed: Option<u64>) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let data = Data::load(data, &meta.experiment)?;
    check_width(&data, &meta.vae)?;
    let k = k.unwrap_or(meta.vae.k_eval);
    if k == 0 {
        bail!("--K must be positive");
    }
    let seed = seed.unwrap_or(meta.vae.seed ^ 0x5eed);
    let (tr, te) = data.splits();
    println!("split\tn\tK\tneg_iwae\tse");
    for (name, x) in [("train", tr), ("test", te)] {
        if x.rows() == 0 {
            continue;
        }
        let vals = vae::iwae(&model, &meta.vae, &x, k, seed, Exec::Parallel)?;
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        println!("{name}\t{}\t{k}\t{:.6}\t{:.6}", vals.len(), -mean, (var / n).sqrt());
    }
    Ok(())
}

pub fn embed(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let data = Data::load(data, &meta.experiment)?;
    check_width(&data, &meta.vae)?;
    // (features, split, node metadata) in dataset order
    let (x, rows): (Tensor, Vec<(&str, [String; 3])>) = match &data {
        Data::Table(ds) => {
            let rows = (0..ds.len())
                .map(|i| {
                    let s = if ds.split[i] == Split::Train { "train" } else { "test" };
                    let m = ds.nodes[i];
                    (s, [m.node_id.to_string(), m.parent_id.to_string(), m.depth.to_string()])
                })
                .collect();
            (ds.features.clone(), rows)
        }
        Data::Images { train, test } => {
            let mut all = train.data().to_vec();
            all.extend_from_slice(test.data());
            let blank = || [String::new(), String::new(), String::new()];
            let rows = (0..train.rows()).map(|_| ("train", blank())).chain((0..test.rows()).map(|_| ("test", blank()))).collect();
            (Tensor::new(train.rows() + test.rows(), train.cols(), all), rows)
        }
    };
    let g = Graph::new();
    let p = model.params.bind_const(&g);
    let (mu, sigma) = model.encode(&p, g.constant(x));
    let (mu, sigma) = (mu.value(), sigma.value());
    let c = model.curvature().value();

    let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    let mut header: Vec<String> = ["index", "split", "node_id", "parent_id", "depth", "curvature"].map(String::from).to_vec();
    header.extend((0..mu.cols()).map(|j| format!("mu{j}")));
    if sigma.cols() == 1 {
        header.push("sigma".into());
    } else {
        header.extend((0..sigma.cols()).map(|j| format!("sigma{j}")));
    }
    w.write_record(&header)?;
    for (i, (split, node)) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string(), split.to_string()];
        rec.extend(node.iter().cloned());
        rec.push(c.to_string());
        rec.extend(mu.row_slice(i).iter().map(|v| v.to_string()));
        rec.extend(sigma.row_slice(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let hash = hex::encode(Sha256::digest(std::fs::read(checkpoint)?));
    write_provenance(&sidecar(out), "embed", meta.vae.seed, hash, &meta.experiment)?;
    println!("wrote {} embeddings to {}", rows.len(), out.display());
    Ok(())
}

pub fn plot(embeddings: &Path, out: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(embeddings).with_context(|| format!("reading {}", embeddings.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mu_cols: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h.starts_with("mu")).map(|(i, _)| i).collect();
    if mu_cols.len() != 2 {
        bail!("plotting needs a 2-dimensional latent space, the embeddings have d = {}", mu_cols.len());
    }
    let c_col = col("curvature").ok_or_else(|| anyhow!("embeddings lack a curvature column"))?;
    let (node_col, parent_col, depth_col) = (col("node_id"), col("parent_id"), col("depth"));

    let mut points = Vec::new();
    let mut c = None;
    // node id → (sum x, sum y, count, parent)
    let mut nodes: BTreeMap<usize, (f64, f64, usize, Option<usize>)> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse().with_context(|| format!("row {}: bad number `{}`", line + 1, &rec[j]))
        };
        let opt = |j: Option<usize>| j.and_then(|j| rec[j].trim().parse::<usize>().ok());
        let (x, y) = (num(mu_cols[0])?, num(mu_cols[1])?);
        let rc = num(c_col)?;
        c.get_or_insert(rc);
        points.push(svg::PlotPoint { x, y, depth: opt(depth_col) });
        if let Some(id) = opt(node_col) {
            let e = nodes.entry(id).or_insert((0.0, 0.0, 0, opt(parent_col)));
            e.0 += x;
            e.1 += y;
            e.2 += 1;
        }
    }
    let c = c.unwrap_or(1.0);
    if c > 0.0 {
        let curv = Curvature::new(c)?;
        for p in &points {
            BallPoint::new(vec![p.x, p.y], curv).with_context(|| format!("point ({}, {}) is outside the ball", p.x, p.y))?;
        }
    }
    let centre = |(sx, sy, n, _): &(f64, f64, usize, Option<usize>)| (sx / *n as f64, sy / *n as f64);
    let edges: Vec<_> = nodes
        .values()
        .filter_map(|node| {
            let parent = nodes.get(&node.3?)?;
            Some((centre(node), centre(parent)))
        })
        .collect();
    std::fs::write(out, svg::embedding_plot(&points, &edges, c)).with_context(|| format!("writing {}", out.display()))?;
    println!("plotted {} points and {} edges to {}", points.len(), edges.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleParams {
    mu: Vec<f64>,
    sigma: f64,
    c: f64,
}

#[derive(Serialize)]
struct SampleRequest<'a> {
    params: &'a SampleParams,
    n: usize,
    family: Family,
    sampler: RadiusSampler,
}

/// Volume element of the ball metric relative to Lebesgue measure.
fn volume_factor(z: &BallPoint) -> f64 {
    if z.curvature().is_euclidean() {
        1.0
    } else {
        ball::lambda(z).powi(z.dim() as i32)
    }
}

const SUB: usize = 4;

#[allow(clippy::too_many_arguments)]
pub fn sample(
    params: &str,
    n: usize,
    family: Family,
    out: Option<&Path>,
    heatmap: Option<&Path>,
    grid: usize,
    sampler: RadiusSampler,
    seed: u64,
) -> Result<()> {
    let text = if params.trim_start().starts_with('{') {
        params.to_string()
    } else {
        std::fs::read_to_string(params).with_context(|| format!("reading {params}"))?
    };
    let sp: SampleParams = serde_json::from_str(&text).context("invalid --params")?;
    let c = Curvature::new(sp.c)?;
    let mu = BallPoint::new(sp.mu.clone(), c)?;
    let d = mu.dim();
    let hp = HypNormalParams::new(mu.clone(), sp.sigma, family)?;

    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(sample_hyp_normal(&hp, sampler, &mut rng)?);
    }
    let header: Vec<String> = (0..d).map(|j| format!("z{j}")).collect();
    let write = |w: &mut csv::Writer<Box<dyn std::io::Write>>| -> Result<()> {
        w.write_record(&header)?;
        for z in &rows {
            w.write_record(z.coords().iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    };
    match out {
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write(&mut csv::Writer::from_writer(Box::new(f)))?;
            let req = SampleRequest { params: &sp, n, family, sampler };
            let hash = hex::encode(Sha256::digest(serde_json::to_vec(&req)?));
            write_provenance(&sidecar(path), "sample", seed, hash, &req)?;
        }
        None => write(&mut csv::Writer::from_writer(Box::new(std::io::stdout())))?,
    }

    if let Some(path) = heatmap {
        if d != 2 {
            bail!("the density heatmap needs d = 2, got d = {d}");
        }
        if grid == 0 {
            bail!("--grid must be positive");
        }
        let extent = if c.is_euclidean() { mu.norm() + 8.0 * sp.sigma } else { c.radius() };
        let cell = 2.0 * extent / grid as f64;
        let (cx, cy) = if c.is_euclidean() { (sp.mu[0], sp.mu[1]) } else { (0.0, 0.0) };
        let mut cells = Vec::with_capacity(grid * grid);
        let mut mass = 0.0;
        for i in 0..grid {
            for j in 0..grid {
                let x = cx - extent + (i as f64 + 0.5) * cell;
                let y = cy - extent + (j as f64 + 0.5) * cell;
                let r = (x * x + y * y).sqrt() - cell;
                if !c.is_euclidean() && r >= c.max_norm() {
                    continue;
                }
                // midpoint rule on a SUB x SUB split of the cell
                let h = cell / SUB as f64;
                let mut p = 0.0;
                for a in 0..SUB {
                    for b in 0..SUB {
                        let u = x - cell / 2.0 + (a as f64 + 0.5) * h;
                        let v = y - cell / 2.0 + (b as f64 + 0.5) * h;
                        if c.is_euclidean() || u * u + v * v < c.max_norm().powi(2) {
                            let z = BallPoint::new(vec![u, v], c)?;
                            p += hp.log_pdf(&z)?.exp() * volume_factor(&z);
                        }
                    }
                }
                p /= (SUB * SUB) as f64;
                mass += p * cell * cell;
                cells.push((x - cx, y - cy, p));
            }
        }
        let frame_extent = if c.is_euclidean() { extent } else { 0.0 };
        std::fs::write(path, svg::heatmap(&cells, cell, c.value(), frame_extent, mass))
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("heatmap mass {mass:.6} over a {grid}x{grid} grid");
    }
    Ok(())
}
