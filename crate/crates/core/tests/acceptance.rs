//! Acceptance suite. One PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p pvae --test acceptance -- 1 4 6`.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use common::{ks_critical_01, ks_statistic, mean_and_se};
use pvae::ad::Graph;
use pvae::ball::{self, BallPoint, Curvature, TangentVector};
use pvae::data::{generate_branching, load_mnist, BranchingConfig};
use pvae::hypdist::{riemannian_log_z, Family, HypNormalParams, RadiusDensity};
use pvae::nets::{ArchSpec, DecoderKind, Model};
use pvae::quad;
use pvae::radsample::{
    gamma_log_bound, rng_from_seed, sample_radius, truncnorm_log_bound, AcceptanceStats, ArsProposal, RadiusSampler,
};
use pvae::vae::{elbo_mc, posterior_means, train, AdamConfig, FrozenNoise, Likelihood, TrainOptions, TrainReport, VaeConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn curv(c: f64) -> Curvature {
    Curvature::new(c).unwrap()
}

fn random_in_ball<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&v).max(1e-300);
    let r = rng.random_range(0.0..radius);
    v.iter().map(|x| x / n * r).collect()
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(1001);
    let (mut round, mut mobius) = (0.0f64, 0.0f64);
    let mut cases = 0;
    while cases < 10_000 {
        let c = curv(rng.random_range(0.05..2.0));
        let d = rng.random_range(1..=10);
        let z = BallPoint::new(random_in_ball(&mut rng, d, 0.9 * c.radius()), c).unwrap();
        let y = BallPoint::new(random_in_ball(&mut rng, d, 0.9 * c.radius()), c).unwrap();
        let scale = rng.random_range(0.01..2.0);
        let v: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let e = ball::exp_map(&TangentVector::new(z.clone(), v.clone()).unwrap());
        if e.norm() >= c.max_norm() * (1.0 - 1e-9) {
            continue;
        }
        cases += 1;
        let back = ball::log_map(&z, &e).unwrap().vec;
        round = round.max(diff_norm(&back, &v) / norm(&v));
        let w = ball::exp_map(&ball::log_map(&z, &y).unwrap());
        round = round.max(diff_norm(w.coords(), y.coords()) / y.norm());

        let o = BallPoint::origin(d, c);
        let zy = ball::mobius_add(&z, &y).unwrap();
        for err in [
            diff_norm(ball::mobius_add(&z, &o).unwrap().coords(), z.coords()),
            diff_norm(ball::mobius_add(&o, &z).unwrap().coords(), z.coords()),
            ball::mobius_add(&z.neg(), &z).unwrap().norm(),
            diff_norm(ball::mobius_add(&z.neg(), &zy).unwrap().coords(), y.coords()),
        ] {
            mobius = mobius.max(err);
        }
    }

    let mut exact = true;
    let e = Curvature::EUCLIDEAN;
    for _ in 0..1000 {
        let d = rng.random_range(1..=10);
        let zc: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let yc: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (z, y) = (BallPoint::new(zc.clone(), e).unwrap(), BallPoint::new(yc.clone(), e).unwrap());
        let sum: Vec<f64> = zc.iter().zip(&yc).map(|(p, q)| p + q).collect();
        let sub: Vec<f64> = yc.iter().zip(&zc).map(|(p, q)| p - q).collect();
        let dot: f64 = zc.iter().zip(&yc).zip(&a).map(|((p, q), r)| (p - q) * r).sum();
        exact &= ball::mobius_add(&z, &y).unwrap().coords() == sum.as_slice();
        exact &= ball::distance(&z, &y).unwrap() == diff_norm(&zc, &yc);
        exact &= ball::exp_map(&TangentVector::new(z.clone(), yc.clone()).unwrap()).coords() == sum.as_slice();
        exact &= ball::log_map(&z, &y).unwrap().vec == sub;
        exact &= ball::gyroplane_decision(&z, &a, &y).unwrap() == dot;
        exact &= ball::gyroplane_distance(&z, &a, &y).unwrap() == dot.abs() / norm(&a);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        round <= 1e-8 && mobius <= 1e-10 && exact && secs < 10.0,
        format!(
            "round trip max rel err {round:.2e} (≤ 1e-8), Möbius identities max err {mobius:.2e} (≤ 1e-10), \
             c = 0 exact: {exact}, {secs:.2} s (< 10 s)"
        ),
    )
}

fn density_normalization() -> Outcome {
    let start = Instant::now();
    let n_theta = 64;
    let mut worst = 0.0f64;
    for family in [Family::Riemannian, Family::Wrapped] {
        for c in [0.3, 1.0, 1.4] {
            for s in [0.5, 1.0, 1.7] {
                let c = curv(c);
                let params = HypNormalParams::new(BallPoint::origin(2, c), s, family).unwrap();
                let sc = c.sqrt();
                let clamp = 2.0 * (sc * c.max_norm()).atanh() / sc;
                let r_hi = params.radius_density().unwrap().r_max().min(clamp);
                let ring = |r: f64| {
                    let t = (sc * r / 2.0).tanh() / sc;
                    let total: f64 = (0..n_theta)
                        .map(|k| {
                            let th = 2.0 * PI * k as f64 / n_theta as f64;
                            let z = BallPoint::new(vec![t * th.cos(), t * th.sin()], c).unwrap();
                            params.log_pdf(&z).unwrap().exp()
                        })
                        .sum();
                    total * 2.0 * PI / n_theta as f64 * (sc * r).sinh() / sc
                };
                let mass = quad::integrate(ring, 0.0, r_hi, 1e-9);
                worst = worst.max((mass - 1.0).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && secs < 30.0,
        format!("max |mass − 1| {worst:.2e} (≤ 1e-3) over 18 cases, {secs:.2} s (< 30 s)"),
    )
}

fn log_sphere(d: usize) -> f64 {
    (2.0f64).ln() + d as f64 / 2.0 * PI.ln() - ln_gamma(d as f64 / 2.0)
}

fn constants() -> Outcome {
    let mut worst_quad = 0.0f64;
    let mut cases = 0;
    for d in 1..=10 {
        for c in [0.1, 0.3, 1.0, 1.4, 2.0] {
            for s in [0.5, 1.0, 1.7] {
                let cv = curv(c);
                let Ok(got) = riemannian_log_z(s, cv, d) else { continue };
                let sc = cv.sqrt();
                let log_f = |r: f64| -r * r / (2.0 * s * s) + (d - 1) as f64 * ((sc * r).sinh() / sc).ln();
                let peak = ((d - 1) as f64 * sc * s * s).max(s);
                let shift = log_f(peak).max(log_f(1e-3));
                let hi = peak + 40.0 * s;
                let zr = quad::integrate(|r| if r == 0.0 { if d == 1 { (-shift).exp() } else { 0.0 } } else { (log_f(r) - shift).exp() }, 0.0, hi, 1e-14);
                let expected = zr.ln() + shift + log_sphere(d);
                worst_quad = worst_quad.max(((got - expected).exp() - 1.0).abs());
                cases += 1;
            }
        }
    }
    let mut worst_closed = 0.0f64;
    for s in [0.1, 0.5, 1.0, 1.7, 3.0] {
        let closed = (PI / 2.0).sqrt() * s * (s * s / 2.0).exp() * libm::erf(s / 2f64.sqrt()) * 2.0 * PI;
        let got = riemannian_log_z(s, curv(1.0), 2).unwrap().exp();
        worst_closed = worst_closed.max((got / closed - 1.0).abs());
    }
    outcome(
        worst_quad <= 1e-6 && worst_closed <= 1e-10 && cases >= 140,
        format!(
            "{cases} (d, c, σ) cases vs quadrature max rel err {worst_quad:.2e} (≤ 1e-6); \
             d = 2, c = 1 closed form max rel err {worst_closed:.2e} (≤ 1e-10)"
        ),
    )
}

fn samplers() -> Outcome {
    let combos = [
        (0.3, 0.5, 2),
        (1.0, 1.0, 2),
        (1.4, 1.7, 2),
        (0.3, 1.7, 3),
        (1.0, 0.5, 3),
        (1.4, 1.0, 5),
        (0.3, 1.0, 5),
        (1.0, 1.7, 10),
        (1.4, 0.5, 10),
    ];
    let mut ks_pass = 0;
    let mut worst_ratio = 0.0f64;
    for (i, &(c, s, d)) in combos.iter().enumerate() {
        let rd = RadiusDensity::new(s, curv(c), d, Family::Riemannian).unwrap();
        let ars = ArsProposal::new(rd).unwrap();
        let mut rng = rng_from_seed(2000 + i as u64);
        let mut xs: Vec<f64> = (0..100_000).map(|_| ars.sample(&mut rng).unwrap().0).collect();
        let ks = ks_statistic(&mut xs, |x| rd.cdf(x).unwrap());
        let crit = ks_critical_01(xs.len());
        worst_ratio = worst_ratio.max(ks / crit);
        if ks < crit {
            ks_pass += 1;
        }
    }
    let mut rate_pass = true;
    let mut rates = Vec::new();
    let fixed = [
        (RadiusSampler::TruncNorm, 1.0, 1.0, 2),
        (RadiusSampler::TruncNorm, 0.3, 0.5, 3),
        (RadiusSampler::Gamma, 1.0, 0.5, 2),
        (RadiusSampler::Gamma, 1.4, 0.5, 3),
    ];
    for (i, &(kind, c, s, d)) in fixed.iter().enumerate() {
        let rd = RadiusDensity::new(s, curv(c), d, Family::Riemannian).unwrap();
        let log_m = match kind {
            RadiusSampler::TruncNorm => truncnorm_log_bound(&rd),
            _ => gamma_log_bound(&rd),
        }
        .unwrap();
        let mut rng = rng_from_seed(3000 + i as u64);
        let mut stats = AcceptanceStats::default();
        for _ in 0..50_000 {
            stats.merge(sample_radius(kind, &rd, &mut rng).unwrap().1);
        }
        let p = (-log_m).exp();
        let se = (p * (1.0 - p) / stats.proposals as f64).sqrt();
        let z = (stats.rate() - p) / se;
        rate_pass &= z.abs() < 3.0;
        rates.push(format!("{kind:?}(c={c},σ={s},d={d}) {:.4} vs 1/M {p:.4} ({z:+.1} SE)", stats.rate()));
    }
    outcome(
        ks_pass == combos.len() && rate_pass,
        format!(
            "KS passed {ks_pass}/9 at α = 0.01 (max D/D_crit {worst_ratio:.2}); acceptance: {}",
            rates.join(", ")
        ),
    )
}

fn elbo_spot_check(cfg: &VaeConfig, seed: u64) -> f64 {
    let model = Model::new(cfg.arch.clone(), &mut rng_from_seed(seed)).unwrap();
    let mut rng = rng_from_seed(seed + 1);
    let x = pvae::ad::Tensor::new(6, 4, (0..24).map(|_| rng.random_range(-1.5..1.5)).collect());
    let elbo = |m: &Model| {
        let g = Graph::new();
        let p = m.params.bind(&g);
        let v = elbo_mc(m, cfg, &p, g.constant(x.clone()), 2, &mut FrozenNoise::new(seed)).unwrap();
        let grads = g.backward(v);
        (v.item(), p.iter().map(|&q| grads.wrt_or_zeros(q)).collect::<Vec<_>>())
    };
    let (_, grads) = elbo(&model);
    let mut worst = 0.0f64;
    for (i, grad) in grads.iter().enumerate() {
        for _ in 0..3 {
            let e = rng.random_range(0..model.params.get(i).len());
            let h = 1e-5;
            let mut m = model.clone();
            m.params.get_mut(i).data_mut()[e] += h;
            let up = elbo(&m).0;
            m.params.get_mut(i).data_mut()[e] -= 2.0 * h;
            let dn = elbo(&m).0;
            let num = (up - dn) / (2.0 * h);
            let an = grad.data()[e];
            worst = worst.max((an - num).abs() / an.abs().max(num.abs()).max(1e-6));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let ops = common::ops::check_all(100, 4000);
    let (worst_name, worst_op) = ops.iter().fold(("", 0.0f64), |acc, &(n, e)| if e > acc.1 { (n, e) } else { acc });

    let mut worst_elbo = 0.0f64;
    for (i, (c, family, decoder, per_dim)) in [
        (1.0, Family::Wrapped, DecoderKind::Gyroplane, false),
        (1.0, Family::Riemannian, DecoderKind::Gyroplane, false),
        (0.0, Family::Riemannian, DecoderKind::PlainMlp, false),
        (0.5, Family::Wrapped, DecoderKind::Log0Mlp, true),
    ]
    .into_iter()
    .enumerate()
    {
        let cfg = VaeConfig {
            arch: ArchSpec { input_dim: 4, latent_dim: 2, hidden: 6, curvature: curv(c), family, decoder, per_dim_sigma: per_dim },
            prior_sigma: 1.3,
            likelihood: Likelihood::Gaussian,
            k_train: 1,
            k_eval: 10,
            adam: AdamConfig::default(),
            batch_size: 6,
            epochs: 1,
            seed: 0,
            radius_sampler: RadiusSampler::Ars,
        };
        worst_elbo = worst_elbo.max(elbo_spot_check(&cfg, 4100 + 10 * i as u64));
    }

    // F(r*(σ), σ) = u along the quantile path, so ∂F/∂σ + ρ·dr*/dσ = 0.
    let mut worst_implicit = 0.0f64;
    for (c, s, d) in [(0.3, 0.5, 2), (1.0, 1.0, 3), (1.4, 1.7, 5), (1.0, 0.8, 10)] {
        let h = 1e-5 * s;
        let rd = |sig: f64| RadiusDensity::new(sig, curv(c), d, Family::Riemannian).unwrap();
        let (lo, mid, hi) = (rd(s - h), rd(s), rd(s + h));
        for u in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let r = mid.quantile(u).unwrap();
            let dr = (hi.quantile(u).unwrap() - lo.quantile(u).unwrap()) / (2.0 * h);
            let df = mid.dcdf_dsigma(r).unwrap();
            let resid = (df + mid.pdf(r) * dr).abs() / df.abs();
            worst_implicit = worst_implicit.max(resid);
            let analytic = mid.implicit_dr_dsigma(r).unwrap();
            worst_implicit = worst_implicit.max((analytic - dr).abs() / dr.abs());
        }
    }
    outcome(
        worst_op < 1e-5 && worst_elbo < 1e-4 && worst_implicit < 1e-4,
        format!(
            "{} ops, worst {worst_name} {worst_op:.2e} (< 1e-5); ELBO weights max rel err {worst_elbo:.2e} (< 1e-4); \
             implicit identity max rel residual {worst_implicit:.2e} (< 1e-4)",
            ops.len()
        ),
    )
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn synthetic_runs(c: f64, sigma0: f64, cache: &mut Vec<((u64, u64), Vec<f64>)>) -> Result<Vec<f64>, String> {
    let key = ((c * 1e6) as u64, (sigma0 * 1e6) as u64);
    if let Some((_, v)) = cache.iter().find(|(k, _)| *k == key) {
        return Ok(v.clone());
    }
    let data = generate_branching(&BranchingConfig::default()).map_err(|e| e.to_string())?;
    let (tr, te) = (data.train(), data.test());
    let mut out = Vec::new();
    for seed in SEEDS {
        let cfg = VaeConfig::synthetic(c, sigma0, Family::Riemannian, seed);
        let (_, rep) = train(&cfg, &tr, &te, &TrainOptions::default()).map_err(|e| e.to_string())?;
        if rep.unstable {
            return Err(format!("c={c} σ₀={sigma0} seed {seed} unstable: {:?}", rep.diagnostics));
        }
        out.push(rep.test_neg_iwae.ok_or("missing IWAE")?);
    }
    cache.push((key, out.clone()));
    Ok(out)
}

fn table1(cache: &mut Vec<((u64, u64), Vec<f64>)>) -> Outcome {
    let start = Instant::now();
    let runs = synthetic_runs(0.0, 1.7, cache).and_then(|n| Ok((n, synthetic_runs(1.2, 1.7, cache)?)));
    let (n, p) = match runs {
        Ok(v) => v,
        Err(e) => return outcome(false, e),
    };
    let (nm, nse) = mean_and_se(&n);
    let (pm, pse) = mean_and_se(&p);
    let in_band = [nm, pm].iter().all(|m| (53.0..=60.0).contains(m));
    outcome(
        nm - pm >= 0.5 && in_band,
        format!(
            "N-VAE(σ₀=1.7) {nm:.2} ± {nse:.2}, P-VAE(c=1.2, σ₀=1.7) {pm:.2} ± {pse:.2}; gap {:.2} (≥ 0.5), \
             both in [53, 60]: {in_band}; 5 seeds, {:.0} s",
            nm - pm,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn sigma_monotone(cache: &mut Vec<((u64, u64), Vec<f64>)>) -> Outcome {
    let start = Instant::now();
    let runs = synthetic_runs(1.0, 1.7, cache).and_then(|a| Ok((a, synthetic_runs(1.0, 1.0, cache)?)));
    let (a, b) = match runs {
        Ok(v) => v,
        Err(e) => return outcome(false, e),
    };
    let (am, ase) = mean_and_se(&a);
    let (bm, bse) = mean_and_se(&b);
    let se = (ase * ase + bse * bse).sqrt();
    outcome(
        bm - am > 3.0 * se,
        format!(
            "P-VAE(c=1, σ₀=1.7) {am:.2} ± {ase:.2} vs P-VAE(c=1, σ₀=1) {bm:.2} ± {bse:.2}; gap {:.2} vs 3 SE {:.2}; {:.0} s",
            bm - am,
            3.0 * se,
            start.elapsed().as_secs_f64()
        ),
    )
}

struct MnistRun {
    report: TrainReport,
    means_valid: bool,
}

fn mnist_config(c: f64, decoder: DecoderKind, seed: u64) -> VaeConfig {
    VaeConfig {
        arch: ArchSpec::mnist(2, curv(c), Family::Wrapped, decoder),
        prior_sigma: 1.0,
        likelihood: Likelihood::Bernoulli,
        k_train: 1,
        k_eval: 50,
        adam: AdamConfig { lr: 5e-4, ..Default::default() },
        batch_size: 128,
        epochs: 10,
        seed,
        radius_sampler: RadiusSampler::Ars,
    }
}

type MnistCache = Vec<((u64, DecoderKind, u64), MnistRun)>;

fn mnist_run(c: f64, decoder: DecoderKind, seed: u64, cache: &mut MnistCache) -> Result<&MnistRun, String> {
    let key = ((c * 1e6) as u64, decoder, seed);
    if let Some(i) = cache.iter().position(|(k, _)| *k == key) {
        return Ok(&cache[i].1);
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k");
    let (tr, te) = load_mnist(&dir, 8000, 2000).map_err(|e| e.to_string())?;
    let cfg = mnist_config(c, decoder, seed);
    let (model, report) = train(&cfg, &tr, &te, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let means_valid = [&tr, &te].iter().all(|x| {
        posterior_means(&model, x).is_ok_and(|ms| {
            ms.iter().all(|m| m.coords().iter().all(|v| v.is_finite()) && m.curvature().value() * m.norm() * m.norm() < 1.0)
        })
    });
    cache.push((key, MnistRun { report, means_valid }));
    Ok(&cache.last().unwrap().1)
}

fn mnist(cache: &mut MnistCache) -> Outcome {
    let mut runs = Vec::new();
    for (name, c, dec, seed) in [("N-VAE", 0.0, DecoderKind::PlainMlp, 1)]
        .into_iter()
        .chain(SEEDS.iter().map(|&s| ("P-VAE(c=1.4)", 1.4, DecoderKind::Gyroplane, s)))
    {
        match mnist_run(c, dec, seed, cache) {
            Ok(r) => runs.push((name, seed, r.report.clone(), r.means_valid)),
            Err(e) => return outcome(false, format!("{name} seed {seed}: {e}")),
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    let mut wall = 0u128;
    let all_valid = runs.iter().all(|r| r.3);
    for (name, seed, rep, valid) in &runs {
        wall += rep.wall_ms;
        let first = rep.epochs.first().map(|e| e.train_elbo).unwrap_or(f64::NAN);
        let last = rep.epochs.last().map(|e| e.train_elbo).unwrap_or(f64::NAN);
        let gain = last - first;
        let ok = !rep.unstable && rep.epochs.len() == 10 && gain >= 20.0 && *valid;
        pass &= ok;
        parts.push(format!("{name}#{seed} ELBO {first:.1}→{last:.1} (+{gain:.1}){}", if ok { "" } else { " ✗" }));
    }
    let minutes = wall as f64 / 60_000.0;
    outcome(
        pass && minutes < 30.0,
        format!("{}; all posterior means valid ball points: {all_valid}; {minutes:.1} min total (< 30 min)", parts.join(", ")),
    )
}

fn ablation(cache: &mut MnistCache) -> Outcome {
    let mut means = Vec::new();
    for dec in [DecoderKind::Gyroplane, DecoderKind::Log0Mlp, DecoderKind::PlainMlp] {
        let mut xs = Vec::new();
        for seed in SEEDS {
            match mnist_run(1.4, dec, seed, cache) {
                Ok(r) if !r.report.unstable => xs.push(r.report.test_neg_iwae.unwrap_or(f64::NAN)),
                Ok(r) => return outcome(false, format!("{dec:?} seed {seed} unstable: {:?}", r.report.diagnostics)),
                Err(e) => return outcome(false, format!("{dec:?} seed {seed}: {e}")),
            }
        }
        means.push((dec, mean_and_se(&xs)));
    }
    let gap = |a: (f64, f64), b: (f64, f64)| {
        let se = (a.1 * a.1 + b.1 * b.1).sqrt();
        let d = b.0 - a.0;
        if d > 2.0 * se {
            "resolved"
        } else if d >= 0.0 {
            "same direction, unresolved"
        } else {
            "reversed"
        }
    };
    let (g, l, p) = (means[0].1, means[1].1, means[2].1);
    outcome(
        means.iter().all(|(_, (m, _))| m.is_finite()),
        format!(
            "−IWAE gyroplane {:.2} ± {:.2}, log0-MLP {:.2} ± {:.2}, plain MLP {:.2} ± {:.2}; \
             gyroplane ≥ log0-MLP: {}; log0-MLP ≥ plain: {} (soft)",
            g.0,
            g.1,
            l.0,
            l.1,
            p.0,
            p.1,
            gap(g, l),
            gap(l, p)
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut synth = Vec::new();
    let mut mnist_cache = Vec::new();
    let mut failed = 0;
    let mut report = |k: usize, name: &str, o: Outcome| {
        println!("[{}] {k} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    if wanted(1) {
        report(1, "geometry", geometry());
    }
    if wanted(2) {
        report(2, "density normalization", density_normalization());
    }
    if wanted(3) {
        report(3, "normalizing constants", constants());
    }
    if wanted(4) {
        report(4, "radius samplers", samplers());
    }
    if wanted(5) {
        report(5, "gradients", gradients());
    }
    if wanted(6) {
        report(6, "synthetic −IWAE ordering and band", table1(&mut synth));
    }
    if wanted(7) {
        report(7, "prior σ₀ monotonicity", sigma_monotone(&mut synth));
    }
    if wanted(8) {
        report(8, "MNIST stability", mnist(&mut mnist_cache));
    }
    if wanted(9) {
        report(9, "decoder ablation", ablation(&mut mnist_cache));
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
