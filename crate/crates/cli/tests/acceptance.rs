//! Acceptance suite. Each test covers one criterion and prints a
//! `[criterion N] PASS|FAIL` line to stdout, also when output is captured.
//!
//! Criteria 6 to 9 run the bundled `walk`, `circle` and `circle-semi`
//! pipelines once each; those fixtures are shared between tests.

use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use chartkit::charting::{
    exp_loss, margin_loss, reconstruction_loss, sample_triplets, semi_supervised_loss, siamese_loss, ChartEmbedding, ExpNormalization,
};
use chartkit::metrics::{continuity, excess_variance, kruskal_stress, metric_report, procrustes_sr, trustworthiness, Normalization, ReferenceKind};
use chartkit::nn::{BatchNorm, Dense, Mlp};
use chartkit::preprocess::snapshot_features;
use chartkit::synthgen::{generate_trajectory, synthesize_csi, ImpairmentConfig, TrajectoryConfig, TrajectoryKind};
use chartkit_cli::pipeline::{ANCHORS, EMBEDDING, HISTORY, METRICS};
use chartkit_cli::{Command, Pipeline, PipelineConfig};
use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

// Tolerances and limits, one per criterion where applicable.
const C1_TOL: f64 = 1e-8;
const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_TOL: f64 = 1e-10;
const C2_SR_TOL: f64 = 1e-6;
const C2_GRID_STEP: f64 = 1e-3;
const C2_LIMIT: Duration = Duration::from_secs(30);
const C3_TOL: f64 = 1e-4;
const C3_STEP: f64 = 1e-3;
const C3_SEEDS: u64 = 10;
const C3_LIMIT: Duration = Duration::from_secs(60);
const C4_PHASE_TOL: f64 = 1e-12;
const C4_TIMING_TOL: f64 = 1e-6;
const C4_MAX_OFFSET: f64 = 1e-6;
const C4_SNAPSHOTS: usize = 100;
const C4_LIMIT: Duration = Duration::from_secs(10);
const C5_TRIPLETS: usize = 1_000_000;
const C5_LIMIT: Duration = Duration::from_secs(30);
const C6_MIN_TW: f64 = 0.85;
const C6_MIN_CT: f64 = 0.85;
const C6_K: usize = 50;
const C6_N: usize = 10_000;
const C6_LIMIT: Duration = Duration::from_secs(30 * 60);
const C7_DIST_FRACTION: f64 = 0.15;
const C7_MIN_PAIRS: f64 = 0.80;
const C7_LIMIT: Duration = Duration::from_secs(20 * 60);
const C8_MARGIN: f64 = 1.0;
const C9_ANCHORS: usize = 45;
const C9_MAX_ERROR_FRACTION: f64 = 0.25;
const C9_MAX_DEGRADATION: f64 = 0.10;
const C9_LIMIT: Duration = Duration::from_secs(20 * 60);

/// Heavy criteria run one at a time so that timings are not skewed.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("[criterion {n}] {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn cloud(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_metric_identities() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let r = cloud(120, 2, &mut rng);
        let id = metric_report(&r.view(), &r.view(), 10, ReferenceKind::Geographic, Normalization::Canonical).unwrap();
        for (v, want) in [(id.KS, 0.0), (id.TW, 1.0), (id.CT, 1.0), (id.SR, 0.0), (id.EV, 0.0)] {
            worst = worst.max((v - want).abs());
        }
        let y = cloud(120, 2, &mut rng);
        let (theta, scale) = (rng.random::<f64>() * 6.3, 0.1 + rng.random::<f64>() * 20.0);
        let (sn, cs) = theta.sin_cos();
        let shift = [rng.random::<f64>() * 100.0 - 50.0, rng.random::<f64>() * 100.0 - 50.0];
        let moved = Array2::from_shape_fn((120, 2), |(i, j)| {
            let (a, b) = (y[[i, 0]], y[[i, 1]]);
            scale * if j == 0 { cs * a - sn * b } else { sn * a + cs * b } + shift[j]
        });
        let a = metric_report(&r.view(), &y.view(), 10, ReferenceKind::Geographic, Normalization::Canonical).unwrap();
        let b = metric_report(&r.view(), &moved.view(), 10, ReferenceKind::Geographic, Normalization::Canonical).unwrap();
        for (u, v) in [(a.KS, b.KS), (a.TW, b.TW), (a.CT, b.CT), (a.SR, b.SR), (a.EV, b.EV)] {
            worst = worst.max((u - v).abs());
        }
    }
    let took = t0.elapsed();
    verdict(1, worst < C1_TOL && took < C1_LIMIT, &format!("worst deviation {worst:.2e} (tol {C1_TOL:.0e}), {took:.2?}"));
}

// ---------------------------------------------------------------- criterion 2

fn dist(x: &Array2<f64>, i: usize, j: usize) -> f64 {
    x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn order(x: &Array2<f64>, i: usize) -> Vec<usize> {
    let mut o: Vec<usize> = (0..x.nrows()).filter(|&j| j != i).collect();
    o.sort_by(|&a, &b| dist(x, i, a).partial_cmp(&dist(x, i, b)).unwrap().then(a.cmp(&b)));
    o
}

fn brute_rank_metric(hoods: &Array2<f64>, ranked: &Array2<f64>, k: usize) -> f64 {
    let n = hoods.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let full = order(ranked, i);
        for &u in &order(hoods, i)[..k] {
            let rank = full.iter().position(|&v| v == u).unwrap() + 1;
            total += rank.saturating_sub(k) as f64;
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * total
}

fn brute_ks(r: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = r.nrows();
    let (mut ry, mut yy, mut rr) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            ry += dist(r, i, j) * dist(y, i, j);
            yy += dist(y, i, j).powi(2);
            rr += dist(r, i, j).powi(2);
        }
    }
    let beta = ry / yy;
    let mut res = 0.0;
    for i in 0..n {
        for j in 0..n {
            res += (dist(r, i, j) - beta * dist(y, i, j)).powi(2);
        }
    }
    (res / rr).sqrt()
}

fn centered(x: &Array2<f64>) -> Array2<f64> {
    x - &x.mean_axis(ndarray::Axis(0)).unwrap()
}

fn rescaled(r: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let rms = |x: &Array2<f64>| (x.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64).sqrt();
    let yc = centered(y);
    let f = rms(&centered(r)) / rms(&yc);
    yc * f
}

fn brute_ev(r: &Array2<f64>, y: &Array2<f64>, k: usize) -> f64 {
    let spread = |x: &Array2<f64>, space: &Array2<f64>| {
        let mut total = 0.0;
        for i in 0..x.nrows() {
            let h = &order(space, i)[..k];
            for c in 0..x.ncols() {
                let mu = h.iter().map(|&u| x[[u, c]]).sum::<f64>() / k as f64;
                total += h.iter().map(|&u| (x[[u, c]] - mu).powi(2)).sum::<f64>();
            }
        }
        total
    };
    (spread(&rescaled(r, y), y) - spread(&centered(r), r)) / (k * r.nrows()) as f64
}

fn grid_sr(r: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let rc = centered(r);
    let yh = rescaled(r, y);
    let residual = |theta: f64, flip: f64| {
        let (sn, cs) = theta.sin_cos();
        (0..r.nrows())
            .map(|i| {
                let (a, b) = (yh[[i, 0]], flip * yh[[i, 1]]);
                (cs * a - sn * b - rc[[i, 0]]).powi(2) + (sn * a + cs * b - rc[[i, 1]]).powi(2)
            })
            .sum::<f64>()
            / r.nrows() as f64
    };
    let mut best = f64::INFINITY;
    for flip in [1.0, -1.0] {
        let steps = (std::f64::consts::TAU / C2_GRID_STEP).ceil() as usize;
        let (mut arg, mut val) = (0.0, f64::INFINITY);
        for s in 0..steps {
            let v = residual(s as f64 * C2_GRID_STEP, flip);
            if v < val {
                (arg, val) = (s as f64 * C2_GRID_STEP, v);
            }
        }
        // second pass at 1e-3 of the coarse step around the coarse optimum
        for s in 0..=2000 {
            val = val.min(residual(arg - C2_GRID_STEP + s as f64 * C2_GRID_STEP * 1e-3, flip));
        }
        best = best.min(val);
    }
    best
}

#[test]
fn criterion_02_oracle_equivalence() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut worst_sr) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(12..=50);
        let k = rng.random_range(1..=(2 * n - 2) / 3 - 1).min(n - 2);
        let r = cloud(n, 2, &mut rng);
        let y = cloud(n, 2, &mut rng);
        let got = [
            trustworthiness(&r.view(), &y.view(), k, Normalization::Canonical).unwrap(),
            continuity(&r.view(), &y.view(), k, Normalization::Canonical).unwrap(),
            kruskal_stress(&r.view(), &y.view()).unwrap(),
            excess_variance(&r.view(), &y.view(), k).unwrap(),
        ];
        let want = [brute_rank_metric(&y, &r, k), brute_rank_metric(&r, &y, k), brute_ks(&r, &y), brute_ev(&r, &y, k)];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
        let sr = procrustes_sr(&r.view(), &y.view()).unwrap().sr;
        worst_sr = worst_sr.max((sr - grid_sr(&r, &y)).abs());
    }
    let took = t0.elapsed();
    let pass = worst < C2_TOL && worst_sr < C2_SR_TOL && took < C2_LIMIT;
    verdict(2, pass, &format!("TW/CT/KS/EV max error {worst:.2e} (tol {C2_TOL:.0e}), SR max error {worst_sr:.2e} (tol {C2_SR_TOL:.0e}), {took:.2?}"));
}

// ---------------------------------------------------------------- criterion 3

fn central(x: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let keep = x[i];
            x[i] = keep + C3_STEP;
            let up = f(x);
            x[i] = keep - C3_STEP;
            let down = f(x);
            x[i] = keep;
            (up - down) / (2.0 * C3_STEP)
        })
        .collect()
}

/// Relative error with a 1e-6 norm floor for identically vanishing blocks.
fn rel(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-6)
}

fn mat(shape: (usize, usize), p: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec(shape, p.to_vec()).unwrap()
}

fn network_error(widths: &[usize], batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Mlp::<f64>::new(widths, 0.9, seed).unwrap();
    // keep every pre-activation away from the ReLU kink
    let margin = |x: &Array2<f64>| {
        let mut h = x.clone();
        let mut m = f64::INFINITY;
        for l in 0..model.norms.len() {
            let z = model.dense[l].forward(&h.view()).unwrap();
            let (a, _) = model.norms[l].clone().forward_train(&z.view()).unwrap();
            m = a.iter().fold(m, |c, v| c.min(v.abs()));
            h = a.mapv(|v| v.max(0.0));
        }
        m
    };
    let mut x = cloud(batch, widths[0], &mut rng);
    while margin(&x) < 1e-2 {
        x = cloud(batch, widths[0], &mut rng);
    }
    let g = cloud(batch, *widths.last().unwrap(), &mut rng);
    let (_, cache) = model.clone().forward(&x.view()).unwrap();
    let grads = model.backward(&cache, &g.view(), true).unwrap();
    let loss = |m: &Mlp<f64>, x: &Array2<f64>| (&m.clone().forward(&x.view()).unwrap().0 * &g).sum();
    let mut worst = 0.0f64;
    let analytic = grads.slices();
    for block in 0..analytic.len() {
        let mut p = model.clone().params_mut()[block].to_vec();
        let num = central(&mut p, &mut |q| {
            let mut m = model.clone();
            m.params_mut()[block].copy_from_slice(q);
            loss(&m, &x)
        });
        worst = worst.max(rel(analytic[block], &num));
    }
    let mut xi = x.clone();
    let num = central(xi.as_slice_mut().unwrap(), &mut |q| loss(&model, &mat(x.dim(), q)));
    worst.max(rel(grads.input.as_ref().unwrap().as_slice().unwrap(), &num))
}

fn layer_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Dense::<f64>::init_uniform(5, 3, &mut rng);
    let x = cloud(4, 5, &mut rng);
    let g = cloud(4, 3, &mut rng);
    let grads = layer.backward(&x.view(), &g.view(), true).unwrap();
    let mut w = layer.weight.clone();
    let num_w = central(w.as_slice_mut().unwrap(), &mut |p| {
        let mut l = layer.clone();
        l.weight = mat((5, 3), p);
        (&l.forward(&x.view()).unwrap() * &g).sum()
    });
    let mut xi = x.clone();
    let num_x = central(xi.as_slice_mut().unwrap(), &mut |p| (&layer.forward(&mat((4, 5), p).view()).unwrap() * &g).sum());

    let mut bn = BatchNorm::<f64>::new(3, 0.9);
    bn.gamma = cloud(1, 3, &mut rng).row(0).to_owned();
    bn.beta = cloud(1, 3, &mut rng).row(0).to_owned();
    let z = cloud(6, 3, &mut rng);
    let gb = cloud(6, 3, &mut rng);
    let (_, bc) = bn.clone().forward_train(&z.view()).unwrap();
    let bg = bn.backward(&bc, &gb.view());
    let mut zi = z.clone();
    let num_z = central(zi.as_slice_mut().unwrap(), &mut |p| (&bn.clone().forward_train(&mat((6, 3), p).view()).unwrap().0 * &gb).sum());
    let mut gamma = bn.gamma.to_vec();
    let num_gamma = central(&mut gamma, &mut |p| {
        let mut b = bn.clone();
        b.gamma = p.to_vec().into();
        (&b.forward_train(&z.view()).unwrap().0 * &gb).sum()
    });
    [
        rel(grads.weight.as_slice().unwrap(), &num_w),
        rel(grads.input.as_ref().unwrap().as_slice().unwrap(), &num_x),
        rel(bg.input.as_slice().unwrap(), &num_z),
        rel(bg.gamma.as_slice().unwrap(), &num_gamma),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn dist_rows(a: &Array2<f64>, b: &Array2<f64>, r: usize) -> f64 {
    a.row(r).iter().zip(b.row(r)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn loss_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 6;
    // resample until no hinge sits within reach of its kink
    let (mut a, mut c, mut f);
    loop {
        (a, c, f) = (cloud(b, 2, &mut rng), cloud(b, 2, &mut rng), cloud(b, 2, &mut rng) * 2.0);
        if (0..b).all(|r| (dist_rows(&a, &c, r) - dist_rows(&a, &f, r) + 1.0).abs() > 1e-2) {
            break;
        }
    }
    let stack = |a: &Array2<f64>, c: &Array2<f64>, f: &Array2<f64>| ndarray::concatenate![ndarray::Axis(0), a.view(), c.view(), f.view()];
    let all = stack(&a, &c, &f);
    let split = |p: &[f64]| {
        let m = mat((3 * b, 2), p);
        (m.slice(s![..b, ..]).to_owned(), m.slice(s![b..2 * b, ..]).to_owned(), m.slice(s![2 * b.., ..]).to_owned())
    };
    let mut worst = 0.0f64;
    let ml = margin_loss(&a.view(), &c.view(), &f.view(), 1.0);
    let an = stack(&ml.grad_anchor, &ml.grad_close, &ml.grad_far);
    let mut p = all.clone().into_raw_vec_and_offset().0;
    let num = central(&mut p, &mut |q| {
        let (a, c, f) = split(q);
        margin_loss(&a.view(), &c.view(), &f.view(), 1.0).value
    });
    worst = worst.max(rel(an.as_slice().unwrap(), &num));
    for norm in [ExpNormalization::ScaledLogSum, ExpNormalization::LogMeanExp] {
        let el = exp_loss(&a.view(), &c.view(), &f.view(), norm);
        let an = stack(&el.grad_anchor, &el.grad_close, &el.grad_far);
        let num = central(&mut p, &mut |q| {
            let (a, c, f) = split(q);
            exp_loss(&a.view(), &c.view(), &f.view(), norm).value
        });
        worst = worst.max(rel(an.as_slice().unwrap(), &num));
    }
    let pos = cloud(2, 2, &mut rng) * 3.0;
    let proj = Array2::<f64>::eye(2);
    let semi = |y: &Array2<f64>| semi_supervised_loss(&a.view(), &c.view(), &f.view(), &y.view(), &pos.view(), &proj.view(), 0.7, 1.0).unwrap();
    let lab = cloud(2, 2, &mut rng);
    let sl = semi(&lab);
    let mut lp = lab.clone().into_raw_vec_and_offset().0;
    let num = central(&mut lp, &mut |q| semi(&mat((2, 2), q)).value);
    worst = worst.max(rel(sl.grad_labeled.as_slice().unwrap(), &num));

    let (xi, xj) = (cloud(b, 4, &mut rng), cloud(b, 4, &mut rng));
    let (yi, yj) = (cloud(b, 2, &mut rng), cloud(b, 2, &mut rng));
    let pl = siamese_loss(&xi.view(), &xj.view(), &yi.view(), &yj.view());
    let mut q = yi.clone().into_raw_vec_and_offset().0;
    let num = central(&mut q, &mut |p| siamese_loss(&xi.view(), &xj.view(), &mat((b, 2), p).view(), &yj.view()).value);
    worst = worst.max(rel(pl.grad_first.as_slice().unwrap(), &num));
    let x_hat = cloud(b, 4, &mut rng);
    let (_, rg) = reconstruction_loss(&xi.view(), &x_hat.view());
    let mut q = x_hat.clone().into_raw_vec_and_offset().0;
    let num = central(&mut q, &mut |p| reconstruction_loss(&xi.view(), &mat((b, 4), p).view()).0);
    worst.max(rel(rg.as_slice().unwrap(), &num))
}

#[test]
fn criterion_03_gradient_fidelity() {
    let _g = serial();
    let t0 = Instant::now();
    let (mut layers, mut losses, mut nets) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..C3_SEEDS {
        layers = layers.max(layer_error(seed));
        losses = losses.max(loss_error(100 + seed));
        nets = nets.max(network_error(&[8, 4, 2], 6, 200 + seed)).max(network_error(&[6, 7, 5, 3, 2], 9, 300 + seed));
    }
    let took = t0.elapsed();
    let pass = layers < C3_TOL && losses < C3_TOL && nets < C3_TOL && took < C3_LIMIT;
    verdict(3, pass, &format!("max relative error: layers {layers:.2e}, losses {losses:.2e}, networks {nets:.2e} (tol {C3_TOL:.0e}, {C3_SEEDS} seeds), {took:.2?}"));
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_feature_invariance() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = PipelineConfig::load("walk", &[]).unwrap();
    let mut scene = cfg.scene();
    scene.snr_db = None;
    let traj = generate_trajectory(&TrajectoryConfig::new(TrajectoryKind::RandomWalk, C4_SNAPSHOTS as f64 * 0.1, 0.1, 1.0, 4).with_extent(40.0)).unwrap();
    let ds = synthesize_csi::<f64>(&traj, &scene, &ImpairmentConfig::none(), 4).unwrap();
    assert_eq!(ds.len(), C4_SNAPSHOTS);
    let lags = &cfg.preprocess.lags;
    let df = scene.subcarrier_spacing();
    let nf = ds.shape[3];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rel_change = |a: &[f64], b: &[f64]| {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / a.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let (mut phase, mut timing) = (0.0f64, 0.0f64);
    for i in 0..ds.len() {
        let h = ds.snapshot(i);
        let base = snapshot_features(h, ds.shape, lags).unwrap();
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        let rotated: Vec<Complex64> = h.iter().map(|v| v * Complex64::from_polar(1.0, phi)).collect();
        phase = phase.max(rel_change(&base, &snapshot_features(&rotated, ds.shape, lags).unwrap()));
        let tau = (rng.random::<f64>() * 2.0 - 1.0) * C4_MAX_OFFSET;
        let ramped: Vec<Complex64> = h
            .iter()
            .enumerate()
            .map(|(e, v)| v * Complex64::from_polar(1.0, -std::f64::consts::TAU * (e % nf) as f64 * df * tau))
            .collect();
        timing = timing.max(rel_change(&base, &snapshot_features(&ramped, ds.shape, lags).unwrap()));
    }
    // the synthesizer's own impairments, noise off
    let imp = ImpairmentConfig { global_phase_per_snapshot: true, timing_offset_range: C4_MAX_OFFSET, ..ImpairmentConfig::none() };
    let impaired = synthesize_csi::<f64>(&traj, &scene, &imp, 4).unwrap();
    let mut synth = 0.0f64;
    for i in 0..ds.len() {
        let a = snapshot_features(ds.snapshot(i), ds.shape, lags).unwrap();
        let b = snapshot_features(impaired.snapshot(i), ds.shape, lags).unwrap();
        synth = synth.max(rel_change(&a, &b));
    }
    let took = t0.elapsed();
    let pass = phase < C4_PHASE_TOL && timing <= C4_TIMING_TOL && synth <= C4_TIMING_TOL && took < C4_LIMIT;
    verdict(4, pass, &format!("max relative change: global phase {phase:.2e}, timing offset {timing:.2e}, synthesized impairments {synth:.2e} over {C4_SNAPSHOTS} snapshots, {took:.2?}"));
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_triplet_audit() {
    let _g = serial();
    let t0 = Instant::now();
    // 45 minutes at roughly 10 Hz with jittered sampling
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t = 0.0;
    let mut ts = Vec::new();
    while t < 45.0 * 60.0 {
        ts.push(t);
        t += 0.05 + rng.random::<f64>() * 0.1;
    }
    let audit = |tc: f64, tf: f64, rng: &mut ChaCha8Rng| {
        let mut bad = 0usize;
        let mut seen = 0usize;
        while seen < C5_TRIPLETS {
            let batch = sample_triplets(&ts, tc, tf, 100_000.min(C5_TRIPLETS - seen), rng).unwrap();
            for n in 0..batch.len() {
                let (i, j, k) = (batch.anchors[n], batch.close[n], batch.far[n]);
                let (dj, dk) = ((ts[j] - ts[i]).abs(), (ts[k] - ts[i]).abs());
                let ok = i != j && j != k && i != k && dj > 0.0 && dj <= tc && tc < dk && dk <= tf;
                bad += usize::from(!ok);
            }
            seen += batch.len();
        }
        (seen, bad)
    };
    let (n_bounded, bad_bounded) = audit(0.2, 2400.0, &mut rng);
    let (n_inf, bad_inf) = audit(0.2, f64::INFINITY, &mut rng);
    let took = t0.elapsed();
    let pass = bad_bounded == 0 && bad_inf == 0 && n_bounded == C5_TRIPLETS && n_inf == C5_TRIPLETS && took < C5_LIMIT;
    verdict(5, pass, &format!("(0.2 s, 2400 s): {bad_bounded} of {n_bounded} violate; (0.2 s, inf): {bad_inf} of {n_inf} violate; {took:.2?}"));
}

// ---------------------------------------------------------------- pipelines

struct Run {
    _dir: TempDir,
    pipeline: Pipeline,
    metrics: Value,
    baseline: Option<Value>,
    embedding: ChartEmbedding,
    final_loss: f64,
    took: Duration,
}

fn run_bundled(name: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::load(name, &[]).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let pipeline = Pipeline::new(cfg);
    let t0 = Instant::now();
    pipeline.run(Command::All).unwrap();
    let took = t0.elapsed();
    let read_json = |p: &Path| serde_json::from_str::<Value>(&std::fs::read_to_string(p).unwrap()).unwrap();
    let metrics = read_json(&pipeline.path(METRICS));
    let pca = pipeline.path(&format!("pca_{METRICS}"));
    let baseline = pca.is_file().then(|| read_json(&pca));
    let embedding = ChartEmbedding::read(pipeline.path(EMBEDDING)).unwrap();
    let history = std::fs::read_to_string(pipeline.path(HISTORY)).unwrap();
    let last = history.lines().filter(|l| !l.starts_with('#')).last().unwrap();
    let final_loss: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    Run { _dir: dir, pipeline, metrics, baseline, embedding, final_loss, took }
}

fn walk() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run_bundled("walk"))
}

fn circle() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run_bundled("circle"))
}

fn circle_semi() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run_bundled("circle-semi"))
}

fn metric(doc: &Value, key: &str) -> f64 {
    doc[key].as_f64().unwrap_or_else(|| panic!("metric `{key}` missing"))
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_chart_beats_linear_baseline() {
    let _g = serial();
    let run = walk();
    let array = &run.pipeline.config.scene.array;
    assert_eq!((array.azimuth_count, array.zenith_count, array.polarization_count), (8, 4, 2));
    let pca = run.baseline.as_ref().expect("walk config evaluates the PCA baseline");
    let m = &run.metrics;
    let (tw, ct, ks) = (metric(m, "TW"), metric(m, "CT"), metric(m, "KS"));
    let (ptw, pct, pks) = (metric(pca, "TW"), metric(pca, "CT"), metric(pca, "KS"));
    let n = metric(m, "N") as usize;
    let k = metric(m, "K") as usize;
    let pass = n == C6_N && k == C6_K && tw >= C6_MIN_TW && ct >= C6_MIN_CT && tw > ptw && ct > pct && ks < pks && run.took < C6_LIMIT;
    verdict(
        6,
        pass,
        &format!("N={n} K={k}: chart TW {tw:.4} CT {ct:.4} KS {ks:.4} vs PCA TW {ptw:.4} CT {pct:.4} KS {pks:.4}, pipeline {:.0?}", run.took),
    );
}

// ---------------------------------------------------------------- criterion 7

/// Fraction of same-position pairs on different revolutions whose chart
/// distance is below `C7_DIST_FRACTION` of the median pairwise chart distance.
fn loop_closure(run: &Run) -> (f64, usize) {
    let traj = &run.pipeline.config.trajectory;
    let period = traj.revolution_period().unwrap() / traj.sampling_period;
    let y = &run.embedding.coords;
    let n = y.nrows();
    let d = |i: usize, j: usize| ((y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2)).sqrt();
    let mut all = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            all.push(d(i, j));
        }
    }
    let mid = all.len() / 2;
    let median = *all.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap()).1;
    drop(all);
    let pos = &run.embedding.positions;
    let gap = |i: usize, j: usize| ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
    let spacing = traj.speed * traj.sampling_period;
    let (mut close, mut total) = (0usize, 0usize);
    for i in 0..n {
        for rev in 1..3 {
            let target = i as f64 + rev as f64 * period;
            // nearest sample to the same ground-truth position one or two laps later
            let j = [target.floor() as usize, target.ceil() as usize].into_iter().filter(|&j| j < n).min_by(|&a, &b| gap(i, a).partial_cmp(&gap(i, b)).unwrap());
            if let Some(j) = j {
                assert!(gap(i, j) <= spacing, "pair ({i}, {j}) is {} m apart", gap(i, j));
                total += 1;
                close += usize::from(d(i, j) < C7_DIST_FRACTION * median);
            }
        }
    }
    (close as f64 / total as f64, total)
}

fn circle_closure() -> &'static (f64, usize) {
    static CLOSURE: OnceLock<(f64, usize)> = OnceLock::new();
    CLOSURE.get_or_init(|| loop_closure(circle()))
}

#[test]
fn criterion_07_loop_closure() {
    let _g = serial();
    let run = circle();
    let traj = &run.pipeline.config.trajectory;
    let revolutions = traj.duration / traj.revolution_period().unwrap();
    let (fraction, pairs) = *circle_closure();
    let pass = (revolutions - 3.0).abs() < 1e-9 && fraction >= C7_MIN_PAIRS && run.took < C7_LIMIT;
    verdict(7, pass, &format!("{revolutions:.2} revolutions: {:.1}% of {pairs} same-position pairs within {C7_DIST_FRACTION} x median chart distance (need {:.0}%), pipeline {:.0?}", 100.0 * fraction, 100.0 * C7_MIN_PAIRS, run.took));
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_collapse_avoidance() {
    let _g = serial();
    let run = walk();
    let collapsed = Array2::<f64>::zeros((4, 2));
    let collapsed_loss = margin_loss(&collapsed.view(), &collapsed.view(), &collapsed.view(), C8_MARGIN).value;
    let margin = run.pipeline.config.training.margin;
    let pass = margin == C8_MARGIN && collapsed_loss == C8_MARGIN && run.final_loss < C8_MARGIN;
    verdict(8, pass, &format!("final margin loss {:.4} < M = {C8_MARGIN} (collapsed embedding scores {collapsed_loss})", run.final_loss));
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_semi_supervised_anchoring() {
    let _g = serial();
    let base = circle();
    let (base_closure, _) = *circle_closure();
    let run = circle_semi();
    let training = &run.pipeline.config.training;
    let identity = training.projection_matrix().unwrap() == Array2::<f64>::eye(2);
    let setup_ok = training.anchors.count == C9_ANCHORS && training.alpha == 1.0 && identity;

    let anchors = std::fs::read_to_string(run.pipeline.path(ANCHORS)).unwrap();
    let y = &run.embedding.coords;
    let mut errors = Vec::new();
    for line in anchors.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let r = f[0] as usize;
        errors.push(((y[[r, 0]] - f[1]).powi(2) + (y[[r, 1]] - f[2]).powi(2)).sqrt());
    }
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    let radius = run.pipeline.config.trajectory.extent;

    let (closure, _) = loop_closure(run);
    let higher = |semi: f64, unsup: f64| semi >= (1.0 - C9_MAX_DEGRADATION) * unsup;
    let lower = |semi: f64, unsup: f64| semi <= (1.0 + C9_MAX_DEGRADATION) * unsup;
    let (m, b) = (&run.metrics, &base.metrics);
    let degradation_ok = higher(closure, base_closure)
        && higher(metric(m, "TW"), metric(b, "TW"))
        && higher(metric(m, "CT"), metric(b, "CT"))
        && lower(metric(m, "KS"), metric(b, "KS"));
    let pass = setup_ok && !errors.is_empty() && mean_error < C9_MAX_ERROR_FRACTION * radius && degradation_ok && run.took < C9_LIMIT;
    verdict(
        9,
        pass,
        &format!(
            "anchor error {mean_error:.3} m over {} labeled samples (limit {:.2} m); loop closure {:.3} vs {:.3}, TW {:.4} vs {:.4}, CT {:.4} vs {:.4}, KS {:.4} vs {:.4}; pipeline {:.0?}",
            errors.len(),
            C9_MAX_ERROR_FRACTION * radius,
            closure,
            base_closure,
            metric(m, "TW"),
            metric(b, "TW"),
            metric(m, "CT"),
            metric(b, "CT"),
            metric(m, "KS"),
            metric(b, "KS"),
            run.took
        ),
    );
}

// ---------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_reproducibility() {
    let _g = serial();
    let first = run_bundled("toy");
    let second = run_bundled("toy");
    let same = |name: &str| std::fs::read(first.pipeline.path(name)).unwrap() == std::fs::read(second.pipeline.path(name)).unwrap();
    let files = ["embedding.csv", METRICS, "pca_metrics.json", "model.ckpt", "dataset.bin", "features.bin"];
    let differing: Vec<&str> = files.iter().copied().filter(|f| !same(f)).collect();
    let hashes = first.pipeline.config_hash() == second.pipeline.config_hash();
    verdict(10, differing.is_empty() && hashes, &format!("two runs of the toy pipeline, byte-identical: {files:?}; differing: {differing:?}"));
}
