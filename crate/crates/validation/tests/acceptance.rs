//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line with the
//! measured quantities, then asserts.
//!
//! Run with `cargo test -p simam-cli --test acceptance -- --nocapture` to see
//! the lines as they finish.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::Array2;
use simam::baselines::{lasso_cd, var_ols};
use simam::experiments::{
    convergence_study, network_rmse, paired_t_test, prediction_study, student_t_cdf, Alternative, ConvergenceDesign,
    PredictionDesign,
};
use simam::math::{hard_threshold, iso_wrt, pava, WeightedSequence};
use simam::network::{jacobi_eigen, normalized_laplacian, spectral_clustering};
use simam::simulation::{derive_seed, simulate_series, Noise, PaperDesign, SimRng};
use simam::{fit_network, fit_node, paper_init, NodeConfig, TimeSeriesMatrix};

const SEED: u64 = 1;

/// Writes to the stdout handle directly so the line survives libtest's output
/// capture for passing tests too.
fn report(id: &str, pass: bool, detail: String) {
    let line = format!("criterion {id}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn rand_int(rng: &mut SimRng, lo: usize, hi_inclusive: usize) -> usize {
    lo + ((rng.uniform() * (hi_inclusive - lo + 1) as f64) as usize).min(hi_inclusive - lo)
}

// ---------------------------------------------------------------------------
// brute-force isotonic projection

/// Minimum weighted SSE over all partitions of `0..n` into contiguous blocks
/// whose weighted means are non-decreasing. `cut_allowed[i]` says whether a
/// block boundary may sit between `i` and `i + 1`.
fn brute_isotonic(values: &[f64], weights: &[f64], cut_allowed: &[bool]) -> Vec<f64> {
    let n = values.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        if (0..n - 1).any(|i| mask & (1 << i) != 0 && !cut_allowed[i]) {
            continue;
        }
        let mut fitted = vec![0.0; n];
        let mut start = 0;
        let mut last_mean = f64::NEG_INFINITY;
        let mut feasible = true;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let w: f64 = weights[start..end].iter().sum();
                let s: f64 = (start..end).map(|i| values[i] * weights[i]).sum();
                let mean = s / w;
                if mean < last_mean - 1e-12 {
                    feasible = false;
                    break;
                }
                last_mean = mean;
                fitted[start..end].iter_mut().for_each(|f| *f = mean);
                start = end;
            }
        }
        if !feasible {
            continue;
        }
        let sse: f64 = (0..n).map(|i| weights[i] * (values[i] - fitted[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fitted));
        }
    }
    best.expect("the single block is always feasible").1
}

#[test]
fn criterion_01_isotonic_oracle() {
    let started = Instant::now();
    let mut rng = SimRng::new(derive_seed(SEED, 1));
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let n = rand_int(&mut rng, 1, 8);
        let values: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let got = if case % 2 == 0 {
            let weights: Vec<f64> = (0..n).map(|_| 0.1 + 2.0 * rng.uniform()).collect();
            let fit = pava(&WeightedSequence::new(values.clone(), weights.clone()).unwrap()).unwrap();
            let want = brute_isotonic(&values, &weights, &vec![true; n.saturating_sub(1)]);
            fit.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        } else {
            // small integer references force ties
            let reference: Vec<f64> = (0..n).map(|_| rand_int(&mut rng, 0, 4) as f64).collect();
            let fit = iso_wrt(&reference, &values).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| reference[a].partial_cmp(&reference[b]).unwrap());
            let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let cuts: Vec<bool> = (0..n.saturating_sub(1))
                .map(|i| reference[order[i]] != reference[order[i + 1]])
                .collect();
            let want_sorted = brute_isotonic(&sorted, &vec![1.0; n], &cuts);
            let mut want = vec![0.0; n];
            for (r, &i) in order.iter().enumerate() {
                want[i] = want_sorted[r];
            }
            fit.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        worst = worst.max(got);
    }
    let elapsed = started.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(10);
    report(
        "1 isotonic oracle",
        pass,
        format!("max abs error {worst:.3e}, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_contraction() {
    let mut rng = SimRng::new(derive_seed(SEED, 2));
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rand_int(&mut rng, 1, 50);
        let z: Vec<f64> = (0..n).map(|_| (rng.normal() * 3.0).round()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.normal() * 2.0).collect();
        let (ix, iy) = (iso_wrt(&z, &x).unwrap(), iso_wrt(&z, &y).unwrap());
        let d_in: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let d_out: Vec<f64> = ix.iter().zip(&iy).map(|(a, b)| a - b).collect();
        let norms = |d: &[f64]| {
            [
                d.iter().map(|v| v.abs()).sum::<f64>(),
                d.iter().map(|v| v * v).sum::<f64>().sqrt(),
                d.iter().map(|v| v.abs()).fold(0.0, f64::max),
                (d.iter().sum::<f64>() / d.len() as f64).abs(),
            ]
        };
        let (a, b) = (norms(&d_out), norms(&d_in));
        violations += a.iter().zip(&b).filter(|(o, i)| **o > **i + 1e-12).count();
    }
    let pass = violations == 0;
    report(
        "2 contraction",
        pass,
        format!("{violations} violations over 4000 norm checks"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_hard_threshold_bound() {
    let mut rng = SimRng::new(derive_seed(SEED, 3));
    let mut violations = 0;
    let mut checked = 0;
    let mut worst_ratio: f64 = f64::NEG_INFINITY;
    while checked < 1000 {
        let m = rand_int(&mut rng, 1, 30);
        let s_star = rand_int(&mut rng, 1, m);
        let s = rand_int(&mut rng, s_star, m);
        let v: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let mut omega = vec![0.0; m];
        let mut idx: Vec<usize> = (0..m).collect();
        for k in 0..s_star {
            let j = rand_int(&mut rng, k, m - 1);
            idx.swap(k, j);
            omega[idx[k]] = rng.normal();
        }
        let phi = hard_threshold(&v, s).unwrap();
        let den: f64 = omega.iter().zip(&phi).map(|(w, p)| (w - p).powi(2)).sum();
        if den == 0.0 {
            continue;
        }
        checked += 1;
        let num: f64 = (0..m).map(|i| (v[i] - phi[i]) * (omega[i] - phi[i])).sum();
        let bound = (s_star as f64).sqrt() / (2.0 * (s as f64).sqrt());
        worst_ratio = worst_ratio.max(num / den - bound);
        if num > bound * den + 1e-12 * den.max(1.0) {
            violations += 1;
        }
    }
    let pass = violations == 0;
    report(
        "3 hard-threshold bound",
        pass,
        format!("{violations} violations in 1000 draws, max ratio minus bound {worst_ratio:.3e}"),
    );
    assert!(pass);
}

fn noiseless_data(rep: u64) -> (TimeSeriesMatrix, simam::simulation::GroundTruth) {
    let truth = PaperDesign::Sim9
        .ground_truth(Noise::Gaussian { sigma: 0.0 }, derive_seed(rep, 0))
        .unwrap();
    let (x, _) = simulate_series(&truth, 1000, derive_seed(rep, 1)).unwrap();
    (x, truth)
}

#[test]
fn criterion_04_noiseless_recovery() {
    let started = Instant::now();
    let cfgs = vec![NodeConfig::new(4, 0.1, 2000); 9];
    let mut errors = Vec::new();
    for r in 0..20 {
        let rep = derive_seed(derive_seed(SEED, 4), r);
        let (x, truth) = noiseless_data(rep);
        let model = fit_network(&x, &cfgs, derive_seed(rep, 2)).unwrap();
        errors.push(network_rmse(model.network().view(), truth.a_star.view()).unwrap());
    }
    let elapsed = started.elapsed();
    let hits = errors.iter().filter(|e| **e <= 1e-2).count();
    let median = {
        let mut e = errors.clone();
        e.sort_by(f64::total_cmp);
        e[10]
    };
    let pass = hits >= 18 && elapsed < Duration::from_secs(300);
    report(
        "4 noiseless recovery",
        pass,
        format!("{hits}/20 seeds with error <= 1e-2, median error {median:.3}, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn noiseless_single_node_recovery() {
    let (x, truth) = noiseless_data(derive_seed(SEED, 40));
    let fit = fit_node(&x, 0, &NodeConfig::new(4, 0.1, 2000), 0).unwrap();
    let err = fit
        .direction
        .coeffs()
        .iter()
        .zip(truth.direction(0))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let pass = err <= 1e-3;
    report("4b single-node noiseless recovery", pass, format!("error {err:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_05_convergence_rate() {
    let started = Instant::now();
    let grid: Vec<usize> = (1..=6).map(|i| 100 * i).collect();
    let out = convergence_study(&ConvergenceDesign::default(), &grid, 20, derive_seed(SEED, 5)).unwrap();
    let elapsed = started.elapsed();
    let slope = out.log_log.map(|f| f.slope);
    let r2 = out.inverse_cube_root.map(|f| f.r_squared);
    let curve: Vec<String> = out
        .curve
        .iter()
        .map(|p| format!("{}:{:.4}", p.t, p.mean_error))
        .collect();
    let pass = slope.is_some_and(|s| (-0.48..=-0.18).contains(&s))
        && r2.is_some_and(|r| r >= 0.85)
        && elapsed < Duration::from_secs(1800);
    report(
        "5 convergence rate",
        pass,
        format!(
            "slope {slope:.4?}, R^2 vs T^-1/3 {r2:.4?}, failed {}, curve [{}], {elapsed:.2?}",
            out.report.metadata.failed_replicates,
            curve.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_prediction_superiority() {
    let started = Instant::now();
    let design = PredictionDesign::nine(Noise::Gaussian { sigma: 0.05 });
    let out = prediction_study(&design, 20, derive_seed(SEED, 6)).unwrap();
    let elapsed = started.elapsed();
    let rate = out.simam_win_rate();
    let ok = out.replicates.iter().flatten().count();
    let pass = ok == 20 && rate >= 0.8 && elapsed < Duration::from_secs(1200);
    report(
        "6 prediction superiority",
        pass,
        format!(
            "SIMAM below LASSO in {:.0}% of {ok} replicates, {elapsed:.2?}",
            rate * 100.0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_initialization_acute() {
    // one node per dataset keeps the 200 pairs independent
    let mut positive = 0;
    let pairs = 200;
    for d in 0..pairs as u64 {
        let rep = derive_seed(derive_seed(SEED, 7), d);
        let truth = PaperDesign::Sim9
            .ground_truth(Noise::Gaussian { sigma: 0.05 }, derive_seed(rep, 0))
            .unwrap();
        let t = 200 + 50 * (d as usize % 9);
        let (x, _) = simulate_series(&truth, t, derive_seed(rep, 1)).unwrap();
        let j = d as usize % 9;
        let u0 = paper_init(&x, j, 4).unwrap();
        let inner: f64 = u0.coeffs().iter().zip(truth.direction(j)).map(|(a, b)| a * b).sum();
        positive += usize::from(inner > 0.0);
    }
    let pass = positive as f64 >= 0.95 * pairs as f64;
    report(
        "7 initialization acute",
        pass,
        format!("{positive}/{pairs} pairs with positive inner product"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Student-t CDF oracle: density integrated by composite Gauss-Legendre

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `Gamma((nu + 1) / 2) / Gamma(nu / 2)` by the two-step recursion.
fn gamma_ratio(nu: usize) -> f64 {
    let mut r = if nu % 2 == 1 {
        1.0 / std::f64::consts::PI.sqrt()
    } else {
        std::f64::consts::PI.sqrt() / 2.0
    };
    let mut k = if nu % 2 == 1 { 1 } else { 2 };
    while k < nu {
        r *= (k as f64 + 1.0) / k as f64;
        k += 2;
    }
    r
}

fn t_cdf_oracle(t: f64, nu: usize, nodes: &[(f64, f64)]) -> f64 {
    let nuf = nu as f64;
    let c = gamma_ratio(nu) / (nuf * std::f64::consts::PI).sqrt();
    let density = |x: f64| c * (1.0 + x * x / nuf).powf(-(nuf + 1.0) / 2.0);
    let b = t.abs();
    let panels = 64;
    let h = b / panels as f64;
    let mut integral = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in nodes {
            integral += w * density(mid + 0.5 * h * x) * 0.5 * h;
        }
    }
    if t >= 0.0 {
        0.5 + integral
    } else {
        0.5 - integral
    }
}

#[test]
fn criterion_08_t_test() {
    let nodes = gauss_legendre(20);
    let mut worst: f64 = 0.0;
    for nu in 1..=200 {
        for i in -24..=24 {
            let t = i as f64 / 4.0;
            worst = worst.max((student_t_cdf(t, nu as f64) - t_cdf_oracle(t, nu, &nodes)).abs());
        }
    }
    let mut rng = SimRng::new(derive_seed(SEED, 8));
    let mut anti: f64 = 0.0;
    for _ in 0..200 {
        let n = rand_int(&mut rng, 2, 60);
        let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal() + 0.3).collect();
        let ab = paired_t_test(&a, &b, Alternative::Less).unwrap().p_value;
        let ba = paired_t_test(&b, &a, Alternative::Less).unwrap().p_value;
        anti = anti.max((ab + ba - 1.0).abs());
    }
    let pass = worst <= 1e-9 && anti <= 1e-12;
    report(
        "8 t-test",
        pass,
        format!("max CDF deviation {worst:.3e}, max antisymmetry gap {anti:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_baselines() {
    // block-diagonal pair of plane rotations keeps the noiseless path excited
    let rot = |th: f64| [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
    let (r1, r2) = (rot(0.7), rot(1.9));
    let mut a = Array2::<f64>::zeros((4, 4));
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = r1[i][j];
            a[(i + 2, j + 2)] = r2[i][j];
        }
    }
    let mut rows = vec![vec![1.0, 0.5, -0.3, 2.0]];
    for t in 0..100 {
        let prev = &rows[t];
        let next: Vec<f64> = (0..4).map(|j| (0..4).map(|i| a[(i, j)] * prev[i]).sum()).collect();
        rows.push(next);
    }
    let x = TimeSeriesMatrix::from_rows(&rows).unwrap();
    let fit = var_ols(&x);
    let ols_err = fit
        .coefficients
        .iter()
        .zip(a.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);

    let mut rng = SimRng::new(derive_seed(SEED, 9));
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..100 {
        let n = rand_int(&mut rng, 20, 80);
        let p = rand_int(&mut rng, 2, 15);
        let design = Array2::from_shape_fn((n, p), |_| rng.normal());
        let y: Vec<f64> = (0..n)
            .map(|i| design[(i, 0)] * 2.0 - design[(i, p - 1)] + rng.normal())
            .collect();
        // penalty as a share of the null-model penalty, computed independently
        let mut zs = Vec::new();
        for c in 0..p {
            let col: Vec<f64> = (0..n).map(|i| design[(i, c)]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            zs.push((col.iter().map(|v| (v - m) / sd).collect::<Vec<f64>>(), sd));
        }
        let ym = y.iter().sum::<f64>() / n as f64;
        let lmax = zs
            .iter()
            .map(|(z, _)| (z.iter().zip(&y).map(|(a, b)| a * (b - ym)).sum::<f64>() / n as f64).abs())
            .fold(0.0, f64::max);
        let lambda = lmax * (0.01 + 0.9 * rng.uniform());
        let fit = lasso_cd(design.view(), &y, lambda).unwrap();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - fit.intercept - (0..p).map(|c| design[(i, c)] * fit.coeffs[c]).sum::<f64>())
            .collect();
        for (c, (z, sd)) in zs.iter().enumerate() {
            let g = z.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let b = fit.coeffs[c] * sd;
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            };
            worst_kkt = worst_kkt.max(v);
        }
    }
    let pass = ols_err <= 1e-8 && worst_kkt <= 1e-6;
    report(
        "9 baselines",
        pass,
        format!("OLS max coefficient error {ols_err:.3e}, max KKT residual {worst_kkt:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_spectral_pipeline() {
    let mut rng = SimRng::new(derive_seed(SEED, 10));
    let mut perfect = 0;
    let mut worst_residual: f64 = 0.0;
    for trial in 0..50 {
        let a = rand_int(&mut rng, 3, 10);
        let b = rand_int(&mut rng, 3, 10);
        let n = a + b;
        let adj = Array2::from_shape_fn((n, n), |(i, j)| if i != j && ((i < a) == (j < a)) { 1.0 } else { 0.0 });
        let labels = spectral_clustering(adj.view(), 2, derive_seed(SEED, 100 + trial), 5).unwrap();
        let ok = labels[..a].iter().all(|l| *l == labels[0])
            && labels[a..].iter().all(|l| *l == labels[a])
            && labels[0] != labels[a];
        perfect += usize::from(ok);

        let lap = normalized_laplacian(adj.view()).unwrap();
        let eig = jacobi_eigen(lap.view()).unwrap();
        for c in 0..n {
            let v = eig.vectors.column(c);
            let r = &lap.dot(&v) - &(&v * eig.values[c]);
            worst_residual = worst_residual.max(r.dot(&r).sqrt());
        }
    }
    let pass = perfect == 50 && worst_residual <= 1e-7;
    report(
        "10 spectral pipeline",
        pass,
        format!("{perfect}/50 perfect clusterings, max eigenpair residual {worst_residual:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_11_fit_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (prefix, series, model) = (path("series"), path("series.csv"), path("model.json"));
    let sim = simam_cli::run([
        "simam",
        "simulate",
        "--paper-design",
        "sim9",
        "--T",
        "300",
        "--seed",
        "7",
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(sim, 0);
    let fit = [
        "simam",
        "fit",
        "--input",
        &series,
        "--sparsity",
        "4",
        "--step-size",
        "0.1",
        "--max-iters",
        "200",
        "--seed",
        "3",
        "--out",
        &model,
    ];
    let first = simam_cli::run(fit);
    let a = std::fs::read(&model).unwrap();
    let second = simam_cli::run(fit);
    let b = std::fs::read(&model).unwrap();
    let pass = first == 0 && second == 0 && a == b;
    report(
        "11 fit determinism",
        pass,
        format!("{} bytes, identical: {}", a.len(), a == b),
    );
    assert!(pass);
}
