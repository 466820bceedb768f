//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported, not hidden; the process exits non-zero on
//! a failure only when `ACCEPTANCE_STRICT` is set.

use std::time::{Duration, Instant};

use dagmm_ho::commands::{cmd_synth, cmd_train};
use dagmm_ho::config::PipelineConfig;
use dagmm_ho::pipeline::{compare, Dataset};
use dagmm_ho_core::dagmm::{
    estimate_gmm, objective, objective_gradient, sample_energy, GmmParameters, ModelParameters,
    NetworkArchitecture, TrainConfig,
};
use dagmm_ho_core::eval::{auc, DiagonalGmm, LabeledScores};
use dagmm_ho_core::hpo::{
    bending_point, dispersion, select_c, select_k, Curve, CurveKind, GapConfig,
};
use dagmm_ho_core::numcore::{Matrix, RngSeed};
use dagmm_ho_core::synth::{blobs, low_rank_embedding};
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn uniform(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = RngSeed(seed).rng();
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform_in(lo, hi)).collect()).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Determinant and inverse by Gauss–Jordan elimination with partial pivoting.
fn gauss_jordan(a: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if p != col {
            m.swap(p, col);
            det = -det;
        }
        let pivot = m[col][col];
        det *= pivot;
        for v in m[col].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let src = m[col].clone();
                for (v, s) in m[r].iter_mut().zip(src) {
                    *v -= f * s;
                }
            }
        }
    }
    (det, m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `−log Σ_k φ_k N(z; μ_k, Σ_k + jitter·I)` written out term by term.
fn naive_energy(z: &[f64], gmm: &GmmParameters, jitter: f64) -> f64 {
    let d = z.len();
    let mut total = 0.0;
    for k in 0..gmm.phi.len() {
        let s: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| gmm.sigma[k][(i, j)] + if i == j { jitter } else { 0.0 })
                    .collect()
            })
            .collect();
        let (det, inv) = gauss_jordan(&s);
        let diff: Vec<f64> = z.iter().zip(&gmm.mu[k]).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += diff[i] * inv[i][j] * diff[j];
            }
        }
        let norm = (2.0 * std::f64::consts::PI).powi(d as i32) * det;
        total += gmm.phi[k] * (-0.5 * q).exp() / norm.sqrt();
    }
    -total.ln()
}

fn random_mixture(k: usize, d: usize, seed: u64) -> GmmParameters {
    let mut rng = RngSeed(seed).rng();
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.2, 1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let phi = raw.iter().map(|p| p / sum).collect();
    let mu = (0..k)
        .map(|_| (0..d).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
        .collect();
    let sigma = (0..k)
        .map(|_| {
            let a: Vec<f64> = (0..d * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let mut s = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    s[(i, j)] = (0..d).map(|t| a[i * d + t] * a[j * d + t]).sum::<f64>()
                        + if i == j { 0.2 } else { 0.0 };
                }
            }
            s
        })
        .collect();
    GmmParameters { phi, mu, sigma }
}

fn pairwise_dispersion(data: &Matrix, labels: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..data.rows()).filter(|&i| labels[i] == c).collect();
            let mut sum = 0.0;
            for &i in &rows {
                for &j in &rows {
                    sum += data
                        .row(i)
                        .iter()
                        .zip(data.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                }
            }
            if rows.is_empty() {
                0.0
            } else {
                sum / (2.0 * rows.len() as f64)
            }
        })
        .sum()
}

fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (a, &la) in scores.iter().zip(labels) {
        for (b, &lb) in scores.iter().zip(labels) {
            if la && !lb {
                pairs += 1.0;
                if a > b {
                    wins += 1.0;
                } else if a == b {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

// --------------------------------------------------------------- criteria

fn gradient_oracle() -> Outcome {
    let arch = NetworkArchitecture::standard(4, 1, 2).unwrap();
    let params = ModelParameters::init(&arch, RngSeed(101)).unwrap();
    let x = uniform(8, 4, -1.0, 1.0, 102);
    let cfg = TrainConfig::default();
    let (_, grad) = objective_gradient(&x, &params, &arch, &cfg).unwrap();
    let analytic = grad.to_flat();
    let flat = params.to_flat();
    let mut probe = params.clone();
    let h = 1e-5;
    let mut j = |w: &[f64]| {
        probe.set_flat(w).unwrap();
        objective(&x, &probe, &arch, &cfg).unwrap().total
    };
    let numeric: Vec<f64> = (0..flat.len())
        .map(|i| {
            let mut w = flat.clone();
            w[i] = flat[i] + h;
            let up = j(&w);
            w[i] = flat[i] - h;
            (up - j(&w)) / (2.0 * h)
        })
        .collect();
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-3 * scale))
        .fold(0.0f64, f64::max);
    outcome(
        worst < 1e-4,
        format!(
            "{} parameters, max relative error {worst:.2e} (< 1e-4)",
            flat.len()
        ),
    )
}

fn energy_oracle() -> Outcome {
    let jitter = TrainConfig::default().jitter;
    let mut worst = 0.0f64;
    for m in 0..100u64 {
        let k = 1 + (m % 4) as usize;
        let d = 1 + ((m / 4) % 4) as usize;
        let gmm = random_mixture(k, d, 1000 + m);
        let mut rng = RngSeed(2000 + m).rng();
        let z: Vec<f64> = (0..d).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let e = sample_energy(&z, &gmm, jitter).unwrap();
        worst = worst.max((e - naive_energy(&z, &gmm, jitter)).abs());
    }
    outcome(
        worst < 1e-8,
        format!("100 mixtures, max |ΔE| {worst:.2e} (< 1e-8)"),
    )
}

fn estimation_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for b in 0..50u64 {
        let (n, d, k) = (
            10 + (b as usize % 7) * 5,
            1 + b as usize % 4,
            1 + b as usize % 3,
        );
        let z = uniform(n, d, -2.0, 2.0, 3000 + b);
        let mut rng = RngSeed(4000 + b).rng();
        let labels: Vec<usize> = (0..n)
            .map(|i| if i < k { i } else { rng.below(k) })
            .collect();
        let mut gamma = Matrix::zeros(n, k);
        for (i, &l) in labels.iter().enumerate() {
            gamma[(i, l)] = 1.0;
        }
        let est = estimate_gmm(&z, &gamma, None).unwrap().params;
        for c in 0..k {
            let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            let m = rows.len() as f64;
            worst = worst.max((est.phi[c] - m / n as f64).abs());
            let mean: Vec<f64> = (0..d)
                .map(|j| rows.iter().map(|&i| z[(i, j)]).sum::<f64>() / m)
                .collect();
            for j in 0..d {
                worst = worst.max((est.mu[c][j] - mean[j]).abs());
                for l in 0..d {
                    let cov = rows
                        .iter()
                        .map(|&i| (z[(i, j)] - mean[j]) * (z[(i, l)] - mean[l]))
                        .sum::<f64>()
                        / m;
                    worst = worst.max((est.sigma[c][(j, l)] - cov).abs());
                }
            }
        }
    }
    outcome(
        worst < 1e-12,
        format!("50 one-hot batches, max deviation {worst:.2e} (< 1e-12)"),
    )
}

fn dispersion_identity() -> Outcome {
    let mut worst = 0.0f64;
    let shapes = [
        (5, 1, 2),
        (30, 2, 3),
        (80, 4, 5),
        (150, 6, 4),
        (200, 8, 6),
        (200, 8, 1),
    ];
    for (s, &(n, d, k)) in shapes.iter().enumerate() {
        let data = uniform(n, d, -1.0, 1.0, 5000 + s as u64);
        let mut rng = RngSeed(6000 + s as u64).rng();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let fast = dispersion(&data, &labels, k).unwrap();
        worst = worst.max((fast - pairwise_dispersion(&data, &labels, k)).abs());
    }
    outcome(
        worst < 1e-10,
        format!("up to 200×8, max |ΔW| {worst:.2e} (< 1e-10)"),
    )
}

fn gap_recovery() -> Outcome {
    let start = Instant::now();
    let mut counts = Vec::new();
    for k in [3usize, 4, 5] {
        let hits = (0..20u64)
            .filter(|&s| {
                let data = blobs(k, 50, 2, 10.0, RngSeed(7000 + 100 * k as u64 + s));
                let cfg = GapConfig {
                    seed: RngSeed(8000 + s),
                    ..GapConfig::default()
                };
                select_k(&data, &cfg).unwrap().value == k
            })
            .count();
        counts.push((k, hits));
    }
    let elapsed = start.elapsed();
    let pass = counts.iter().all(|&(_, h)| h >= 18) && elapsed < Duration::from_secs(120);
    let per: Vec<String> = counts
        .iter()
        .map(|(k, h)| format!("k={k}: {h}/20"))
        .collect();
    outcome(
        pass,
        format!(
            "{} (≥ 18/20), {:.1} s (< 120 s)",
            per.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

type Shape = (&'static str, fn(f64) -> f64);

fn bending_points() -> Outcome {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let clipped: Vec<f64> = x.iter().map(|&v| v.min(5.0)).collect();
    let knee = bending_point(&Curve::new(x.clone(), clipped, CurveKind::Gap).unwrap()).x_star;
    let mut pass = knee == Some(5.0);
    let mut detail = format!("min(x,5) → {knee:?}");
    let curves: [Shape; 4] = [
        ("ln(1+x)", |v| (1.0 + v).ln()),
        ("sqrt(x)", f64::sqrt),
        ("1−e^(−x/3)", |v| 1.0 - (-v / 3.0).exp()),
        ("atan(x/2)", |v| (v / 2.0).atan()),
    ];
    for (name, f) in curves {
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let (y0, y1) = (y[0], y[9]);
        let best = (0..10)
            .max_by(|&a, &b| {
                let g = |i: usize| (y[i] - y0) / (y1 - y0) - (x[i] - 1.0) / 9.0;
                g(a).total_cmp(&g(b)).then(b.cmp(&a))
            })
            .unwrap();
        let got = bending_point(&Curve::new(x.clone(), y, CurveKind::Gap).unwrap()).x_star;
        pass &= got == Some(x[best]);
        detail += &format!(", {name} → {got:?} (argmax {})", x[best]);
    }
    outcome(pass, detail)
}

fn dimension_selection() -> Outcome {
    let picks: Vec<usize> = (0..10u64)
        .map(|s| {
            select_c(&low_rank_embedding(400, 10, 3, 0.01, RngSeed(9000 + s)))
                .unwrap()
                .value
        })
        .collect();
    outcome(
        picks.iter().all(|&c| c == 3),
        format!("c over 10 seeds: {picks:?}"),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let tmp = TempDir::new().unwrap();
        let mut cfg = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        cfg.sync_seeds();
        cfg.data_dir = tmp.path().to_path_buf();
        cfg.manifest = cmd_synth(&cfg, tmp.path()).unwrap();
        let dataset = Dataset::load(&cfg.data_dir, &cfg.manifest).unwrap();
        let cmp = compare(&dataset, &cfg, None).unwrap();
        let proposed = cmp.results[0].report.auc;
        let best_baseline = cmp.results[1..]
            .iter()
            .map(|r| r.report.auc)
            .fold(f64::NEG_INFINITY, f64::max);
        let s = &cmp.results[0].scores;
        let mean = |want: bool| {
            let v: Vec<f64> = s
                .iter()
                .zip(&cmp.labels)
                .filter(|(_, &l)| l == want)
                .map(|(e, _)| *e)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let separated = mean(true) > mean(false);
        let ok = proposed >= 0.90 && proposed >= best_baseline && separated;
        pass &= ok;
        let table: Vec<String> = cmp
            .results
            .iter()
            .map(|r| format!("{} {:.4}", r.method, r.report.auc))
            .collect();
        lines.push(format!(
            "      seed {seed} [{}]: {}; energy anomalous {:.3} vs normal {:.3}",
            if ok { "ok" } else { "miss" },
            table.join(", "),
            mean(true),
            mean(false)
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(15 * 60);
    outcome(
        pass,
        format!(
            "DAGMM-HO AUC ≥ 0.90 and ≥ every baseline on 3 seeds, {:.0} s (< 900 s)\n{}",
            elapsed.as_secs_f64(),
            lines.join("\n")
        ),
    )
}

fn auc_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut cases = 0;
    for t in 0..40u64 {
        let n = 2 + (t as usize * 997) % 999;
        let mut rng = RngSeed(10_000 + t).rng();
        let levels = 1 + t as usize % 12;
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| (rng.below(levels) + usize::from(l)) as f64)
            .collect();
        let fast = auc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        cases += 1;
        if fast != brute_force_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} tied and untied cases up to N = 1000, {mismatches} inexact"),
    )
}

fn determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let mut cfg = PipelineConfig {
        seed: 42,
        ..PipelineConfig::default()
    };
    cfg.sync_seeds();
    cfg.data_dir = tmp.path().join("data");
    cfg.manifest = cmd_synth(&cfg, &cfg.data_dir).unwrap();
    let a = tmp.path().join("a.dghm");
    let b = tmp.path().join("b.dghm");
    cmd_train(&cfg, &a).unwrap();
    cmd_train(&cfg, &b).unwrap();
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    outcome(
        a == b,
        format!(
            "two training runs, {} bytes, identical: {}",
            a.len(),
            a == b
        ),
    )
}

fn em_monotonicity() -> Outcome {
    let mut worst_drop = 0.0f64;
    let mut iterations = 0;
    for s in 0..20u64 {
        let data = blobs(3, 60, 3, 4.0, RngSeed(11_000 + s));
        let fit = DiagonalGmm::fit(&data, 2 + s as usize % 4, RngSeed(12_000 + s)).unwrap();
        iterations += fit.log_likelihood.len();
        for w in fit.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    outcome(
        worst_drop <= 1e-10,
        format!("20 runs, {iterations} log-likelihood values, largest decrease {worst_drop:.2e} (≤ 1e-10)"),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "gradient oracle", gradient_oracle),
        (2, "energy oracle", energy_oracle),
        (3, "GMM-estimation oracle", estimation_oracle),
        (4, "dispersion identity", dispersion_identity),
        (5, "gap-statistic recovery", gap_recovery),
        (6, "bending-point correctness", bending_points),
        (7, "dimension selection", dimension_selection),
        (8, "end-to-end ordering", end_to_end),
        (9, "AUC oracle", auc_oracle),
        (10, "determinism", determinism),
        (11, "EM monotonicity", em_monotonicity),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
