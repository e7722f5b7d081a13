//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use doa_core::array_sim::{generate_scenario, ArrayConfig};
use doa_core::bench::{self, SweepAxis, TrialSettings};
use doa_core::box_lasso::{self, SolveOptions};
use doa_core::decomposer::{self, SolverParams};
use doa_core::detector::detect;
use doa_core::numerics::hermitian_inv_sqrt;
use doa_core::{CMatrix, CVector, Complex64};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> CVector {
    random_matrix(rng, n, 1, scale).column(0).into_owned()
}

fn kernel_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=16);
        let t = rng.random_range(1..=32);
        let mu = rng.random_range(0.05..2.0);
        let z = random_matrix(&mut rng, m, t, 1.0);
        let p = hermitian_inv_sqrt(&z, mu).unwrap();
        let shifted = &z * z.adjoint() + CMatrix::identity(m, m).scale(mu * mu);
        worst = worst.max((&p * &p * shifted - CMatrix::identity(m, m)).norm());
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-10 && elapsed < Duration::from_secs(5),
        detail: format!("max ‖P²(ZZᴴ+μ²I) − I‖_F = {worst:.2e} over 100 cases in {elapsed:.2?}"),
    }
}

fn z_update_stationarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(2..=12);
        let t = rng.random_range(1..=60);
        let y = random_matrix(&mut rng, m, t, 1.0);
        let z_prev = random_matrix(&mut rng, m, t, 1.0);
        let gamma = random_vector(&mut rng, m, 3.0);
        let lambda1 = rng.random_range(0.1..5.0);
        let mu = rng.random_range(1e-3..2.0);
        let z = decomposer::update_z(&y, &gamma, &z_prev, lambda1, mu).unwrap();
        // residual of DᴴDZ + λ₁PZ = DᴴY, formed directly
        let d = CMatrix::from_diagonal(&gamma.map(|g| g + Complex64::new(1.0, 0.0)));
        let p = hermitian_inv_sqrt(&z_prev, mu).unwrap();
        let rhs = d.adjoint() * &y;
        let lhs = d.adjoint() * &d * &z + p.scale(lambda1) * &z;
        worst = worst.max((lhs - &rhs).norm() / rhs.norm());
    }
    Outcome { pass: worst <= 1e-8, detail: format!("max relative residual {worst:.2e} over 100 instances") }
}

fn grid_min_1d(a: f64, b: f64, lam: f64, cap: f64, h: f64) -> f64 {
    let steps = (2.0 * cap / h).round() as i64;
    (0..=steps)
        .map(|k| {
            let x = -cap + k as f64 * h;
            0.5 * a * x * x - b * x + lam * x.abs()
        })
        .fold(f64::INFINITY, f64::min)
}

fn gamma_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lam, cap) = (0.2, 10.0);
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut diagonal = true;
    for _ in 0..50 {
        let (m, t) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let z = random_matrix(&mut rng, m, t, 1.5);
        let y = &z + random_matrix(&mut rng, m, t, 3.0);
        let sub = box_lasso::build_subproblem(&y, &z, lam, cap).unwrap();
        let sol = box_lasso::solve(&sub, SolveOptions::default(), None).unwrap();
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        // Φ̄ᵀΦ̄ is diagonal, so the 2M-dimensional grid search splits into
        // one-dimensional searches.
        let dense = sub.operator.to_dense();
        let gram = dense.transpose() * &dense;
        for i in 0..2 * m {
            for j in 0..2 * m {
                diagonal &= i == j || gram[(i, j)].abs() < 1e-12;
            }
        }
        let g = DVector::from_column_slice(&sub.g_bar);
        let rhs = dense.transpose() * &g;
        let oracle =
            0.5 * g.norm_squared() + (0..2 * m).map(|i| grid_min_1d(gram[(i, i)], rhs[i], lam, cap, 1e-3)).sum::<f64>();
        worst_gap = worst_gap.max((sub.objective(&sol.stacked()) - oracle).abs());
    }

    // separable closed form: x_i = clip(soft(b_i / a_i, λ / a_i), ±γmax)
    let mut worst_closed = 0.0f64;
    for _ in 0..50 {
        let (m, t) = (rng.random_range(1..=4), rng.random_range(1..=6));
        let cap = rng.random_range(0.2..3.0);
        let z = random_matrix(&mut rng, m, t, 1.0);
        let y = &z + random_matrix(&mut rng, m, t, 2.0);
        let sub = box_lasso::build_subproblem(&y, &z, lam, cap).unwrap();
        let sol = box_lasso::solve(&sub, SolveOptions { tol: 1e-12, ..SolveOptions::default() }, None).unwrap();
        let dense = sub.operator.to_dense();
        let a = (dense.transpose() * &dense).diagonal();
        let b = dense.transpose() * DVector::from_column_slice(&sub.g_bar);
        for (i, x) in sol.stacked().iter().enumerate() {
            let v = b[i] / a[i];
            let expected = (v.signum() * (v.abs() - lam / a[i]).max(0.0)).clamp(-cap, cap);
            worst_closed = worst_closed.max((x - expected).abs());
        }
    }
    Outcome {
        pass: diagonal && worst_gap <= 1e-3 && worst_kkt <= 1e-8 && worst_closed <= 1e-10,
        detail: format!(
            "grid gap {worst_gap:.2e}, max KKT {worst_kkt:.2e} (50 cases); closed-form error {worst_closed:.2e}"
        ),
    }
}

fn monotonicity() -> Outcome {
    let params = SolverParams { alpha: 1.0, epsilon: 0.0, ..SolverParams::default() };
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20 {
        let cfg = ArrayConfig { seed: 1000 + seed, ..ArrayConfig::default() };
        let sc = generate_scenario(&cfg).unwrap();
        let res = decomposer::run(&sc.measurements, &params, None).unwrap();
        for w in res.trace.windows(2) {
            worst = worst.max(w[1].objective - w[0].objective);
        }
    }
    Outcome { pass: worst <= 1e-8, detail: format!("largest per-iteration increase {worst:.2e} over 20 problems") }
}

fn noiseless_end_to_end() -> Outcome {
    let cfg = ArrayConfig { snr_db: f64::INFINITY, ..ArrayConfig::default() };
    let params = SolverParams::default();
    let settings = TrialSettings::default();
    let mut good = 0;
    let mut detected = 0;
    let mut max_err = 0.0f64;
    let mut slowest = Duration::ZERO;
    for i in 0..20 {
        let o = bench::run_trial(&cfg, &params, &settings, i);
        let err = o.doa_abs_errors_deg.iter().cloned().fold(f64::NAN, f64::max);
        max_err = max_err.max(err);
        slowest = slowest.max(o.wall_time);
        detected += o.detection_correct as usize;
        if o.error.is_none() && o.detection_correct && err <= 0.05 + 1e-9 {
            good += 1;
        }
    }
    Outcome {
        pass: good >= 19 && slowest <= Duration::from_secs(2),
        detail: format!(
            "{good}/20 trials with exact detection and DOA error ≤ 0.05° (detection {detected}/20, worst error {max_err:.2}°), slowest trial {slowest:.2?}"
        ),
    }
}

fn desk_reproduction() -> Outcome {
    let base = ArrayConfig::default();
    let params = SolverParams::default();
    let settings = TrialSettings::default();
    let start = Instant::now();
    let snr = bench::sweep(&base, &params, &settings, SweepAxis::SnrDb, &[-10.0, 0.0, 10.0], 100, 0).unwrap();
    let at_0db = ArrayConfig { snr_db: 0.0, ..base.clone() };
    let snaps = bench::sweep(&at_0db, &params, &settings, SweepAxis::Snapshots, &[50.0, 100.0, 200.0], 100, 0).unwrap();
    let elapsed = start.elapsed();

    let rmse: Vec<f64> = snr.iter().map(|p| p.report.rmse_deg).collect();
    let res_t: Vec<f64> = snaps.iter().map(|p| p.report.res_prob).collect();
    let top = &snr[2].report;
    let rmse_ok = rmse.windows(2).all(|w| w[1] < w[0]);
    let res_ok = res_t.windows(2).all(|w| w[1] >= w[0]);
    Outcome {
        pass: top.res_prob >= 0.9 && top.det_rate >= 0.7 && rmse_ok && res_ok && elapsed <= Duration::from_secs(600),
        detail: format!(
            "10 dB ResProb {:.2} DetRate {:.2}; RMSE over SNR {:?}; ResProb over T {:?}; {elapsed:.1?}",
            top.res_prob,
            top.det_rate,
            rmse.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            res_t
        ),
    }
}

fn algorithm_two_suite() -> Outcome {
    let traced = [0.01, 0.02, 0.03, 0.04, 0.05, 2.0, 2.1, 2.2];
    let gamma = CVector::from_iterator(8, traced.iter().map(|&v| Complex64::new(v, 0.0)));
    let r = detect(&gamma, 10.0).unwrap();
    let traced_ok = r.num_distorted == 3 && r.distorted_indices == [5, 6, 7];
    let zero_ok = detect(&CVector::zeros(8), 10.0).unwrap().num_distorted == 0;

    // every permutation of the traced example
    let mut perm: Vec<usize> = (0..8).collect();
    let mut perms_ok = true;
    let mut count = 0;
    loop {
        let permuted = CVector::from_fn(8, |i, _| gamma[perm[i]]);
        let got = detect(&permuted, 10.0).unwrap();
        let mut mapped: Vec<usize> = got.distorted_indices.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        perms_ok &= got.num_distorted == 3 && mapped == [5, 6, 7];
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Outcome {
        pass: traced_ok && zero_ok && perms_ok,
        detail: format!("hand-traced {traced_ok}, all-zero guard {zero_ok}, {count} permutations {perms_ok}"),
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn determinism() -> Outcome {
    let base = ArrayConfig { seed: 99, ..ArrayConfig::default() };
    let params = SolverParams::default();
    let settings = TrialSettings::default();
    let csv = |workers: usize| {
        let points = bench::sweep(&base, &params, &settings, SweepAxis::SnrDb, &[0.0, 10.0], 8, workers).unwrap();
        let mut out = Vec::new();
        bench::write_sweep_csv(points.iter().map(|p| &p.report), &mut out).unwrap();
        out
    };
    let reference = csv(1);
    let same = [2, 3, 8].iter().all(|&w| csv(w) == reference);
    Outcome { pass: same, detail: format!("sweep CSV identical for 1, 2, 3 and 8 workers: {same}") }
}

fn main() {
    let criteria: [Check; 8] = [
        ("kernel correctness", kernel_correctness),
        ("Z-update stationarity", z_update_stationarity),
        ("gamma-solver oracle equivalence", gamma_oracle),
        ("objective monotonicity", monotonicity),
        ("noiseless end-to-end", noiseless_end_to_end),
        ("desk-scale reproduction", desk_reproduction),
        ("detector unit suite", algorithm_two_suite),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
