//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed whether it passes or not.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{full_objective, kkt_violation, oracle_fit, qr_least_squares, random_instance, structure, Instance};
use varxl::benchmarks::{bgr_dummies, fit_bgr, BgrPrior};
use varxl::mcs::{mcs, LossMatrix, McsOptions};
use varxl::penalties::{group_partition, lambda_max, LambdaGrid, PenaltyKind, PenaltyStructure};
use varxl::simulation::{run_study, ScenarioConfig, StudyOptions};
use varxl::solvers::{fit, fit_design, power_method_max_eig, MinnesotaTarget, SolverOptions};
use varxl::validation::{rolling_cv, split_indices, CvOptions};
use varxl::varx::{build_lagged_design, companion_spectral_radius, VarxSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Largest KKT residual seen across the fits of criteria 1 to 3.
static KKT_WORST: std::sync::Mutex<(f64, usize)> = std::sync::Mutex::new((0.0, 0));

fn record_kkt(inst: &Instance, st: &PenaltyStructure, b: &DMatrix<f64>, lambda: f64) {
    let part = group_partition(&inst.spec, st).unwrap();
    let v = kkt_violation(&inst.design, b, st, &part, lambda);
    let mut w = KKT_WORST.lock().unwrap();
    w.0 = w.0.max(v);
    w.1 += 1;
}

fn shapes(i: u64) -> (usize, usize, usize) {
    let k = [2, 3][(i % 2) as usize];
    let m = [0, 2][((i / 2) % 2) as usize];
    let p = [1, 2][((i / 4) % 2) as usize];
    (k, m, p)
}

fn c1_lambda_max() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for i in 0..20u64 {
        let (k, m, p) = shapes(i);
        let s = if m > 0 { p } else { 0 };
        let inst = random_instance(1000 + i, k, m, p, s, 60);
        for kind in PenaltyKind::ALL {
            let st = structure(kind, k);
            let lmax = lambda_max(&inst.design, &st, &inst.spec).unwrap();
            let above = lmax * (1.0 + 1e-6);
            let at = fit_design(&inst.design, &inst.spec, &st, above, &SolverOptions::default()).unwrap();
            if at.coeffs.b().iter().any(|v| *v != 0.0) {
                failures.push(format!("instance {i} {kind}: nonzero above lambda_max"));
            }
            record_kkt(&inst, &st, &at.coeffs.b(), above);
            let half = fit_design(&inst.design, &inst.spec, &st, 0.5 * lmax, &SolverOptions::default()).unwrap();
            if half.coeffs.b().iter().all(|v| *v == 0.0) {
                failures.push(format!("instance {i} {kind}: all zero at lambda_max / 2"));
            }
            record_kkt(&inst, &st, &half.coeffs.b(), 0.5 * lmax);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 10.0;
    outcome(pass, format!("120 structure-instance pairs, {} failures, {secs:.2}s (limit 10s) {}", failures.len(), failures.join("; ")))
}

fn c2_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let inst = random_instance(2000 + i, 2, 1, 2, 1, 60);
        for kind in PenaltyKind::ALL {
            let st = structure(kind, 2);
            let part = group_partition(&inst.spec, &st).unwrap();
            let lam = 0.3 * lambda_max(&inst.design, &st, &inst.spec).unwrap();
            let f = fit_design(&inst.design, &inst.spec, &st, lam, &SolverOptions::default()).unwrap();
            record_kkt(&inst, &st, &f.coeffs.b(), lam);
            let oracle = oracle_fit(&inst.design, &inst.spec, &st, lam, 200_000);
            let obj = full_objective(&inst.design, &oracle, &st, &part, lam);
            worst = worst.max((f.objective - obj).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 60.0, format!("max |objective - oracle| = {worst:.2e} (tol 1e-6), {secs:.2}s (limit 60s)"))
}

fn c3_identities() -> Outcome {
    let mut worst = [0.0f64; 3];
    for i in 0..10u64 {
        let inst = random_instance(3000 + i, 3, 1, 2, 1, 70);
        let basic = structure(PenaltyKind::Basic, 3);
        let lam = 0.3 * lambda_max(&inst.design, &basic, &inst.spec).unwrap();
        let pairs = [
            (basic, PenaltyStructure::new(PenaltyKind::SparseLag, 1.0).unwrap()),
            (structure(PenaltyKind::LagGroup, 3), PenaltyStructure::new(PenaltyKind::SparseLag, 0.0).unwrap()),
        ];
        for (slot, (a, b)) in pairs.iter().enumerate() {
            let fa = fit_design(&inst.design, &inst.spec, a, lam, &SolverOptions::default()).unwrap();
            let fb = fit_design(&inst.design, &inst.spec, b, lam, &SolverOptions::default()).unwrap();
            record_kkt(&inst, a, &fa.coeffs.b(), lam);
            record_kkt(&inst, b, &fb.coeffs.b(), lam);
            worst[slot] = worst[slot].max((fa.objective - fb.objective).abs());
        }
        let one = random_instance(3100 + i, 1, 2, 3, 2, 70);
        let lag = structure(PenaltyKind::LagGroup, 1);
        let oo = structure(PenaltyKind::OwnOther, 1);
        let lam = 0.3 * lambda_max(&one.design, &lag, &one.spec).unwrap();
        let fa = fit_design(&one.design, &one.spec, &lag, lam, &SolverOptions::default()).unwrap();
        let fb = fit_design(&one.design, &one.spec, &oo, lam, &SolverOptions::default()).unwrap();
        record_kkt(&one, &lag, &fa.coeffs.b(), lam);
        record_kkt(&one, &oo, &fb.coeffs.b(), lam);
        worst[2] = worst[2].max((fa.objective - fb.objective).abs());
    }
    let pass = worst.iter().all(|w| *w < 1e-6);
    outcome(
        pass,
        format!(
            "sparse_lag(1) vs basic {:.2e}, sparse_lag(0) vs lag {:.2e}, own_other(k=1) vs lag {:.2e} (tol 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn c4_kkt() -> Outcome {
    let (worst, n) = *KKT_WORST.lock().unwrap();
    outcome(n > 0 && worst < 1e-3, format!("max KKT residual {worst:.2e} over {n} fits (tol 1e-3)"))
}

fn c5_minnesota() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..5u64 {
        let inst = random_instance(5000 + i, 2, 1, 2, 1, 70);
        let target = MinnesotaTarget::random_walk(&inst.spec);
        let c = target.b();
        for kind in PenaltyKind::ALL {
            let st = structure(kind, 2);
            let lam = 2.0;
            let res = fit(&inst.endog, inst.exog.as_ref(), &inst.spec, &st, lam, Some(&target), &SolverOptions::default()).unwrap();
            let mut design = build_lagged_design(&inst.endog, inst.exog.as_ref(), &inst.spec, 1, false).unwrap();
            design.y -= &c * &design.z;
            design.center();
            let tilde = fit_design(&design, &inst.spec, &st, lam, &SolverOptions::default()).unwrap();
            worst = worst.max((res.coeffs.b() - (tilde.coeffs.b() + &c)).amax());
        }
    }
    outcome(worst < 1e-10, format!("max entrywise difference {worst:.2e} (tol 1e-10)"))
}

fn c6_least_squares() -> Outcome {
    let mut worst = 0.0f64;
    let opts = SolverOptions::default().with_tol(1e-10).with_max_iter(100_000);
    for i in 0..3u64 {
        let inst = random_instance(6000 + i, 2, 1, 2, 1, 120);
        assert!(inst.design.z.ncols() >= 2 * inst.spec.n_regressors());
        let ls = qr_least_squares(&inst.design);
        for kind in PenaltyKind::ALL {
            let f = fit_design(&inst.design, &inst.spec, &structure(kind, 2), 0.0, &opts).unwrap();
            worst = worst.max((f.coeffs.b() - &ls).norm() / ls.norm());
        }
    }
    outcome(worst < 1e-6, format!("max relative Frobenius error {worst:.2e} (tol 1e-6)"))
}

fn c7_origins() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inst = random_instance(7000, 2, 0, 1, 0, 120);
    let mut bad = 0;
    for _ in 0..50 {
        let h = rng.random_range(1..=4);
        let t = rng.random_range(3 * (1 + h)..=120);
        let spec = VarxSpec::new(2, 0, 1, 0, h).unwrap();
        let endog = inst.endog.values().rows(0, t).into_owned();
        let grid = LambdaGrid::from_values(vec![1.0, 0.1]).unwrap();
        let cv = rolling_cv(&endog, None, &spec, &structure(PenaltyKind::Basic, 2), &grid, &CvOptions::default()).unwrap();
        let (t1, t2) = split_indices(t, h).unwrap();
        let mut enumerated = 0;
        let mut origin = t1;
        while origin + h <= t2 {
            enumerated += 1;
            origin += 1;
        }
        if cv.origins.len() != enumerated || enumerated != t2 - t1 - h + 1 {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 50 (T, h) pairs disagree"))
}

fn c8_simulation() -> Outcome {
    let vs = ["basic", "lag", "own_other", "sparse_lag", "sparse_own_other", "endo_first"];
    let benches = ["aic", "bic", "mean", "rw"];
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for id in 1..=6u8 {
        let start = Instant::now();
        let config = ScenarioConfig::new(id, 1).unwrap();
        let report = run_study(&config, &StudyOptions::full(config.k)).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let msfe = |name: &str| report.row(name).map(|r| r.mean_msfe).unwrap_or(f64::NAN);
        let best_varx = vs.iter().copied().min_by(|a, b| msfe(a).total_cmp(&msfe(b))).unwrap();
        let ok_best = match id {
            1 => best_varx == "basic",
            2 => best_varx == "lag",
            4 => best_varx == "own_other" || best_varx == "sparse_own_other",
            _ => true,
        };
        if !ok_best {
            problems.push(format!("S{id}: lowest VARX-L is {best_varx}"));
        }
        let best_bench = benches.iter().map(|b| msfe(b)).fold(f64::INFINITY, f64::min);
        let worst_varx = vs.iter().map(|v| msfe(v)).fold(f64::NEG_INFINITY, f64::max);
        if !(worst_varx < best_bench) {
            problems.push(format!("S{id}: worst VARX-L {worst_varx:.4} vs best benchmark {best_bench:.4}"));
        }
        if secs > 1800.0 {
            problems.push(format!("S{id}: {secs:.0}s"));
        }
        summary.push(format!("S{id} best {best_varx} ({:.4}), {secs:.0}s", msfe(best_varx)));
        eprintln!("{}", report.to_table());
    }
    let mut detail = summary.join(", ");
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.join("; ")));
    }
    outcome(problems.is_empty(), detail)
}

fn c9_bgr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (k, p, t) = (3, 2, 120);
    let a = DMatrix::from_fn(k, k, |i, j| if i == j { 0.5 } else { 0.1 });
    let mut data = DMatrix::zeros(t, k);
    for r in 1..t {
        let e = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let next = &a * data.row(r - 1).transpose() + e;
        data.set_row(r, &next.transpose());
    }
    let n = t - p;
    let x = DMatrix::from_fn(n, 1 + k * p, |r, c| if c == 0 { 1.0 } else { data[(p + r - ((c - 1) / k + 1), (c - 1) % k)] });
    let y = data.rows(p, n).into_owned();
    let mut worst = 0.0f64;
    for (lambda, delta) in [(0.1, 1.0), (0.5, 0.0), (2.0, 1.0)] {
        let prior = BgrPrior::from_data(&data, p, lambda, delta).unwrap();
        let f = fit_bgr(&data, p, 1, &prior).unwrap();
        let (yd, xd) = bgr_dummies(&prior, p);
        let mut xs = DMatrix::zeros(n + xd.nrows(), x.ncols());
        xs.rows_mut(0, n).copy_from(&x);
        xs.rows_mut(n, xd.nrows()).copy_from(&xd);
        let mut ys = DMatrix::zeros(n + yd.nrows(), k);
        ys.rows_mut(0, n).copy_from(&y);
        ys.rows_mut(n, yd.nrows()).copy_from(&yd);
        let dense = (xs.transpose() * &xs).try_inverse().unwrap() * xs.transpose() * ys;
        for i in 0..k {
            worst = worst.max((f.nu[i] - dense[(0, i)]).abs());
            for c in 0..k * p {
                worst = worst.max((f.phi[(i, c)] - dense[(1 + c, i)]).abs());
            }
        }
    }
    let tight = fit_bgr(&data, p, 1, &BgrPrior::from_data(&data, p, 1e-4, 1.0).unwrap()).unwrap();
    let target = DMatrix::from_fn(k, k * p, |i, c| if c == i { 1.0 } else { 0.0 });
    let dev = (&tight.phi - target).amax();
    outcome(worst < 1e-8 && dev < 0.05, format!("normal-equation gap {worst:.2e} (tol 1e-8), tight-prior deviation {dev:.2e} (tol 0.05)"))
}

fn c10_mcs() -> Outcome {
    let mut eliminated = 0;
    let mut separated = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let good: Vec<f64> = (0..60).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).collect();
        let bad: Vec<f64> = good.iter().map(|v| v + 1000.0).collect();
        let opts = McsOptions {
            alpha: 0.15,
            n_boot: 5000,
            block_len: None,
            seed,
        };
        let l = LossMatrix::from_rows(&[("a".into(), good.clone()), ("b".into(), bad)]).unwrap();
        if mcs(&l, &opts).unwrap().survivors == vec!["a".to_string()] {
            eliminated += 1;
        }
        let same = LossMatrix::from_rows(&[("a".into(), good.clone()), ("b".into(), good)]).unwrap();
        if mcs(&same, &opts).unwrap().survivors.len() != 2 {
            separated += 1;
        }
    }
    outcome(eliminated >= 19 && separated == 0, format!("eliminated in {eliminated}/20 seeds (need 19), identical pairs separated {separated} times"))
}

fn c11_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut eig_gap = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..12);
        let a = DMatrix::from_fn(n + 3, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = a.transpose() * a;
        let (lam, _) = power_method_max_eig(&s, None);
        let dense = s.clone().symmetric_eigen().eigenvalues.max();
        eig_gap = eig_gap.max((lam - dense).abs() / dense.max(1.0));
    }
    // companion matrices with known spectra
    let mut radius_gap = 0.0f64;
    for _ in 0..10 {
        // VAR(1) Q D Q^-1 with a rotation block: eigenvalues r e^{+-i theta} and d
        let (r, theta, d): (f64, f64, f64) = (rng.random_range(0.1..1.2), rng.random_range(0.1..3.0), rng.random_range(-1.2..1.2));
        let block = DMatrix::from_row_slice(3, 3, &[
            r * theta.cos(), -r * theta.sin(), 0.0,
            r * theta.sin(), r * theta.cos(), 0.0,
            0.0, 0.0, d,
        ]);
        let q = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { rng.random_range(-0.5..0.5) });
        let a = &q * block * q.clone().try_inverse().unwrap();
        radius_gap = radius_gap.max((companion_spectral_radius(&a) - r.max(d.abs())).abs());
        // diagonal VAR(2): per-series roots of z^2 - a z - b
        let coefs: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-0.8..0.8))).collect();
        let mut phi = DMatrix::zeros(3, 6);
        let mut expected = 0.0f64;
        for (i, &(a1, a2)) in coefs.iter().enumerate() {
            phi[(i, i)] = a1;
            phi[(i, 3 + i)] = a2;
            let disc = a1 * a1 + 4.0 * a2;
            let root = if disc >= 0.0 { (a1.abs() + disc.sqrt()) / 2.0 } else { (-a2).sqrt() };
            expected = expected.max(root);
        }
        radius_gap = radius_gap.max((companion_spectral_radius(&phi) - expected).abs());
    }
    outcome(eig_gap < 1e-8 && radius_gap < 1e-8, format!("power method gap {eig_gap:.2e}, companion radius gap {radius_gap:.2e} (tol 1e-8)"))
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_varxl")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn write_csv(path: &Path, prefix: &str, values: &DMatrix<f64>) {
    let mut s = (1..=values.ncols()).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in 0..values.nrows() {
        s.push_str(&values.row(r).iter().map(|v| format!("{v:.12}")).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let inst = random_instance(12, 3, 2, 2, 1, 72);
    let endog = dir.path().join("y.csv");
    let exog = dir.path().join("x.csv");
    write_csv(&endog, "y", inst.endog.values());
    write_csv(&exog, "x", inst.exog.as_ref().unwrap().values());
    let (e, x) = (endog.to_str().unwrap(), exog.to_str().unwrap());
    let common = ["--endog", e, "--exog", x, "--p", "2", "--s", "1", "--gridpoints", "4", "--seed", "3"];
    let commands: Vec<Vec<&str>> = vec![
        [&["fit"][..], &common].concat(),
        [&["cv"][..], &common].concat(),
        [&["forecast"][..], &common].concat(),
        [&["evaluate", "--structure", "sparse_own_other"][..], &common].concat(),
        [&["compare", "--benchmarks", "mean,rw,aic,bic,bgr,factor", "--mcs", "--n-boot", "500"][..], &common].concat(),
        vec!["simulate", "--scenario", "3", "--reps", "1", "--structures", "basic,lag", "--benchmarks", "mean,bic", "--seed", "4"],
    ];
    let mut differing = Vec::new();
    for cmd in &commands {
        if run_cli(cmd) != run_cli(cmd) {
            differing.push(cmd[0]);
        }
    }
    outcome(differing.is_empty(), format!("{} commands rerun, differing: {:?}", commands.len(), differing))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("lambda_max boundary", c1_lambda_max),
        ("oracle equivalence", c2_oracle),
        ("cross-solver identities", c3_identities),
        ("KKT certification", c4_kkt),
        ("Minnesota identity", c5_minnesota),
        ("least-squares limit", c6_least_squares),
        ("rolling origin bookkeeping", c7_origins),
        ("simulation orderings", c8_simulation),
        ("BGR correctness", c9_bgr),
        ("MCS behavior", c10_mcs),
        ("numerical utilities", c11_numerics),
        ("CLI determinism", c12_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        // criterion 4 certifies the fits made by criteria 1 to 3
        if only.is_some_and(|o| o != n && !(o == 4 && n < 4)) {
            continue;
        }
        let res = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!res.pass);
        println!("criterion {n:>2} {} {name}: {}", if res.pass { "PASS" } else { "FAIL" }, res.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
