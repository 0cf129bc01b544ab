//! Test-only reference implementations used to check the production solvers.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use varxl::penalties::{group_partition, penalty_value, GroupKind, GroupPartition, PenaltyKind, PenaltyStructure};
use varxl::varx::{build_lagged_design, least_squares_objective, LaggedDesign, MultivariateSeries, VarxSpec};

pub struct Instance {
    pub endog: MultivariateSeries,
    pub exog: Option<MultivariateSeries>,
    pub spec: VarxSpec,
    pub design: LaggedDesign,
}

/// Simulates a small stable VARX with sparse random coefficients and returns
/// the centered 1-step design.
pub fn random_instance(seed: u64, k: usize, m: usize, p: usize, s: usize, t: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = VarxSpec::new(k, m, p, s, 1).unwrap();
    let d = k * p + m * s;
    let mut b = DMatrix::<f64>::zeros(k, d);
    for r in 0..k {
        for c in 0..d {
            if rng.random_bool(0.6) {
                b[(r, c)] = rng.random_range(-0.4..0.4) / (p as f64);
            }
        }
    }
    let burn = 50;
    let n = t + burn;
    let x = DMatrix::from_fn(n, m.max(1), |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = DMatrix::<f64>::zeros(n, k);
    for tt in 0..n {
        for i in 0..k {
            let mut v: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
            for lag in 1..=p {
                if tt >= lag {
                    for j in 0..k {
                        v += b[(i, (lag - 1) * k + j)] * y[(tt - lag, j)];
                    }
                }
            }
            for lag in 1..=s {
                if tt >= lag {
                    for j in 0..m {
                        v += b[(i, k * p + (lag - 1) * m + j)] * x[(tt - lag, j)];
                    }
                }
            }
            y[(tt, i)] = v.clamp(-50.0, 50.0);
        }
    }
    let endog = MultivariateSeries::new(y.rows(burn, t).into_owned(), None).unwrap();
    let exog = (m > 0).then(|| {
        MultivariateSeries::new(x.rows(burn, t).columns(0, m).into_owned(), Some((1..=m).map(|i| format!("x{i}")).collect())).unwrap()
    });
    let design = build_lagged_design(&endog, exog.as_ref(), &spec, 1, true).unwrap();
    Instance {
        endog,
        exog,
        spec,
        design,
    }
}

pub fn full_objective(design: &LaggedDesign, b: &DMatrix<f64>, structure: &PenaltyStructure, partition: &GroupPartition, lambda: f64) -> f64 {
    least_squares_objective(design, b) + lambda * penalty_value(b, structure, partition)
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn shrink_entries(b: &mut DMatrix<f64>, entries: &[(usize, usize)], t: f64) {
    let n = entries.iter().map(|&(r, c)| b[(r, c)].powi(2)).sum::<f64>().sqrt();
    let f = if n <= t { 0.0 } else { 1.0 - t / n };
    for &(r, c) in entries {
        b[(r, c)] *= f;
    }
}

/// Prox of `t * (ball_a ||u|| + ball_b ||u_inner||)` by block coordinate
/// ascent on the dual (alternating projections of the two dual variables).
pub fn nested_prox_dual(v: &[f64], inner: &[usize], t: f64) -> Vec<f64> {
    let n = v.len();
    let mut xi1 = vec![0.0; n];
    let mut xi2 = vec![0.0; n];
    let project = |w: &mut [f64], radius: f64| {
        let nn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nn > radius {
            w.iter_mut().for_each(|x| *x *= radius / nn);
        }
    };
    for _ in 0..10_000 {
        let mut w1: Vec<f64> = (0..n).map(|i| v[i] - xi2[i]).collect();
        project(&mut w1, t);
        let mut w2: Vec<f64> = inner.iter().map(|&i| v[i] - w1[i]).collect();
        project(&mut w2, t);
        let mut next2 = vec![0.0; n];
        for (j, &i) in inner.iter().enumerate() {
            next2[i] = w2[j];
        }
        let change = (0..n)
            .map(|i| (w1[i] - xi1[i]).abs().max((next2[i] - xi2[i]).abs()))
            .fold(0.0, f64::max);
        xi1 = w1;
        xi2 = next2;
        if change < 1e-15 {
            break;
        }
    }
    (0..n).map(|i| v[i] - xi1[i] - xi2[i]).collect()
}

/// Prox of `t * P(B)` built from the partition.
pub fn oracle_prox(v: &DMatrix<f64>, structure: &PenaltyStructure, partition: &GroupPartition, t: f64) -> DMatrix<f64> {
    let mut b = v.clone();
    match structure.kind {
        PenaltyKind::Basic => b.apply(|x| *x = soft(*x, t)),
        PenaltyKind::LagGroup | PenaltyKind::OwnOther => {
            for g in &partition.groups {
                shrink_entries(&mut b, &g.entries, t * g.weight);
            }
        }
        PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => {
            let a = structure.alpha;
            b.apply(|x| *x = soft(*x, t * a));
            for g in &partition.groups {
                shrink_entries(&mut b, &g.entries, t * (1.0 - a) * g.weight);
            }
        }
        PenaltyKind::EndogenousFirst => {
            for pair in partition.groups.chunks(2) {
                assert_eq!(pair[0].kind, GroupKind::NestedOuter);
                let outer = &pair[0].entries;
                let inner: Vec<usize> = pair[1]
                    .entries
                    .iter()
                    .map(|e| outer.iter().position(|o| o == e).unwrap())
                    .collect();
                let vals: Vec<f64> = outer.iter().map(|&(r, c)| v[(r, c)]).collect();
                let u = nested_prox_dual(&vals, &inner, t);
                for (i, &(r, c)) in outer.iter().enumerate() {
                    b[(r, c)] = u[i];
                }
            }
        }
    }
    b
}

/// Generic accelerated proximal gradient on the full coefficient matrix.
pub fn oracle_fit(design: &LaggedDesign, spec: &VarxSpec, structure: &PenaltyStructure, lambda: f64, max_iter: usize) -> DMatrix<f64> {
    let partition = group_partition(spec, structure).unwrap();
    oracle_fit_from(design, structure, &partition, lambda, max_iter, DMatrix::zeros(spec.k, spec.n_regressors()))
}

pub fn oracle_fit_from(
    design: &LaggedDesign,
    structure: &PenaltyStructure,
    partition: &GroupPartition,
    lambda: f64,
    max_iter: usize,
    start: DMatrix<f64>,
) -> DMatrix<f64> {
    let s = &design.z * design.z.transpose();
    let c = &design.y * design.z.transpose();
    let lip = s.clone().symmetric_eigen().eigenvalues.max() * (1.0 + 1e-9);
    let step = 1.0 / lip;
    let obj = |b: &DMatrix<f64>| full_objective(design, b, structure, partition, lambda);
    let mut x = start;
    let mut fx = obj(&x);
    let mut y = x.clone();
    let mut tk = 1.0f64;
    for _ in 0..max_iter {
        let grad = &y * &s - &c;
        let u = oracle_prox(&(&y - grad * step), structure, partition, step * lambda);
        let fu = obj(&u);
        if fu > fx {
            y = x.clone();
            tk = 1.0;
            continue;
        }
        let change = (&u - &x).amax();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let prev = std::mem::replace(&mut x, u);
        fx = fu;
        y = &x + (&x - &prev) * ((tk - 1.0) / t_next);
        tk = t_next;
        if change < 1e-14 {
            break;
        }
    }
    x
}

/// Least squares `B = argmin ||Y - B Z||` through a QR factorization of `Z'`.
pub fn qr_least_squares(design: &LaggedDesign) -> DMatrix<f64> {
    let zt = design.z.transpose();
    let qr = zt.qr();
    let qty = qr.q().transpose() * design.y.transpose();
    let bt = qr.r().solve_upper_triangular(&qty).expect("full column rank");
    bt.transpose()
}

/// Distance of the gradient `C - B S` from `lambda * subdifferential` at `B`,
/// measured blockwise: zero blocks use the screening inequality, nonzero
/// blocks the stationarity residual. Returns the worst violation.
pub fn kkt_violation(design: &LaggedDesign, b: &DMatrix<f64>, structure: &PenaltyStructure, partition: &GroupPartition, lambda: f64) -> f64 {
    let s = &design.z * design.z.transpose();
    let g = &design.y * design.z.transpose() - b * &s;
    let mut worst = 0.0f64;
    let vals = |m: &DMatrix<f64>, e: &[(usize, usize)]| -> DVector<f64> { DVector::from_iterator(e.len(), e.iter().map(|&(r, c)| m[(r, c)])) };
    match structure.kind {
        PenaltyKind::Basic => {
            for (bv, gv) in b.iter().zip(g.iter()) {
                let v = if *bv == 0.0 { (gv.abs() - lambda).max(0.0) } else { (gv - lambda * bv.signum()).abs() };
                worst = worst.max(v);
            }
        }
        PenaltyKind::LagGroup | PenaltyKind::OwnOther => {
            for grp in &partition.groups {
                let phi = vals(b, &grp.entries);
                let gq = vals(&g, &grp.entries);
                let lq = lambda * grp.weight;
                let v = if phi.norm() == 0.0 { (gq.norm() - lq).max(0.0) } else { (&gq - &phi * (lq / phi.norm())).norm() };
                worst = worst.max(v);
            }
        }
        PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => {
            let a = structure.alpha;
            for grp in &partition.groups {
                let phi = vals(b, &grp.entries);
                let gq = vals(&g, &grp.entries);
                let lg = (1.0 - a) * lambda * grp.weight;
                let l1 = a * lambda;
                let v = if phi.norm() == 0.0 {
                    let st = gq.map(|x| soft(x, l1));
                    (st.norm() - lg).max(0.0)
                } else {
                    let n = phi.norm();
                    let mut r = 0.0f64;
                    for i in 0..phi.len() {
                        let rem = gq[i] - lg * phi[i] / n;
                        let e = if phi[i] == 0.0 { (rem.abs() - l1).max(0.0) } else { (rem - l1 * phi[i].signum()).abs() };
                        r = r.max(e);
                    }
                    r
                };
                worst = worst.max(v);
            }
        }
        PenaltyKind::EndogenousFirst => {
            // nonzero pairs: fixed-point residual of the proximal-gradient map, in gradient units
            let lip = s.clone().symmetric_eigen().eigenvalues.max();
            let step = 1.0 / lip;
            let moved = oracle_prox(&(b + &g * step), structure, partition, step * lambda);
            let fixed = (b - moved) / step;
            for pair in partition.groups.chunks(2) {
                let (outer, inner) = (&pair[0].entries, &pair[1].entries);
                let v = if outer.iter().all(|&(r, c)| b[(r, c)] == 0.0) {
                    // zero pairs: some xi on the inner entries with ||xi|| <= lambda
                    // and ||g - xi|| <= lambda; the best xi is g_inner clipped to the ball
                    let gi = vals(&g, inner).norm();
                    let go = vals(&g, outer).norm();
                    let a2 = (go * go - gi * gi).max(0.0);
                    ((a2 + (gi - lambda).max(0.0).powi(2)).sqrt() - lambda).max(0.0)
                } else {
                    vals(&fixed, outer).amax()
                };
                worst = worst.max(v);
            }
        }
    }
    worst
}

pub fn structure(kind: PenaltyKind, k: usize) -> PenaltyStructure {
    PenaltyStructure::with_default_alpha(kind, k)
}
