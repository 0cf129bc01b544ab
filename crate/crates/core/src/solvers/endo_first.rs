use nalgebra::{DMatrix, DVector};

use super::{check_design, initial_b, package, power_method_max_eig, FitResult, Gram, RawFit, SolverOptions};
use crate::error::Result;
use crate::penalties::{group_partition, PenaltyKind, PenaltyStructure};
use crate::varx::{LaggedDesign, VarxSpec};

fn shrink_in_place(v: &mut [f64], t: f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= t {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let f = 1.0 - t / n;
        v.iter_mut().for_each(|x| *x *= f);
    }
}

/// Proximal operator of `lambda_step * (||v|| + ||v_exo||)` where `v` holds
/// `k` endogenous entries followed by `m` exogenous entries of one row and
/// lag. Shrinks the exogenous block first, then the whole block.
pub fn hierarchical_prox(v: &DVector<f64>, lambda_step: f64, k: usize, m: usize) -> DVector<f64> {
    assert_eq!(v.len(), k + m, "row-lag block must have k + m entries");
    let mut out = v.clone();
    if m > 0 {
        shrink_in_place(&mut out.as_mut_slice()[k..], lambda_step);
    }
    shrink_in_place(out.as_mut_slice(), lambda_step);
    out
}

/// Applies [`hierarchical_prox`] to every lag block of a full row of `B`.
fn row_prox(row: &mut DVector<f64>, t: f64, spec: &VarxSpec) {
    let (k, m, p, s) = (spec.k, spec.m, spec.p, spec.s);
    let kp = k * p;
    let mut buf = Vec::with_capacity(k + m);
    for lag in 1..=p {
        let endo = (lag - 1) * k..lag * k;
        let exo = if lag <= s { kp + (lag - 1) * m..kp + lag * m } else { 0..0 };
        buf.clear();
        buf.extend(endo.clone().map(|c| row[c]));
        buf.extend(exo.clone().map(|c| row[c]));
        let v = DVector::from_column_slice(&buf);
        let u = hierarchical_prox(&v, t, k, exo.len());
        for (i, c) in endo.chain(exo).enumerate() {
            row[c] = u[i];
        }
    }
}

fn row_penalty(row: &DVector<f64>, spec: &VarxSpec) -> f64 {
    let (k, m, p, s) = (spec.k, spec.m, spec.p, spec.s);
    let kp = k * p;
    let mut total = 0.0;
    for lag in 1..=p {
        let endo: f64 = ((lag - 1) * k..lag * k).map(|c| row[c] * row[c]).sum();
        let exo: f64 = if lag <= s {
            (kp + (lag - 1) * m..kp + lag * m).map(|c| row[c] * row[c]).sum()
        } else {
            0.0
        };
        total += (endo + exo).sqrt() + exo.sqrt();
    }
    total
}

/// Nested exogenous-within-endogenous group penalty, fit row by row with
/// accelerated proximal gradient.
pub fn fit_endogenous_first(
    design: &LaggedDesign,
    spec: &VarxSpec,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let structure = PenaltyStructure {
        kind: PenaltyKind::EndogenousFirst,
        alpha: 0.0,
    };
    let partition = group_partition(spec, &structure)?;
    check_design(design, spec, lambda, opts)?;
    let gram = Gram::new(design);
    let b = initial_b(spec, opts)?;
    let raw = endo_first_rows(&gram, b, spec, lambda, opts);
    package(raw, design, spec, &structure, &partition, lambda)
}

fn endo_first_rows(gram: &Gram, mut b: DMatrix<f64>, spec: &VarxSpec, lambda: f64, opts: &SolverOptions) -> RawFit {
    let s = &gram.s;
    let (lmax, _) = power_method_max_eig(s, None);
    let mut iterations = 0;
    let mut converged = true;
    if lmax <= 0.0 {
        log::warn!("design has no regressor variation; coefficients held at zero");
        b.fill(0.0);
        return RawFit {
            b,
            iterations,
            converged,
        };
    }
    let step = 1.0 / (lmax * (1.0 + 1e-6));
    let t = step * lambda;
    // a proximal step moves coefficients by about (stationarity residual)/L,
    // so the change threshold is taken in gradient units
    let tol = opts.tol / lmax.max(1.0);
    for i in 0..spec.k {
        let c: DVector<f64> = gram.c.row(i).transpose();
        let objective = |x: &DVector<f64>| -> f64 {
            0.5 * x.dot(&(s * x)) - c.dot(x) + lambda * row_penalty(x, spec)
        };
        let mut x: DVector<f64> = b.row(i).transpose();
        let mut fx = objective(&x);
        let mut y = x.clone();
        let mut j = 2usize;
        let mut row_done = false;
        let mut n = 0;
        while n < opts.max_iter {
            n += 1;
            let grad = s * &y - &c;
            let mut u = &y - grad * step;
            row_prox(&mut u, t, spec);
            let fu = objective(&u);
            if fu > fx && j > 2 {
                y = x.clone();
                j = 2;
                continue;
            }
            // step length from the extrapolated point bounds the stationarity residual at `u`
            let change = (&u - &y).amax().max((&u - &x).amax());
            let prev = std::mem::replace(&mut x, u);
            fx = fu;
            j += 1;
            if change < tol {
                row_done = true;
                break;
            }
            let mom = (j as f64 - 2.0) / (j as f64 + 1.0);
            y = &x + (&x - &prev) * mom;
        }
        converged &= row_done;
        iterations = iterations.max(n);
        b.set_row(i, &x.transpose());
    }
    RawFit {
        b,
        iterations,
        converged,
    }
}
