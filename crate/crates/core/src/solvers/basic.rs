use nalgebra::DMatrix;

use super::{check_design, initial_b, package, FitResult, Gram, RawFit, SolverOptions};
use crate::error::Result;
use crate::penalties::{group_partition, PenaltyKind, PenaltyStructure};
use crate::varx::{LaggedDesign, VarxSpec};

/// `sgn(x) * max(|x| - phi, 0)`.
pub fn soft_threshold(x: f64, phi: f64) -> f64 {
    debug_assert!(phi >= 0.0);
    if x > phi {
        x - phi
    } else if x < -phi {
        x + phi
    } else {
        0.0
    }
}

/// Lasso by cyclic coordinate descent over the entries of `B`.
pub fn fit_basic(
    design: &LaggedDesign,
    spec: &VarxSpec,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_design(design, spec, lambda, opts)?;
    let gram = Gram::new(design);
    let b = initial_b(spec, opts)?;
    let raw = coordinate_descent(&gram, b, lambda, opts);
    let structure = PenaltyStructure {
        kind: PenaltyKind::Basic,
        alpha: 1.0,
    };
    let partition = group_partition(spec, &structure)?;
    package(raw, design, spec, &structure, &partition, lambda)
}

pub(crate) fn coordinate_descent(
    gram: &Gram,
    mut b: DMatrix<f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> RawFit {
    let (k, d) = b.shape();
    let s = &gram.s;
    let mut g = gram.residual_corr(&b);
    let degenerate: Vec<bool> = (0..d).map(|j| s[(j, j)] <= 0.0).collect();
    if degenerate.iter().any(|x| *x) {
        log::warn!("zero-variance regressor columns are held at zero");
        for j in (0..d).filter(|&j| degenerate[j]) {
            for r in 0..k {
                b[(r, j)] = 0.0;
            }
        }
        g = gram.residual_corr(&b);
    }

    let update = |b: &mut DMatrix<f64>, g: &mut DMatrix<f64>, r: usize, j: usize| -> f64 {
        if degenerate[j] {
            return 0.0;
        }
        let sjj = s[(j, j)];
        let old = b[(r, j)];
        let new = soft_threshold(g[(r, j)] + old * sjj, lambda) / sjj;
        let delta = new - old;
        if delta != 0.0 {
            b[(r, j)] = new;
            for c in 0..d {
                g[(r, c)] -= delta * s[(j, c)];
            }
        }
        delta.abs()
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut change = 0.0f64;
        for j in 0..d {
            for r in 0..k {
                change = change.max(update(&mut b, &mut g, r, j));
            }
        }
        iterations += 1;
        if change < opts.tol {
            converged = true;
            break;
        }
        if opts.active_set {
            let active: Vec<(usize, usize)> = (0..d)
                .flat_map(|j| (0..k).map(move |r| (r, j)))
                .filter(|&(r, j)| b[(r, j)] != 0.0)
                .collect();
            while iterations < opts.max_iter {
                let mut change = 0.0f64;
                for &(r, j) in &active {
                    change = change.max(update(&mut b, &mut g, r, j));
                }
                iterations += 1;
                if change < opts.tol {
                    break;
                }
            }
        }
    }
    RawFit {
        b,
        iterations,
        converged,
    }
}
