use nalgebra::DVector;

use super::basic::soft_threshold;
use super::group::{block_descent, BlockInfo, Plan};
use super::{check_design, initial_b, package, FitResult, Gram, SolverOptions};
use crate::error::{Result, VarxError};
use crate::penalties::{GroupPartition, PenaltyStructure};
use crate::varx::{LaggedDesign, VarxSpec};

/// Sparse group lasso: block coordinate descent over groups with an
/// accelerated proximal-gradient inner solver.
pub fn fit_sparse_group(
    design: &LaggedDesign,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    partition: &GroupPartition,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    if partition.nested {
        return Err(VarxError::Invalid("sparse group solver needs a non-nested partition".into()));
    }
    if !(0.0..=1.0).contains(&structure.alpha) {
        return Err(VarxError::Invalid(format!("alpha = {} is outside [0, 1]", structure.alpha)));
    }
    check_design(design, spec, lambda, opts)?;
    let gram = Gram::new(design);
    let plan = Plan::new(&gram, partition, BlockInfo::MaxEig);
    let b = initial_b(spec, opts)?;
    let alpha = structure.alpha;
    let inner = InnerOptions {
        tol: opts.tol * 1e-2,
        max_iter: 20 * opts.max_iter.max(250),
    };
    let raw = block_descent(&gram, &plan, b, opts, |q, r, old| {
        let w = plan.groups[q].weight;
        let group_thr = (1.0 - alpha) * lambda * w;
        let l1_thr = alpha * lambda;
        if r.norm() <= group_thr {
            return DVector::zeros(r.len());
        }
        let st = r.map(|x| soft_threshold(x, l1_thr));
        if st.norm() <= group_thr {
            return DVector::zeros(r.len());
        }
        group_prox_gradient(&plan, q, r, old, l1_thr, group_thr, &inner)
    });
    package(raw, design, spec, structure, partition, lambda)
}

struct InnerOptions {
    tol: f64,
    max_iter: usize,
}

fn shrink(u: &mut DVector<f64>, t: f64) {
    let n = u.norm();
    if n <= t {
        u.fill(0.0);
    } else {
        *u *= 1.0 - t / n;
    }
}

/// Minimizes `1/2 x'Hx - r'x + group_thr ||x|| + l1_thr ||x||_1` for one
/// group by proximal gradient with momentum `j/(j+3)` and restart.
fn group_prox_gradient(
    plan: &Plan,
    q: usize,
    r: &DVector<f64>,
    start: &DVector<f64>,
    l1_thr: f64,
    group_thr: f64,
    opts: &InnerOptions,
) -> DVector<f64> {
    let lip = plan.groups[q]
        .parts
        .iter()
        .map(|&(_, id)| plan.blocks[id].lmax)
        .fold(0.0, f64::max)
        * (1.0 + 1e-6);
    if lip <= 0.0 {
        return DVector::zeros(r.len());
    }
    let d = 1.0 / lip;
    let objective = |x: &DVector<f64>| -> f64 {
        0.5 * x.dot(&plan.hess_mul(q, x)) - r.dot(x) + group_thr * x.norm() + l1_thr * x.lp_norm(1)
    };
    let prox_step = |y: &DVector<f64>| -> DVector<f64> {
        let grad = plan.hess_mul(q, y) - r;
        let mut u = (y - grad * d).map(|v| soft_threshold(v, d * l1_thr));
        shrink(&mut u, d * group_thr);
        u
    };
    let mut x = start.clone();
    let mut fx = objective(&x);
    let mut y = x.clone();
    let mut j = 0usize;
    for _ in 0..opts.max_iter {
        let u = prox_step(&y);
        let fu = objective(&u);
        if fu > fx && j > 0 {
            // restart from the last iterate without momentum
            y = x.clone();
            j = 0;
            continue;
        }
        let change = (&u - &x).amax();
        let prev = std::mem::replace(&mut x, u);
        fx = fu;
        j += 1;
        if change < opts.tol {
            break;
        }
        let mom = j as f64 / (j as f64 + 3.0);
        y = &x + (&x - &prev) * mom;
    }
    x
}
