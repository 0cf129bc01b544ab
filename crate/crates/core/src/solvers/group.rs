use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{check_design, initial_b, package, power_method_max_eig, FitResult, Gram, RawFit, SolverOptions};
use crate::error::{Result, VarxError};
use crate::penalties::{GroupKind, GroupPartition, PenaltyKind, PenaltyStructure};
use crate::varx::{LaggedDesign, VarxSpec};

/// Gram sub-block `S[J, J]` shared by every group row that uses columns `J`.
pub(crate) struct Block {
    pub cols: Vec<usize>,
    pub s: DMatrix<f64>,
    pub vals: DVector<f64>,
    pub vecs: DMatrix<f64>,
    pub lmax: f64,
}

pub(crate) struct PlannedGroup {
    /// `(row of B, block index)`; the group vector is the concatenation of
    /// the parts' `B[row, block.cols]`.
    pub parts: Vec<(usize, usize)>,
    pub weight: f64,
    pub len: usize,
    pub degenerate: bool,
}

pub(crate) struct Plan {
    pub blocks: Vec<Block>,
    pub groups: Vec<PlannedGroup>,
}

pub(crate) enum BlockInfo {
    Eigen,
    MaxEig,
}

impl Plan {
    pub fn new(gram: &Gram, partition: &GroupPartition, info: BlockInfo) -> Self {
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut blocks: Vec<Block> = Vec::new();
        let mut warm: HashMap<usize, DVector<f64>> = HashMap::new();
        let mut groups = Vec::with_capacity(partition.groups.len());
        for g in &partition.groups {
            let mut parts = Vec::new();
            for (row, cols) in g.row_parts() {
                let id = *index.entry(cols.clone()).or_insert_with(|| {
                    let n = cols.len();
                    let s = DMatrix::from_fn(n, n, |i, j| gram.s[(cols[i], cols[j])]);
                    let (vals, vecs, lmax) = match info {
                        BlockInfo::Eigen => {
                            let e = s.clone().symmetric_eigen();
                            let lmax = e.eigenvalues.max().max(0.0);
                            (e.eigenvalues, e.eigenvectors, lmax)
                        }
                        BlockInfo::MaxEig => {
                            let (l, v) = power_method_max_eig(&s, warm.get(&n));
                            warm.insert(n, v);
                            (DVector::zeros(0), DMatrix::zeros(0, 0), l)
                        }
                    };
                    blocks.push(Block {
                        cols,
                        s,
                        vals,
                        vecs,
                        lmax,
                    });
                    blocks.len() - 1
                });
                parts.push((row, id));
            }
            let degenerate = parts
                .iter()
                .all(|&(_, id)| (0..blocks[id].cols.len()).all(|i| blocks[id].s[(i, i)] <= 0.0));
            groups.push(PlannedGroup {
                len: g.len(),
                parts,
                weight: g.weight,
                degenerate,
            });
        }
        Plan { blocks, groups }
    }

    pub fn gather(&self, b: &DMatrix<f64>, q: usize) -> DVector<f64> {
        let g = &self.groups[q];
        let mut out = DVector::zeros(g.len);
        let mut off = 0;
        for &(row, id) in &g.parts {
            for &c in &self.blocks[id].cols {
                out[off] = b[(row, c)];
                off += 1;
            }
        }
        out
    }

    /// `H x` where `H` is the group's block-diagonal Hessian.
    pub fn hess_mul(&self, q: usize, x: &DVector<f64>) -> DVector<f64> {
        let g = &self.groups[q];
        let mut out = DVector::zeros(g.len);
        let mut off = 0;
        for &(_, id) in &g.parts {
            let blk = &self.blocks[id];
            let n = blk.cols.len();
            let y = &blk.s * x.rows(off, n);
            out.rows_mut(off, n).copy_from(&y);
            off += n;
        }
        out
    }

    /// Correlation of the group's regressors with the residual that excludes
    /// the group itself: `G_q + H phi_q`.
    pub fn partial_corr(&self, g: &DMatrix<f64>, q: usize, phi: &DVector<f64>) -> DVector<f64> {
        let grp = &self.groups[q];
        let mut out = self.hess_mul(q, phi);
        let mut off = 0;
        for &(row, id) in &grp.parts {
            for &c in &self.blocks[id].cols {
                out[off] += g[(row, c)];
                off += 1;
            }
        }
        out
    }

    /// Writes `new` into `B` and updates `G = C - B S`. Returns the largest
    /// absolute change.
    pub fn write(
        &self,
        b: &mut DMatrix<f64>,
        g: &mut DMatrix<f64>,
        s: &DMatrix<f64>,
        q: usize,
        old: &DVector<f64>,
        new: &DVector<f64>,
    ) -> f64 {
        let grp = &self.groups[q];
        let d = s.ncols();
        let mut change = 0.0f64;
        let mut off = 0;
        for &(row, id) in &grp.parts {
            for &c in &self.blocks[id].cols {
                let delta = new[off] - old[off];
                off += 1;
                if delta == 0.0 {
                    continue;
                }
                change = change.max(delta.abs());
                b[(row, c)] = new[off - 1];
                for j in 0..d {
                    g[(row, j)] -= delta * s[(c, j)];
                }
            }
        }
        change
    }
}

/// Block coordinate descent with an active-set strategy. `solve` maps a
/// group's partial correlation and current value to its new value.
pub(crate) fn block_descent<F>(
    gram: &Gram,
    plan: &Plan,
    mut b: DMatrix<f64>,
    opts: &SolverOptions,
    mut solve: F,
) -> RawFit
where
    F: FnMut(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let degenerate: Vec<usize> = (0..plan.groups.len()).filter(|&q| plan.groups[q].degenerate).collect();
    if !degenerate.is_empty() {
        log::warn!("{} coefficient group(s) have zero-variance regressors and are held at zero", degenerate.len());
        for &q in &degenerate {
            let grp = &plan.groups[q];
            for &(row, id) in &grp.parts {
                for &c in &plan.blocks[id].cols {
                    b[(row, c)] = 0.0;
                }
            }
        }
    }
    let mut g = gram.residual_corr(&b);

    let mut step = |b: &mut DMatrix<f64>, g: &mut DMatrix<f64>, q: usize| -> f64 {
        if plan.groups[q].degenerate {
            return 0.0;
        }
        let old = plan.gather(b, q);
        let r = plan.partial_corr(g, q, &old);
        let new = solve(q, &r, &old);
        plan.write(b, g, &gram.s, q, &old, &new)
    };

    let n_groups = plan.groups.len();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut change = 0.0f64;
        for q in 0..n_groups {
            change = change.max(step(&mut b, &mut g, q));
        }
        iterations += 1;
        if change < opts.tol {
            converged = true;
            break;
        }
        if opts.active_set {
            let active: Vec<usize> = (0..n_groups)
                .filter(|&q| plan.gather(&b, q).iter().any(|v| *v != 0.0))
                .collect();
            while iterations < opts.max_iter {
                let mut change = 0.0f64;
                for &q in &active {
                    change = change.max(step(&mut b, &mut g, q));
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

/// Root `Delta > 0` of `sum_i a_i^2 / (v_i Delta + lambda)^2 = 1`, found by
/// Newton's method on `1 - 1/||y(Delta)||` with a bisection safeguard.
/// Requires `||a|| > lambda > 0` and `v_i > 0`.
fn secular_root(vals: &[f64], a: &[f64], lambda: f64) -> f64 {
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let vmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let eval = |x: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut gp = 0.0;
        for (&v, &ai) in vals.iter().zip(a) {
            let den = v * x + lambda;
            let t = ai * ai / (den * den);
            g += t;
            gp -= 2.0 * t * v / den;
        }
        let f = 1.0 - 1.0 / g.sqrt();
        (f, 0.5 * gp / (g * g.sqrt()))
    };
    let mut lo = 0.0;
    let mut hi = (norm_a - lambda) / vmin;
    let mut x = norm_a / lambda;
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for it in 0..400 {
        let (f, fp) = eval(x);
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if f.abs() < 1e-15 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let newton = x - f / fp;
        x = if it < 100 && fp < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Minimizer of `1/2 phi' H phi - r' phi + lambda ||phi||` given the
/// eigenvalues `v` and eigenvectors `W` of `H` (columns), with `H` positive
/// semidefinite. Returns zero when `||r|| <= lambda`.
pub fn trust_region_group_update(
    eigvals: &DVector<f64>,
    eigvecs: &DMatrix<f64>,
    r: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let a = eigvecs.transpose() * r;
    let coef = group_coefficients(eigvals.as_slice(), a.as_slice(), lambda);
    eigvecs * DVector::from_vec(coef)
}

/// Rotated-coordinate solution: entry `i` multiplies eigenvector `i`.
fn group_coefficients(vals: &[f64], a: &[f64], lambda: f64) -> Vec<f64> {
    let vmax = vals.iter().copied().fold(0.0f64, f64::max);
    let floor = 1e-12 * vmax.max(f64::MIN_POSITIVE);
    let keep: Vec<bool> = vals.iter().map(|&v| v > floor).collect();
    let norm_a = a
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt();
    if vmax <= 0.0 || norm_a <= lambda {
        return vec![0.0; a.len()];
    }
    if lambda == 0.0 {
        return vals
            .iter()
            .zip(a)
            .zip(&keep)
            .map(|((&v, &ai), &k)| if k { ai / v } else { 0.0 })
            .collect();
    }
    let (kv, ka): (Vec<f64>, Vec<f64>) = vals
        .iter()
        .zip(a)
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|((&v, &ai), _)| (v, ai))
        .unzip();
    let delta = secular_root(&kv, &ka, lambda);
    vals.iter()
        .zip(a)
        .zip(&keep)
        .map(|((&v, &ai), &k)| if k { delta * ai / (v * delta + lambda) } else { 0.0 })
        .collect()
}

/// Exact group update using the cached block eigendecompositions.
pub(crate) fn exact_group_solve(plan: &Plan, q: usize, r: &DVector<f64>, lambda_q: f64) -> DVector<f64> {
    let grp = &plan.groups[q];
    if r.norm() <= lambda_q {
        return DVector::zeros(grp.len);
    }
    let mut vals = Vec::with_capacity(grp.len);
    let mut a = Vec::with_capacity(grp.len);
    let mut off = 0;
    for &(_, id) in &grp.parts {
        let blk = &plan.blocks[id];
        let n = blk.cols.len();
        let rot = blk.vecs.transpose() * r.rows(off, n);
        vals.extend(blk.vals.iter().copied());
        a.extend(rot.iter().copied());
        off += n;
    }
    let coef = group_coefficients(&vals, &a, lambda_q);
    let mut out = DVector::zeros(grp.len);
    let mut off = 0;
    for &(_, id) in &grp.parts {
        let blk = &plan.blocks[id];
        let n = blk.cols.len();
        let c = DVector::from_column_slice(&coef[off..off + n]);
        out.rows_mut(off, n).copy_from(&(&blk.vecs * c));
        off += n;
    }
    out
}

fn fit_group(
    design: &LaggedDesign,
    spec: &VarxSpec,
    partition: &GroupPartition,
    kind: PenaltyKind,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_design(design, spec, lambda, opts)?;
    let gram = Gram::new(design);
    let plan = Plan::new(&gram, partition, BlockInfo::Eigen);
    let b = initial_b(spec, opts)?;
    let raw = block_descent(&gram, &plan, b, opts, |q, r, _| {
        exact_group_solve(&plan, q, r, lambda * plan.groups[q].weight)
    });
    let structure = PenaltyStructure { kind, alpha: 0.0 };
    package(raw, design, spec, &structure, partition, lambda)
}

/// Group lasso over whole lag matrices and exogenous columns.
pub fn fit_lag_group(
    design: &LaggedDesign,
    spec: &VarxSpec,
    partition: &GroupPartition,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    if partition.nested
        || partition
            .groups
            .iter()
            .any(|g| !matches!(g.kind, GroupKind::EndogLag | GroupKind::ExogColumn))
    {
        return Err(VarxError::Invalid("fit_lag_group needs a lag partition".into()));
    }
    fit_group(design, spec, partition, PenaltyKind::LagGroup, lambda, opts)
}

/// Group lasso with separate own-lag (diagonal) and cross-lag groups.
pub fn fit_own_other(
    design: &LaggedDesign,
    spec: &VarxSpec,
    partition: &GroupPartition,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    if partition.nested
        || partition.groups.iter().any(|g| {
            !matches!(g.kind, GroupKind::OwnDiag | GroupKind::OtherOffDiag | GroupKind::ExogColumn)
        })
    {
        return Err(VarxError::Invalid("fit_own_other needs an own/other partition".into()));
    }
    fit_group(design, spec, partition, PenaltyKind::OwnOther, lambda, opts)
}
