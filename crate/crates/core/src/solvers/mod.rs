//! Solvers for the penalized least-squares problem
//! `1/2 ||Y - B Z||_F^2 + lambda * P(B)` on a centered lagged design.

mod basic;
mod endo_first;
mod group;
mod linalg;
mod sparse_group;

pub use basic::{fit_basic, soft_threshold};
pub use endo_first::{fit_endogenous_first, hierarchical_prox};
pub use group::{fit_lag_group, fit_own_other, trust_region_group_update};
pub use linalg::power_method_max_eig;
pub use sparse_group::fit_sparse_group;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};
use crate::penalties::{group_partition, penalty_value, GroupPartition, PenaltyKind, PenaltyStructure};
use crate::varx::{
    build_lagged_design, least_squares_objective, recover_intercept, CoefficientSet,
    LaggedDesign, MultivariateSeries, VarxSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the maximum absolute coefficient change per pass.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub warm_start: Option<CoefficientSet>,
    pub active_set: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 1000,
            warm_start: None,
            active_set: true,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_warm_start(mut self, warm: Option<CoefficientSet>) -> Self {
        self.warm_start = warm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(VarxError::Invalid(format!("tol must be positive (got {})", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(VarxError::Invalid("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fixed coefficient target the penalty shrinks toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinnesotaTarget {
    pub c_y: DMatrix<f64>,
    pub c_x: DMatrix<f64>,
}

impl MinnesotaTarget {
    /// `C_y = [I_k, 0, ..., 0]`, `C_x = 0`.
    pub fn random_walk(spec: &VarxSpec) -> Self {
        let mut c_y = DMatrix::zeros(spec.k, spec.k * spec.p);
        for i in 0..spec.k {
            c_y[(i, i)] = 1.0;
        }
        Self {
            c_y,
            c_x: DMatrix::zeros(spec.k, spec.m * spec.s),
        }
    }

    pub fn zeros(spec: &VarxSpec) -> Self {
        Self {
            c_y: DMatrix::zeros(spec.k, spec.k * spec.p),
            c_x: DMatrix::zeros(spec.k, spec.m * spec.s),
        }
    }

    pub fn new(c_y: DMatrix<f64>, c_x: DMatrix<f64>, spec: &VarxSpec) -> Result<Self> {
        let t = Self { c_y, c_x };
        t.check(spec)?;
        Ok(t)
    }

    fn check(&self, spec: &VarxSpec) -> Result<()> {
        if self.c_y.shape() != (spec.k, spec.k * spec.p)
            || self.c_x.shape() != (spec.k, spec.m * spec.s)
        {
            return Err(VarxError::Dimension(format!(
                "target is {:?} / {:?}, spec needs {}x{} / {}x{}",
                self.c_y.shape(),
                self.c_x.shape(),
                spec.k,
                spec.k * spec.p,
                spec.k,
                spec.m * spec.s
            )));
        }
        Ok(())
    }

    /// `[C_y, C_x]`.
    pub fn b(&self) -> DMatrix<f64> {
        let k = self.c_y.nrows();
        let (a, b) = (self.c_y.ncols(), self.c_x.ncols());
        let mut out = DMatrix::zeros(k, a + b);
        out.columns_mut(0, a).copy_from(&self.c_y);
        out.columns_mut(a, b).copy_from(&self.c_x);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coeffs: CoefficientSet,
    /// Penalized objective at the returned coefficients (deviations from the
    /// target when a Minnesota target is used).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Share of the `k(kp+ms)` slope coefficients that are exactly zero.
    pub sparsity_ratio: f64,
    /// Indices into the partition of groups with a nonzero coefficient.
    pub active_groups: Vec<usize>,
}

/// Share of exactly-zero entries.
pub fn sparsity_ratio(b: &DMatrix<f64>) -> f64 {
    if b.is_empty() {
        return 1.0;
    }
    b.iter().filter(|v| **v == 0.0).count() as f64 / b.len() as f64
}

/// Gram quantities of a centered design: `S = Z Z^T`, `C = Y Z^T`.
pub(crate) struct Gram {
    pub s: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl Gram {
    pub fn new(design: &LaggedDesign) -> Self {
        let zt = design.z.transpose();
        Self {
            s: &design.z * &zt,
            c: &design.y * &zt,
        }
    }

    /// `C - B S`.
    pub fn residual_corr(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.c - b * &self.s
    }
}

/// Outcome of a solver before packaging.
pub(crate) struct RawFit {
    pub b: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn check_design(design: &LaggedDesign, spec: &VarxSpec, lambda: f64, opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(VarxError::Invalid(format!("lambda must be finite and >= 0 (got {lambda})")));
    }
    if !design.centered {
        return Err(VarxError::Invalid("solvers need a centered design".into()));
    }
    if design.k() != spec.k || design.n_regressors() != spec.n_regressors() {
        return Err(VarxError::Dimension("design does not match spec".into()));
    }
    Ok(())
}

pub(crate) fn initial_b(spec: &VarxSpec, opts: &SolverOptions) -> Result<DMatrix<f64>> {
    match &opts.warm_start {
        Some(w) => {
            let b = w.b();
            if b.shape() != (spec.k, spec.n_regressors()) {
                return Err(VarxError::Dimension("warm start does not match spec".into()));
            }
            Ok(b)
        }
        None => Ok(DMatrix::zeros(spec.k, spec.n_regressors())),
    }
}

pub(crate) fn package(
    raw: RawFit,
    design: &LaggedDesign,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    partition: &GroupPartition,
    lambda: f64,
) -> Result<FitResult> {
    if !raw.b.iter().all(|v| v.is_finite()) {
        return Err(VarxError::Numerical("solver produced non-finite coefficients".into()));
    }
    if !raw.converged {
        log::warn!(
            "{} solver stopped after {} iterations without reaching tolerance (lambda = {lambda:.4e})",
            structure.kind,
            raw.iterations
        );
    }
    let nu = recover_intercept(&raw.b, &design.y_bar, &design.z_bar)?;
    let objective =
        least_squares_objective(design, &raw.b) + lambda * penalty_value(&raw.b, structure, partition);
    let active_groups = partition
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.entries.iter().any(|&(r, c)| raw.b[(r, c)] != 0.0))
        .map(|(i, _)| i)
        .collect();
    Ok(FitResult {
        sparsity_ratio: sparsity_ratio(&raw.b),
        coeffs: CoefficientSet::from_b(nu, &raw.b, spec)?,
        objective,
        iterations: raw.iterations,
        converged: raw.converged,
        active_groups,
    })
}

/// Fits any structure on a centered design.
pub fn fit_design(
    design: &LaggedDesign,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let partition = group_partition(spec, structure)?;
    fit_with_partition(design, spec, structure, &partition, lambda, opts)
}

/// As [`fit_design`] with a precomputed partition.
pub fn fit_with_partition(
    design: &LaggedDesign,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    partition: &GroupPartition,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<FitResult> {
    match structure.kind {
        PenaltyKind::Basic => fit_basic(design, spec, lambda, opts),
        PenaltyKind::LagGroup => fit_lag_group(design, spec, partition, lambda, opts),
        PenaltyKind::OwnOther => fit_own_other(design, spec, partition, lambda, opts),
        PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => {
            fit_sparse_group(design, spec, structure, partition, lambda, opts)
        }
        PenaltyKind::EndogenousFirst => fit_endogenous_first(design, spec, lambda, opts),
    }
}

/// Builds the `spec.h`-step design from the series, optionally shrinking
/// toward `minnesota`, fits, and recovers the intercept.
pub fn fit(
    endog: &MultivariateSeries,
    exog: Option<&MultivariateSeries>,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    lambda: f64,
    minnesota: Option<&MinnesotaTarget>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let mut design = build_lagged_design(endog, exog, spec, spec.h, false)?;
    match minnesota {
        None => {
            design.center();
            fit_design(&design, spec, structure, lambda, opts)
        }
        Some(target) => {
            target.check(spec)?;
            let c = target.b();
            design.subtract_target(&c)?;
            design.center();
            fit_design_with_target(&design, spec, structure, lambda, &c, opts)
        }
    }
}

/// Fits deviations from `target` on a design whose response already had
/// `target * Z` removed, then adds the target back.
pub fn fit_design_with_target(
    design: &LaggedDesign,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    lambda: f64,
    target: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let mut inner_opts = opts.clone();
    if let Some(w) = &opts.warm_start {
        let shifted = w.b() - target;
        inner_opts.warm_start = Some(CoefficientSet::from_b(w.nu.clone(), &shifted, spec)?);
    }
    let mut res = fit_design(design, spec, structure, lambda, &inner_opts)?;
    let b = res.coeffs.b() + target;
    res.coeffs = CoefficientSet::from_b(res.coeffs.nu.clone(), &b, spec)?;
    res.sparsity_ratio = sparsity_ratio(&b);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        assert!(SolverOptions::default().with_tol(0.0).validate().is_err());
        assert!(SolverOptions::default().with_max_iter(0).validate().is_err());
    }

    #[test]
    fn random_walk_target_shape() {
        let spec = VarxSpec::new(2, 1, 2, 1, 1).unwrap();
        let t = MinnesotaTarget::random_walk(&spec);
        let b = t.b();
        assert_eq!(b.shape(), (2, 5));
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(1, 1)], 1.0);
        assert_eq!(b.sum(), 2.0);
    }

    #[test]
    fn sparsity_counts_zeros() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sparsity_ratio(&b), 0.75);
    }
}
