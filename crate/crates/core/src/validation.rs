//! Rolling-origin penalty selection and out-of-sample forecast evaluation.
//!
//! Time indices follow a "data through `t`" convention: origin `t` uses the
//! first `t` rows and its `h`-step forecast targets row `t + h - 1`
//! (0-based). With `T1 = floor(T/3)` and `T2 = floor(2T/3)`, selection uses
//! origins `T1..=T2-h` and evaluation origins `T2-h..=T-h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};
use crate::penalties::{group_partition, lambda_grid, lambda_max, LambdaGrid, PenaltyStructure};
use crate::solvers::{fit_with_partition, FitResult, MinnesotaTarget, SolverOptions};
use crate::varx::{latest_regressors, lagged_matrices, standardize, CoefficientSet, LaggedDesign, MultivariateSeries, VarxSpec};

/// `(T1, T2) = (floor(T/3), floor(2T/3))`.
pub fn split_indices(t: usize, h: usize) -> Result<(usize, usize)> {
    if h == 0 {
        return Err(VarxError::Invalid("horizon must be at least 1".into()));
    }
    let (t1, t2) = (t / 3, 2 * t / 3);
    if t1 == 0 || t2 < t1 + h {
        return Err(VarxError::TooShort {
            have: t,
            need: 3 * (h + 1),
        });
    }
    Ok((t1, t2))
}

/// Selection origins `T1..=T2-h`.
pub fn cv_origins(t1: usize, t2: usize, h: usize) -> Vec<usize> {
    if t2 < t1 + h {
        return Vec::new();
    }
    (t1..=t2 - h).collect()
}

/// Evaluation origins `T2-h..=T-h`.
pub fn evaluation_origins(t: usize, t2: usize, h: usize) -> Vec<usize> {
    if t < h || t2 < h {
        return Vec::new();
    }
    (t2 - h..=t - h).collect()
}

/// Checks `T >= 3 (max lag + h)`.
pub fn check_length(t: usize, spec: &VarxSpec) -> Result<()> {
    let need = 3 * (spec.max_lag() + spec.h);
    if t < need {
        return Err(VarxError::TooShort { have: t, need });
    }
    Ok(())
}

/// Share of zero slope coefficients in `[Phi, beta]`.
pub fn sparsity_ratio(coeffs: &CoefficientSet) -> f64 {
    crate::solvers::sparsity_ratio(&coeffs.b())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_hat: f64,
    pub lambda_index: usize,
    pub grid: Vec<f64>,
    /// Mean squared forecast error per grid value; `None` where a fit failed.
    pub msfe_curve: Vec<Option<f64>>,
    pub origins: Vec<usize>,
    /// Squared forecast error summed over series, origin x grid value.
    pub per_origin_errors: Vec<Vec<Option<f64>>>,
}

/// Options for rolling selection and evaluation of a structured model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CvOptions {
    pub solver: SolverOptions,
    /// Disable to refit every cell from zero.
    pub cold_start: bool,
    pub minnesota: Option<MinnesotaTarget>,
}

/// Centered design of the data through origin `t` (first `t` rows).
pub fn origin_design(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    spec: &VarxSpec,
    t: usize,
    target: Option<&DMatrix<f64>>,
) -> Result<LaggedDesign> {
    let e = endog.rows(0, t).into_owned();
    let x = exog.map(|x| x.rows(0, t).into_owned());
    let (y, z) = lagged_matrices(&e, x.as_ref(), spec.p, spec.s, spec.h, spec.max_lag() + spec.h - 1)?;
    let mut design = LaggedDesign::from_parts(y, z, false)?;
    if let Some(c) = target {
        design.subtract_target(c)?;
    }
    design.center();
    Ok(design)
}

/// Fits a model on the data through `t` and returns its `h`-step forecast.
struct OriginFitter<'a> {
    endog: &'a DMatrix<f64>,
    exog: Option<&'a DMatrix<f64>>,
    spec: &'a VarxSpec,
    structure: &'a PenaltyStructure,
    partition: crate::penalties::GroupPartition,
    target: Option<DMatrix<f64>>,
}

impl<'a> OriginFitter<'a> {
    fn new(
        endog: &'a DMatrix<f64>,
        exog: Option<&'a DMatrix<f64>>,
        spec: &'a VarxSpec,
        structure: &'a PenaltyStructure,
        minnesota: Option<&MinnesotaTarget>,
    ) -> Result<Self> {
        Ok(Self {
            endog,
            exog,
            spec,
            structure,
            partition: group_partition(spec, structure)?,
            target: minnesota.map(|m| m.b()),
        })
    }

    fn fit(&self, design: &LaggedDesign, lambda: f64, opts: &SolverOptions) -> Result<FitResult> {
        match &self.target {
            None => fit_with_partition(design, self.spec, self.structure, &self.partition, lambda, opts),
            Some(c) => {
                let mut inner = opts.clone();
                if let Some(w) = &opts.warm_start {
                    inner.warm_start = Some(CoefficientSet::from_b(w.nu.clone(), &(w.b() - c), self.spec)?);
                }
                let mut res =
                    fit_with_partition(design, self.spec, self.structure, &self.partition, lambda, &inner)?;
                let b = res.coeffs.b() + c;
                res.coeffs = CoefficientSet::from_b(res.coeffs.nu.clone(), &b, self.spec)?;
                res.sparsity_ratio = crate::solvers::sparsity_ratio(&b);
                Ok(res)
            }
        }
    }

    fn design(&self, t: usize) -> Result<LaggedDesign> {
        origin_design(self.endog, self.exog, self.spec, t, self.target.as_ref())
    }

    fn forecast(&self, coeffs: &CoefficientSet, t: usize) -> Result<DVector<f64>> {
        let e = self.endog.rows(0, t);
        let x = self.exog.map(|x| x.rows(0, t).into_owned());
        let z = latest_regressors(&e.into_owned(), x.as_ref(), self.spec.p, self.spec.s)?;
        Ok(&coeffs.nu + coeffs.b() * z)
    }
}

fn sq_error(forecast: &DVector<f64>, endog: &DMatrix<f64>, row: usize) -> f64 {
    forecast
        .iter()
        .enumerate()
        .map(|(i, f)| (endog[(row, i)] - f).powi(2))
        .sum()
}

/// Rolling-origin selection of the penalty parameter over `grid` (expanding
/// window, warm-started per grid value across origins).
pub fn rolling_cv(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    grid: &LambdaGrid,
    opts: &CvOptions,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(VarxError::Invalid("empty penalty grid".into()));
    }
    let t = endog.nrows();
    check_length(t, spec)?;
    let h = spec.h;
    let (t1, t2) = split_indices(t, h)?;
    let origins = cv_origins(t1, t2, h);
    let fitter = OriginFitter::new(endog, exog, spec, structure, opts.minnesota.as_ref())?;
    let n = grid.len();
    let mut chains: Vec<Option<CoefficientSet>> = vec![None; n];
    let mut errors = Vec::with_capacity(origins.len());
    for &origin in &origins {
        let design = fitter.design(origin)?;
        let mut row = Vec::with_capacity(n);
        let mut path_prev: Option<CoefficientSet> = None;
        for (i, &lambda) in grid.values.iter().enumerate() {
            let warm = if opts.cold_start {
                None
            } else {
                chains[i].clone().or_else(|| path_prev.clone())
            };
            let solver = opts.solver.clone().with_warm_start(warm);
            let cell = fitter
                .fit(&design, lambda, &solver)
                .and_then(|fit| {
                    let f = fitter.forecast(&fit.coeffs, origin)?;
                    Ok((fit, f))
                })
                .ok()
                .filter(|(fit, f)| fit.coeffs.is_finite() && f.iter().all(|v| v.is_finite()));
            match cell {
                Some((fit, f)) => {
                    row.push(Some(sq_error(&f, endog, origin + h - 1)));
                    path_prev = Some(fit.coeffs.clone());
                    chains[i] = Some(fit.coeffs);
                }
                None => {
                    log::warn!("fit failed at origin {origin}, lambda {lambda:.4e}");
                    row.push(None);
                }
            }
        }
        errors.push(row);
    }
    let msfe_curve: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let col: Option<Vec<f64>> = errors.iter().map(|r: &Vec<Option<f64>>| r[i]).collect();
            col.map(|c| c.iter().sum::<f64>() / c.len() as f64)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in msfe_curve.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| *v < b) {
                best = Some((i, *v));
            }
        }
    }
    let (lambda_index, _) = match (best, n) {
        (Some(b), _) => b,
        (None, 1) => (0, f64::NAN),
        (None, _) => {
            return Err(VarxError::Numerical("every penalty value failed during selection".into()))
        }
    };
    Ok(CvResult {
        lambda_hat: grid.values[lambda_index],
        lambda_index,
        grid: grid.values.clone(),
        msfe_curve,
        origins,
        per_origin_errors: errors,
    })
}

/// An `h`-step point forecast with an optional coefficient sparsity ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub value: DVector<f64>,
    pub sparsity: Option<f64>,
}

/// A model that can be refit at successive origins. Implementations hold
/// their own data; `forecast(t)` may only use the first `t` rows.
pub trait Forecaster {
    fn name(&self) -> String;
    fn forecast(&mut self, t: usize) -> Result<Forecast>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub msfe: f64,
    pub msfe_relative: Option<f64>,
    pub sparsity_ratio_avg: Option<f64>,
    pub origins: Vec<usize>,
    /// Squared forecast error summed over series, one entry per origin.
    pub per_period_sse: Vec<f64>,
}

impl EvaluationReport {
    pub fn relative_to(&mut self, baseline: &EvaluationReport) {
        self.msfe_relative = (baseline.msfe > 0.0).then(|| self.msfe / baseline.msfe);
    }
}

/// Out-of-sample evaluation over origins `T2-h..=T-h` against `truth`.
pub fn evaluate(truth: &DMatrix<f64>, model: &mut dyn Forecaster, h: usize) -> Result<EvaluationReport> {
    let t = truth.nrows();
    let (_, t2) = split_indices(t, h)?;
    let origins = evaluation_origins(t, t2, h);
    let mut sse = Vec::with_capacity(origins.len());
    let mut sparsity = Vec::new();
    for &origin in &origins {
        let f = model.forecast(origin)?;
        if f.value.len() != truth.ncols() || !f.value.iter().all(|v| v.is_finite()) {
            return Err(VarxError::Numerical(format!(
                "{} produced an invalid forecast at origin {origin}",
                model.name()
            )));
        }
        sse.push(sq_error(&f.value, truth, origin + h - 1));
        if let Some(s) = f.sparsity {
            sparsity.push(s);
        }
    }
    let msfe = sse.iter().sum::<f64>() / sse.len() as f64;
    Ok(EvaluationReport {
        model: model.name(),
        msfe,
        msfe_relative: None,
        sparsity_ratio_avg: (!sparsity.is_empty()).then(|| sparsity.iter().sum::<f64>() / sparsity.len() as f64),
        origins,
        per_period_sse: sse,
    })
}

/// Structured-penalty forecaster with a fixed penalty, refit at each origin
/// and warm-started from the previous origin. Works on (optionally)
/// standardized data and reports forecasts on the original scale.
pub struct VarxlForecaster {
    name: String,
    data: DMatrix<f64>,
    exog: Option<DMatrix<f64>>,
    spec: VarxSpec,
    structure: PenaltyStructure,
    lambda: f64,
    opts: CvOptions,
    scale: Option<(DVector<f64>, DVector<f64>)>,
    warm: Option<CoefficientSet>,
}

impl VarxlForecaster {
    pub fn new(
        name: impl Into<String>,
        prepared: &PreparedData,
        spec: VarxSpec,
        structure: PenaltyStructure,
        lambda: f64,
        opts: CvOptions,
    ) -> Self {
        Self {
            name: name.into(),
            data: prepared.endog.clone(),
            exog: prepared.exog.clone(),
            spec,
            structure,
            lambda,
            opts,
            scale: prepared.scale.clone(),
            warm: None,
        }
    }
}

impl Forecaster for VarxlForecaster {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        let fitter = OriginFitter::new(&self.data, self.exog.as_ref(), &self.spec, &self.structure, self.opts.minnesota.as_ref())?;
        let design = fitter.design(t)?;
        let warm = if self.opts.cold_start { None } else { self.warm.clone() };
        let solver = self.opts.solver.clone().with_warm_start(warm);
        let fit = fitter.fit(&design, self.lambda, &solver)?;
        let mut value = fitter.forecast(&fit.coeffs, t)?;
        if let Some((means, sds)) = &self.scale {
            value = means + value.component_mul(sds);
        }
        let sparsity = fit.sparsity_ratio;
        self.warm = Some(fit.coeffs);
        Ok(Forecast {
            value,
            sparsity: Some(sparsity),
        })
    }
}

/// Data in the form the structured models are fit on, with the scale needed
/// to map forecasts back.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub endog: DMatrix<f64>,
    pub exog: Option<DMatrix<f64>>,
    /// Per-series means and standard deviations of the endogenous block.
    pub scale: Option<(DVector<f64>, DVector<f64>)>,
}

impl PreparedData {
    /// Standardizes every series once on the full sample.
    pub fn standardized(endog: &MultivariateSeries, exog: Option<&MultivariateSeries>) -> Result<Self> {
        let (e, means, sds) = standardize(endog)?;
        let x = match exog {
            Some(x) => Some(standardize(x)?.0.values().clone()),
            None => None,
        };
        Ok(Self {
            endog: e.values().clone(),
            exog: x,
            scale: Some((means, sds)),
        })
    }

    /// Maps a forecast made on the prepared scale back to the original one.
    pub fn unscale(&self, v: DVector<f64>) -> DVector<f64> {
        match &self.scale {
            Some((means, sds)) => means + v.component_mul(sds),
            None => v,
        }
    }

    /// Endogenous and exogenous columns side by side.
    pub fn joint(&self) -> DMatrix<f64> {
        match &self.exog {
            None => self.endog.clone(),
            Some(x) => {
                let (t, k, m) = (self.endog.nrows(), self.endog.ncols(), x.ncols());
                let mut out = DMatrix::zeros(t, k + m);
                out.columns_mut(0, k).copy_from(&self.endog);
                out.columns_mut(k, m).copy_from(x);
                out
            }
        }
    }

    /// Uses the data as given.
    pub fn raw(endog: &MultivariateSeries, exog: Option<&MultivariateSeries>) -> Self {
        Self {
            endog: endog.values().clone(),
            exog: exog.map(|x| x.values().clone()),
            scale: None,
        }
    }
}

/// Penalty grid anchored at the largest useful penalty on the data through `T2`.
pub fn selection_grid(
    prepared: &PreparedData,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    minnesota: Option<&MinnesotaTarget>,
    n_points: usize,
    depth: f64,
) -> Result<LambdaGrid> {
    let t = prepared.endog.nrows();
    let (_, t2) = split_indices(t, spec.h)?;
    let target = minnesota.map(|m| m.b());
    let design = origin_design(&prepared.endog, prepared.exog.as_ref(), spec, t2, target.as_ref())?;
    let lmax = lambda_max(&design, structure, spec)?;
    lambda_grid(lmax, n_points, depth)
}

/// Selection followed by evaluation for one structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRun {
    pub structure: String,
    pub cv: CvResult,
    pub report: EvaluationReport,
}

pub fn select_and_evaluate(
    prepared: &PreparedData,
    truth: &DMatrix<f64>,
    spec: &VarxSpec,
    structure: &PenaltyStructure,
    n_points: usize,
    depth: f64,
    opts: &CvOptions,
) -> Result<StructureRun> {
    let grid = selection_grid(prepared, spec, structure, opts.minnesota.as_ref(), n_points, depth)?;
    let cv = rolling_cv(&prepared.endog, prepared.exog.as_ref(), spec, structure, &grid, opts)?;
    let name = structure.kind.name().to_string();
    let mut model = VarxlForecaster::new(name.clone(), prepared, *spec, *structure, cv.lambda_hat, opts.clone());
    let report = evaluate(truth, &mut model, spec.h)?;
    Ok(StructureRun {
        structure: name,
        cv,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_indices(9, 1).unwrap(), (3, 6));
        assert_eq!(split_indices(100, 1).unwrap(), (33, 66));
        assert!(split_indices(2, 1).is_err());
        assert!(split_indices(6, 3).is_err());
        assert!(split_indices(10, 0).is_err());
    }

    #[test]
    fn origin_ranges() {
        let (t1, t2) = split_indices(195, 1).unwrap();
        assert_eq!((t1, t2), (65, 130));
        let o = cv_origins(t1, t2, 1);
        assert_eq!(o.len(), t2 - t1 - 1 + 1);
        assert_eq!(*o.first().unwrap(), 65);
        assert_eq!(*o.last().unwrap(), 129);
        let e = evaluation_origins(195, t2, 1);
        assert_eq!(*e.first().unwrap(), 129);
        assert_eq!(*e.last().unwrap(), 194);
    }

    #[test]
    fn sparsity_ratio_cases() {
        let spec = VarxSpec::new(2, 0, 1, 0, 1).unwrap();
        let mut c = CoefficientSet::zeros(&spec);
        assert_eq!(sparsity_ratio(&c), 1.0);
        c.phi[(0, 0)] = 1.0;
        c.phi[(1, 1)] = 1.0;
        assert_eq!(sparsity_ratio(&c), 0.5);
        c.phi.fill(2.0);
        assert_eq!(sparsity_ratio(&c), 0.0);
    }
}
