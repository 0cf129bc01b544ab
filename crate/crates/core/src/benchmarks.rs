//! Comparison forecasters: sample mean, random walk, least-squares VARX
//! with information-criterion lag selection, a Bayesian VAR with
//! dummy-observation Minnesota prior, and a principal-component factor model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};
use crate::validation::{cv_origins, split_indices, Forecast, Forecaster, PreparedData};
use crate::varx::{lagged_matrices, latest_regressors, CoefficientSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Mean,
    Rw,
    Aic,
    Bic,
    Bgr,
    Factor,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [
        BenchmarkKind::Mean,
        BenchmarkKind::Rw,
        BenchmarkKind::Aic,
        BenchmarkKind::Bic,
        BenchmarkKind::Bgr,
        BenchmarkKind::Factor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::Mean => "mean",
            BenchmarkKind::Rw => "rw",
            BenchmarkKind::Aic => "aic",
            BenchmarkKind::Bic => "bic",
            BenchmarkKind::Bgr => "bgr",
            BenchmarkKind::Factor => "factor",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = VarxError;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                VarxError::Invalid(format!(
                    "unknown benchmark `{s}` (expected one of mean, rw, aic, bic, bgr, factor)"
                ))
            })
    }
}

/// Mean of the first `t` rows.
pub fn forecast_sample_mean(endog: &DMatrix<f64>, t: usize) -> DVector<f64> {
    assert!(t >= 1 && t <= endog.nrows(), "origin out of range");
    endog.rows(0, t).row_mean().transpose()
}

/// Row `t - 1` (the last observation available at origin `t`), for any horizon.
pub fn forecast_random_walk(endog: &DMatrix<f64>, t: usize) -> DVector<f64> {
    assert!(t >= 1 && t <= endog.nrows(), "origin out of range");
    endog.row(t - 1).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    Bic,
}

/// `log|Sigma| + c(T) * k (k l + m j) / T` with `c = 2` (AIC) or `log T` (BIC).
pub fn ic_value(
    sigma_det: f64,
    k: usize,
    l: usize,
    j: usize,
    m: usize,
    t: usize,
    criterion: Criterion,
) -> Result<f64> {
    if !(sigma_det > 0.0) || !sigma_det.is_finite() {
        return Err(VarxError::Numerical(format!(
            "residual covariance determinant {sigma_det} is not positive"
        )));
    }
    let n = t as f64;
    let params = (k * (k * l + m * j)) as f64;
    let c = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => n.ln(),
    };
    Ok(sigma_det.ln() + c * params / n)
}

/// Least squares `argmin ||Y - X B||` (X is n x q, Y is n x k) through a QR
/// factorization of `X` augmented with ridge rows
/// `sqrt((q^2 + q + 1) eps) * ||X_j||` for conditioning.
pub fn ridge_least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, q) = x.shape();
    if y.nrows() != n {
        return Err(VarxError::Dimension("X and Y row counts differ".into()));
    }
    if q == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    let qf = q as f64;
    let scale = ((qf * qf + qf + 1.0) * f64::EPSILON).sqrt();
    let mut xa = DMatrix::zeros(n + q, q);
    xa.rows_mut(0, n).copy_from(x);
    for j in 0..q {
        xa[(n + j, j)] = scale * x.column(j).norm();
    }
    let mut ya = DMatrix::zeros(n + q, y.ncols());
    ya.rows_mut(0, n).copy_from(y);
    let qr = xa.qr();
    let qty = qr.q().transpose() * ya;
    qr.r()
        .solve_upper_triangular(&qty)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or_else(|| VarxError::Numerical("least-squares system is singular".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSelection {
    pub p_hat: usize,
    pub s_hat: usize,
    /// `criterion_values[l][j]`; `None` for skipped candidates.
    pub criterion_values: Vec<Vec<Option<f64>>>,
    pub criterion: Criterion,
}

/// Residual covariance `U U' / n` of a least-squares VARX(l, j) with
/// intercept on targets starting at row `start`, with its coefficients.
fn ls_candidate(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    l: usize,
    j: usize,
    h: usize,
    start: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (y, z) = lagged_matrices(endog, exog, l, j, h, start)?;
    let n = y.ncols();
    let q = z.nrows();
    let mut x = DMatrix::from_element(n, q + 1, 1.0);
    x.columns_mut(1, q).copy_from(&z.transpose());
    let coef = ridge_least_squares(&x, &y.transpose())?;
    let resid = y.transpose() - &x * &coef;
    let sigma = resid.transpose() * &resid / n as f64;
    let nu = coef.row(0).transpose();
    let b = coef.rows(1, q).transpose();
    Ok((sigma, nu, b))
}

fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let ld: f64 = l.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    ld.is_finite().then_some(ld)
}

/// Least-squares VARX over all `0 <= l <= p_max`, `0 <= j <= s_max` on a
/// common sample; returns the criterion table and the minimizing fit.
pub fn fit_ls_varx_ic(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    p_max: usize,
    s_max: usize,
    h: usize,
    criterion: Criterion,
) -> Result<(IcSelection, CoefficientSet)> {
    let k = endog.ncols();
    let m = if s_max > 0 {
        exog.map(|x| x.ncols())
            .ok_or_else(|| VarxError::Invalid("exogenous lag order requires exogenous data".into()))?
    } else {
        0
    };
    if h == 0 {
        return Err(VarxError::Invalid("horizon must be at least 1".into()));
    }
    let start = p_max.max(s_max) + h - 1;
    if endog.nrows() <= start + 1 {
        return Err(VarxError::TooShort {
            have: endog.nrows(),
            need: start + 2,
        });
    }
    let n = endog.nrows() - start;
    let mut table = vec![vec![None; s_max + 1]; p_max + 1];
    let mut best: Option<(f64, usize, usize, DVector<f64>, DMatrix<f64>)> = None;
    for (l, row) in table.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if k * l + m * j + 1 >= n {
                continue;
            }
            let Ok((sigma, nu, b)) = ls_candidate(endog, exog, l, j, h, start) else {
                continue;
            };
            let Some(ld) = log_det_spd(&sigma) else {
                continue;
            };
            let Ok(v) = ic_value(ld.exp(), k, l, j, m, n, criterion).or_else(|_| {
                // determinant underflow: use the log directly
                Ok::<f64, VarxError>(ld + (ic_value(1.0, k, l, j, m, n, criterion)?))
            }) else {
                continue;
            };
            *cell = Some(v);
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, l, j, nu, b));
            }
        }
    }
    let (_, p_hat, s_hat, nu, b) =
        best.ok_or_else(|| VarxError::Numerical("no information-criterion candidate could be fit".into()))?;
    let kp = k * p_hat;
    let coeffs = CoefficientSet {
        nu,
        phi: b.columns(0, kp).into_owned(),
        beta: b.columns(kp, m * s_hat).into_owned(),
    };
    Ok((
        IcSelection {
            p_hat,
            s_hat,
            criterion_values: table,
            criterion,
        },
        coeffs,
    ))
}

/// Prior hyperparameters of the dummy-observation Bayesian VAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgrPrior {
    pub lambda: f64,
    pub delta: f64,
    pub sigma: DVector<f64>,
    pub mu: DVector<f64>,
    pub tau: f64,
    pub epsilon: f64,
}

impl BgrPrior {
    /// Scales from univariate AR(p) residual standard deviations, levels from
    /// sample means, `tau = 10 lambda`, `epsilon = 1e-5`.
    pub fn from_data(data: &DMatrix<f64>, p: usize, lambda: f64, delta: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(VarxError::Invalid("prior tightness must be positive".into()));
        }
        let n = data.ncols();
        let mut sigma = DVector::zeros(n);
        for i in 0..n {
            let col = data.column(i).into_owned();
            let series = DMatrix::from_column_slice(col.len(), 1, col.as_slice());
            let (s, _, _) = ls_candidate(&series, None, p, 0, 1, p)?;
            let dof = (data.nrows() - p) as f64;
            let adj = dof / (dof - p as f64 - 1.0).max(1.0);
            sigma[i] = (s[(0, 0)] * adj).sqrt().max(f64::MIN_POSITIVE);
        }
        Ok(Self {
            lambda,
            delta,
            sigma,
            mu: data.row_mean().transpose(),
            tau: 10.0 * lambda,
            epsilon: 1e-5,
        })
    }
}

/// Dummy observations `(Y_d, X_d)`: the Minnesota block (`kp + k + 1` rows)
/// followed by the sum-of-coefficients block (`k` rows). Regressor columns
/// are `[1, y_{t-1}, ..., y_{t-p}]`.
pub fn bgr_dummies(prior: &BgrPrior, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = prior.sigma.len();
    let rows = k * p + k + 1 + k;
    let cols = 1 + k * p;
    let mut yd = DMatrix::zeros(rows, k);
    let mut xd = DMatrix::zeros(rows, cols);
    let lam = prior.lambda;
    for i in 0..k {
        yd[(i, i)] = prior.delta * prior.sigma[i] / lam;
    }
    for l in 1..=p {
        for i in 0..k {
            xd[((l - 1) * k + i, 1 + (l - 1) * k + i)] = l as f64 * prior.sigma[i] / lam;
        }
    }
    for i in 0..k {
        yd[(k * p + i, i)] = prior.sigma[i];
    }
    xd[(k * p + k, 0)] = prior.epsilon;
    let base = k * p + k + 1;
    for i in 0..k {
        let v = prior.delta * prior.mu[i] / prior.tau;
        yd[(base + i, i)] = v;
        for l in 0..p {
            xd[(base + i, 1 + l * k + i)] = v;
        }
    }
    (yd, xd)
}

/// Posterior-mean coefficients of the VAR(p) (direct `h`-step) on `data`
/// (T x k) with dummy observations appended.
pub fn fit_bgr(data: &DMatrix<f64>, p: usize, h: usize, prior: &BgrPrior) -> Result<CoefficientSet> {
    let k = data.ncols();
    if prior.sigma.len() != k || prior.mu.len() != k {
        return Err(VarxError::Dimension("prior does not match the data".into()));
    }
    let (y, z) = lagged_matrices(data, None, p, 0, h, p + h - 1)?;
    let n = y.ncols();
    let (yd, xd) = bgr_dummies(prior, p);
    let nd = yd.nrows();
    let mut ys = DMatrix::zeros(n + nd, k);
    ys.rows_mut(0, n).copy_from(&y.transpose());
    ys.rows_mut(n, nd).copy_from(&yd);
    let mut xs = DMatrix::from_element(n + nd, 1 + k * p, 1.0);
    xs.view_mut((0, 1), (n, k * p)).copy_from(&z.transpose());
    xs.rows_mut(n, nd).copy_from(&xd);
    let qr = xs.qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * ys))
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| VarxError::Numerical("augmented posterior system is singular".into()))?;
    Ok(CoefficientSet {
        nu: coef.row(0).transpose(),
        phi: coef.rows(1, k * p).transpose(),
        beta: DMatrix::zeros(k, 0),
    })
}

/// Smallest number of leading eigenvalues (sorted descending) whose share of
/// the total reaches `threshold`.
pub fn factor_count(eigenvalues_desc: &[f64], threshold: f64) -> usize {
    let total: f64 = eigenvalues_desc.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues_desc.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= threshold * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    eigenvalues_desc.len()
}

/// Univariate AR with BIC-selected order `0..=p_max` and its iterated
/// `h`-step forecast.
fn ar_bic_forecast(x: &[f64], p_max: usize, h: usize) -> f64 {
    let series = DMatrix::from_column_slice(x.len(), 1, x);
    let mut best: Option<(f64, usize, DVector<f64>, DMatrix<f64>)> = None;
    for l in 0..=p_max {
        if x.len() <= p_max + l + 2 {
            break;
        }
        let Ok((s, nu, b)) = ls_candidate(&series, None, l, 0, 1, p_max) else {
            continue;
        };
        let n = x.len() - p_max;
        let Ok(v) = ic_value(s[(0, 0)].max(1e-300), 1, l, 0, 0, n, Criterion::Bic) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, l, nu, b));
        }
    }
    let Some((_, l, nu, b)) = best else {
        return x.iter().sum::<f64>() / x.len() as f64;
    };
    let mut hist: Vec<f64> = x.to_vec();
    for _ in 0..h {
        let mut f = nu[0];
        for lag in 1..=l {
            f += b[(0, lag - 1)] * hist[hist.len() - lag];
        }
        hist.push(f);
    }
    *hist.last().unwrap()
}

/// Principal-component factor forecast of all columns of `data` (T x n).
pub fn factor_forecast(data: &DMatrix<f64>, p: usize, h: usize, threshold: f64) -> DVector<f64> {
    let (t, n) = data.shape();
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (t.max(2) - 1) as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let r = factor_count(&sorted, threshold);
    let mut out = mean.clone();
    for &idx in order.iter().take(r) {
        let w = eig.eigenvectors.column(idx);
        let f: Vec<f64> = (0..t).map(|i| centered.row(i).dot(&w.transpose())).collect();
        let fh = ar_bic_forecast(&f, p, h);
        out += w * fh;
    }
    out
}

/// Sample-mean forecaster.
pub struct MeanForecaster {
    data: PreparedData,
}

impl MeanForecaster {
    pub fn new(data: &PreparedData) -> Self {
        Self { data: data.clone() }
    }
}

impl Forecaster for MeanForecaster {
    fn name(&self) -> String {
        "mean".into()
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        Ok(Forecast {
            value: self.data.unscale(forecast_sample_mean(&self.data.endog, t)),
            sparsity: None,
        })
    }
}

/// Random-walk (no-change) forecaster.
pub struct RandomWalkForecaster {
    data: PreparedData,
}

impl RandomWalkForecaster {
    pub fn new(data: &PreparedData) -> Self {
        Self { data: data.clone() }
    }
}

impl Forecaster for RandomWalkForecaster {
    fn name(&self) -> String {
        "rw".into()
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        Ok(Forecast {
            value: self.data.unscale(forecast_random_walk(&self.data.endog, t)),
            sparsity: None,
        })
    }
}

/// Least-squares VARX with lag orders re-selected at every origin.
pub struct IcForecaster {
    data: PreparedData,
    p_max: usize,
    s_max: usize,
    h: usize,
    criterion: Criterion,
    pub selections: Vec<(usize, usize)>,
}

impl IcForecaster {
    pub fn new(data: &PreparedData, p_max: usize, s_max: usize, h: usize, criterion: Criterion) -> Self {
        Self {
            data: data.clone(),
            p_max,
            s_max: if data.exog.is_some() { s_max } else { 0 },
            h,
            criterion,
            selections: Vec::new(),
        }
    }
}

impl Forecaster for IcForecaster {
    fn name(&self) -> String {
        match self.criterion {
            Criterion::Aic => "aic".into(),
            Criterion::Bic => "bic".into(),
        }
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        let e = self.data.endog.rows(0, t).into_owned();
        let x = self.data.exog.as_ref().map(|x| x.rows(0, t).into_owned());
        let (sel, coeffs) = fit_ls_varx_ic(&e, x.as_ref(), self.p_max, self.s_max, self.h, self.criterion)?;
        self.selections.push((sel.p_hat, sel.s_hat));
        let z = latest_regressors(&e, x.as_ref(), sel.p_hat, sel.s_hat)?;
        let value = &coeffs.nu + coeffs.b() * z;
        Ok(Forecast {
            value: self.data.unscale(value),
            sparsity: None,
        })
    }
}

/// Default tightness grid for the Bayesian VAR.
pub fn bgr_lambda_grid() -> Vec<f64> {
    (0..11).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// Bayesian VAR on the joint endogenous + exogenous series with tightness
/// chosen by rolling-origin forecast error on the endogenous series.
pub struct BgrForecaster {
    data: PreparedData,
    joint: DMatrix<f64>,
    p: usize,
    h: usize,
    delta: f64,
    pub lambda: f64,
    pub msfe_curve: Vec<Option<f64>>,
}

impl BgrForecaster {
    pub fn new(data: &PreparedData, p: usize, h: usize, delta: f64, grid: &[f64]) -> Result<Self> {
        let joint = data.joint();
        let k = data.endog.ncols();
        let (t1, t2) = split_indices(joint.nrows(), h)?;
        let origins = cv_origins(t1, t2, h);
        let mut curve = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let mut total = 0.0;
            let mut ok = true;
            for &t in &origins {
                match bgr_forecast(&joint, t, p, h, lambda, delta) {
                    Ok(f) => {
                        total += (0..k).map(|i| (joint[(t + h - 1, i)] - f[i]).powi(2)).sum::<f64>();
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            curve.push(ok.then(|| total / origins.len() as f64));
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in curve.iter().enumerate() {
            if let Some(v) = v {
                // ties resolve to the tighter prior (smaller lambda)
                if best.is_none_or(|(_, b)| *v < b) {
                    best = Some((i, *v));
                }
            }
        }
        let (idx, _) = best.ok_or_else(|| VarxError::Numerical("every prior tightness failed".into()))?;
        Ok(Self {
            data: data.clone(),
            joint,
            p,
            h,
            delta,
            lambda: grid[idx],
            msfe_curve: curve,
        })
    }
}

fn bgr_forecast(joint: &DMatrix<f64>, t: usize, p: usize, h: usize, lambda: f64, delta: f64) -> Result<DVector<f64>> {
    let data = joint.rows(0, t).into_owned();
    let prior = BgrPrior::from_data(&data, p, lambda, delta)?;
    let coeffs = fit_bgr(&data, p, h, &prior)?;
    let z = latest_regressors(&data, None, p, 0)?;
    Ok(&coeffs.nu + &coeffs.phi * z)
}

impl Forecaster for BgrForecaster {
    fn name(&self) -> String {
        "bgr".into()
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        let f = bgr_forecast(&self.joint, t, self.p, self.h, self.lambda, self.delta)?;
        let k = self.data.endog.ncols();
        Ok(Forecast {
            value: self.data.unscale(f.rows(0, k).into_owned()),
            sparsity: None,
        })
    }
}

/// Principal-component factor forecaster on the joint series.
pub struct FactorForecaster {
    data: PreparedData,
    joint: DMatrix<f64>,
    p: usize,
    h: usize,
    threshold: f64,
}

impl FactorForecaster {
    pub fn new(data: &PreparedData, p: usize, h: usize, threshold: f64) -> Self {
        Self {
            data: data.clone(),
            joint: data.joint(),
            p,
            h,
            threshold,
        }
    }
}

impl Forecaster for FactorForecaster {
    fn name(&self) -> String {
        "factor".into()
    }

    fn forecast(&mut self, t: usize) -> Result<Forecast> {
        let data = self.joint.rows(0, t).into_owned();
        let f = factor_forecast(&data, self.p, self.h, self.threshold);
        let k = self.data.endog.ncols();
        Ok(Forecast {
            value: self.data.unscale(f.rows(0, k).into_owned()),
            sparsity: None,
        })
    }
}
