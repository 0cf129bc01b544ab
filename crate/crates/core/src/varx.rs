//! Data model for VARX estimation: observation matrices, dimensions, coefficient
//! blocks, lagged regression designs and the direct forecast map.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};

/// A `T x n` block of observations, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    values: DMatrix<f64>,
    labels: Vec<String>,
    times: Option<Vec<String>>,
}

impl MultivariateSeries {
    pub fn new(values: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(VarxError::Invalid(
                "series must have at least one row and one column".into(),
            ));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (idx % values.nrows(), idx / values.nrows());
            return Err(VarxError::Invalid(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        let labels = match labels {
            Some(l) if l.len() != values.ncols() => {
                return Err(VarxError::Dimension(format!(
                    "{} labels for {} columns",
                    l.len(),
                    values.ncols()
                )))
            }
            Some(l) => l,
            None => (0..values.ncols()).map(|i| format!("y{}", i + 1)).collect(),
        };
        Ok(Self {
            values,
            labels,
            times: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(VarxError::Dimension("ragged rows".into()));
        }
        Self::new(
            DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]),
            None,
        )
    }

    pub fn with_times(mut self, times: Vec<String>) -> Result<Self> {
        if times.len() != self.len() {
            return Err(VarxError::Dimension(format!(
                "{} time stamps for {} rows",
                times.len(),
                self.len()
            )));
        }
        self.times = Some(times);
        Ok(self)
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of component series.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn times(&self) -> Option<&[String]> {
        self.times.as_deref()
    }

    /// Observation at 0-based row `t` as a column vector.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// The first `t` observations.
    pub fn head(&self, t: usize) -> Self {
        let t = t.min(self.len());
        Self {
            values: self.values.rows(0, t).into_owned(),
            labels: self.labels.clone(),
            times: self.times.as_ref().map(|ts| ts[..t].to_vec()),
        }
    }

    /// Column-wise concatenation `[self, other]` over a common time index.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(VarxError::Dimension(format!(
                "cannot stack series of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let (t, a, b) = (self.len(), self.dim(), other.dim());
        let values = DMatrix::from_fn(t, a + b, |i, j| {
            if j < a {
                self.values[(i, j)]
            } else {
                other.values[(i, j - a)]
            }
        });
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Ok(Self {
            values,
            labels,
            times: self.times.clone(),
        })
    }

    /// Reads a comma-separated file with a header row. A leading column whose
    /// entries are not all numeric is taken as the time index.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
        if records.is_empty() {
            return Err(VarxError::Invalid("csv has no data rows".into()));
        }
        let first_is_time = records
            .iter()
            .any(|r| r.get(0).map(|v| v.parse::<f64>().is_err()).unwrap_or(false));
        let offset = usize::from(first_is_time);
        let n = header.len().saturating_sub(offset);
        if n == 0 {
            return Err(VarxError::Invalid("csv has no numeric columns".into()));
        }
        let mut values = DMatrix::zeros(records.len(), n);
        let mut times = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec.len() != header.len() {
                return Err(VarxError::Invalid(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    rec.len(),
                    header.len()
                )));
            }
            if first_is_time {
                times.push(rec[0].to_string());
            }
            for j in 0..n {
                let raw = &rec[j + offset];
                values[(i, j)] = raw.parse::<f64>().map_err(|_| {
                    VarxError::Invalid(format!(
                        "row {}, column `{}`: `{raw}` is not a number",
                        i + 1,
                        header[j + offset]
                    ))
                })?;
            }
        }
        let series = Self::new(values, Some(header[offset..].to_vec()))?;
        if first_is_time {
            series.with_times(times)
        } else {
            Ok(series)
        }
    }
}

/// Dimensions of a `VARX_{k,m}(p,s)` model together with the forecast horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarxSpec {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
    pub h: usize,
}

impl VarxSpec {
    pub fn new(k: usize, m: usize, p: usize, s: usize, h: usize) -> Result<Self> {
        if k == 0 {
            return Err(VarxError::Invalid("at least one endogenous series is required".into()));
        }
        if p == 0 {
            return Err(VarxError::Invalid("endogenous lag order p must be at least 1".into()));
        }
        if h == 0 {
            return Err(VarxError::Invalid("forecast horizon h must be at least 1".into()));
        }
        if m == 0 && s > 0 {
            return Err(VarxError::Invalid(
                "exogenous lag order requires exogenous data".into(),
            ));
        }
        if m > 0 && s == 0 {
            return Err(VarxError::Invalid(
                "exogenous series supplied but exogenous lag order s is 0".into(),
            ));
        }
        Ok(Self { k, m, p, s, h })
    }

    /// Number of lagged regressors `kp + ms`.
    pub fn n_regressors(&self) -> usize {
        self.k * self.p + self.m * self.s
    }

    /// Total parameter count `k(1 + kp + ms)`.
    pub fn n_params(&self) -> usize {
        self.k * (1 + self.n_regressors())
    }

    pub fn max_lag(&self) -> usize {
        self.p.max(self.s)
    }

    /// Shortest series for which an `h`-step design has at least one column.
    pub fn min_length(&self) -> usize {
        self.max_lag() + self.h
    }
}

/// Intercept, endogenous lag matrices and exogenous lag matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub nu: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

impl CoefficientSet {
    pub fn zeros(spec: &VarxSpec) -> Self {
        Self {
            nu: DVector::zeros(spec.k),
            phi: DMatrix::zeros(spec.k, spec.k * spec.p),
            beta: DMatrix::zeros(spec.k, spec.m * spec.s),
        }
    }

    /// Splits a `k x (kp+ms)` matrix `B = [Phi, beta]`.
    pub fn from_b(nu: DVector<f64>, b: &DMatrix<f64>, spec: &VarxSpec) -> Result<Self> {
        let kp = spec.k * spec.p;
        if b.nrows() != spec.k || b.ncols() != spec.n_regressors() || nu.len() != spec.k {
            return Err(VarxError::Dimension(format!(
                "coefficient matrix is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                spec.k,
                spec.n_regressors()
            )));
        }
        Ok(Self {
            nu,
            phi: b.columns(0, kp).into_owned(),
            beta: b.columns(kp, spec.m * spec.s).into_owned(),
        })
    }

    /// `B = [Phi, beta]`.
    pub fn b(&self) -> DMatrix<f64> {
        let (k, a, c) = (self.phi.nrows(), self.phi.ncols(), self.beta.ncols());
        DMatrix::from_fn(k, a + c, |i, j| {
            if j < a {
                self.phi[(i, j)]
            } else {
                self.beta[(i, j - a)]
            }
        })
    }

    /// Endogenous lag matrix `Phi^(lag)` (1-based lag).
    pub fn phi_lag(&self, lag: usize) -> DMatrix<f64> {
        let k = self.phi.nrows();
        self.phi.columns((lag - 1) * k, k).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.nu.iter().chain(self.phi.iter()).chain(self.beta.iter()).all(|v| v.is_finite())
    }
}

/// Regressor matrix `Z` ((kp+ms) x T_eff) and response `Y` (k x T_eff) of a
/// lagged regression, optionally centered.
#[derive(Debug, Clone)]
pub struct LaggedDesign {
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub y_bar: DVector<f64>,
    pub z_bar: DVector<f64>,
    /// Target contributions `C Z` already subtracted from `y` (before centering).
    pub offset: Option<DMatrix<f64>>,
    pub centered: bool,
}

impl LaggedDesign {
    pub fn n_obs(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.z.nrows()
    }

    /// Builds a design directly from response and regressor matrices.
    pub fn from_parts(y: DMatrix<f64>, z: DMatrix<f64>, center: bool) -> Result<Self> {
        if y.ncols() != z.ncols() {
            return Err(VarxError::Dimension(format!(
                "Y has {} columns, Z has {}",
                y.ncols(),
                z.ncols()
            )));
        }
        let mut design = Self {
            y_bar: DVector::zeros(y.nrows()),
            z_bar: DVector::zeros(z.nrows()),
            z,
            y,
            offset: None,
            centered: false,
        };
        if center {
            design.center();
        }
        Ok(design)
    }

    /// Subtracts a fixed coefficient target: `Y <- Y - C Z`. Must be applied before centering.
    pub fn subtract_target(&mut self, target_b: &DMatrix<f64>) -> Result<()> {
        if self.centered {
            return Err(VarxError::Invalid("target must be removed before centering".into()));
        }
        if target_b.nrows() != self.k() || target_b.ncols() != self.n_regressors() {
            return Err(VarxError::Dimension("target has wrong shape".into()));
        }
        let offset = target_b * &self.z;
        self.y -= &offset;
        self.offset = Some(offset);
        Ok(())
    }

    pub fn center(&mut self) {
        if self.centered {
            return;
        }
        let n = self.n_obs() as f64;
        self.y_bar = self.y.column_sum() / n;
        self.z_bar = self.z.column_sum() / n;
        for mut col in self.y.column_iter_mut() {
            col -= &self.y_bar;
        }
        for mut col in self.z.column_iter_mut() {
            col -= &self.z_bar;
        }
        self.centered = true;
    }
}

/// Column-wise standardization to zero mean and unit (n-1) sample standard deviation.
pub fn standardize(
    series: &MultivariateSeries,
) -> Result<(MultivariateSeries, DVector<f64>, DVector<f64>)> {
    let t = series.len();
    if t < 2 {
        return Err(VarxError::TooShort { have: t, need: 2 });
    }
    let n = series.dim();
    let vals = series.values();
    let mut means = DVector::zeros(n);
    let mut sds = DVector::zeros(n);
    for j in 0..n {
        let col = vals.column(j);
        let mean = col.sum() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(VarxError::ConstantColumn(series.labels()[j].clone()));
        }
        means[j] = mean;
        sds[j] = sd;
    }
    let values = DMatrix::from_fn(t, n, |i, j| (vals[(i, j)] - means[j]) / sds[j]);
    let mut out = MultivariateSeries::new(values, Some(series.labels().to_vec()))?;
    out.times = series.times.clone();
    Ok((out, means, sds))
}

/// Raw lagged regression `(Y, Z)` with explicit lag orders (either may be 0)
/// and explicit first target row `start` (0-based). Used when several
/// candidate orders must share a common sample.
pub fn lagged_matrices(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    p: usize,
    s: usize,
    h: usize,
    start: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = endog.nrows();
    let k = endog.ncols();
    let m = if s > 0 {
        exog.map(|x| x.ncols()).ok_or_else(|| {
            VarxError::Invalid("exogenous lag order requires exogenous data".into())
        })?
    } else {
        0
    };
    if let Some(x) = exog {
        if s > 0 && x.nrows() != t {
            return Err(VarxError::Dimension(format!(
                "endogenous series has {t} rows, exogenous has {}",
                x.nrows()
            )));
        }
    }
    let min_start = p.max(s) + h - 1;
    if start < min_start {
        return Err(VarxError::Invalid(format!(
            "first target row {start} precedes the required {min_start}"
        )));
    }
    if t <= start {
        return Err(VarxError::TooShort {
            have: t,
            need: start + 1,
        });
    }
    let n = t - start;
    let d = k * p + m * s;
    let mut y = DMatrix::zeros(k, n);
    let mut z = DMatrix::zeros(d, n);
    for c in 0..n {
        let tau = start + c;
        for i in 0..k {
            y[(i, c)] = endog[(tau, i)];
        }
        for lag in 1..=p {
            let row = tau + 1 - h - lag;
            for i in 0..k {
                z[((lag - 1) * k + i, c)] = endog[(row, i)];
            }
        }
        if let Some(x) = exog {
            for lag in 1..=s {
                let row = tau + 1 - h - lag;
                for i in 0..m {
                    z[(k * p + (lag - 1) * m + i, c)] = x[(row, i)];
                }
            }
        }
    }
    Ok((y, z))
}

/// Builds the `h`-step lagged design: column `t` pairs `y_t` with
/// `[y_{t-h}, ..., y_{t-h-p+1}, x_{t-h}, ..., x_{t-h-s+1}]`.
pub fn build_lagged_design(
    endog: &MultivariateSeries,
    exog: Option<&MultivariateSeries>,
    spec: &VarxSpec,
    h: usize,
    center: bool,
) -> Result<LaggedDesign> {
    check_inputs(endog, exog, spec)?;
    if h == 0 {
        return Err(VarxError::Invalid("horizon must be at least 1".into()));
    }
    let need = spec.max_lag() + h;
    if endog.len() < need {
        return Err(VarxError::TooShort {
            have: endog.len(),
            need,
        });
    }
    let (y, z) = lagged_matrices(
        endog.values(),
        exog.map(|x| x.values()),
        spec.p,
        spec.s,
        h,
        spec.max_lag() + h - 1,
    )?;
    LaggedDesign::from_parts(y, z, center)
}

fn check_inputs(
    endog: &MultivariateSeries,
    exog: Option<&MultivariateSeries>,
    spec: &VarxSpec,
) -> Result<()> {
    if endog.dim() != spec.k {
        return Err(VarxError::Dimension(format!(
            "spec has k = {}, endogenous data has {} columns",
            spec.k,
            endog.dim()
        )));
    }
    match (exog, spec.m) {
        (None, 0) => Ok(()),
        (None, _) => Err(VarxError::Invalid(
            "exogenous lag order requires exogenous data".into(),
        )),
        (Some(x), m) if x.dim() != m => Err(VarxError::Dimension(format!(
            "spec has m = {m}, exogenous data has {} columns",
            x.dim()
        ))),
        (Some(x), _) if x.len() != endog.len() => Err(VarxError::Dimension(format!(
            "endogenous series has {} rows, exogenous has {}",
            endog.len(),
            x.len()
        ))),
        _ => Ok(()),
    }
}

/// Intercept implied by centered estimation: `nu = y_bar - B z_bar`.
pub fn recover_intercept(
    b: &DMatrix<f64>,
    y_bar: &DVector<f64>,
    z_bar: &DVector<f64>,
) -> Result<DVector<f64>> {
    if b.nrows() != y_bar.len() || b.ncols() != z_bar.len() {
        return Err(VarxError::Dimension(format!(
            "B is {}x{}, y_bar has {}, z_bar has {}",
            b.nrows(),
            b.ncols(),
            y_bar.len(),
            z_bar.len()
        )));
    }
    Ok(y_bar - b * z_bar)
}

/// Regressor vector `[y_t, ..., y_{t-p+1}, x_t, ..., x_{t-s+1}]` taken from the
/// last rows of the supplied data.
pub fn latest_regressors(
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    p: usize,
    s: usize,
) -> Result<DVector<f64>> {
    let k = endog.ncols();
    if endog.nrows() < p {
        return Err(VarxError::TooShort {
            have: endog.nrows(),
            need: p,
        });
    }
    let m = if s > 0 {
        let x = exog.ok_or_else(|| {
            VarxError::Invalid("exogenous lag order requires exogenous data".into())
        })?;
        if x.nrows() < s {
            return Err(VarxError::TooShort {
                have: x.nrows(),
                need: s,
            });
        }
        x.ncols()
    } else {
        0
    };
    let mut z = DVector::zeros(k * p + m * s);
    let te = endog.nrows();
    for lag in 1..=p {
        for i in 0..k {
            z[(lag - 1) * k + i] = endog[(te - lag, i)];
        }
    }
    if let (Some(x), true) = (exog, s > 0) {
        let tx = x.nrows();
        for lag in 1..=s {
            for i in 0..m {
                z[k * p + (lag - 1) * m + i] = x[(tx - lag, i)];
            }
        }
    }
    Ok(z)
}

/// Direct forecast `nu + sum_l Phi^(l) y_{t-l+1} + sum_j beta^(j) x_{t-j+1}`
/// from the most recent rows of `endog` / `exog`.
pub fn forecast_direct(
    coeffs: &CoefficientSet,
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    spec: &VarxSpec,
) -> Result<DVector<f64>> {
    let z = latest_regressors(endog, exog, spec.p, spec.s)?;
    let b = coeffs.b();
    if b.ncols() != z.len() || coeffs.nu.len() != spec.k {
        return Err(VarxError::Dimension("coefficients do not match spec".into()));
    }
    Ok(&coeffs.nu + b * z)
}

/// `1/2 ||Y - B Z||_F^2` on the stored (possibly centered) design.
pub fn least_squares_objective(design: &LaggedDesign, b: &DMatrix<f64>) -> f64 {
    let resid = &design.y - b * &design.z;
    0.5 * resid.norm_squared()
}

/// Companion matrix of `[Phi^(1), ..., Phi^(p)]` (k x kp).
pub fn companion_matrix(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let k = phi.nrows();
    let kp = phi.ncols();
    let mut a = DMatrix::zeros(kp, kp);
    a.rows_mut(0, k).copy_from(phi);
    for i in k..kp {
        a[(i, i - k)] = 1.0;
    }
    a
}

/// Spectral radius of the companion matrix; values below one certify stationarity.
pub fn companion_spectral_radius(phi: &DMatrix<f64>) -> f64 {
    if phi.nrows() == 0 {
        return 0.0;
    }
    let a = companion_matrix(phi);
    let n = a.nrows();
    let max_iter = 100 * n.max(10);
    let radius = |m: DMatrix<f64>| {
        Schur::try_new(m, f64::EPSILON, max_iter)
            .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
    };
    if let Some(r) = radius(a.clone()) {
        return r;
    }
    // highly regular companions can stall the shifted QR iteration; an
    // orthogonal similarity keeps the spectrum and breaks the regularity
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        if let Some(r) = radius(q.transpose() * &a * &q) {
            return r;
        }
    }
    log::warn!("Schur iteration failed; spectral radius estimated from matrix powers");
    gelfand_radius(a)
}

/// `||A^(2^12)||^(2^-12)`, with the power kept as `exp(log_scale) * m`.
fn gelfand_radius(a: DMatrix<f64>) -> f64 {
    let (mut m, mut log_scale, mut power) = (a, 0.0f64, 1.0f64);
    for _ in 0..12 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        m /= norm;
        log_scale = 2.0 * (log_scale + norm.ln());
        m = &m * &m;
        power *= 2.0;
    }
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    ((log_scale + norm.ln()) / power).exp()
}
