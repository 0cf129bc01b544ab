//! Model confidence set over per-period forecast losses using the range
//! statistic and a circular block bootstrap.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};

const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-period losses, one row per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    pub losses: DMatrix<f64>,
    pub model_names: Vec<String>,
}

impl LossMatrix {
    pub fn new(losses: DMatrix<f64>, model_names: Vec<String>) -> Result<Self> {
        if losses.nrows() != model_names.len() {
            return Err(VarxError::Dimension(format!(
                "{} loss rows for {} model names",
                losses.nrows(),
                model_names.len()
            )));
        }
        let mut sorted = model_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != model_names.len() {
            return Err(VarxError::Invalid("model names must be unique".into()));
        }
        if losses.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(VarxError::Invalid("losses must be finite and nonnegative".into()));
        }
        Ok(Self { losses, model_names })
    }

    /// Builds the matrix from named per-period loss series of equal length.
    pub fn from_rows(rows: &[(String, Vec<f64>)]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.1.len());
        if rows.iter().any(|r| r.1.len() != n) {
            return Err(VarxError::Dimension("loss series differ in length".into()));
        }
        let losses = DMatrix::from_fn(rows.len(), n, |i, t| rows[i].1[t]);
        Self::new(losses, rows.iter().map(|r| r.0.clone()).collect())
    }

    pub fn n_models(&self) -> usize {
        self.losses.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.losses.ncols()
    }
}

/// Pairwise loss differentials `d[i][j][t] = L[i,t] - L[j,t]`.
pub fn loss_differentials(losses: &LossMatrix) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = losses.n_models();
    if n < 2 {
        return Err(VarxError::Invalid("at least two models are required".into()));
    }
    let l = &losses.losses;
    Ok((0..n)
        .map(|i| (0..n).map(|j| (0..l.ncols()).map(|t| l[(i, t)] - l[(j, t)]).collect()).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsOptions {
    pub alpha: f64,
    pub n_boot: usize,
    /// Defaults to `floor(n_periods^(1/3))`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            n_boot: 5000,
            block_len: None,
            seed: 0,
        }
    }
}

/// One equal-predictive-ability test on the current candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub models: Vec<String>,
    pub statistic: f64,
    pub p_value: f64,
    pub eliminated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    /// Surviving models in input order.
    pub survivors: Vec<String>,
    pub trace: Vec<McsStep>,
    pub block_len: usize,
    pub n_boot: usize,
    pub alpha: f64,
}

/// Default block length `floor(n^(1/3))`, at least 1.
pub fn default_block_len(n_periods: usize) -> usize {
    let mut b = (n_periods as f64).cbrt().floor() as usize;
    // guard against cbrt rounding just below an exact cube
    while (b + 1).pow(3) <= n_periods {
        b += 1;
    }
    b.max(1)
}

/// Circular block bootstrap resamples of `0..n`.
fn bootstrap_indices(n: usize, block_len: usize, n_boot: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_boot)
        .map(|_| {
            let mut idx = Vec::with_capacity(n + block_len);
            while idx.len() < n {
                let start = rng.random_range(0..n);
                idx.extend((0..block_len).map(|u| (start + u) % n));
            }
            idx.truncate(n);
            idx
        })
        .collect()
}

/// Runs the sequential elimination procedure and returns the surviving set.
pub fn mcs(losses: &LossMatrix, opts: &McsOptions) -> Result<McsResult> {
    let n_models = losses.n_models();
    let n = losses.n_periods();
    if n_models == 0 {
        return Err(VarxError::Invalid("no models supplied".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(VarxError::Invalid(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    if opts.n_boot == 0 {
        return Err(VarxError::Invalid("n_boot must be positive".into()));
    }
    let block_len = opts.block_len.unwrap_or_else(|| default_block_len(n));
    if block_len == 0 || n < 2 * block_len {
        return Err(VarxError::TooShort {
            have: n,
            need: 2 * block_len.max(1),
        });
    }

    // canonical order by name so the outcome does not depend on input order
    let mut order: Vec<usize> = (0..n_models).collect();
    order.sort_by(|&a, &b| losses.model_names[a].cmp(&losses.model_names[b]));

    let l = &losses.losses;
    let means: Vec<f64> = (0..n_models).map(|i| l.row(i).sum() / n as f64).collect();
    let draws = bootstrap_indices(n, block_len, opts.n_boot, opts.seed);
    let boot: Vec<Vec<f64>> = (0..n_models)
        .map(|i| draws.iter().map(|idx| idx.iter().map(|&t| l[(i, t)]).sum::<f64>() / n as f64).collect())
        .collect();

    let mut alive = order;
    let mut trace = Vec::new();
    while alive.len() > 1 {
        let (statistic, p_value) = range_test(&alive, &means, &boot);
        let reject = p_value < opts.alpha;
        let eliminated = reject.then(|| worst_model(&alive, &means, &losses.model_names));
        trace.push(McsStep {
            models: alive.iter().map(|&i| losses.model_names[i].clone()).collect(),
            statistic,
            p_value,
            eliminated: eliminated.map(|w| losses.model_names[alive[w]].clone()),
        });
        match eliminated {
            Some(w) => {
                alive.remove(w);
            }
            None => break,
        }
    }
    alive.sort_unstable();
    Ok(McsResult {
        survivors: alive.iter().map(|&i| losses.model_names[i].clone()).collect(),
        trace,
        block_len,
        n_boot: opts.n_boot,
        alpha: opts.alpha,
    })
}

/// Range statistic `max |d_ij| / sd(d_ij)` and its bootstrap p-value.
fn range_test(alive: &[usize], means: &[f64], boot: &[Vec<f64>]) -> (f64, f64) {
    let n_boot = boot[0].len();
    let mut statistic = 0.0f64;
    let mut null_max = vec![0.0f64; n_boot];
    for (a, &i) in alive.iter().enumerate() {
        for &j in &alive[a + 1..] {
            let d = means[i] - means[j];
            let centered: Vec<f64> = (0..n_boot).map(|b| boot[i][b] - boot[j][b] - d).collect();
            let var = (centered.iter().map(|x| x * x).sum::<f64>() / n_boot as f64).max(VARIANCE_FLOOR);
            let sd = var.sqrt();
            statistic = statistic.max(d.abs() / sd);
            for (m, c) in null_max.iter_mut().zip(&centered) {
                *m = m.max(c.abs() / sd);
            }
        }
    }
    let exceed = null_max.iter().filter(|&&m| m >= statistic).count();
    (statistic, exceed as f64 / n_boot as f64)
}

/// Position in `alive` of the model with the largest average differential;
/// ties go to the lexicographically last name.
fn worst_model(alive: &[usize], means: &[f64], names: &[String]) -> usize {
    let avg = |i: usize| alive.iter().map(|&j| means[i] - means[j]).sum::<f64>() / alive.len() as f64;
    let mut best = 0;
    for pos in 1..alive.len() {
        let (cur, top) = (avg(alive[pos]), avg(alive[best]));
        if cur > top || (cur == top && names[alive[pos]] > names[alive[best]]) {
            best = pos;
        }
    }
    best
}
