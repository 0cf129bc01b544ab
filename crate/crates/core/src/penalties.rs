//! Penalty structures, their coefficient groupings and weights, penalty
//! evaluation and the starting point of the penalty grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarxError};
use crate::varx::{LaggedDesign, VarxSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Basic,
    #[serde(rename = "lag")]
    LagGroup,
    OwnOther,
    SparseLag,
    SparseOwnOther,
    #[serde(rename = "endo_first")]
    EndogenousFirst,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 6] = [
        PenaltyKind::Basic,
        PenaltyKind::LagGroup,
        PenaltyKind::OwnOther,
        PenaltyKind::SparseLag,
        PenaltyKind::SparseOwnOther,
        PenaltyKind::EndogenousFirst,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Basic => "basic",
            PenaltyKind::LagGroup => "lag",
            PenaltyKind::OwnOther => "own_other",
            PenaltyKind::SparseLag => "sparse_lag",
            PenaltyKind::SparseOwnOther => "sparse_own_other",
            PenaltyKind::EndogenousFirst => "endo_first",
        }
    }

    pub fn is_sparse_group(&self) -> bool {
        matches!(self, PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = VarxError;

    fn from_str(s: &str) -> Result<Self> {
        PenaltyKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                VarxError::Invalid(format!(
                    "unknown structure `{s}` (expected one of basic, lag, own_other, sparse_lag, sparse_own_other, endo_first)"
                ))
            })
    }
}

/// A penalty kind together with its within-group mixing weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyStructure {
    pub kind: PenaltyKind,
    /// L1 share of the sparse-group penalties; ignored by the other kinds.
    pub alpha: f64,
}

impl PenaltyStructure {
    pub fn new(kind: PenaltyKind, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(VarxError::Invalid(format!("alpha = {alpha} is outside [0, 1]")));
        }
        Ok(Self { kind, alpha })
    }

    /// Uses `alpha = 1/(k+1)`.
    pub fn with_default_alpha(kind: PenaltyKind, k: usize) -> Self {
        Self {
            kind,
            alpha: default_alpha(k),
        }
    }
}

/// Default L1 share `1/(k+1)`.
pub fn default_alpha(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Singleton,
    EndogLag,
    OwnDiag,
    OtherOffDiag,
    ExogColumn,
    NestedOuter,
    NestedInner,
}

/// Entries of `B = [Phi, beta]` penalized jointly, with the group's weight
/// folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub kind: GroupKind,
    /// `(row, column)` positions in `B`.
    pub entries: Vec<(usize, usize)>,
    pub weight: f64,
    /// Lag of the coefficients (1-based); 0 for singletons.
    pub lag: usize,
}

impl Group {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self, b: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c)| b[(r, c)] * b[(r, c)])
            .sum::<f64>()
            .sqrt()
    }

    /// Entries grouped by row: `(row, columns)` in first-seen order.
    pub fn row_parts(&self) -> Vec<(usize, Vec<usize>)> {
        let mut parts: Vec<(usize, Vec<usize>)> = Vec::new();
        for &(r, c) in &self.entries {
            match parts.iter_mut().find(|(row, _)| *row == r) {
                Some((_, cols)) => cols.push(c),
                None => parts.push((r, vec![c])),
            }
        }
        parts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    pub groups: Vec<Group>,
    /// Nested structures list each outer group followed by its inner group.
    pub nested: bool,
}

impl GroupPartition {
    pub fn total_entries(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }
}

/// Coefficient groups and weights for `structure` on a model of shape `spec`.
pub fn group_partition(spec: &VarxSpec, structure: &PenaltyStructure) -> Result<GroupPartition> {
    let (k, m, p, s) = (spec.k, spec.m, spec.p, spec.s);
    let kp = k * p;
    let mut groups = Vec::new();
    let exog_columns = |groups: &mut Vec<Group>| {
        for lag in 1..=s {
            for i in 0..m {
                let col = kp + (lag - 1) * m + i;
                groups.push(Group {
                    kind: GroupKind::ExogColumn,
                    entries: (0..k).map(|r| (r, col)).collect(),
                    weight: (k as f64).sqrt(),
                    lag,
                });
            }
        }
    };
    match structure.kind {
        PenaltyKind::Basic => {
            for c in 0..spec.n_regressors() {
                let lag = if c < kp { c / k + 1 } else { (c - kp) / m + 1 };
                for r in 0..k {
                    groups.push(Group {
                        kind: GroupKind::Singleton,
                        entries: vec![(r, c)],
                        weight: 1.0,
                        lag,
                    });
                }
            }
        }
        PenaltyKind::LagGroup | PenaltyKind::SparseLag => {
            for lag in 1..=p {
                let mut entries = Vec::with_capacity(k * k);
                for c in (lag - 1) * k..lag * k {
                    for r in 0..k {
                        entries.push((r, c));
                    }
                }
                groups.push(Group {
                    kind: GroupKind::EndogLag,
                    entries,
                    weight: k as f64,
                    lag,
                });
            }
            exog_columns(&mut groups);
        }
        PenaltyKind::OwnOther | PenaltyKind::SparseOwnOther => {
            for lag in 1..=p {
                let base = (lag - 1) * k;
                groups.push(Group {
                    kind: GroupKind::OwnDiag,
                    entries: (0..k).map(|i| (i, base + i)).collect(),
                    weight: (k as f64).sqrt(),
                    lag,
                });
                if k > 1 {
                    let mut entries = Vec::with_capacity(k * (k - 1));
                    for c in 0..k {
                        for r in 0..k {
                            if r != c {
                                entries.push((r, base + c));
                            }
                        }
                    }
                    groups.push(Group {
                        kind: GroupKind::OtherOffDiag,
                        entries,
                        weight: ((k * (k - 1)) as f64).sqrt(),
                        lag,
                    });
                }
            }
            exog_columns(&mut groups);
        }
        PenaltyKind::EndogenousFirst => {
            if s > p {
                return Err(VarxError::Invalid(format!(
                    "endo_first requires s <= p (got s = {s}, p = {p})"
                )));
            }
            for r in 0..k {
                for lag in 1..=p {
                    let endo: Vec<(usize, usize)> =
                        ((lag - 1) * k..lag * k).map(|c| (r, c)).collect();
                    let exo: Vec<(usize, usize)> = if lag <= s {
                        (0..m).map(|i| (r, kp + (lag - 1) * m + i)).collect()
                    } else {
                        Vec::new()
                    };
                    let mut outer = endo;
                    outer.extend(exo.iter().copied());
                    groups.push(Group {
                        kind: GroupKind::NestedOuter,
                        entries: outer,
                        weight: 1.0,
                        lag,
                    });
                    groups.push(Group {
                        kind: GroupKind::NestedInner,
                        entries: exo,
                        weight: 1.0,
                        lag,
                    });
                }
            }
            return Ok(GroupPartition {
                groups,
                nested: true,
            });
        }
    }
    Ok(GroupPartition {
        groups,
        nested: false,
    })
}

/// Penalty value `P(B)` (without the factor lambda).
pub fn penalty_value(
    b: &DMatrix<f64>,
    structure: &PenaltyStructure,
    partition: &GroupPartition,
) -> f64 {
    let group_sum = || -> f64 {
        partition
            .groups
            .iter()
            .map(|g| g.weight * g.norm(b))
            .sum()
    };
    let l1 = || b.iter().map(|v| v.abs()).sum::<f64>();
    match structure.kind {
        PenaltyKind::Basic => l1(),
        PenaltyKind::LagGroup | PenaltyKind::OwnOther | PenaltyKind::EndogenousFirst => {
            group_sum()
        }
        PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => {
            let a = structure.alpha;
            let g = if a < 1.0 { group_sum() } else { 0.0 };
            let l = if a > 0.0 { l1() } else { 0.0 };
            (1.0 - a) * g + a * l
        }
    }
}

/// Convenience wrapper building the partition first.
pub fn penalty_value_for(
    b: &DMatrix<f64>,
    structure: &PenaltyStructure,
    spec: &VarxSpec,
) -> Result<f64> {
    let partition = group_partition(spec, structure)?;
    Ok(penalty_value(b, structure, &partition))
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Smallest `lambda` with `||ST(c, alpha*lambda)|| <= (1-alpha) * w * lambda`.
pub(crate) fn sparse_group_threshold(c: &[f64], alpha: f64, w: f64) -> f64 {
    let linf = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let l2 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if linf == 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return linf;
    }
    if alpha <= 0.0 {
        return l2 / w;
    }
    let gap = |lam: f64| -> f64 {
        let st: f64 = c.iter().map(|&v| soft(v, alpha * lam).powi(2)).sum::<f64>().sqrt();
        st - (1.0 - alpha) * w * lam
    };
    let mut lo = 0.0;
    let mut hi = (l2 / ((1.0 - alpha) * w)).min(linf / alpha);
    while gap(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Smallest `lambda` at which the nested pair (outer `[a-part, b-part]`, inner
/// `b-part`) is zero given correlation norms `a = ||c_endo||`, `b = ||c_exo||`.
pub(crate) fn nested_threshold(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        (a * a + b * b) / (2.0 * b)
    }
}

/// Smallest penalty at which the all-zero coefficient matrix is optimal for
/// the centered design, with the structure's group weights applied.
pub fn lambda_max(
    design: &LaggedDesign,
    structure: &PenaltyStructure,
    spec: &VarxSpec,
) -> Result<f64> {
    let corr = &design.y * design.z.transpose();
    lambda_max_from_corr(&corr, structure, spec)
}

/// As [`lambda_max`], from the correlation matrix `Y Z^T` (k x (kp+ms)).
pub fn lambda_max_from_corr(
    corr: &DMatrix<f64>,
    structure: &PenaltyStructure,
    spec: &VarxSpec,
) -> Result<f64> {
    if corr.nrows() != spec.k || corr.ncols() != spec.n_regressors() {
        return Err(VarxError::Dimension(
            "correlation matrix does not match spec".into(),
        ));
    }
    let partition = group_partition(spec, structure)?;
    let values = |g: &Group| -> Vec<f64> { g.entries.iter().map(|&(r, c)| corr[(r, c)]).collect() };
    let lam = match structure.kind {
        PenaltyKind::Basic => corr.amax(),
        PenaltyKind::LagGroup | PenaltyKind::OwnOther => partition
            .groups
            .iter()
            .map(|g| g.norm(corr) / g.weight)
            .fold(0.0, f64::max),
        PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => partition
            .groups
            .iter()
            .map(|g| sparse_group_threshold(&values(g), structure.alpha, g.weight))
            .fold(0.0, f64::max),
        PenaltyKind::EndogenousFirst => partition
            .groups
            .chunks(2)
            .map(|pair| {
                let (outer, inner) = (&pair[0], &pair[1]);
                let total = outer.norm(corr);
                let b = inner.norm(corr);
                let a = (total * total - b * b).max(0.0).sqrt();
                nested_threshold(a, b)
            })
            .fold(0.0, f64::max),
    };
    Ok(lam)
}

/// Log-linear descending penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub depth: f64,
}

impl LambdaGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// A grid holding exactly the given values (used for fixed-penalty runs).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(VarxError::Invalid("grid values must be finite and non-negative".into()));
        }
        let depth = values[0] / values[values.len() - 1];
        Ok(Self { values, depth })
    }
}

/// `values[i] = lambda_max * depth^(-i/(n-1))`.
pub fn lambda_grid(lambda_max: f64, n_points: usize, depth: f64) -> Result<LambdaGrid> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(VarxError::Degenerate(format!(
            "lambda_max = {lambda_max}: the response has no correlation with the lagged regressors (constant or all-zero data?)"
        )));
    }
    if n_points < 2 {
        return Err(VarxError::Invalid("the grid needs at least 2 points".into()));
    }
    if !(depth > 1.0) {
        return Err(VarxError::Invalid("grid depth must exceed 1".into()));
    }
    let last = (n_points - 1) as f64;
    let values = (0..n_points)
        .map(|i| lambda_max * depth.powf(-(i as f64) / last))
        .collect();
    Ok(LambdaGrid { values, depth })
}
