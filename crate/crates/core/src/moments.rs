//! Return panels and moment estimation.
//!
//! The linear-shrinkage estimator blends the sample covariance `S` (divisor
//! `n - 1`) with the scaled identity `m·I`, `m = tr(S)/p`:
//!
//! ```text
//! Σ̂ = ρ·m·I + (1 − ρ)·S
//! d² = ‖S − m·I‖²_F
//! b̄² = (1/n²) Σ_k ‖x_k x_kᵀ − S‖²_F      (x_k = centered row k)
//! ρ  = min(b̄², d²) / d²                  (ρ = 1 when d² = 0)
//! ```
//!
//! The Frobenius norms are left unnormalised; the common `1/p` factor of the
//! usual presentation cancels in the ratio.

use std::collections::HashSet;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Unit in which a panel's return values are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnUnit {
    /// 0.01 means one percent.
    Decimal,
    /// 1.0 means one percent.
    Percent,
}

impl ReturnUnit {
    /// Multiplier converting a value in this unit into a decimal fraction.
    pub fn to_decimal(self) -> f64 {
        match self {
            ReturnUnit::Decimal => 1.0,
            ReturnUnit::Percent => 0.01,
        }
    }
}

/// Dated `n × p` matrix of simple excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<String>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
    unit: ReturnUnit,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<String>,
        assets: Vec<String>,
        returns: DMatrix<f64>,
        unit: ReturnUnit,
    ) -> Result<Self> {
        if returns.nrows() < 2 {
            return Err(Error::invalid(format!(
                "return panel needs at least 2 rows, got {}",
                returns.nrows()
            )));
        }
        if returns.ncols() < 1 {
            return Err(Error::invalid("return panel has no assets"));
        }
        if dates.len() != returns.nrows() {
            return Err(Error::invalid(format!(
                "{} dates for {} return rows",
                dates.len(),
                returns.nrows()
            )));
        }
        if assets.len() != returns.ncols() {
            return Err(Error::invalid(format!(
                "{} asset ids for {} return columns",
                assets.len(),
                returns.ncols()
            )));
        }
        let mut seen = HashSet::with_capacity(assets.len());
        for a in &assets {
            if !seen.insert(a.as_str()) {
                return Err(Error::invalid(format!("duplicate asset id `{a}`")));
            }
        }
        if let Some((i, j)) = first_non_finite(&returns) {
            return Err(Error::invalid(format!(
                "non-finite return at row {i} (date {}), asset `{}`",
                dates[i], assets[j]
            )));
        }
        Ok(Self {
            dates,
            assets,
            returns,
            unit,
        })
    }

    /// Panel with generated date labels `d0000, d0001, …` and asset ids `a0000, …`.
    pub fn from_matrix(returns: DMatrix<f64>, unit: ReturnUnit) -> Result<Self> {
        let dates = (0..returns.nrows()).map(|i| format!("d{i:04}")).collect();
        let assets = (0..returns.ncols()).map(|j| format!("a{j:04}")).collect();
        Self::new(dates, assets, returns, unit)
    }

    pub fn n(&self) -> usize {
        self.returns.nrows()
    }

    pub fn p(&self) -> usize {
        self.returns.ncols()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn unit(&self) -> ReturnUnit {
        self.unit
    }

    /// Contiguous block of rows as a new panel (needs at least two rows).
    pub fn window(&self, rows: Range<usize>) -> Result<Self> {
        if rows.end > self.n() || rows.start >= rows.end {
            return Err(Error::invalid(format!(
                "row range {rows:?} outside panel of {} rows",
                self.n()
            )));
        }
        let returns = self
            .returns
            .rows(rows.start, rows.end - rows.start)
            .into_owned();
        Self::new(
            self.dates[rows].to_vec(),
            self.assets.clone(),
            returns,
            self.unit,
        )
    }

    /// The same data expressed in another unit.
    pub fn converted(&self, unit: ReturnUnit) -> Self {
        let factor = self.unit.to_decimal() / unit.to_decimal();
        Self {
            dates: self.dates.clone(),
            assets: self.assets.clone(),
            returns: &self.returns * factor,
            unit,
        }
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Covariance estimator used to build a [`MomentEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Sample,
    LinearShrinkage,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::Sample => "sample",
            Estimator::LinearShrinkage => "lse",
        }
    }
}

impl std::str::FromStr for ReturnUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decimal" => Ok(ReturnUnit::Decimal),
            "percent" => Ok(ReturnUnit::Percent),
            other => Err(Error::invalid(format!(
                "unknown unit `{other}` (expected decimal or percent)"
            ))),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sample" => Ok(Estimator::Sample),
            "lse" | "linear-shrinkage" | "linear_shrinkage" => Ok(Estimator::LinearShrinkage),
            other => Err(Error::invalid(format!(
                "unknown estimator `{other}` (expected sample or lse)"
            ))),
        }
    }
}

/// Mean vector and covariance matrix, both per-period in the panel's unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub estimator: Estimator,
}

impl MomentEstimate {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, estimator: Estimator) -> Result<Self> {
        let p = mu.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::invalid(format!(
                "mean has length {p} but covariance is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("moment estimate contains non-finite values"));
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            mu,
            sigma,
            estimator,
        })
    }

    /// Estimates moments from a panel: sample mean plus the chosen covariance.
    pub fn estimate(panel: &ReturnPanel, estimator: Estimator) -> Result<Self> {
        let mu = sample_mean(panel)?;
        let sigma = match estimator {
            Estimator::Sample => sample_covariance(panel)?,
            Estimator::LinearShrinkage => linear_shrinkage(panel)?.sigma,
        };
        Ok(Self {
            mu,
            sigma,
            estimator,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

/// Column-wise arithmetic mean.
pub fn sample_mean(panel: &ReturnPanel) -> Result<DVector<f64>> {
    let r = panel.returns();
    if r.nrows() == 0 {
        return Err(Error::invalid("empty panel"));
    }
    let n = r.nrows() as f64;
    Ok(DVector::from_iterator(
        r.ncols(),
        r.column_iter().map(|c| c.sum() / n),
    ))
}

fn centered(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    let mean = sample_mean(panel)?;
    let mut x = panel.returns().clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    Ok(x)
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Sample covariance with divisor `n − 1`, symmetrised.
pub fn sample_covariance(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    let n = panel.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "covariance needs at least 2 observations, got {n}"
        )));
    }
    let x = centered(panel)?;
    let mut s = x.tr_mul(&x) / (n as f64 - 1.0);
    symmetrize(&mut s);
    Ok(s)
}

/// Output of [`linear_shrinkage`]: the shrunk matrix and its ingredients.
#[derive(Debug, Clone)]
pub struct Shrinkage {
    pub sigma: DMatrix<f64>,
    /// Shrinkage intensity ρ ∈ [0, 1].
    pub intensity: f64,
    /// Target scale m = tr(S)/p.
    pub target_scale: f64,
}

/// Linear shrinkage towards `m·I`; see the module docs for the formulas.
pub fn linear_shrinkage(panel: &ReturnPanel) -> Result<Shrinkage> {
    let n = panel.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "covariance needs at least 2 observations, got {n}"
        )));
    }
    let p = panel.p();
    let x = centered(panel)?;
    let mut s = x.tr_mul(&x) / (n as f64 - 1.0);
    symmetrize(&mut s);

    let m = s.trace() / p as f64;
    let s_frob2 = s.norm_squared();
    // ‖S − mI‖² = ‖S‖² − 2m·tr(S) + m²p
    let d2 = (s_frob2 - 2.0 * m * s.trace() + m * m * p as f64).max(0.0);

    // ‖x xᵀ − S‖² = ‖x‖⁴ − 2 xᵀSx + ‖S‖²
    let xs = &x * &s;
    let mut acc = 0.0;
    for k in 0..n {
        let row = x.row(k);
        let norm2 = row.norm_squared();
        let quad = row.dot(&xs.row(k));
        acc += (norm2 * norm2 - 2.0 * quad + s_frob2).max(0.0);
    }
    let b_bar2 = acc / (n as f64 * n as f64);

    let intensity = if d2 > 0.0 {
        (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let mut sigma = s * (1.0 - intensity);
    for i in 0..p {
        sigma[(i, i)] += intensity * m;
    }
    symmetrize(&mut sigma);
    Ok(Shrinkage {
        sigma,
        intensity,
        target_scale: m,
    })
}

/// Shrunk covariance matrix only.
pub fn linear_shrinkage_covariance(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    Ok(linear_shrinkage(panel)?.sigma)
}
