//! Hyperplane-constrained quadratic programs with per-coordinate ℓ1 weights.
//!
//! Every strategy reduces to
//!
//! ```text
//! minimize   wᵀQw + cᵀw + Σ_j θ_j |w_j|
//! subject to 1ᵀw = b
//! ```
//!
//! with `Q` symmetric PSD and `θ ≥ 0`. The solver alternates an exact
//! bordered-KKT solve of the smooth block with a coordinatewise soft-threshold
//! (ADMM with over-relaxation and residual balancing). The smooth block is
//! solved in the eigenbasis of `Q`, so changing the penalty parameter costs
//! O(p) and the factorization is shared by every solve on the same
//! [`QpWorkspace`].
//!
//! ADMM is only used to locate the support and signs. Once a sign pattern is
//! stable the solution is polished: the restricted equality-constrained QP on
//! the support is solved exactly and the full KKT conditions are checked,
//! adding violating coordinates and dropping sign-inconsistent ones until they
//! hold. Returned solutions therefore carry exact zeros off the support and a
//! stationarity residual at round-off level.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solver tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Tolerance on the KKT stationarity residual of the returned point.
    pub primal_tol: f64,
    /// Tolerance on the ADMM dual residual.
    pub dual_tol: f64,
    /// Initial ADMM penalty, relative to the mean diagonal of `2Q`.
    pub penalty_parameter: f64,
    /// Coordinates with magnitude below this are returned as exact zeros.
    pub zero_clip: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            primal_tol: 1e-8,
            dual_tol: 1e-8,
            penalty_parameter: 1.0,
            zero_clip: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        for (name, v) in [
            ("primal_tol", self.primal_tol),
            ("dual_tol", self.dual_tol),
            ("penalty_parameter", self.penalty_parameter),
            ("zero_clip", self.zero_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A single weighted-ℓ1 QP instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedL1QP {
    pub quad: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub budget: f64,
    pub l1_weights: DVector<f64>,
}

impl WeightedL1QP {
    pub fn new(
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        budget: f64,
        l1_weights: DVector<f64>,
    ) -> Result<Self> {
        validate_parts(&quad, &linear, budget, &l1_weights)?;
        Ok(Self {
            quad,
            linear,
            budget,
            l1_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// `wᵀQw + cᵀw + Σ θ_j |w_j|`
    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        objective(&self.quad, &self.linear, &self.l1_weights, w)
    }
}

pub(crate) fn objective(
    quad: &DMatrix<f64>,
    linear: &DVector<f64>,
    l1: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let qw = quad * w;
    w.dot(&qw) + linear.dot(w) + l1.iter().zip(w.iter()).map(|(t, x)| t * x.abs()).sum::<f64>()
}

fn validate_parts(
    quad: &DMatrix<f64>,
    linear: &DVector<f64>,
    budget: f64,
    l1: &DVector<f64>,
) -> Result<()> {
    let p = linear.len();
    if p == 0 {
        return Err(Error::invalid("empty problem"));
    }
    if quad.nrows() != p || quad.ncols() != p || l1.len() != p {
        return Err(Error::invalid(format!(
            "dimension mismatch: Q is {}x{}, c has {p}, θ has {}",
            quad.nrows(),
            quad.ncols(),
            l1.len()
        )));
    }
    if !budget.is_finite() {
        return Err(Error::invalid("budget must be finite"));
    }
    if quad.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in Q or c"));
    }
    if let Some(t) = l1.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::invalid(format!(
            "ℓ1 weights must be finite and nonnegative, got {t}"
        )));
    }
    check_symmetric(quad)
}

fn check_symmetric(quad: &DMatrix<f64>) -> Result<()> {
    let p = quad.nrows();
    if quad.ncols() != p {
        return Err(Error::invalid("Q must be square"));
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if (quad[(i, j)] - quad[(j, i)]).abs() > 1e-10 {
                return Err(Error::invalid(format!(
                    "Q is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// `sign(v)·max(|v| − t, 0)`
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Optimality measures of a candidate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// ∞-norm distance of `−(2Qw + c + h·1)` from the subdifferential of
    /// `Σ θ_j |w_j|`, minimised over the multiplier `h`.
    pub stationarity: f64,
    /// `|1ᵀw − b|`
    pub budget_gap: f64,
    /// Minimising multiplier `h`.
    pub multiplier: f64,
}

/// KKT residuals of `w` for `problem`.
pub fn kkt_residual(problem: &WeightedL1QP, w: &DVector<f64>) -> KktReport {
    let grad = 2.0 * (&problem.quad * w) + &problem.linear;
    kkt_from_gradient(&grad, &problem.l1_weights, problem.budget, w)
}

/// Residuals given the smooth gradient `g = 2Qw + c`.
///
/// Each coordinate residual is `max(h − U_j, L_j − h, 0)` for breakpoints
/// `L_j ≤ U_j`, so the max over coordinates is minimised at `h = (L + U)/2`
/// with `L = max L_j`, `U = min U_j`.
pub(crate) fn kkt_from_gradient(
    grad: &DVector<f64>,
    l1: &DVector<f64>,
    budget: f64,
    w: &DVector<f64>,
) -> KktReport {
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for j in 0..w.len() {
        let (lo, hi) = if w[j] > 0.0 {
            let c = -grad[j] - l1[j];
            (c, c)
        } else if w[j] < 0.0 {
            let c = -grad[j] + l1[j];
            (c, c)
        } else {
            (-l1[j] - grad[j], l1[j] - grad[j])
        };
        lower = lower.max(lo);
        upper = upper.min(hi);
    }
    let multiplier = 0.5 * (lower + upper);
    KktReport {
        stationarity: (0.5 * (lower - upper)).max(0.0),
        budget_gap: (w.sum() - budget).abs(),
        multiplier,
    }
}

/// How a [`Solution`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// No ℓ1 weights: a single bordered-KKT solve.
    Direct,
    /// Active-set polish from the warm start, no splitting iterations.
    WarmActiveSet,
    /// Splitting iterations followed by an active-set polish.
    Splitting,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: DVector<f64>,
    pub kkt: KktReport,
    /// Splitting iterations used (0 for direct and warm solves).
    pub iterations: usize,
    pub method: SolveMethod,
}

// Feasibility bookkeeping over every successful solve in the process.
static SOLVES: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);
static MAX_BUDGET_GAP: AtomicU64 = AtomicU64::new(0);
static MAX_STATIONARITY: AtomicU64 = AtomicU64::new(0);

/// Process-wide counters of returned solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub solves: u64,
    /// Solutions with budget gap above 1e-8 or stationarity above 1e-6.
    pub violations: u64,
    pub max_budget_gap: f64,
    pub max_stationarity: f64,
}

pub fn solve_stats() -> SolveStats {
    SolveStats {
        solves: SOLVES.load(Ordering::Relaxed),
        violations: VIOLATIONS.load(Ordering::Relaxed),
        max_budget_gap: f64::from_bits(MAX_BUDGET_GAP.load(Ordering::Relaxed)),
        max_stationarity: f64::from_bits(MAX_STATIONARITY.load(Ordering::Relaxed)),
    }
}

fn record(kkt: &KktReport) {
    SOLVES.fetch_add(1, Ordering::Relaxed);
    if kkt.budget_gap > 1e-8 || kkt.stationarity > 1e-6 {
        VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
    // nonnegative floats order like their bit patterns
    MAX_BUDGET_GAP.fetch_max(kkt.budget_gap.to_bits(), Ordering::Relaxed);
    MAX_STATIONARITY.fetch_max(kkt.stationarity.to_bits(), Ordering::Relaxed);
}

/// Solves a weighted-ℓ1 QP from a cold start.
pub fn solve_weighted_l1_qp(problem: &WeightedL1QP, config: &SolverConfig) -> Result<DVector<f64>> {
    Ok(solve_weighted_l1_qp_from(problem, config, None)?.weights)
}

/// Solves a weighted-ℓ1 QP, optionally warm-started.
pub fn solve_weighted_l1_qp_from(
    problem: &WeightedL1QP,
    config: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<Solution> {
    let ws = QpWorkspace::new(problem.quad.clone())?;
    ws.solve(
        &problem.linear,
        problem.budget,
        &problem.l1_weights,
        config,
        warm,
    )
}

/// Exact minimiser of `wᵀQw + cᵀw` subject to `1ᵀw = b` via the bordered
/// system `[2Q 1; 1ᵀ 0][w; h] = [−c; b]`.
pub fn kkt_equality_qp(quad: &DMatrix<f64>, linear: &DVector<f64>, budget: f64) -> Result<DVector<f64>> {
    let p = linear.len();
    if quad.nrows() != p || quad.ncols() != p || p == 0 {
        return Err(Error::invalid("dimension mismatch in equality QP"));
    }
    check_symmetric(quad)?;
    let (w, _) = solve_bordered(quad, linear, budget)?;
    Ok(w)
}

/// Returns `(w, h)` with `2Qw + c + h·1 = 0`, `1ᵀw = b`.
pub(crate) fn solve_bordered(
    quad: &DMatrix<f64>,
    linear: &DVector<f64>,
    budget: f64,
) -> Result<(DVector<f64>, f64)> {
    let p = linear.len();
    let scale = quad.diagonal().amax().max(f64::MIN_POSITIVE);
    if let Some(chol) = quad.clone().cholesky() {
        // Schur complement on the multiplier.
        let ones = DVector::from_element(p, 1.0);
        let qc = chol.solve(linear);
        let q1 = chol.solve(&ones);
        let denom = q1.sum();
        if denom > 0.0 && denom.is_finite() {
            let h = -(2.0 * budget + qc.sum()) / denom;
            let w = -0.5 * (qc + q1 * h);
            if w.iter().all(|v| v.is_finite()) && bordered_ok(quad, linear, budget, &w, h, scale) {
                return Ok((w, h));
            }
        }
    }
    let mut k = DMatrix::zeros(p + 1, p + 1);
    k.view_mut((0, 0), (p, p)).copy_from(&(quad * 2.0));
    for i in 0..p {
        k[(i, p)] = 1.0;
        k[(p, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(p + 1);
    rhs.rows_mut(0, p).copy_from(&(-linear));
    rhs[p] = budget;

    let lu = k.clone().full_piv_lu();
    let diag = lu.u().diagonal().map(f64::abs);
    let (dmin, dmax) = (diag.min(), diag.max());
    if !(dmax > 0.0) || dmin <= 1e-13 * dmax {
        return Err(Error::Singular(format!(
            "bordered KKT system of size {} is numerically singular (pivot ratio {:.2e})",
            p + 1,
            if dmax > 0.0 { dmin / dmax } else { 0.0 }
        )));
    }
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("bordered KKT system is singular".into()))?;
    // one step of iterative refinement
    let resid = &rhs - &k * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    let w = sol.rows(0, p).into_owned();
    let h = sol[p];
    if !bordered_ok(quad, linear, budget, &w, h, scale) {
        return Err(Error::Singular(
            "bordered KKT solve failed its residual check".into(),
        ));
    }
    Ok((w, h))
}

fn bordered_ok(
    quad: &DMatrix<f64>,
    linear: &DVector<f64>,
    budget: f64,
    w: &DVector<f64>,
    h: f64,
    scale: f64,
) -> bool {
    let r = 2.0 * (quad * w) + linear;
    let stat = r.iter().map(|v| (v + h).abs()).fold(0.0, f64::max);
    let mag = 1.0 + linear.amax() + h.abs() + scale * w.amax();
    stat <= 1e-10 * mag && (w.sum() - budget).abs() <= 1e-10 * (1.0 + budget.abs() + w.amax())
}

struct Spectral {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// A quadratic form with cached factorizations, shared across the solves of
/// a λ grid, LLA rounds and strategies at one decision date.
pub struct QpWorkspace {
    quad: DMatrix<f64>,
    spectral: OnceLock<std::result::Result<Arc<Spectral>, String>>,
    psd: OnceLock<bool>,
}

impl QpWorkspace {
    pub fn new(quad: DMatrix<f64>) -> Result<Self> {
        if quad.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in Q"));
        }
        check_symmetric(&quad)?;
        Ok(Self {
            quad,
            spectral: OnceLock::new(),
            psd: OnceLock::new(),
        })
    }

    pub fn quad(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn dim(&self) -> usize {
        self.quad.nrows()
    }

    /// Workspace for `Q + diag(d)`. A constant `d` shifts the spectrum, so an
    /// already computed eigenbasis is reused.
    pub fn with_added_diagonal(&self, diag: &DVector<f64>) -> Result<Self> {
        if diag.len() != self.dim() {
            return Err(Error::invalid("diagonal length mismatch"));
        }
        let mut quad = self.quad.clone();
        for i in 0..diag.len() {
            quad[(i, i)] += diag[i];
        }
        let ws = Self::new(quad)?;
        let uniform = diag.iter().all(|v| *v == diag[0]);
        if uniform {
            if let Some(Ok(sp)) = self.spectral.get() {
                let shifted = Spectral {
                    values: sp.values.add_scalar(diag[0]),
                    vectors: sp.vectors.clone(),
                };
                let _ = ws.spectral.set(Ok(Arc::new(shifted)));
            }
        }
        Ok(ws)
    }

    fn spectral(&self) -> Result<Arc<Spectral>> {
        self.spectral
            .get_or_init(|| {
                let eig = SymmetricEigen::new(self.quad.clone());
                let vmax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
                let vmin = eig.eigenvalues.min();
                if vmin < -1e-10 * vmax.max(1.0) {
                    Err(format!("Q is not positive semidefinite (min eigenvalue {vmin:.3e})"))
                } else {
                    Ok(Arc::new(Spectral {
                        values: eig.eigenvalues.map(|v| v.max(0.0)),
                        vectors: eig.eigenvectors,
                    }))
                }
            })
            .clone()
            .map_err(Error::InvalidInput)
    }

    fn check_psd(&self) -> Result<()> {
        let ok = *self.psd.get_or_init(|| {
            if let Some(Ok(_)) = self.spectral.get() {
                return true;
            }
            let p = self.dim();
            let scale = self.quad.diagonal().amax().max(1.0);
            let mut shifted = self.quad.clone();
            for i in 0..p {
                shifted[(i, i)] += 1e-10 * scale;
            }
            shifted.cholesky().is_some()
        });
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("Q is not positive semidefinite (factorization failed)"))
        }
    }

    /// Solves `min wᵀQw + cᵀw + Σθ_j|w_j|  s.t. 1ᵀw = b`.
    pub fn solve(
        &self,
        linear: &DVector<f64>,
        budget: f64,
        l1_weights: &DVector<f64>,
        config: &SolverConfig,
        warm: Option<&DVector<f64>>,
    ) -> Result<Solution> {
        config.validate()?;
        validate_parts(&self.quad, linear, budget, l1_weights)?;
        self.check_psd()?;
        let p = self.dim();
        if let Some(w0) = warm {
            if w0.len() != p {
                return Err(Error::invalid("warm start has wrong dimension"));
            }
        }
        let ctx = Ctx {
            quad: &self.quad,
            linear,
            budget,
            l1: l1_weights,
            config,
        };

        if l1_weights.iter().all(|t| *t == 0.0) {
            let (mut w, _) = solve_bordered(&self.quad, linear, budget)?;
            clip_and_refit_dense(&ctx, &mut w)?;
            let kkt = ctx.kkt(&w);
            if kkt.stationarity > config.primal_tol.max(1e-10 * ctx.grad_scale(&w)) {
                return Err(Error::Convergence {
                    iterations: 0,
                    primal_residual: kkt.budget_gap,
                    dual_residual: 0.0,
                    kkt_residual: kkt.stationarity,
                });
            }
            record(&kkt);
            return Ok(Solution {
                weights: w,
                kkt,
                iterations: 0,
                method: SolveMethod::Direct,
            });
        }

        let mut tried: HashSet<Vec<(usize, bool)>> = HashSet::new();
        if let Some(w0) = warm {
            let pattern = sign_pattern(w0, config.zero_clip);
            tried.insert(pattern.clone());
            if let Some((w, kkt)) = active_set(&ctx, pattern, 40) {
                record(&kkt);
                return Ok(Solution {
                    weights: w,
                    kkt,
                    iterations: 0,
                    method: SolveMethod::WarmActiveSet,
                });
            }
        }

        let (w, kkt, iterations) = self.admm(&ctx, warm, &mut tried)?;
        record(&kkt);
        Ok(Solution {
            weights: w,
            kkt,
            iterations,
            method: SolveMethod::Splitting,
        })
    }

    fn admm(
        &self,
        ctx: &Ctx<'_>,
        warm: Option<&DVector<f64>>,
        tried: &mut HashSet<Vec<(usize, bool)>>,
    ) -> Result<(DVector<f64>, KktReport, usize)> {
        const RELAX: f64 = 1.6;
        let sp = self.spectral()?;
        let p = self.dim();
        let cfg = ctx.config;
        let scale = (2.0 * self.quad.trace() / p as f64).max(1e-12);
        let (rho_min, rho_max) = (1e-6 * scale, 1e6 * scale);
        let mut rho = (cfg.penalty_parameter * scale).clamp(rho_min, rho_max);

        let ones = DVector::from_element(p, 1.0);
        let vt_ones = sp.vectors.tr_mul(&ones);
        let mut denom = sp.values.map(|l| 2.0 * l + rho);
        let mut t2 = &sp.vectors * vt_ones.component_div(&denom);
        let mut s2 = t2.sum();

        let mut z = match warm {
            Some(w0) => w0.clone(),
            None => DVector::from_element(p, ctx.budget / p as f64),
        };
        let mut u = DVector::zeros(p);
        let mut x = z.clone();
        let mut last_pattern: Vec<(usize, bool)> = Vec::new();
        let (mut pr, mut dr) = (f64::INFINITY, f64::INFINITY);

        for k in 1..=cfg.max_iterations {
            let r = (&z - &u) * rho - ctx.linear;
            let t1 = &sp.vectors * sp.vectors.tr_mul(&r).component_div(&denom);
            let nu = (t1.sum() - ctx.budget) / s2;
            x.copy_from(&t1);
            x.axpy(-nu, &t2, 1.0);

            let xh = &x * RELAX + &z * (1.0 - RELAX);
            let mut z_new = &xh + &u;
            for j in 0..p {
                z_new[j] = soft_threshold(z_new[j], ctx.l1[j] / rho);
            }
            u += &xh - &z_new;
            pr = (&x - &z_new).amax();
            dr = rho * (&z_new - &z).amax();
            z = z_new;

            let converged = pr <= cfg.primal_tol * (1.0 + x.amax().max(z.amax()))
                && dr <= cfg.dual_tol * (1.0 + rho * u.amax());

            if k % 10 == 0 || converged {
                let pattern = sign_pattern(&z, cfg.zero_clip);
                let stable = pattern == last_pattern;
                if (stable || converged) && !tried.contains(&pattern) {
                    tried.insert(pattern.clone());
                    if let Some((w, kkt)) = active_set(ctx, pattern.clone(), 20) {
                        return Ok((w, kkt, k));
                    }
                }
                last_pattern = pattern;
                if converged {
                    // the limit point's pattern failed to polish; try from x
                    let alt = sign_pattern(&x, cfg.zero_clip.max(1e-6 * x.amax()));
                    if !tried.contains(&alt) {
                        tried.insert(alt.clone());
                        if let Some((w, kkt)) = active_set(ctx, alt, 40) {
                            return Ok((w, kkt, k));
                        }
                    }
                }

                // residual balancing
                let new_rho = if pr > 10.0 * dr {
                    (rho * 2.0).min(rho_max)
                } else if dr > 10.0 * pr {
                    (rho * 0.5).max(rho_min)
                } else {
                    rho
                };
                if new_rho != rho {
                    u *= rho / new_rho;
                    rho = new_rho;
                    denom = sp.values.map(|l| 2.0 * l + rho);
                    t2 = &sp.vectors * vt_ones.component_div(&denom);
                    s2 = t2.sum();
                }
            }
        }
        let kkt = ctx.kkt(&z);
        Err(Error::Convergence {
            iterations: cfg.max_iterations,
            primal_residual: pr,
            dual_residual: dr,
            kkt_residual: kkt.stationarity,
        })
    }
}

struct Ctx<'a> {
    quad: &'a DMatrix<f64>,
    linear: &'a DVector<f64>,
    budget: f64,
    l1: &'a DVector<f64>,
    config: &'a SolverConfig,
}

impl Ctx<'_> {
    fn gradient_sparse(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = self.linear.clone();
        for j in 0..w.len() {
            if w[j] != 0.0 {
                g.axpy(2.0 * w[j], &self.quad.column(j), 1.0);
            }
        }
        g
    }

    fn kkt(&self, w: &DVector<f64>) -> KktReport {
        kkt_from_gradient(&self.gradient_sparse(w), self.l1, self.budget, w)
    }

    fn grad_scale(&self, w: &DVector<f64>) -> f64 {
        1.0 + self.linear.amax() + self.quad.diagonal().amax() * w.amax()
    }
}

/// Sorted `(index, positive)` pairs of the coordinates above `clip`.
fn sign_pattern(w: &DVector<f64>, clip: f64) -> Vec<(usize, bool)> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= clip)
        .map(|(j, v)| (j, *v > 0.0))
        .collect()
}

fn restricted_solve(ctx: &Ctx<'_>, pattern: &[(usize, bool)]) -> Result<(DVector<f64>, f64)> {
    let k = pattern.len();
    let q = DMatrix::from_fn(k, k, |a, b| ctx.quad[(pattern[a].0, pattern[b].0)]);
    let c = DVector::from_fn(k, |a, _| {
        let (j, pos) = pattern[a];
        ctx.linear[j] + if pos { ctx.l1[j] } else { -ctx.l1[j] }
    });
    solve_bordered(&q, &c, ctx.budget)
}

/// Primal-dual active-set refinement from a sign pattern.
fn active_set(
    ctx: &Ctx<'_>,
    mut pattern: Vec<(usize, bool)>,
    max_rounds: usize,
) -> Option<(DVector<f64>, KktReport)> {
    let p = ctx.linear.len();
    let clip = ctx.config.zero_clip;
    let tol = ctx.config.primal_tol;
    let mut seen: HashSet<Vec<(usize, bool)>> = HashSet::new();

    for _ in 0..max_rounds {
        if !seen.insert(pattern.clone()) {
            return None;
        }
        let mut w = DVector::zeros(p);
        if pattern.is_empty() {
            if ctx.budget != 0.0 {
                // seed with the coordinate whose marginal cost is lowest
                let pos = ctx.budget > 0.0;
                let j = (0..p)
                    .min_by(|&a, &b| {
                        let ca = if pos { ctx.linear[a] } else { -ctx.linear[a] } + ctx.l1[a];
                        let cb = if pos { ctx.linear[b] } else { -ctx.linear[b] } + ctx.l1[b];
                        ca.total_cmp(&cb)
                    })
                    .unwrap_or(0);
                pattern = vec![(j, pos)];
                continue;
            }
        } else {
            let (ws, _) = restricted_solve(ctx, &pattern).ok()?;
            let mut dropped = false;
            let mut kept = Vec::with_capacity(pattern.len());
            for (a, &(j, pos)) in pattern.iter().enumerate() {
                let v = ws[a];
                if v.abs() < clip || (v > 0.0) != pos {
                    dropped = true;
                } else {
                    kept.push((j, pos));
                    w[j] = v;
                }
            }
            if dropped {
                pattern = kept;
                continue;
            }
        }

        let g = ctx.gradient_sparse(&w);
        let kkt = kkt_from_gradient(&g, ctx.l1, ctx.budget, &w);
        let h = kkt.multiplier;
        let mut violators: Vec<(usize, f64)> = Vec::new();
        let in_pattern: HashSet<usize> = pattern.iter().map(|e| e.0).collect();
        for j in 0..p {
            if in_pattern.contains(&j) {
                continue;
            }
            let v = (g[j] + h).abs() - ctx.l1[j];
            if v > 0.5 * tol {
                violators.push((j, v));
            }
        }
        if violators.is_empty() {
            if kkt.stationarity <= tol && kkt.budget_gap <= 1e-8 {
                return Some((w, kkt));
            }
            return None;
        }
        for (j, _) in violators {
            pattern.push((j, g[j] + h < 0.0));
        }
        pattern.sort_unstable_by_key(|e| e.0);
    }
    None
}

/// For the unpenalized path: snap tiny coordinates and re-solve on the rest.
fn clip_and_refit_dense(ctx: &Ctx<'_>, w: &mut DVector<f64>) -> Result<()> {
    let clip = ctx.config.zero_clip;
    if w.iter().all(|v| v.abs() >= clip || *v == 0.0) {
        return Ok(());
    }
    let keep: Vec<(usize, bool)> = w
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= clip)
        .map(|(j, v)| (j, *v > 0.0))
        .collect();
    if keep.is_empty() {
        w.fill(0.0);
        return Ok(());
    }
    let (ws, _) = restricted_solve(ctx, &keep)?;
    w.fill(0.0);
    for (a, &(j, _)) in keep.iter().enumerate() {
        w[j] = ws[a];
    }
    Ok(())
}
