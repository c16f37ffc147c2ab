//! Three-factor synthetic returns.
//!
//! `R_i = b_i1 f_1 + b_i2 f_2 + b_i3 f_3 + ε_i` with loadings `b_i ~ N(μ_b, cov_b)`,
//! factors `f ~ N(μ_f, cov_f)` drawn per day and `ε_i ~ N(0, σ_i²)`,
//! `σ_i ~ Gamma(shape, scale)`. Loadings and `σ_i` are drawn once per
//! universe and shared by every replicate. Values are daily returns in
//! percent, so generated panels carry [`ReturnUnit::Percent`].
//!
//! Randomness comes from ChaCha20 with one stream per (purpose, replicate):
//! stream id `purpose << 56 | replicate`. Replicate `r` is reproducible on
//! its own regardless of how replicates are scheduled.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::moments::{ReturnPanel, ReturnUnit};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelParams {
    pub mu_b: Vector3<f64>,
    pub cov_b: Matrix3<f64>,
    pub mu_f: Vector3<f64>,
    pub cov_f: Matrix3<f64>,
    pub sigma_gamma_shape: f64,
    /// Gamma scale (mean = shape · scale).
    pub sigma_gamma_scale: f64,
}

/// Calibrated parameters of the three-factor design.
pub fn default_params() -> FactorModelParams {
    FactorModelParams {
        mu_b: Vector3::new(0.78282, 0.51803, 0.41003),
        cov_b: Matrix3::new(
            0.029145, 0.023873, 0.010184, //
            0.023873, 0.053951, -0.006967, //
            0.010184, -0.006967, 0.086856,
        ),
        mu_f: Vector3::new(0.023558, 0.012989, 0.020714),
        cov_f: Matrix3::new(
            1.2507, -0.034999, -0.20419, //
            -0.034999, 0.31564, -0.0022526, //
            -0.20419, -0.0022526, 0.19303,
        ),
        sigma_gamma_shape: 3.3586,
        sigma_gamma_scale: 0.1876,
    }
}

impl Default for FactorModelParams {
    fn default() -> Self {
        default_params()
    }
}

impl FactorModelParams {
    pub fn validate(&self) -> Result<()> {
        psd_root(&self.cov_b, "cov_b")?;
        psd_root(&self.cov_f, "cov_f")?;
        for (name, v) in [
            ("gamma shape", self.sigma_gamma_shape),
            ("gamma scale", self.sigma_gamma_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `L` with `L Lᵀ = cov` for a symmetric PSD 3×3 matrix.
fn psd_root(cov: &Matrix3<f64>, name: &str) -> Result<Matrix3<f64>> {
    if (cov - cov.transpose()).amax() > 1e-12 {
        return Err(Error::invalid(format!("{name} is not symmetric")));
    }
    let eig = SymmetricEigen::new(*cov);
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.min() < -1e-12 * scale {
        return Err(Error::invalid(format!(
            "{name} is not positive semidefinite (min eigenvalue {:.3e})",
            eig.eigenvalues.min()
        )));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix3::from_diagonal(&sqrt))
}

/// RNG stream purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Loadings = 1,
    IdioStd = 2,
    Factors = 3,
    Noise = 4,
}

/// The generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}

/// Fixed cross-section: loadings and idiosyncratic volatilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUniverse {
    /// `p × 3`
    pub loadings: DMatrix<f64>,
    pub idio_std: DVector<f64>,
    pub seed: u64,
}

impl SimulatedUniverse {
    pub fn new(loadings: DMatrix<f64>, idio_std: DVector<f64>, seed: u64) -> Result<Self> {
        if loadings.ncols() != 3 || loadings.nrows() != idio_std.len() || idio_std.is_empty() {
            return Err(Error::invalid("universe needs p × 3 loadings and p volatilities"));
        }
        if idio_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("idiosyncratic volatilities must be positive"));
        }
        if loadings.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite loading"));
        }
        Ok(Self {
            loadings,
            idio_std,
            seed,
        })
    }

    pub fn p(&self) -> usize {
        self.idio_std.len()
    }

    /// `B μ_f`
    pub fn population_mean(&self, params: &FactorModelParams) -> DVector<f64> {
        &self.loadings * DVector::from_column_slice(params.mu_f.as_slice())
    }

    /// `B cov_f Bᵀ + diag(σ²)`
    pub fn population_covariance(&self, params: &FactorModelParams) -> DMatrix<f64> {
        let cov_f = DMatrix::from_column_slice(3, 3, params.cov_f.as_slice());
        let mut s = &self.loadings * cov_f * self.loadings.transpose();
        for i in 0..self.p() {
            s[(i, i)] += self.idio_std[i] * self.idio_std[i];
        }
        crate::moments::symmetrize(&mut s);
        s
    }
}

/// Draws loadings `b_i ~ N(μ_b, cov_b)` and `σ_i ~ Gamma(shape, scale)`.
pub fn build_universe(p: usize, params: &FactorModelParams, seed: u64) -> Result<SimulatedUniverse> {
    if p == 0 {
        return Err(Error::invalid("universe needs at least one asset"));
    }
    params.validate()?;
    let root_b = psd_root(&params.cov_b, "cov_b")?;
    let mut rng = stream_rng(seed, Stream::Loadings, 0);
    let mut loadings = DMatrix::zeros(p, 3);
    for i in 0..p {
        let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let b = params.mu_b + root_b * z;
        for k in 0..3 {
            loadings[(i, k)] = b[k];
        }
    }
    let gamma = Gamma::new(params.sigma_gamma_shape, params.sigma_gamma_scale)
        .map_err(|e| Error::invalid(format!("gamma distribution: {e}")))?;
    let mut rng = stream_rng(seed, Stream::IdioStd, 0);
    let idio_std = DVector::from_fn(p, |_, _| gamma.sample(&mut rng));
    SimulatedUniverse::new(loadings, idio_std, seed)
}

/// `n_days × p` factor-model returns (percent) for replicate `replicate`.
pub fn generate_returns(
    universe: &SimulatedUniverse,
    n_days: usize,
    params: &FactorModelParams,
    seed: u64,
    replicate: u64,
) -> Result<DMatrix<f64>> {
    if n_days == 0 {
        return Err(Error::invalid("n_days must be at least 1"));
    }
    let root_f = psd_root(&params.cov_f, "cov_f")?;
    let p = universe.p();
    let mut f_rng = stream_rng(seed, Stream::Factors, replicate);
    let mut e_rng = stream_rng(seed, Stream::Noise, replicate);
    let mut out = DMatrix::zeros(n_days, p);
    for day in 0..n_days {
        let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut f_rng));
        let f = params.mu_f + root_f * z;
        for i in 0..p {
            let systematic = universe.loadings[(i, 0)] * f[0]
                + universe.loadings[(i, 1)] * f[1]
                + universe.loadings[(i, 2)] * f[2];
            let eps: f64 = StandardNormal.sample(&mut e_rng);
            out[(day, i)] = systematic + universe.idio_std[i] * eps;
        }
    }
    Ok(out)
}

/// [`generate_returns`] wrapped as a percent-unit [`ReturnPanel`] (needs `n_days ≥ 2`).
pub fn generate_panel(
    universe: &SimulatedUniverse,
    n_days: usize,
    params: &FactorModelParams,
    seed: u64,
    replicate: u64,
) -> Result<ReturnPanel> {
    let r = generate_returns(universe, n_days, params, seed, replicate)?;
    ReturnPanel::from_matrix(r, ReturnUnit::Percent)
}
