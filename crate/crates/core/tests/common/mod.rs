//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the solver or the estimators under test; the
//! oracles use brute force, dense LU factorizations or plain loops.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn normal_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// `AᵀA / k + ridge·I` with `A` a `k × p` Gaussian matrix.
pub fn random_pd(p: usize, ridge: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = p + 2;
    let a = normal_matrix(k, p, rng);
    let mut q = a.transpose() * a / k as f64;
    for i in 0..p {
        q[(i, i)] += ridge;
    }
    (&q + q.transpose()) * 0.5
}

/// Random PSD matrix of rank `rank < p` (singular when rank < p).
pub fn random_psd_rank(p: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = normal_matrix(rank, p, rng);
    let q = a.transpose() * a / rank.max(1) as f64;
    (&q + q.transpose()) * 0.5
}

pub fn uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo..hi)
}

/// `wᵀQw + cᵀw + Σθ|w|`
pub fn objective(q: &DMatrix<f64>, c: &DVector<f64>, theta: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut v = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            v += w[i] * q[(i, j)] * w[j];
        }
        v += c[i] * w[i] + theta[i] * w[i].abs();
    }
    v
}

/// Minimiser of `wᵀQw + cᵀw` on `support` with `Σw = b`, zeros elsewhere,
/// by full-pivot LU of the bordered system.
pub fn restricted_equality_qp(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    b: f64,
    support: &[usize],
) -> Option<DVector<f64>> {
    let k = support.len();
    let p = c.len();
    if k == 0 {
        return (b == 0.0).then(|| DVector::zeros(p));
    }
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (bb, &j) in support.iter().enumerate() {
            m[(a, bb)] = 2.0 * q[(i, j)];
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
        rhs[a] = -c[i];
    }
    rhs[k] = b;
    let sol = m.full_piv_lu().solve(&rhs)?;
    let mut w = DVector::zeros(p);
    for (a, &i) in support.iter().enumerate() {
        w[i] = sol[a];
    }
    Some(w)
}

/// Global minimiser of the weighted-ℓ1 QP by enumerating all `3^p` sign
/// patterns: on each pattern the problem is a smooth equality QP; keep the
/// sign-consistent candidates and return the best one.
pub fn sign_pattern_oracle(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    b: f64,
    theta: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let p = c.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut signs = vec![0i8; p];
        let mut x = code;
        for s in signs.iter_mut() {
            *s = (x % 3) as i8 - 1;
            x /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let shifted = DVector::from_fn(p, |j, _| c[j] + theta[j] * signs[j] as f64);
        let Some(w) = restricted_equality_qp(q, &shifted, b, &support) else {
            continue;
        };
        let consistent = support.iter().all(|&j| w[j] * signs[j] as f64 >= -1e-12);
        if !consistent {
            continue;
        }
        let f = objective(q, c, theta, &w);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((w, f));
        }
    }
    best.expect("some sign pattern is feasible")
}

/// Two-asset problem reduced to one dimension `w = (x, b − x)`: dense grid
/// followed by golden-section refinement.
pub fn two_asset_oracle(q: &DMatrix<f64>, c: &DVector<f64>, b: f64, theta: &DVector<f64>) -> (DVector<f64>, f64) {
    let f = |x: f64| objective(q, c, theta, &DVector::from_vec(vec![x, b - x]));
    let (lo, hi) = (-50.0, 50.0);
    let steps = 200_000;
    let mut best_x = lo;
    let mut best_f = f(lo);
    for i in 1..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let v = f(x);
        if v < best_f {
            best_f = v;
            best_x = x;
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut bb) = (best_x - h, best_x + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = bb - g * (bb - a);
        let x2 = a + g * (bb - a);
        if f(x1) < f(x2) {
            bb = x2;
        } else {
            a = x1;
        }
    }
    let x = 0.5 * (a + bb);
    (DVector::from_vec(vec![x, b - x]), f(x))
}

/// KKT stationarity of `w` by ternary search over the multiplier `h` of
/// `max_j dist(−(g_j + h), ∂(θ_j|w_j|))`, which is convex in `h`.
pub fn stationarity_oracle(q: &DMatrix<f64>, c: &DVector<f64>, theta: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let g = 2.0 * q * w + c;
    let resid = |h: f64| {
        let mut m: f64 = 0.0;
        for j in 0..w.len() {
            let v = -(g[j] + h);
            let d = if w[j] > 0.0 {
                (v - theta[j]).abs()
            } else if w[j] < 0.0 {
                (v + theta[j]).abs()
            } else {
                (v.abs() - theta[j]).max(0.0)
            };
            m = m.max(d);
        }
        m
    };
    let span = g.amax() + theta.amax() + 1.0;
    let (mut a, mut b) = (-2.0 * span, 2.0 * span);
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if resid(m1) <= resid(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    resid(0.5 * (a + b))
}

/// Ledoit–Wolf linear shrinkage written out term by term from the
/// published formulas: `S` with divisor `n − 1`, `m = tr S / p`,
/// `d² = ‖S − mI‖²`, `b̄² = n⁻² Σ_k ‖x_k x_kᵀ − S‖²`, `b² = min(b̄², d²)`,
/// `ρ = b² / d²`, `Σ̂ = ρ m I + (1 − ρ) S` (Frobenius norms, scaled by `1/p`).
pub fn ledoit_wolf_reference(x: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut mean = vec![0.0; p];
    for j in 0..p {
        for i in 0..n {
            mean[j] += x[(i, j)];
        }
        mean[j] /= n as f64;
    }
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let mut s = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..n {
                acc += xc[(k, i)] * xc[(k, j)];
            }
            s[(i, j)] = acc / (n as f64 - 1.0);
        }
    }
    let m = (0..p).map(|i| s[(i, i)]).sum::<f64>() / p as f64;
    let norm2 = |a: &DMatrix<f64>| a.iter().map(|v| v * v).sum::<f64>() / p as f64;
    let mut target = DMatrix::zeros(p, p);
    for i in 0..p {
        target[(i, i)] = m;
    }
    let d2 = norm2(&(&s - &target));
    let mut b2bar = 0.0;
    for k in 0..n {
        let row = xc.row(k);
        let outer = row.transpose() * row;
        b2bar += norm2(&(outer - &s));
    }
    b2bar /= (n * n) as f64;
    let rho = if d2 == 0.0 { 1.0 } else { b2bar.min(d2) / d2 };
    (&target * rho + &s * (1.0 - rho), rho)
}
