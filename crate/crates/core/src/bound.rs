//! Converse bound on achievable (rate, load) pairs over the K-MPR channel.
//!
//! With `x = G / (K R)` the bound load `𝔾(R, K)` is `x K R` at the unique
//! positive root of `R x = g_K(x)`, where
//!
//! ```text
//! g_K(x) = 1 - (1/K) e^{-Kx} sum_{k<K} (K - k)/k! (Kx)^k = E[min(X, K)] / K,
//! X ~ Poisson(Kx).
//! ```
//!
//! The second form is what gets evaluated: it is a sum of Poisson tails and
//! keeps relative precision near `x = 0` and near saturation.

use serde::Serialize;

use crate::de::{f_func, Ensemble};
use crate::error::{domain, Result};
use crate::numeric::{adaptive_simpson, bisect_sign_change, poisson_tail, poisson_truncated_mean};

/// Quadrature tolerance for the area functionals.
pub const AREA_QUAD_TOL: f64 = 1e-10;
/// Default root tolerance on `x`.
pub const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 10_000;

/// `g_K(x)`; zero at `x = 0`, increasing and concave, tending to 1.
pub fn g_k(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    poisson_truncated_mean(k, f64::from(k) * x) / f64::from(k)
}

/// `1 - g_K(x)`, accurate when `g_K(x)` is close to 1.
pub fn g_k_complement(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let s = f64::from(k) * x;
    // E[(K - X)^+] / K = sum_{j=1..K} P(X < j) / K
    (1..=k).map(|j| lower_tail(j, s)).sum::<f64>() / f64::from(k)
}

/// `P(X < j)` for `X ~ Poisson(s)`, summed directly.
fn lower_tail(j: u32, s: f64) -> f64 {
    if s < f64::from(j) {
        1.0 - poisson_tail(j, s)
    } else {
        let mut term = (-s).exp();
        let mut acc = 0.0;
        for i in 0..j {
            if i > 0 {
                term *= s / f64::from(i);
            }
            acc += term;
        }
        acc
    }
}

/// Rate and MPR capability for a bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundQuery {
    pub rate: f64,
    pub mpr: u32,
    pub tol: f64,
}

impl BoundQuery {
    pub fn new(rate: f64, mpr: u32) -> Self {
        Self {
            rate,
            mpr,
            tol: ROOT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(domain("R", self.rate, "rate must lie in (0, 1]"));
        }
        if self.mpr == 0 {
            return Err(domain("K", 0.0, "MPR capability must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(domain("tol", self.tol, "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "K")]
    pub mpr: u32,
    /// `𝔾(R, K)`.
    #[serde(rename = "G_bound")]
    pub g_bound: f64,
    /// `𝔾(R, K) / K`.
    pub normalized: f64,
    /// `1 - 𝔾(R, K) / K` evaluated through `1 - g_K` at the root, so it
    /// stays resolvable after `normalized` has rounded to 1.
    pub deficit: f64,
    pub x_root: f64,
    /// `R x - g_K(x)` at the returned root.
    pub residual: f64,
    /// Set at `R = 1`, where no strictly positive root exists.
    pub degenerate: bool,
}

/// Solves `R x = g_K(x)` for its positive root and returns `𝔾 = x K R`.
///
/// At `R = 1` the slope of `g_K` at the origin equals the rate, so concavity
/// leaves only the root at zero; that case is returned as `𝔾 = 0` with
/// `degenerate` set.
pub fn converse_bound(query: &BoundQuery) -> Result<BoundResult> {
    query.validate()?;
    let BoundQuery { rate, mpr, tol } = *query;
    let kf = f64::from(mpr);
    if rate >= 1.0 {
        return Ok(BoundResult {
            rate,
            mpr,
            g_bound: 0.0,
            normalized: 0.0,
            deficit: 1.0,
            x_root: 0.0,
            residual: 0.0,
            degenerate: true,
        });
    }
    let h = |x: f64| g_k(mpr, x) - rate * x;
    let (x, _) = bisect_sign_change(h, 1.0, tol, ROOT_MAX_ITER)?;
    let g_bound = x * kf * rate;
    Ok(BoundResult {
        rate,
        mpr,
        g_bound,
        normalized: g_bound / kf,
        deficit: g_k_complement(mpr, x),
        x_root: x,
        residual: rate * x - g_k(mpr, x),
        degenerate: false,
    })
}

/// Number of sign changes of `g_K(x) - R x` on a geometric grid; the bound
/// is well defined when this is exactly one.
pub fn root_sign_changes(rate: f64, mpr: u32, x_min: f64, x_max: f64, points: usize) -> usize {
    let ratio = (x_max / x_min).powf(1.0 / (points - 1) as f64);
    let signs: Vec<bool> = (0..points)
        .map(|i| {
            let x = x_min * ratio.powi(i as i32);
            g_k(mpr, x) - rate * x > 0.0
        })
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `∫_0^1 g(x) dx` by adaptive quadrature; equals the rate for every
/// ensemble.
pub fn area_g(ensemble: &Ensemble) -> Result<f64> {
    Ok(adaptive_simpson(|x| ensemble.g(x), 0.0, 1.0, AREA_QUAD_TOL)?.value)
}

/// Closed-form `∫_0^1 f(x) dx`:
/// `1 - (R/G)(K - e^{-G/R} sum_{k<K} (K - k)/k! (G/R)^k)`.
pub fn area_f(mpr: u32, load: f64, rate: f64) -> Result<f64> {
    f_func(mpr, load, rate, 0.0)?;
    let s = load / rate;
    // K - e^{-s} sum (K-k) s^k / k! = E[min(X, K)], X ~ Poisson(s)
    Ok(1.0 - poisson_truncated_mean(mpr, s) / s)
}

/// Quadrature of `f` over `[0, 1]`, the independent route to [`area_f`].
pub fn area_f_quadrature(mpr: u32, load: f64, rate: f64) -> Result<f64> {
    f_func(mpr, load, rate, 0.0)?;
    let s = load / rate;
    Ok(adaptive_simpson(|x| poisson_tail(mpr, x * s), 0.0, 1.0, AREA_QUAD_TOL)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Achievability {
    /// `R + A_f <= 1`.
    pub admissible: bool,
    /// `1 - R - A_f`.
    pub slack: f64,
}

/// Necessary condition for density evolution to succeed at load `G`.
pub fn achievability_check(ensemble: &Ensemble, mpr: u32, load: f64) -> Result<Achievability> {
    let slack = 1.0 - ensemble.rate() - area_f(mpr, load, ensemble.rate())?;
    Ok(Achievability {
        admissible: slack >= 0.0,
        slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    #[serde(rename = "K")]
    pub mpr: u32,
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `Δ_K(x) = g_{K+1}(x) - g_K(x)`, computed from the complements.
pub fn delta_k(k: u32, x: f64) -> f64 {
    g_k_complement(k, x) - g_k_complement(k + 1, x)
}

/// Checks the structural properties of `g_K` used for uniqueness of the root
/// and for monotonicity of the normalized bound in `K`, on a sorted grid of
/// positive points.
///
/// Differences are taken on `1 - g_K`, which stays representable far into
/// the saturated region where `g_K` itself rounds to 1.
pub fn verify_bound_properties(k: u32, grid: &[f64]) -> Result<PropertyReport> {
    if k == 0 {
        return Err(domain("K", 0.0, "MPR capability must be at least 1"));
    }
    if let Some(&bad) = grid.iter().find(|&&x| !(x > 0.0)) {
        return Err(domain("grid", bad, "points must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("grid", f64::NAN, "points must be strictly increasing"));
    }
    let comp: Vec<f64> = grid.iter().map(|&x| g_k_complement(k, x)).collect();

    let mut checks = Vec::new();
    let mut push = |name: &str, failures: usize, total: usize| {
        checks.push(PropertyCheck {
            name: name.to_string(),
            passed: failures == 0,
            detail: format!("{failures} of {total} points violate"),
        });
    };

    let not_increasing = comp.windows(2).filter(|w| !(w[1] < w[0])).count();
    push("increasing", not_increasing, comp.len().saturating_sub(1));

    // concavity of g_K <=> convexity of 1 - g_K; uses the slope form so the
    // grid may be non-uniform
    let not_concave = grid
        .windows(3)
        .zip(comp.windows(3))
        .filter(|(x, c)| {
            let left = (c[1] - c[0]) / (x[1] - x[0]);
            let right = (c[2] - c[1]) / (x[2] - x[1]);
            !(right > left)
        })
        .count();
    push("concave", not_concave, grid.len().saturating_sub(2));

    let not_positive = grid.iter().filter(|&&x| !(delta_k(k, x) > 0.0)).count();
    push("delta_positive", not_positive, grid.len());

    let h = 1e-7;
    let slope0 = g_k(k, h) / h;
    checks.push(PropertyCheck {
        name: "unit_slope_at_origin".into(),
        passed: (slope0 - 1.0).abs() < 1e-4,
        detail: format!("one-sided slope {slope0:.9}"),
    });

    let at_zero = g_k(k, 0.0);
    checks.push(PropertyCheck {
        name: "zero_at_origin".into(),
        passed: at_zero == 0.0,
        detail: format!("g_K(0) = {at_zero}"),
    });

    Ok(PropertyReport { mpr: k, checks })
}

/// Uniform grid of `points` values on `(0, x_max]`.
pub fn uniform_grid(points: usize, x_max: f64) -> Vec<f64> {
    (1..=points).map(|i| x_max * i as f64 / points as f64).collect()
}

/// Rates sampled for the normalized-bound curve: `points` values uniformly
/// spaced on `(0.005, 0.995]`.
pub fn rate_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (0.005, 0.995);
    (1..=points).map(|i| lo + (hi - lo) * i as f64 / points as f64).collect()
}

/// `𝔾(R, K)` for each rate and each `K`, ordered by rate then `K`.
pub fn bound_curve(rates: &[f64], ks: &[u32]) -> Result<Vec<BoundResult>> {
    let mut out = Vec::with_capacity(rates.len() * ks.len());
    for &r in rates {
        for &k in ks {
            out.push(converse_bound(&BoundQuery::new(r, k))?);
        }
    }
    Ok(out)
}
