//! Small numerical kernels shared by the analysis modules.

use crate::error::{Error, Result};

/// `P(X >= k)` for `X ~ Poisson(mean)`.
///
/// Below the mode the upper tail is summed directly, which keeps full
/// relative precision as `mean -> 0`. Above it the complement of the lower
/// sum is used; that sum is then at most about one half, so no digits are
/// lost.
pub fn poisson_tail(k: u32, mean: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let kf = f64::from(k);
    if mean < kf {
        let ln_fact: f64 = (1..=k).map(|i| f64::from(i).ln()).sum();
        let mut term = (-mean + kf * mean.ln() - ln_fact).exp();
        let mut sum = 0.0;
        let mut i = kf;
        while term > 0.0 {
            sum += term;
            i += 1.0;
            term *= mean / i;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum.min(1.0)
    } else {
        let mut term = (-mean).exp();
        let mut lower = 0.0;
        for i in 0..k {
            if i > 0 {
                term *= mean / f64::from(i);
            }
            lower += term;
        }
        (1.0 - lower).clamp(0.0, 1.0)
    }
}

/// `E[min(X, k)]` for `X ~ Poisson(mean)`, as `sum_{j=1..k} P(X >= j)`.
pub fn poisson_truncated_mean(k: u32, mean: f64) -> f64 {
    (1..=k).map(|j| poisson_tail(j, mean)).sum()
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut err = 0.0;
    let mut ok = true;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH, &mut err, &mut ok);
    if ok {
        Ok(Quadrature {
            value,
            error_estimate: err,
        })
    } else {
        Err(Error::QuadratureFailed { estimate: err })
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *ok = false;
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err, ok)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err, ok)
}

/// Outcome of probing a load during a threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Decoding succeeds at this load.
    Success,
    /// Decoding fails (fixed point away from zero).
    Failure,
    /// Iteration cap hit while still moving; counted as failure.
    Inconclusive,
}

/// Threshold located by [`bisect_threshold`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub inconclusive_probes: usize,
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Finds the success/failure boundary of a monotone probe.
///
/// The upper end is found by doubling from `start` until the probe fails
/// (up to `cap`), then the bracket is bisected to width `tol`.
pub fn bisect_threshold<P: FnMut(f64) -> Probe>(mut probe: P, start: f64, tol: f64, cap: f64) -> Result<Bracket> {
    let mut inconclusive = 0usize;
    let mut classify = |g: f64, probe: &mut P| match probe(g) {
        Probe::Success => true,
        Probe::Failure => false,
        Probe::Inconclusive => {
            inconclusive += 1;
            false
        }
    };

    if !classify(start, &mut probe) {
        return Err(Error::NoConvergingLoad { load: start });
    }
    let mut lo = start;
    let mut hi = start * 2.0;
    while classify(hi, &mut probe) {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::NoFailingLoad { cap });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if classify(mid, &mut probe) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket {
        lo,
        hi,
        inconclusive_probes: inconclusive,
    })
}

/// Bisection for the positive root of a function that is positive on
/// `(0, root)` and negative beyond it.
///
/// Returns `(root, iterations)`; `hi` is grown geometrically from `initial_hi`.
pub fn bisect_sign_change<F: Fn(f64) -> f64>(h: F, initial_hi: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let mut lo = 0.0;
    let mut hi = initial_hi;
    let mut it = 0;
    while h(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        it += 1;
        if it > max_iter || !hi.is_finite() {
            return Err(Error::RootNotFound { iterations: it });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
        if it > max_iter {
            return Err(Error::RootNotFound { iterations: it });
        }
    }
    Ok((0.5 * (lo + hi), it))
}
