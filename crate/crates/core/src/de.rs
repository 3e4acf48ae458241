//! Density evolution for uncoupled coded slotted ALOHA on the K-MPR channel.
//!
//! The receiver alternates two steps: slices holding at most `K` unresolved
//! segments are resolved, then each user runs MAP erasure decoding on its
//! code and cancels what it learned. In the large-frame limit the average
//! probability that a segment is still unresolved after each step obeys
//!
//! ```text
//! p_l = f(q_{l-1}),   q_l = g(p_l),   q_0 = 1
//! ```
//!
//! where `g` averages the codes' extrinsic erasure behaviour (via their
//! information functions) and `f` is the Poisson tail `P(X >= K)` with
//! `X ~ Poisson(x G / R)`.

use serde::{Deserialize, Serialize};

use crate::codes::CodeSpec;
use crate::error::{domain, Error, Result};
use crate::numeric::{bisect_threshold, poisson_tail, Bracket, Probe};

const PROB_TOLERANCE: f64 = 1e-12;
const DOMAIN_SLACK: f64 = 1e-12;

/// Precomputed per-code data for evaluating `g`.
#[derive(Debug, Clone)]
struct CodeTerms {
    n: usize,
    /// `(n-t) ẽ_{n-t} - (t+1) ẽ_{n-1-t}` for `t = 0..n-1`.
    coeffs: Vec<f64>,
}

impl CodeTerms {
    fn new(code: &CodeSpec) -> Self {
        let n = code.n();
        let e = code.info_function();
        let coeffs = (0..n)
            .map(|t| {
                let a = (n - t) as i64 * e.get(n - t) as i64;
                let b = (t + 1) as i64 * e.get(n - 1 - t) as i64;
                (a - b) as f64
            })
            .collect();
        Self { n, coeffs }
    }

    /// Extrinsic erasure probability of this code, before the `1/n` factor.
    fn eval(&self, x: f64) -> f64 {
        let y = 1.0 - x;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(t, &c)| c * x.powi(t as i32) * y.powi((self.n - 1 - t) as i32))
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawEnsemble {
    codes: Vec<CodeSpec>,
    probs: Vec<f64>,
}

/// A code set with its selection PMF.
///
/// JSON form: `{ "codes": [CodeSpec, ...], "probs": [real, ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawEnsemble", into = "RawEnsemble")]
pub struct Ensemble {
    codes: Vec<CodeSpec>,
    probs: Vec<f64>,
    mean_length: f64,
    rate: f64,
    edge_probs: Vec<f64>,
    terms: Vec<CodeTerms>,
}

impl TryFrom<RawEnsemble> for Ensemble {
    type Error = Error;

    fn try_from(raw: RawEnsemble) -> Result<Self> {
        Ensemble::new(raw.codes, raw.probs)
    }
}

impl From<Ensemble> for RawEnsemble {
    fn from(e: Ensemble) -> Self {
        RawEnsemble {
            codes: e.codes,
            probs: e.probs,
        }
    }
}

impl Ensemble {
    pub fn new(codes: Vec<CodeSpec>, probs: Vec<f64>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::InvalidEnsemble("empty code set".into()));
        }
        if codes.len() != probs.len() {
            return Err(Error::InvalidEnsemble(format!(
                "{} codes but {} probabilities",
                codes.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidEnsemble("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidEnsemble(format!("probabilities sum to {total}, not 1")));
        }
        let k = codes[0].k();
        if codes.iter().any(|c| c.k() != k) {
            return Err(Error::InvalidEnsemble(
                "all codes must share the same number of information segments".into(),
            ));
        }

        let mean_length: f64 = codes.iter().zip(&probs).map(|(c, p)| p * c.n() as f64).sum();
        let rate = k as f64 / mean_length;
        let edge_probs = codes.iter().zip(&probs).map(|(c, p)| c.n() as f64 * p / mean_length).collect();
        let terms = codes.iter().map(CodeTerms::new).collect();
        Ok(Self {
            codes,
            probs,
            mean_length,
            rate,
            edge_probs,
            terms,
        })
    }

    /// Every user employs the same code.
    pub fn single(code: CodeSpec) -> Self {
        Self::new(vec![code], vec![1.0]).expect("single-code ensemble is valid")
    }

    /// Every user sends `d` replicas (`(d, 1)` repetition code).
    pub fn repetition(d: usize) -> Result<Self> {
        Ok(Self::single(CodeSpec::repetition(d)?))
    }

    pub fn codes(&self) -> &[CodeSpec] {
        &self.codes
    }

    /// Node-perspective selection PMF `Λ_h`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Edge-perspective PMF `λ_h = n_h Λ_h / n̄`.
    pub fn edge_probs(&self) -> &[f64] {
        &self.edge_probs
    }

    /// Average code length `n̄`.
    pub fn mean_length(&self) -> f64 {
        self.mean_length
    }

    /// Common number of information segments `n_s`.
    pub fn segments(&self) -> usize {
        self.codes[0].k()
    }

    /// Rate `R = n_s / n̄`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn max_length(&self) -> usize {
        self.codes.iter().map(CodeSpec::n).max().unwrap_or(0)
    }

    pub(crate) fn g(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .zip(&self.edge_probs)
            .map(|(t, &l)| l / t.n as f64 * t.eval(x))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

fn check_unit(name: &'static str, x: f64) -> Result<f64> {
    if !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&x) {
        return Err(domain(name, x, "must lie in [0, 1]"));
    }
    Ok(x.clamp(0.0, 1.0))
}

fn check_channel(k: u32, load: f64, rate: f64) -> Result<()> {
    if k == 0 {
        return Err(domain("K", 0.0, "MPR capability must be at least 1"));
    }
    if !(load > 0.0) || !load.is_finite() {
        return Err(domain("G", load, "load must be positive"));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(domain("R", rate, "rate must lie in (0, 1]"));
    }
    Ok(())
}

/// Average probability that a segment stays unresolved after MAP decoding,
/// given that each other segment of its codeword is unresolved with
/// probability `x`.
pub fn g_func(ensemble: &Ensemble, x: f64) -> Result<f64> {
    Ok(ensemble.g(check_unit("x", x)?))
}

/// Probability that a segment stays unresolved after the slice step, given
/// that every other segment is unresolved with probability `x`.
///
/// Closed form: `1 - exp(-xG/R) sum_{k<K} (xG/R)^k / k!`.
pub fn f_func(k: u32, load: f64, rate: f64, x: f64) -> Result<f64> {
    check_channel(k, load, rate)?;
    let x = check_unit("x", x)?;
    Ok(poisson_tail(k, x * load / rate))
}

/// Slice-degree probabilities at physical load `g0`.
///
/// Returns `(P_i, ρ_i)`: the node-perspective Poisson mass of degree `i`
/// and the probability that a given segment sits in a slice of degree `i`.
/// `ρ_0` does not exist, so `i = 0` is rejected; use [`slice_degree_prob`]
/// for `P_0`.
pub fn slice_degree_pmf(g0: f64, i: usize) -> Result<(f64, f64)> {
    if i == 0 {
        return Err(domain("i", 0.0, "edge-perspective degree starts at 1"));
    }
    Ok((slice_degree_prob(g0, i)?, slice_degree_prob(g0, i - 1)?))
}

/// Poisson mass `P_i = g0^i e^{-g0} / i!`.
pub fn slice_degree_prob(g0: f64, i: usize) -> Result<f64> {
    if !(g0 > 0.0) || !g0.is_finite() {
        return Err(domain("G0", g0, "physical load must be positive"));
    }
    let ln_fact: f64 = (1..=i).map(|j| (j as f64).ln()).sum();
    Ok((i as f64 * g0.ln() - g0 - ln_fact).exp())
}

/// Result of the truncated-series evaluation of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOracle {
    pub value: f64,
    /// Edge-perspective Poisson mass beyond `i_max`.
    pub tail_mass: f64,
    /// False when `tail_mass >= 1e-12`.
    pub truncation_ok: bool,
}

/// Smallest `i_max` with edge-perspective tail mass below `1e-12`.
pub fn adaptive_i_max(g0: f64) -> usize {
    let mut cum = 0.0;
    let mut rho = (-g0).exp();
    let mut i = 1usize;
    loop {
        cum += rho;
        if 1.0 - cum < 1e-12 && rho < 1e-13 {
            return i;
        }
        rho *= g0 / i as f64;
        i += 1;
    }
}

/// Evaluates `f` by summing slice degrees one by one: the segment's slice
/// has degree `i` with probability `ρ_i`, and it stays unresolved unless at
/// most `K - 1` of the other `i - 1` segments are still unresolved.
///
/// Independent of [`f_func`]; kept as a cross-check.
pub fn f_series_oracle(k: u32, load: f64, rate: f64, x: f64, i_max: usize) -> Result<SeriesOracle> {
    check_channel(k, load, rate)?;
    let x = check_unit("x", x)?;
    let g0 = load / rate;
    let mut value = 0.0;
    let mut mass = 0.0;
    for i in 1..=i_max {
        let (_, rho) = slice_degree_pmf(g0, i)?;
        mass += rho;
        let others = i - 1;
        let limit = (k as usize).min(i);
        let resolved: f64 = (0..limit)
            .map(|m| binomial(others, m) * x.powi(m as i32) * (1.0 - x).powi((others - m) as i32))
            .sum();
        value += rho * (1.0 - resolved);
    }
    let tail_mass = (1.0 - mass).max(0.0);
    Ok(SeriesOracle {
        value,
        tail_mass,
        truncation_ok: tail_mass < 1e-12,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Stopping rules for density evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// `q_l < epsilon` declares success.
    pub epsilon: f64,
    /// `|q_l - q_{l-1}| < stall_delta` with `q_l >= epsilon` declares failure.
    pub stall_delta: f64,
    pub max_iter: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            stall_delta: 1e-14,
            max_iter: 100_000,
        }
    }
}

impl Convergence {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(domain("epsilon", self.epsilon, "must be positive"));
        }
        if !(self.stall_delta > 0.0) {
            return Err(domain("stall_delta", self.stall_delta, "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(domain("max_iter", 0.0, "must be at least 1"));
        }
        Ok(())
    }
}

/// Channel and load for one density-evolution run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeParams {
    /// MPR capability `K`.
    pub mpr: u32,
    /// Load `G` in packets per slot.
    pub load: f64,
    pub convergence: Convergence,
}

impl DeParams {
    pub fn new(mpr: u32, load: f64) -> Self {
        Self {
            mpr,
            load,
            convergence: Convergence::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_channel(self.mpr, self.load, 1.0)?;
        self.convergence.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeOutcome {
    Converged,
    Stalled,
    /// Iteration cap reached while still descending.
    Inconclusive,
}

impl DeOutcome {
    pub(crate) fn probe(self) -> Probe {
        match self {
            DeOutcome::Converged => Probe::Success,
            DeOutcome::Stalled => Probe::Failure,
            DeOutcome::Inconclusive => Probe::Inconclusive,
        }
    }
}

/// Iterates of one density-evolution run.
///
/// `q[0] = 1`; `p[l - 1]` is the slice-step value that produced `q[l]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeTrace {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub outcome: DeOutcome,
}

impl DeTrace {
    pub fn converged(&self) -> bool {
        self.outcome == DeOutcome::Converged
    }

    pub fn iterations(&self) -> usize {
        self.p.len()
    }

    pub fn final_q(&self) -> f64 {
        *self.q.last().expect("trace starts at q_0")
    }
}

/// Whether a sequence shrinking from `q` to `next` in one step reaches
/// `epsilon` within `remaining` further steps at the same geometric rate.
///
/// Keeps the stall rule from rejecting runs that converge to zero only
/// linearly (slope-one tangency at the origin), whose steps fall below
/// `stall_delta` before the iterate falls below `epsilon`.
pub(crate) fn decays_in_time(q: f64, next: f64, remaining: usize, epsilon: f64) -> bool {
    let step = q - next;
    if !(step > 0.0 && next > 0.0) {
        return false;
    }
    let rate = -(-step / q).ln_1p();
    (next / epsilon).ln() / rate <= remaining as f64
}

fn run_de(ensemble: &Ensemble, params: &DeParams, mut record: impl FnMut(f64, f64)) -> DeOutcome {
    let g0 = params.load / ensemble.rate();
    let Convergence {
        epsilon,
        stall_delta,
        max_iter,
    } = params.convergence;
    let mut q = 1.0;
    for it in 1..=max_iter {
        let p = poisson_tail(params.mpr, q * g0);
        // g o f is monotone and q_0 = 1 is maximal, so the sequence cannot rise
        let next = ensemble.g(p).min(q);
        record(p, next);
        if next < epsilon {
            return DeOutcome::Converged;
        }
        if q - next < stall_delta && !decays_in_time(q, next, max_iter - it, epsilon) {
            return DeOutcome::Stalled;
        }
        q = next;
    }
    DeOutcome::Inconclusive
}

/// Runs `q_l = g(f(q_{l-1}))` from `q_0 = 1` and records every iterate.
pub fn de_iterate(ensemble: &Ensemble, params: &DeParams) -> Result<DeTrace> {
    params.validate()?;
    let mut q = vec![1.0];
    let mut p = Vec::new();
    let outcome = run_de(ensemble, params, |pv, qv| {
        p.push(pv);
        q.push(qv);
    });
    Ok(DeTrace { q, p, outcome })
}

/// Success/failure of density evolution at one load, without the trace.
pub fn de_probe(ensemble: &Ensemble, params: &DeParams) -> Result<DeOutcome> {
    params.validate()?;
    Ok(run_de(ensemble, params, |_, _| {}))
}

/// Search settings for [`load_threshold_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    /// Final bracket width.
    pub tol: f64,
    pub convergence: Convergence,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            convergence: Convergence::default(),
        }
    }
}

/// Load threshold `G*` with the final bisection bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadThreshold {
    #[serde(rename = "G_star")]
    pub g_star: f64,
    pub bracket: [f64; 2],
    #[serde(rename = "K")]
    pub mpr: u32,
    #[serde(rename = "R")]
    pub rate: f64,
    /// Probes that hit the iteration cap and were counted as failures.
    pub inconclusive_probes: usize,
}

impl LoadThreshold {
    pub(crate) fn from_bracket(b: Bracket, mpr: u32, rate: f64) -> Self {
        Self {
            g_star: b.midpoint(),
            bracket: [b.lo, b.hi],
            mpr,
            rate,
            inconclusive_probes: b.inconclusive_probes,
        }
    }

    pub fn normalized(&self) -> f64 {
        self.g_star / f64::from(self.mpr)
    }
}

/// Supremum load at which density evolution drives `q` to zero.
pub fn load_threshold(ensemble: &Ensemble, mpr: u32, tol: f64) -> Result<LoadThreshold> {
    load_threshold_with(
        ensemble,
        mpr,
        &ThresholdOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn load_threshold_with(ensemble: &Ensemble, mpr: u32, opts: &ThresholdOptions) -> Result<LoadThreshold> {
    if !(opts.tol > 0.0) {
        return Err(domain("tol", opts.tol, "must be positive"));
    }
    check_channel(mpr, 1.0, ensemble.rate())?;
    opts.convergence.validate()?;
    let cap = 8.0 * f64::from(mpr);
    let bracket = bisect_threshold(
        |g| {
            let params = DeParams {
                mpr,
                load: g,
                convergence: opts.convergence,
            };
            run_de(ensemble, &params, |_, _| {}).probe()
        },
        opts.tol,
        opts.tol,
        cap,
    )?;
    Ok(LoadThreshold::from_bracket(bracket, mpr, ensemble.rate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spc3() -> CodeSpec {
        CodeSpec::new(vec![vec![1, 0, 1], vec![0, 1, 1]]).unwrap()
    }

    #[test]
    fn stall_guard_separates_decay_from_fixed_points() {
        // 1% per step from 5e-12: reaches 1e-12 in ~160 steps
        assert!(decays_in_time(5e-12, 4.95e-12, 1000, 1e-12));
        assert!(!decays_in_time(5e-12, 4.95e-12, 100, 1e-12));
        // no progress at all
        assert!(!decays_in_time(0.3, 0.3, 1_000_000, 1e-12));
        let rep2 = Ensemble::repetition(2).unwrap();
        assert_eq!(de_probe(&rep2, &DeParams::new(1, 0.499)).unwrap(), DeOutcome::Converged);
        assert_eq!(de_probe(&rep2, &DeParams::new(1, 0.501)).unwrap(), DeOutcome::Stalled);
    }

    #[test]
    fn ensemble_derived_quantities() {
        let e = Ensemble::new(
            vec![CodeSpec::repetition(2).unwrap(), CodeSpec::repetition(3).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_relative_eq!(e.mean_length(), 2.5);
        assert_relative_eq!(e.rate(), 0.4);
        assert_relative_eq!(e.edge_probs()[0], 0.4);
        assert_relative_eq!(e.edge_probs()[1], 0.6);
    }

    #[test]
    fn ensemble_rejections() {
        let r2 = CodeSpec::repetition(2).unwrap();
        assert!(Ensemble::new(vec![], vec![]).is_err());
        assert!(Ensemble::new(vec![r2.clone()], vec![0.9]).is_err());
        assert!(Ensemble::new(vec![r2.clone()], vec![1.0, 0.0]).is_err());
        assert!(Ensemble::new(vec![r2.clone(), r2.clone()], vec![1.5, -0.5]).is_err());
        // mixed n_s
        assert!(Ensemble::new(vec![r2, spc3()], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn ensemble_json() {
        let json = r#"{"codes":[{"k":1,"n":3,"generator":[[1,1,1]]}],"probs":[1.0]}"#;
        let e: Ensemble = serde_json::from_str(json).unwrap();
        assert_relative_eq!(e.rate(), 1.0 / 3.0);
        assert_eq!(serde_json::to_string(&e).unwrap(), json);
        assert!(serde_json::from_str::<Ensemble>(r#"{"codes":[],"probs":[]}"#).is_err());
    }

    #[test]
    fn g_repetition_examples() {
        let r2 = Ensemble::repetition(2).unwrap();
        for &x in &[0.0, 0.1, 0.37, 0.9, 1.0] {
            assert_relative_eq!(g_func(&r2, x).unwrap(), x, epsilon = 1e-15);
        }
        let r3 = Ensemble::repetition(3).unwrap();
        assert_relative_eq!(g_func(&r3, 0.5).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn g_spc_matches_extrinsic_rule() {
        // an SPC(3,2) segment is recovered iff both other segments are known
        let e = Ensemble::single(spc3());
        for &x in &[0.0, 0.2, 0.5, 0.8, 1.0] {
            let expected = 1.0 - (1.0 - x) * (1.0 - x);
            assert_relative_eq!(g_func(&e, x).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn g_at_one_is_one() {
        let mixed = Ensemble::new(
            vec![CodeSpec::single_parity_check(4).unwrap(), CodeSpec::new(vec![
                vec![1, 0, 0, 1, 1],
                vec![0, 1, 0, 1, 0],
                vec![0, 0, 1, 0, 1],
            ])
            .unwrap()],
            vec![0.3, 0.7],
        )
        .unwrap();
        assert_relative_eq!(g_func(&mixed, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert!(g_func(&mixed, 1.1).is_err());
        assert!(g_func(&mixed, -0.1).is_err());
    }

    #[test]
    fn f_examples() {
        assert_eq!(f_func(3, 0.7, 0.4, 0.0).unwrap(), 0.0);
        assert_relative_eq!(f_func(1, 1.0, 1.0, 1.0).unwrap(), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(f_func(2, 1.0, 0.5, 1.0).unwrap(), 1.0 - 3.0 * (-2.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(f_func(1, 1.0, 1.0, 1.0).unwrap(), 0.632121, epsilon = 1e-6);
        assert_relative_eq!(f_func(2, 1.0, 0.5, 1.0).unwrap(), 0.593994, epsilon = 1e-6);
    }

    #[test]
    fn f_domain_errors() {
        assert!(f_func(0, 1.0, 0.5, 0.5).is_err());
        assert!(f_func(1, 0.0, 0.5, 0.5).is_err());
        assert!(f_func(1, 1.0, 1.5, 0.5).is_err());
        assert!(f_func(1, 1.0, 0.0, 0.5).is_err());
        assert!(f_func(1, 1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn oracle_examples() {
        let o = f_series_oracle(1, 0.5, 0.5, 0.7, 80).unwrap();
        assert!(o.truncation_ok);
        assert!((o.value - f_func(1, 0.5, 0.5, 0.7).unwrap()).abs() < 1e-10);
        assert_eq!(f_series_oracle(2, 1.0, 0.5, 0.0, 80).unwrap().value, 0.0);
        // K beyond every retained degree: nothing is lost
        let big = f_series_oracle(100, 1.0, 0.5, 0.6, 60).unwrap();
        assert!(big.value.abs() < 1e-15);
        // truncation flag
        assert!(!f_series_oracle(1, 2.0, 0.5, 0.5, 5).unwrap().truncation_ok);
    }

    #[test]
    fn slice_degree_examples() {
        assert_relative_eq!(slice_degree_prob(1.0, 0).unwrap(), (-1.0f64).exp(), epsilon = 1e-16);
        let (_, rho1) = slice_degree_pmf(2.0, 1).unwrap();
        assert_relative_eq!(rho1, (-2.0f64).exp(), epsilon = 1e-16);
        assert_relative_eq!(rho1, 0.135335, epsilon = 1e-6);
        assert!(slice_degree_pmf(2.0, 0).is_err());
        assert!(slice_degree_prob(0.0, 1).is_err());
        let node: f64 = (0..80).map(|i| slice_degree_prob(3.0, i).unwrap()).sum();
        let edge: f64 = (1..80).map(|i| slice_degree_pmf(3.0, i).unwrap().1).sum();
        assert_relative_eq!(node, 1.0, epsilon = 1e-12);
        assert_relative_eq!(edge, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn i_max_meets_tail_bound() {
        for &g0 in &[0.5, 1.0, 3.0, 10.0, 40.0] {
            let i_max = adaptive_i_max(g0);
            let tail: f64 = (i_max + 1..i_max + 400).map(|i| slice_degree_pmf(g0, i).unwrap().1).sum();
            assert!(tail < 1e-12, "g0 = {g0}, i_max = {i_max}, tail = {tail}");
        }
    }

    #[test]
    fn de_examples() {
        let r3 = Ensemble::repetition(3).unwrap();
        assert!(de_iterate(&r3, &DeParams::new(1, 0.5)).unwrap().converged());
        assert!(!de_iterate(&r3, &DeParams::new(1, 0.95)).unwrap().converged());
        let r2 = Ensemble::repetition(2).unwrap();
        assert!(de_iterate(&r2, &DeParams::new(1, 0.49)).unwrap().converged());
        assert!(!de_iterate(&r2, &DeParams::new(1, 0.51)).unwrap().converged());
    }

    #[test]
    fn trace_shape() {
        let r3 = Ensemble::repetition(3).unwrap();
        let t = de_iterate(&r3, &DeParams::new(2, 1.2)).unwrap();
        assert_eq!(t.q[0], 1.0);
        assert_eq!(t.q.len(), t.p.len() + 1);
        assert!(t.q.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.q.iter().chain(&t.p).all(|v| (0.0..=1.0).contains(v)));
        assert!(de_iterate(&r3, &DeParams::new(0, 1.0)).is_err());
        let mut bad = DeParams::new(1, 1.0);
        bad.convergence.max_iter = 0;
        assert!(de_iterate(&r3, &bad).is_err());
    }

    #[test]
    fn inconclusive_when_capped() {
        let r3 = Ensemble::repetition(3).unwrap();
        let mut params = DeParams::new(1, 0.8);
        params.convergence.max_iter = 3;
        assert_eq!(de_probe(&r3, &params).unwrap(), DeOutcome::Inconclusive);
    }

    #[test]
    fn threshold_repetition_three() {
        let r3 = Ensemble::repetition(3).unwrap();
        let t = load_threshold(&r3, 1, 1e-5).unwrap();
        assert!(t.bracket[1] - t.bracket[0] <= 1e-5);
        assert!((t.g_star - 0.818).abs() < 1e-3, "{t:?}");
    }

    #[test]
    fn threshold_rejects_bad_tol() {
        let r3 = Ensemble::repetition(3).unwrap();
        assert!(load_threshold(&r3, 1, 0.0).is_err());
        assert!(load_threshold(&r3, 0, 1e-3).is_err());
    }
}
