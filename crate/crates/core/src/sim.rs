//! Finite-frame Monte Carlo simulation of CSA with K-MPR slices.
//!
//! Each of `N` users draws a code from the ensemble and puts its `n_h`
//! encoded segments into `n_h` distinct slices chosen uniformly among the
//! `M n_s` slices of the frame. The receiver then alternates:
//!
//! 1. every slice holding at most `K` not-yet-known segments yields all of
//!    them;
//! 2. every user with newly known segments runs MAP erasure decoding, and
//!    each segment it determines is cancelled from its slice.
//!
//! until nothing new is learned. A segment header is assumed to tell the
//! receiver the sender's code and slice set, so once any segment of a user
//! is known the decoder can act on all of them.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::de::Ensemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Users per frame, `N`.
    pub users: usize,
    /// Slots per frame, `M`.
    pub slots: usize,
    /// Slices per slot; must equal the ensemble's `n_s`.
    pub slices_per_slot: usize,
    pub ensemble: Ensemble,
    #[serde(rename = "K")]
    pub mpr: u32,
    pub seed: u64,
    pub trials: usize,
}

impl SimConfig {
    /// Config with `N = round(G M)` users.
    pub fn with_load(ensemble: Ensemble, mpr: u32, slots: usize, load: f64, trials: usize, seed: u64) -> Self {
        Self {
            users: (load * slots as f64).round() as usize,
            slots,
            slices_per_slot: ensemble.segments(),
            ensemble,
            mpr,
            seed,
            trials,
        }
    }

    /// `G = N / M`.
    pub fn load(&self) -> f64 {
        self.users as f64 / self.slots as f64
    }

    /// Segments per slice, `n̄ N / (n_s M)`.
    pub fn physical_load(&self) -> f64 {
        self.ensemble.mean_length() * self.users as f64 / self.total_slices() as f64
    }

    pub fn total_slices(&self) -> usize {
        self.slots * self.slices_per_slot
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSimConfig(m));
        if self.users == 0 {
            return bad("need at least one user".into());
        }
        if self.slots == 0 {
            return bad("need at least one slot".into());
        }
        if self.trials == 0 {
            return bad("need at least one trial".into());
        }
        if self.mpr == 0 {
            return bad("MPR capability must be at least 1".into());
        }
        if self.slices_per_slot != self.ensemble.segments() {
            return bad(format!(
                "{} slices per slot but the codes carry {} segments",
                self.slices_per_slot,
                self.ensemble.segments()
            ));
        }
        if self.total_slices() < self.ensemble.max_length() {
            return bad(format!(
                "{} slices cannot hold a codeword of length {}",
                self.total_slices(),
                self.ensemble.max_length()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserTransmission {
    /// Index of the chosen code in the ensemble.
    pub code: usize,
    /// `slices[c]` holds encoded segment `c`.
    pub slices: Vec<usize>,
}

/// One frame: who sent what where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameRealization {
    pub users: Vec<UserTransmission>,
    /// Occupants of every slice as `(user, coordinate)`.
    pub slices: Vec<Vec<(usize, usize)>>,
}

impl FrameRealization {
    /// Builds the slice-side view from the user-side one.
    pub fn from_users(users: Vec<UserTransmission>, total_slices: usize) -> Self {
        let mut slices = vec![Vec::new(); total_slices];
        for (u, tx) in users.iter().enumerate() {
            for (c, &s) in tx.slices.iter().enumerate() {
                slices[s].push((u, c));
            }
        }
        Self { users, slices }
    }

    /// Slice sets are distinct per user and both views agree.
    pub fn is_consistent(&self) -> bool {
        let users_ok = self.users.iter().all(|tx| {
            let mut s = tx.slices.clone();
            s.sort_unstable();
            s.windows(2).all(|w| w[0] != w[1]) && s.iter().all(|&x| x < self.slices.len())
        });
        let edges: usize = self.users.iter().map(|t| t.slices.len()).sum();
        let occupants: usize = self.slices.iter().map(Vec::len).sum();
        users_ok
            && edges == occupants
            && self
                .slices
                .iter()
                .enumerate()
                .all(|(s, occ)| occ.iter().all(|&(u, c)| self.users[u].slices.get(c) == Some(&s)))
    }

    /// `hist[i]` = number of slices holding `i` segments.
    pub fn degree_histogram(&self) -> Vec<u64> {
        let max = self.slices.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = vec![0u64; max + 1];
        for occ in &self.slices {
            h[occ.len()] += 1;
        }
        h
    }

    pub fn max_slice_degree(&self) -> usize {
        self.slices.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Draws a frame: code per user from the PMF, then `n_h` distinct slices
/// uniformly at random.
pub fn generate_frame<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<FrameRealization> {
    config.validate()?;
    let total = config.total_slices();
    let codes = config.ensemble.codes();
    let pick = WeightedIndex::new(config.ensemble.probs())
        .map_err(|e| Error::InvalidEnsemble(e.to_string()))?;
    let users = (0..config.users)
        .map(|_| {
            let code = pick.sample(rng);
            let slices = index::sample(rng, total, codes[code].n()).into_vec();
            UserTransmission { code, slices }
        })
        .collect();
    Ok(FrameRealization::from_users(users, total))
}

/// Result of iterative interference cancellation on one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeOutcome {
    /// Known coordinates of every user, as bit masks.
    pub known: Vec<u32>,
    /// Users whose information segments are all determined.
    pub recovered: Vec<bool>,
    /// Newly known segments per iteration.
    pub recovered_per_iteration: Vec<usize>,
}

impl DecodeOutcome {
    pub fn iterations(&self) -> usize {
        self.recovered_per_iteration.len()
    }

    pub fn recovered_users(&self) -> usize {
        self.recovered.iter().filter(|&&r| r).count()
    }

    pub fn known_segments(&self) -> usize {
        self.known.iter().map(|m| m.count_ones() as usize).sum()
    }
}

struct Decoder<'a> {
    frame: &'a FrameRealization,
    ensemble: &'a Ensemble,
    mpr: usize,
    known: Vec<u32>,
    degree: Vec<usize>,
}

impl<'a> Decoder<'a> {
    fn new(frame: &'a FrameRealization, ensemble: &'a Ensemble, mpr: u32) -> Self {
        Self {
            frame,
            ensemble,
            mpr: mpr as usize,
            known: vec![0; frame.users.len()],
            degree: frame.slices.iter().map(Vec::len).collect(),
        }
    }

    fn resolvable(&self, s: usize) -> bool {
        self.degree[s] > 0 && self.degree[s] <= self.mpr
    }

    /// Marks `extra` as known for user `u`, closes it under MAP decoding and
    /// cancels every newly determined segment. Returns how many were new.
    fn learn(&mut self, u: usize, extra: u32) -> usize {
        let tx = &self.frame.users[u];
        let code = &self.ensemble.codes()[tx.code];
        let closed = code.closure_mask(self.known[u] | extra);
        let fresh = closed & !self.known[u];
        for c in 0..code.n() {
            if fresh >> c & 1 == 1 {
                self.degree[tx.slices[c]] -= 1;
            }
        }
        self.known[u] = closed;
        fresh.count_ones() as usize
    }

    fn finish(self, per_iteration: Vec<usize>) -> DecodeOutcome {
        let recovered = self
            .frame
            .users
            .iter()
            .zip(&self.known)
            .map(|(tx, &m)| {
                let code = &self.ensemble.codes()[tx.code];
                code.rank_of(m) == code.k()
            })
            .collect();
        DecodeOutcome {
            known: self.known,
            recovered,
            recovered_per_iteration: per_iteration,
        }
    }
}

/// Runs the two-step receiver to its fixpoint. Both steps act on the state
/// at the start of the iteration.
pub fn sic_decode(frame: &FrameRealization, ensemble: &Ensemble, mpr: u32) -> DecodeOutcome {
    let mut dec = Decoder::new(frame, ensemble, mpr);
    let mut per_iteration = Vec::new();
    let mut pending = vec![0u32; frame.users.len()];
    loop {
        let mut touched = Vec::new();
        for s in 0..frame.slices.len() {
            if !dec.resolvable(s) {
                continue;
            }
            for &(u, c) in &frame.slices[s] {
                let bit = 1u32 << c;
                if dec.known[u] & bit == 0 {
                    if pending[u] == 0 {
                        touched.push(u);
                    }
                    pending[u] |= bit;
                }
            }
        }
        if touched.is_empty() {
            break;
        }
        let mut fresh = 0;
        for u in touched {
            fresh += dec.learn(u, pending[u]);
            pending[u] = 0;
        }
        per_iteration.push(fresh);
    }
    dec.finish(per_iteration)
}

/// Same receiver, but slices are visited in `order` and every recovery is
/// cancelled immediately. Reaches the same fixpoint as [`sic_decode`].
pub fn sic_decode_in_order(frame: &FrameRealization, ensemble: &Ensemble, mpr: u32, order: &[usize]) -> DecodeOutcome {
    let mut dec = Decoder::new(frame, ensemble, mpr);
    let mut per_sweep = Vec::new();
    loop {
        let mut fresh = 0;
        for &s in order {
            if !dec.resolvable(s) {
                continue;
            }
            for &(u, c) in &frame.slices[s] {
                if dec.known[u] >> c & 1 == 0 {
                    fresh += dec.learn(u, 1 << c);
                }
            }
        }
        if fresh == 0 {
            break;
        }
        per_sweep.push(fresh);
    }
    dec.finish(per_sweep)
}

/// Statistics of one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub packet_loss_rate: f64,
    pub segment_loss_rate: f64,
    /// Recovered users per slot.
    pub throughput: f64,
    pub recovered_per_iteration: Vec<usize>,
    pub degree_histogram: Vec<u64>,
}

impl TrialResult {
    fn new(frame: &FrameRealization, outcome: &DecodeOutcome, slots: usize) -> Self {
        let users = frame.users.len();
        let segments: usize = frame.users.iter().map(|t| t.slices.len()).sum();
        let recovered = outcome.recovered_users();
        Self {
            packet_loss_rate: (users - recovered) as f64 / users as f64,
            segment_loss_rate: (segments - outcome.known_segments()) as f64 / segments as f64,
            throughput: recovered as f64 / slots as f64,
            recovered_per_iteration: outcome.recovered_per_iteration.clone(),
            degree_histogram: frame.degree_histogram(),
        }
    }
}

/// RNG for trial `trial`: the master seed keys a ChaCha stream and the trial
/// index selects the stream, so trials are independent of execution order.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Generates and decodes one frame with its derived seed.
pub fn run_trial(config: &SimConfig, trial: u64) -> Result<(FrameRealization, DecodeOutcome)> {
    let mut rng = trial_rng(config.seed, trial);
    let frame = generate_frame(config, &mut rng)?;
    let outcome = sic_decode(&frame, &config.ensemble, config.mpr);
    Ok((frame, outcome))
}

/// Aggregate over independent frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    #[serde(rename = "G")]
    pub load: f64,
    #[serde(rename = "K")]
    pub mpr: u32,
    #[serde(rename = "M")]
    pub slots: usize,
    pub trials: usize,
    pub packet_loss_rate: f64,
    /// Normal-approximation 95% interval, clamped to `[0, 1]`.
    pub plr_ci: [f64; 2],
    pub segment_loss_rate: f64,
    pub throughput: f64,
    /// Mean newly known segments per iteration.
    pub recovered_per_iteration: Vec<f64>,
    /// Pooled initial slice-degree histogram.
    pub degree_histogram: Vec<u64>,
}

pub fn run_trials(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let trials: Vec<TrialResult> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t).map(|(f, o)| TrialResult::new(&f, &o, config.slots)))
        .collect::<Result<_>>()?;
    Ok(aggregate(config, &trials))
}

fn aggregate(config: &SimConfig, trials: &[TrialResult]) -> SimResult {
    let n = trials.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let plr = mean(&|t| t.packet_loss_rate);
    let var = if trials.len() > 1 {
        trials.iter().map(|t| (t.packet_loss_rate - plr).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let half = 1.96 * (var / n).sqrt();

    let iters = trials.iter().map(|t| t.recovered_per_iteration.len()).max().unwrap_or(0);
    let mut per_iter = vec![0.0; iters];
    let degs = trials.iter().map(|t| t.degree_histogram.len()).max().unwrap_or(0);
    let mut hist = vec![0u64; degs];
    for t in trials {
        for (acc, &v) in per_iter.iter_mut().zip(&t.recovered_per_iteration) {
            *acc += v as f64;
        }
        for (acc, &v) in hist.iter_mut().zip(&t.degree_histogram) {
            *acc += v;
        }
    }
    per_iter.iter_mut().for_each(|v| *v /= n);

    SimResult {
        load: config.load(),
        mpr: config.mpr,
        slots: config.slots,
        trials: trials.len(),
        packet_loss_rate: plr,
        plr_ci: [(plr - half).max(0.0), (plr + half).min(1.0)],
        segment_loss_rate: mean(&|t| t.segment_loss_rate),
        throughput: mean(&|t| t.throughput),
        recovered_per_iteration: per_iter,
        degree_histogram: hist,
    }
}

/// Pearson goodness-of-fit of a slice-degree histogram against Poisson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Tests `hist` against `Poisson(mean)`. Bins are merged from both ends
/// until each expects at least 5 counts; the last bin absorbs the tail.
pub fn chi_square_poisson(hist: &[u64], mean: f64) -> Result<ChiSquareFit> {
    if !(mean > 0.0) {
        return Err(crate::error::domain("mean", mean, "must be positive"));
    }
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(Error::InvalidSimConfig("empty histogram".into()));
    }
    let total = total as f64;
    let reach = hist.len().max((mean + 10.0 * mean.sqrt() + 10.0) as usize);
    let mut probs = Vec::with_capacity(reach);
    let mut pmf = (-mean).exp();
    for i in 0..reach {
        if i > 0 {
            pmf *= mean / i as f64;
        }
        probs.push(pmf);
    }
    let observed = |i: usize| hist.get(i).copied().unwrap_or(0) as f64;

    // (expected probability, observed count) per merged bin
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    let mut i = 0;
    while i < reach {
        acc.0 += probs[i];
        acc.1 += observed(i);
        i += 1;
        let rest: f64 = probs[i..].iter().sum();
        if acc.0 * total >= 5.0 && rest * total >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    // tail bin: everything from here on, including degrees past `reach`
    let seen: f64 = bins.iter().map(|b| b.1).sum::<f64>() + acc.1;
    let tail_obs = acc.1 + (total - seen);
    let tail_p = 1.0 - bins.iter().map(|b| b.0).sum::<f64>();
    bins.push((tail_p.max(0.0), tail_obs));

    let statistic = bins
        .iter()
        .map(|&(p, o)| {
            let e = p * total;
            (o - e).powi(2) / e
        })
        .sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquareFit {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// A frame and its decoding, for inspecting stopping sets.
#[derive(Debug, Clone, Serialize)]
pub struct FrameTrace {
    pub trial: u64,
    pub frame: FrameRealization,
    pub outcome: DecodeOutcome,
}
