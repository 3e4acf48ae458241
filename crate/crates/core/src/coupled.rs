//! Density evolution for spatially-coupled regular repetition CSA.
//!
//! Users are placed at positions `0..L` of a terminated chain and every user
//! employs the `(d, 1)` repetition code. With the default deterministic
//! coupling a user at position `i` sends one replica into each slot position
//! `i, i+1, ..., i+d-1`, so there are `L + d - 1` slot positions and the ones
//! near either end carry fewer replicas. Those underloaded ends resolve first
//! and a decoding wave travels inward.
//!
//! Per slot position `j` the unresolved-replica mean is
//! `s_j = G Σ_{i ∈ N(j)} q_{i→j}` and `p_j = P(Poisson(s_j) >= K)`; per user
//! edge, `q_{i→j} = Π_{j' ∈ window(i), j' ≠ j} p_{j'}`.
//!
//! The randomized variant spreads each of the `d` replicas uniformly over a
//! window of `w` slot positions; its recursion tracks one `q` per user
//! position using the window-averaged `p`.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::de::{decays_in_time, Convergence, DeOutcome, LoadThreshold};
use crate::error::{domain, Result};
use crate::numeric::{bisect_threshold, poisson_tail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Coupling {
    /// One replica in each of `d` consecutive slot positions (`w = d`).
    Deterministic,
    /// Each replica uniform over `width` consecutive slot positions.
    Randomized { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledConfig {
    /// Replicas per user, `d`.
    pub degree: usize,
    /// Number of user positions, `L`.
    pub length: usize,
    pub coupling: Coupling,
    #[serde(rename = "K")]
    pub mpr: u32,
    pub convergence: Convergence,
}

impl CoupledConfig {
    pub fn new(degree: usize, length: usize, mpr: u32) -> Self {
        Self {
            degree,
            length,
            coupling: Coupling::Deterministic,
            mpr,
            convergence: Convergence::default(),
        }
    }

    /// Coupling width `w`.
    pub fn width(&self) -> usize {
        match self.coupling {
            Coupling::Deterministic => self.degree,
            Coupling::Randomized { width } => width,
        }
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.degree as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 {
            return Err(domain("d", self.degree as f64, "repetition degree must be at least 2"));
        }
        if self.length == 0 {
            return Err(domain("L", 0.0, "chain needs at least one user position"));
        }
        if self.mpr == 0 {
            return Err(domain("K", 0.0, "MPR capability must be at least 1"));
        }
        if let Coupling::Randomized { width } = self.coupling {
            if width == 0 {
                return Err(domain("w", 0.0, "coupling width must be at least 1"));
            }
        }
        self.convergence.validate()
    }
}

/// Connectivity of a coupled chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chain {
    pub length: usize,
    pub width: usize,
    pub degree: usize,
    /// `N(j)`: user positions sending replicas into slot position `j`.
    pub contributors: Vec<RangeInclusive<usize>>,
}

impl Chain {
    pub fn slot_positions(&self) -> usize {
        self.contributors.len()
    }

    pub fn contributor_count(&self, j: usize) -> usize {
        let r = &self.contributors[j];
        r.end() + 1 - r.start()
    }

    /// Mean initial slice degree at slot position `j` for nominal load `G`.
    pub fn mean_slice_degree(&self, j: usize, load: f64) -> f64 {
        load * self.degree as f64 * self.contributor_count(j) as f64 / self.width as f64
    }

    /// Slot positions reached by user position `i`.
    pub fn window(&self, i: usize) -> RangeInclusive<usize> {
        i..=i + self.width - 1
    }
}

pub fn build_chain(config: &CoupledConfig) -> Result<Chain> {
    config.validate()?;
    let (l, w) = (config.length, config.width());
    let contributors = (0..l + w - 1)
        .map(|j| j.saturating_sub(w - 1)..=j.min(l - 1))
        .collect();
    Ok(Chain {
        length: l,
        width: w,
        degree: config.degree,
        contributors,
    })
}

/// Final iterates of coupled density evolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledState {
    /// Per user position, one entry per replica. Under randomized coupling
    /// all replicas of a position share the same value.
    pub q: Vec<Vec<f64>>,
    /// Per slot position.
    pub p: Vec<f64>,
    pub iterations: usize,
    pub outcome: DeOutcome,
}

impl CoupledState {
    pub fn converged(&self) -> bool {
        self.outcome == DeOutcome::Converged
    }
}

fn slice_loss(mpr: u32, s: f64) -> f64 {
    if mpr == 1 {
        -(-s).exp_m1()
    } else {
        poisson_tail(mpr, s)
    }
}

fn run_coupled(chain: &Chain, config: &CoupledConfig, load: f64, mut observe: impl FnMut(usize, &[f64])) -> CoupledState {
    let (l, d, w) = (chain.length, chain.degree, chain.width);
    let slots = chain.slot_positions();
    let randomized = matches!(config.coupling, Coupling::Randomized { .. });
    let Convergence {
        epsilon,
        stall_delta,
        max_iter,
    } = config.convergence;

    // q[i * d + r]: replica r of user position i (deterministic: sent to slot i + r)
    let mut q = vec![1.0; l * d];
    let mut next = vec![0.0; l * d];
    let mut p = vec![0.0; slots];
    let mut s = vec![0.0; slots];
    let edge_scale = load * d as f64 / w as f64;

    let mut outcome = DeOutcome::Inconclusive;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        s.iter_mut().for_each(|v| *v = 0.0);
        if randomized {
            for i in 0..l {
                for j in chain.window(i) {
                    s[j] += edge_scale * q[i * d];
                }
            }
        } else {
            for i in 0..l {
                for r in 0..d {
                    s[i + r] += load * q[i * d + r];
                }
            }
        }
        for (pj, &sj) in p.iter_mut().zip(&s) {
            *pj = slice_loss(config.mpr, sj);
        }
        observe(it, &p);

        if randomized {
            for i in 0..l {
                let avg = chain.window(i).map(|j| p[j]).sum::<f64>() / w as f64;
                let v = avg.powi(d as i32 - 1);
                next[i * d..(i + 1) * d].iter_mut().for_each(|x| *x = v);
            }
        } else {
            for i in 0..l {
                let window = &p[i..i + d];
                for r in 0..d {
                    next[i * d + r] = window
                        .iter()
                        .enumerate()
                        .filter(|&(r2, _)| r2 != r)
                        .map(|(_, &v)| v)
                        .product();
                }
            }
        }

        let mut prev_max_q = 0.0f64;
        let mut max_q = 0.0f64;
        let mut max_step = 0.0f64;
        for (a, b) in next.iter_mut().zip(&q) {
            *a = a.min(*b);
            prev_max_q = prev_max_q.max(*b);
            max_q = max_q.max(*a);
            max_step = max_step.max(b - *a);
        }
        std::mem::swap(&mut q, &mut next);
        if max_q < epsilon {
            outcome = DeOutcome::Converged;
            break;
        }
        if max_step < stall_delta && !decays_in_time(prev_max_q, max_q, max_iter - it, epsilon) {
            outcome = DeOutcome::Stalled;
            break;
        }
    }

    CoupledState {
        q: q.chunks(d).map(<[f64]>::to_vec).collect(),
        p,
        iterations,
        outcome,
    }
}

/// Runs coupled density evolution at nominal load `G` from all-unresolved.
pub fn coupled_de_iterate(config: &CoupledConfig, load: f64) -> Result<CoupledState> {
    check_load(load)?;
    let chain = build_chain(config)?;
    Ok(run_coupled(&chain, config, load, |_, _| {}))
}

/// One recorded `p` profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSnapshot {
    pub iteration: usize,
    pub p: Vec<f64>,
}

/// As [`coupled_de_iterate`], also keeping the slot-position `p` profile
/// every `every` iterations (and at the last one).
pub fn coupled_de_trace(config: &CoupledConfig, load: f64, every: usize) -> Result<(CoupledState, Vec<ProfileSnapshot>)> {
    check_load(load)?;
    if every == 0 {
        return Err(domain("every", 0.0, "sampling period must be at least 1"));
    }
    let chain = build_chain(config)?;
    let mut snaps = Vec::new();
    let state = run_coupled(&chain, config, load, |it, p| {
        if it == 1 || it % every == 0 {
            snaps.push(ProfileSnapshot {
                iteration: it,
                p: p.to_vec(),
            });
        }
    });
    if snaps.last().map(|s| s.iteration) != Some(state.iterations) {
        snaps.push(ProfileSnapshot {
            iteration: state.iterations,
            p: state.p.clone(),
        });
    }
    Ok((state, snaps))
}

fn check_load(load: f64) -> Result<()> {
    if !(load > 0.0) || !load.is_finite() {
        return Err(domain("G", load, "load must be positive"));
    }
    Ok(())
}

/// Threshold of one coupled chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledThreshold {
    pub d: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub w: usize,
    /// Nominal (interior) load threshold with its bracket and rate.
    #[serde(flatten)]
    pub threshold: LoadThreshold,
    /// `L G* / (L + w - 1)`: users over all slot positions.
    #[serde(rename = "G_eff")]
    pub g_eff: f64,
}

impl CoupledThreshold {
    pub fn g_star(&self) -> f64 {
        self.threshold.g_star
    }

    pub fn normalized(&self) -> f64 {
        self.threshold.normalized()
    }
}

pub fn coupled_threshold(config: &CoupledConfig, tol: f64) -> Result<CoupledThreshold> {
    if !(tol > 0.0) {
        return Err(domain("tol", tol, "must be positive"));
    }
    let chain = build_chain(config)?;
    let cap = 8.0 * f64::from(config.mpr);
    let bracket = bisect_threshold(
        |g| run_coupled(&chain, config, g, |_, _| {}).outcome.probe(),
        tol,
        tol,
        cap,
    )?;
    let threshold = LoadThreshold::from_bracket(bracket, config.mpr, config.rate());
    let (l, w) = (config.length as f64, chain.width as f64);
    Ok(CoupledThreshold {
        d: config.degree,
        length: config.length,
        w: chain.width,
        threshold,
        g_eff: l * threshold.g_star / (l + w - 1.0),
    })
}

/// Coupled thresholds over several chain lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationReport {
    pub d: usize,
    #[serde(rename = "K")]
    pub mpr: u32,
    pub runs: Vec<CoupledThreshold>,
    /// `G*` at the longest chain minus `G*` at the one before it.
    pub last_increment: Option<f64>,
}

impl SaturationReport {
    /// Run at the longest chain.
    pub fn longest(&self) -> &CoupledThreshold {
        self.runs.iter().max_by_key(|r| r.length).expect("at least one chain length")
    }
}

/// Default chain lengths for the saturation diagnostic.
pub const DEFAULT_LENGTHS: [usize; 4] = [50, 100, 200, 400];

/// [`coupled_threshold`] for each length in `lengths` (sorted ascending in
/// the report). Lengths run in parallel.
pub fn coupled_threshold_report(base: &CoupledConfig, lengths: &[usize], tol: f64) -> Result<SaturationReport> {
    if lengths.is_empty() {
        return Err(domain("L", 0.0, "need at least one chain length"));
    }
    let mut lengths = lengths.to_vec();
    lengths.sort_unstable();
    lengths.dedup();
    let runs = lengths
        .par_iter()
        .map(|&length| coupled_threshold(&CoupledConfig { length, ..*base }, tol))
        .collect::<Result<Vec<_>>>()?;
    let last_increment = match runs.as_slice() {
        [.., a, b] => Some(b.g_star() - a.g_star()),
        _ => None,
    };
    Ok(SaturationReport {
        d: base.degree,
        mpr: base.mpr,
        runs,
        last_increment,
    })
}
