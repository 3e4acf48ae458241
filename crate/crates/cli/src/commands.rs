use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use csa_core::bound::{converse_bound, rate_grid, BoundQuery};
use csa_core::coupled::{coupled_de_trace, coupled_threshold, coupled_threshold_report, CoupledConfig, Coupling};
use csa_core::de::{load_threshold_with, Convergence, Ensemble, ThresholdOptions};
use csa_core::sim::{run_trial, run_trials, FrameTrace, SimConfig};

use crate::output::{emit, fmt_num, write_atomic, Csv, RunManifest};
use crate::{BoundArgs, CouplingArgs, ScProfileArgs, ScThresholdArgs, SimulateArgs, Table1Args, ThresholdArgs, Window};

fn manifest<T: Serialize>(command: &str, args: &T, seed: Option<u64>) -> Result<RunManifest> {
    Ok(RunManifest::new(command, serde_json::to_value(args)?, seed))
}

fn json_out<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn read_ensemble(path: &Path) -> Result<Ensemble> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading ensemble {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing ensemble {}", path.display()))
}

fn convergence(max_iter: usize) -> Result<Convergence> {
    let c = Convergence {
        max_iter,
        ..Convergence::default()
    };
    c.validate()?;
    Ok(c)
}

pub fn bound(args: &BoundArgs) -> Result<()> {
    if args.k.is_empty() {
        bail!("--K needs at least one value");
    }
    let m = manifest("bound", args, None)?;
    match (args.rate, args.grid) {
        (Some(rate), None) => {
            let queries: Vec<BoundQuery> = args
                .k
                .iter()
                .map(|&mpr| BoundQuery { rate, mpr, tol: args.tol })
                .collect();
            for q in &queries {
                q.validate()?;
            }
            let results = queries.iter().map(converse_bound).collect::<csa_core::Result<Vec<_>>>()?;
            let text = match results.as_slice() {
                [one] => json_out(one)?,
                many => json_out(&many)?,
            };
            emit(args.out.as_deref(), &text, m)?;
        }
        (None, Some(points)) => {
            if points == 0 {
                bail!("--grid must be at least 1");
            }
            let mut ks = args.k.clone();
            ks.sort_unstable();
            ks.dedup();
            for &mpr in &ks {
                BoundQuery { rate: 0.5, mpr, tol: args.tol }.validate()?;
            }
            let queries: Vec<BoundQuery> = rate_grid(points)
                .into_iter()
                .flat_map(|rate| ks.iter().map(move |&mpr| BoundQuery { rate, mpr, tol: args.tol }))
                .collect();
            // Rate-major order, so rows come out sorted by (R, K).
            let curve = queries.par_iter().map(converse_bound).collect::<csa_core::Result<Vec<_>>>()?;
            let mut csv = Csv::new(&["R", "K", "bound_normalized"]);
            for r in &curve {
                csv.row(&[fmt_num(r.rate), r.mpr.to_string(), fmt_num(r.normalized)]);
            }
            emit(args.out.as_deref(), &csv.finish(), m)?;
        }
        _ => bail!("give exactly one of --rate or --grid"),
    }
    Ok(())
}

pub fn threshold(args: &ThresholdArgs) -> Result<()> {
    let ensemble = read_ensemble(&args.ensemble)?;
    if args.k == 0 {
        bail!("--K must be at least 1");
    }
    if !(args.tol > 0.0) {
        bail!("--tol must be positive");
    }
    let opts = ThresholdOptions {
        tol: args.tol,
        convergence: convergence(args.max_iter)?,
    };
    let m = manifest("threshold", args, None)?;
    let result = load_threshold_with(&ensemble, args.k, &opts)?;
    emit(args.out.as_deref(), &json_out(&result)?, m)?;
    Ok(())
}

fn coupled_config(args: &CouplingArgs, length: usize) -> Result<CoupledConfig> {
    let coupling = match (args.window, args.w) {
        (Window::Deterministic, None) => Coupling::Deterministic,
        (Window::Deterministic, Some(_)) => bail!("--w only applies to --window randomized"),
        (Window::Randomized, w) => Coupling::Randomized {
            width: w.unwrap_or(args.d),
        },
    };
    let config = CoupledConfig {
        coupling,
        convergence: convergence(args.max_iter)?,
        ..CoupledConfig::new(args.d, length, args.k)
    };
    config.validate()?;
    Ok(config)
}

pub fn sc_threshold(args: &ScThresholdArgs) -> Result<()> {
    if !(args.tol > 0.0) {
        bail!("--tol must be positive");
    }
    if args.lengths.is_empty() {
        bail!("--L needs at least one value");
    }
    for &l in &args.lengths {
        coupled_config(&args.coupling, l)?;
    }
    let base = coupled_config(&args.coupling, args.lengths[0])?;
    let m = manifest("sc-threshold", args, None)?;
    let report = coupled_threshold_report(&base, &args.lengths, args.tol)?;
    emit(args.out.as_deref(), &json_out(&report)?, m)?;
    Ok(())
}

pub fn sc_profile(args: &ScProfileArgs) -> Result<()> {
    let config = coupled_config(&args.coupling, args.length)?;
    if !(args.load > 0.0) || !args.load.is_finite() {
        bail!("--G must be positive and finite");
    }
    if args.every == 0 {
        bail!("--every must be at least 1");
    }
    let m = manifest("sc-profile", args, None)?;
    let (_, snapshots) = coupled_de_trace(&config, args.load, args.every)?;
    let mut csv = Csv::new(&["iteration", "position", "p"]);
    for s in &snapshots {
        for (j, &p) in s.p.iter().enumerate() {
            csv.row(&[s.iteration.to_string(), j.to_string(), fmt_num(p)]);
        }
    }
    emit(args.out.as_deref(), &csv.finish(), m)?;
    Ok(())
}

/// One comparison row of the coupled-threshold table.
#[derive(Debug, Clone, Copy)]
pub struct TableCell {
    pub d: usize,
    pub mpr: u32,
    pub rate: f64,
    pub sc_normalized: f64,
    pub bound_normalized: f64,
}

pub fn table1_cells(length: usize, tol: f64) -> Result<Vec<TableCell>> {
    let cells: Vec<(usize, u32)> = [4, 3].into_iter().flat_map(|d| (1..=3).map(move |k| (d, k))).collect();
    for &(d, k) in &cells {
        CoupledConfig::new(d, length, k).validate()?;
    }
    let rows = cells
        .par_iter()
        .map(|&(d, mpr)| -> Result<TableCell> {
            let sc = coupled_threshold(&CoupledConfig::new(d, length, mpr), tol)?;
            let rate = 1.0 / d as f64;
            let b = converse_bound(&BoundQuery::new(rate, mpr))?;
            Ok(TableCell {
                d,
                mpr,
                rate,
                sc_normalized: sc.normalized(),
                bound_normalized: b.normalized,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}

pub fn table1(args: &Table1Args) -> Result<()> {
    if !(args.tol > 0.0) {
        bail!("--tol must be positive");
    }
    let m = manifest("table1", args, None)?;
    let rows = table1_cells(args.length, args.tol)?;
    let mut csv = Csv::new(&["R", "K", "d", "sc_normalized", "bound_normalized", "gap"]);
    for c in &rows {
        csv.row(&[
            fmt_num(c.rate),
            c.mpr.to_string(),
            c.d.to_string(),
            fmt_num(c.sc_normalized),
            fmt_num(c.bound_normalized),
            fmt_num(c.bound_normalized - c.sc_normalized),
        ]);
    }
    emit(args.out.as_deref(), &csv.finish(), m)?;
    Ok(())
}

/// Sweep description accepted by `simulate --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    ensemble: Ensemble,
    #[serde(rename = "K")]
    mpr: u32,
    #[serde(rename = "M")]
    slots: usize,
    loads: Vec<f64>,
    trials: usize,
    seed: u64,
}

fn sweep_from_args(args: &SimulateArgs) -> Result<SweepConfig> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()));
    }
    let ensemble = match (&args.ensemble, args.repetition) {
        (Some(p), None) => read_ensemble(p)?,
        (None, Some(d)) => Ensemble::repetition(d)?,
        _ => bail!("give one of --config, --ensemble or --repetition"),
    };
    Ok(SweepConfig {
        ensemble,
        mpr: args.k,
        slots: args.slots,
        loads: args.loads.clone(),
        trials: args.trials,
        seed: args.seed,
    })
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let sweep = sweep_from_args(args)?;
    if sweep.loads.is_empty() {
        bail!("need at least one load G");
    }
    if let Some(g) = sweep.loads.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        bail!("load G must be positive and finite, got {g}");
    }
    let mut loads = sweep.loads.clone();
    loads.sort_by(f64::total_cmp);
    let configs: Vec<SimConfig> = loads
        .iter()
        .map(|&g| SimConfig::with_load(sweep.ensemble.clone(), sweep.mpr, sweep.slots, g, sweep.trials, sweep.seed))
        .collect();
    for c in &configs {
        c.validate()?;
    }

    let m = manifest("simulate", &sweep, Some(sweep.seed))?;
    let mut csv = Csv::new(&["G", "K", "M", "trials", "PLR", "PLR_ci_lo", "PLR_ci_hi", "throughput"]);
    for c in &configs {
        let r = run_trials(c)?;
        csv.row(&[
            fmt_num(r.load),
            r.mpr.to_string(),
            r.slots.to_string(),
            r.trials.to_string(),
            fmt_num(r.packet_loss_rate),
            fmt_num(r.plr_ci[0]),
            fmt_num(r.plr_ci[1]),
            fmt_num(r.throughput),
        ]);
    }
    if let Some(path) = &args.dump_frame {
        let (frame, outcome) = run_trial(&configs[0], 0)?;
        write_atomic(path, json_out(&FrameTrace { trial: 0, frame, outcome })?.as_bytes())?;
    }
    if let Some(mpath) = emit(args.out.as_deref(), &csv.finish(), m)? {
        eprintln!("manifest: {}", mpath.display());
    }
    Ok(())
}
