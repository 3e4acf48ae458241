use csa_core::bound::{achievability_check, converse_bound, BoundQuery};
use csa_core::de::{load_threshold, load_threshold_with, Convergence, ThresholdOptions};
use csa_core::{CodeSpec, Ensemble};

fn hamming74() -> CodeSpec {
    CodeSpec::new(vec![
        vec![1, 0, 0, 0, 1, 1, 0],
        vec![0, 1, 0, 0, 1, 0, 1],
        vec![0, 0, 1, 0, 0, 1, 1],
        vec![0, 0, 0, 1, 1, 1, 1],
    ])
    .unwrap()
}

fn ensembles() -> Vec<(&'static str, Ensemble)> {
    vec![
        ("rep2", Ensemble::repetition(2).unwrap()),
        ("rep3", Ensemble::repetition(3).unwrap()),
        ("rep4", Ensemble::repetition(4).unwrap()),
        ("spc(3,2)", Ensemble::single(CodeSpec::single_parity_check(3).unwrap())),
        ("hamming(7,4)", Ensemble::single(hamming74())),
        (
            "0.5 rep2 + 0.5 rep4",
            Ensemble::new(
                vec![CodeSpec::repetition(2).unwrap(), CodeSpec::repetition(4).unwrap()],
                vec![0.5, 0.5],
            )
            .unwrap(),
        ),
    ]
}

/// `P(Poisson(m) >= k)` by direct summation.
fn tail(k: u32, m: f64) -> f64 {
    let mut term = (-m).exp();
    let mut below = 0.0;
    for j in 0..k {
        if j > 0 {
            term *= m / f64::from(j);
        }
        below += term;
    }
    1.0 - below
}

/// Threshold of the `(d, 1)` repetition ensemble from the fixed-point
/// condition: DE converges iff `P(Poisson(d x G) >= K) < x^{1/(d-1)}` for
/// all `x` in `(0, 1]`, so `G*` is the minimum over `x` of the load at which
/// the two sides meet.
fn repetition_threshold_oracle(d: usize, k: u32) -> f64 {
    let meet = |x: f64| {
        let y = x.powf(1.0 / (d as f64 - 1.0));
        // solve tail(k, m) = y for the Poisson mean m
        let (mut lo, mut hi) = (0.0, 1.0);
        while tail(k, hi) < y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail(k, mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi) / (d as f64 * x)
    };
    let n = 20_000;
    let (mut best_i, mut best) = (1, f64::INFINITY);
    for i in 1..=n {
        let v = meet(i as f64 / n as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement around the grid minimum
    let (mut a, mut b) = ((best_i - 1).max(1) as f64 / n as f64, ((best_i + 1).min(n)) as f64 / n as f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let e = a + phi * (b - a);
        if meet(c) < meet(e) {
            b = e;
        } else {
            a = c;
        }
    }
    meet(0.5 * (a + b)).min(best)
}

#[test]
fn repetition_thresholds_match_fixed_point_oracle() {
    for d in [3, 4] {
        for k in 1..=3 {
            let oracle = repetition_threshold_oracle(d, k);
            let de = load_threshold(&Ensemble::repetition(d).unwrap(), k, 1e-5).unwrap();
            assert!(
                (de.g_star - oracle).abs() < 1e-4,
                "d={d} K={k}: DE {} oracle {oracle}",
                de.g_star
            );
        }
    }
}

#[test]
fn rep3_single_user_slot_threshold() {
    let t = load_threshold(&Ensemble::repetition(3).unwrap(), 1, 1e-5).unwrap();
    assert!((t.g_star - 0.818).abs() < 1e-3, "{}", t.g_star);
    assert!(t.bracket[1] - t.bracket[0] <= 1e-5);
}

#[test]
fn rep2_threshold_is_one_half() {
    let rep2 = Ensemble::repetition(2).unwrap();
    // linear convergence at the threshold: the default iteration cap stops
    // a little short of 1/2
    let default = load_threshold(&rep2, 1, 1e-5).unwrap();
    assert!(default.g_star <= 0.5 + 1e-5 && (default.g_star - 0.5).abs() < 2e-4, "{}", default.g_star);

    let opts = ThresholdOptions {
        tol: 1e-5,
        convergence: Convergence {
            max_iter: 10_000_000,
            ..Convergence::default()
        },
    };
    let long = load_threshold_with(&rep2, 1, &opts).unwrap();
    assert!((long.g_star - 0.5).abs() <= 1e-5, "{}", long.g_star);
}

#[test]
fn thresholds_increase_with_mpr() {
    for (name, ens) in ensembles() {
        let g: Vec<f64> = (1..=4).map(|k| load_threshold(&ens, k, 1e-4).unwrap().g_star).collect();
        assert!(g.windows(2).all(|w| w[1] > w[0]), "{name}: {g:?}");
    }
}

#[test]
fn thresholds_respect_converse() {
    for (name, ens) in ensembles() {
        for k in 1..=4 {
            let t = load_threshold(&ens, k, 1e-4).unwrap();
            let b = converse_bound(&BoundQuery::new(ens.rate(), k)).unwrap();
            assert!(t.g_star <= b.g_bound, "{name} K={k}: {} > {}", t.g_star, b.g_bound);
            // the area condition is necessary for convergence
            let a = achievability_check(&ens, k, t.bracket[0]).unwrap();
            assert!(a.admissible, "{name} K={k}: slack {}", a.slack);
        }
    }
}
