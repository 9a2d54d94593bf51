//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p tiebreaker-core --test acceptance`. Exits nonzero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tiebreaker::criteria::{det_m, eff_inv, info_matrix, m11, Constraints, CriterionSpec};
use tiebreaker::design::{build_design, DesignFunction, DesignKind, MomentTriple};
use tiebreaker::dist::Distribution;
use tiebreaker::solve_continuous::{
    delta_grid, optimal_design, solve_extremal_detailed, three_level_delta, tradeoff_sweep, uniform_closed_form,
    xz_max, DesignParams, ExtremalKind,
};
use tiebreaker::solve_discrete::{
    lp_oracle_discrete, optimal_design_discrete, solve_extremal_discrete_detailed, DiscreteInstance, Sense,
};
use tiebreaker::verify::{simulate_variance, SimConfig};

// Published targets.
const RDD_INV: f64 = 223.44;
const THREE_LEVEL_INV: f64 = 137.56;
const OPT_MON_INV: f64 = 54.90;
const OPT_INV: f64 = 42.37;
const TABLE_REL_TOL: f64 = 0.005;
const ELL: f64 = 0.0034;
const T: f64 = 0.7059;
const PARAM_TOL: f64 = 5e-4;
const EFF_RCT_MON: f64 = 0.25;
const EFF_GAIN_MON: f64 = 0.28;
const EFF_GAIN_TOL: f64 = 0.005;
const EFF_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-9;
const GRID_REL_TOL: f64 = 0.01;
const MC_REL_TOL: f64 = 0.05;
const MC_SEED: u64 = 42;
const RESIDUAL_TOL: f64 = 1e-8;
const DET_REL_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-8;
const WEIBULL_FACTOR_FLOOR: f64 = 10.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn uniform() -> Distribution {
    Distribution::uniform()
}

/// Inverse efficiencies of the sharp RDD, three-level, optimal monotone and optimal designs for `F` at `(z, xz)`.
fn table_two(dist: &Distribution, z: f64, xz: f64) -> [f64; 4] {
    let ex2 = dist.second_moment();
    let rdd = build_design(DesignKind::GeneralizedRdd { z_tilde: z }, dist).unwrap();
    let delta = three_level_delta(dist, z, xz).expect("three-level design feasible");
    let three = build_design(DesignKind::ThreeLevel { z_tilde: z, delta }, dist).unwrap();
    let c = Constraints::new(z, xz);
    let mon = optimal_design(dist, &c, &CriterionSpec::Eff, true).unwrap();
    let opt = optimal_design(dist, &c, &CriterionSpec::Eff, false).unwrap();
    [
        eff_inv(&rdd.moments(dist), ex2),
        eff_inv(&three.moments(dist), ex2),
        mon.eff_inv,
        opt.eff_inv,
    ]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let got = table_two(&uniform(), -0.7, 0.25);
    let elapsed = start.elapsed();
    let want = [RDD_INV, THREE_LEVEL_INV, OPT_MON_INV, OPT_INV];
    let ok = got.iter().zip(&want).all(|(g, w)| rel(*g, *w) <= TABLE_REL_TOL) && elapsed < Duration::from_secs(1);
    outcome(
        ok,
        format!(
            "Eff^-1 rdd {:.4}, three-level {:.4}, monotone {:.4}, optimal {:.4} (targets 223.44/137.56/54.90/42.37, rel tol {TABLE_REL_TOL}); {:.3}s",
            got[0],
            got[1],
            got[2],
            got[3],
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let c = Constraints::new(-0.7, 0.25);
    let r = optimal_design(&uniform(), &c, &CriterionSpec::Eff, true).unwrap();
    let DesignParams::MaxMonotone { l, t } = r.upper else {
        return outcome(false, "upper extremal has unexpected form");
    };
    let at_upper = (r.selected_x2z - r.interval.1).abs() < 1e-12;
    let ok = at_upper && (l - ELL).abs() <= PARAM_TOL && (t - T).abs() <= PARAM_TOL;
    outcome(ok, format!("l = {l:.6}, t = {t:.6} (targets {ELL} and {T} +/- {PARAM_TOL}); optimum at I_max: {at_upper}"))
}

fn efficiency_points(dist: &Distribution) -> [f64; 3] {
    let z = -0.5;
    let mon0 = optimal_design(dist, &Constraints::new(z, 0.0), &CriterionSpec::Eff, true).unwrap();
    let mon1 = optimal_design(dist, &Constraints::new(z, 0.1), &CriterionSpec::Eff, true).unwrap();
    let opt0 = optimal_design(dist, &Constraints::new(z, 0.0), &CriterionSpec::Eff, false).unwrap();
    [mon0.criterion_value, mon1.criterion_value, opt0.criterion_value]
}

fn criterion_3() -> Outcome {
    let [a, b, c] = efficiency_points(&uniform());
    let ok = (a - EFF_RCT_MON).abs() <= EFF_TOL && (b - EFF_GAIN_MON).abs() <= EFF_GAIN_TOL && (c - 1.0 / 3.0).abs() <= EFF_TOL;
    outcome(
        ok,
        format!("monotone Eff {a:.12} at delta 0, {b:.6} at xz 0.1; unconstrained Eff {c:.12} at delta 0"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let u = uniform();
    let grid = delta_grid(101);
    let mut notes = Vec::new();
    let mut ok = true;
    for z in [0.0, -0.2, -0.5, -0.7] {
        let recs = tradeoff_sweep(&u, z, &grid, &CriterionSpec::Eff).unwrap();
        let increasing = recs.windows(2).all(|w| w[1].eff_inv_opt > w[0].eff_inv_opt);
        ok &= increasing;
        if z != 0.0 {
            let rct = 1.0 / recs[0].eff_inv_opt_monotone;
            let (best_i, best) = recs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, r)| (i, 1.0 / r.eff_inv_opt_monotone))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let beats = best > rct;
            ok &= beats;
            notes.push(format!(
                "z={z}: strictly increasing {increasing}, best monotone Eff {best:.5} at delta {:.2} vs RCT {rct:.5}",
                grid[best_i]
            ));
        } else {
            notes.push(format!("z=0: strictly increasing {increasing}"));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    outcome(ok, format!("{}; {:.2}s", notes.join("; "), elapsed.as_secs_f64()))
}

fn random_instance(rng: &mut ChaCha8Rng) -> DiscreteInstance {
    let n = rng.random_range(5..=50);
    let mut sample: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-2.0..2.0);
            if rng.random_bool(0.3) {
                v.powi(3)
            } else {
                v
            }
        })
        .collect();
    // a few ties so that some atoms carry extra mass
    for i in 0..n / 5 {
        sample[i] = sample[n - 1 - i];
    }
    DiscreteInstance::from_sample(&sample).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_lp: f64 = 0.0;
    let mut worst_canon: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..50 {
        let inst = random_instance(&mut rng);
        let z: f64 = rng.random_range(-0.9..0.9);
        let delta: f64 = rng.random_range(0.0..1.0);
        let c = Constraints::from_delta(inst.distribution(), z, delta).unwrap();
        for (kind, sense, mono) in [
            (ExtremalKind::Max, Sense::Max, false),
            (ExtremalKind::Min, Sense::Min, false),
            (ExtremalKind::MaxMonotone, Sense::Max, true),
            (ExtremalKind::MinMonotone, Sense::Min, true),
        ] {
            let ours = solve_extremal_discrete_detailed(&inst, &c, kind).unwrap().moments.ex2z;
            let (lp, _) = lp_oracle_discrete(&inst, &c, sense, mono).unwrap();
            let err = (ours - lp).abs();
            worst_lp = worst_lp.max(err);
            if err > ORACLE_TOL {
                failures.push(format!("instance {i} {kind:?}: {ours} vs {lp}"));
            }
        }
        for mono in [true, false] {
            let blend = optimal_design_discrete(&inst, &c, &CriterionSpec::Eff, mono, false).unwrap();
            let canon = optimal_design_discrete(&inst, &c, &CriterionSpec::Eff, mono, true).unwrap();
            let err = (blend.criterion_value - canon.criterion_value).abs();
            worst_canon = worst_canon.max(err);
            if err > ORACLE_TOL {
                failures.push(format!("instance {i} canonical (monotone {mono}): {err:e}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "max |ex2z - LP| = {worst_lp:.2e}, max |blend - canonical| = {worst_canon:.2e} over 50 instances{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

/// Midpoint grid `-1 + (2i - 1)/n`, `i = 1..n`.
fn midpoint_grid(n: usize) -> Distribution {
    let sample: Vec<f64> = (1..=n).map(|i| -1.0 + (2 * i - 1) as f64 / n as f64).collect();
    Distribution::empirical(&sample).unwrap()
}

fn criterion_6() -> Outcome {
    let u = uniform();
    let reference: Vec<f64> = table_two(&u, -0.7, 0.25)
        .into_iter()
        .chain(efficiency_points(&u))
        .collect();
    let names = ["rdd", "three-level", "monotone", "optimal", "mon@0", "mon@0.1", "opt@0"];
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for n in [100, 1_000, 10_000] {
        let g = midpoint_grid(n);
        let vals: Vec<f64> = table_two(&g, -0.7, 0.25).into_iter().chain(efficiency_points(&g)).collect();
        errors.push(vals.iter().zip(&reference).map(|(v, r)| rel(*v, *r)).collect());
    }
    let within = errors[2].iter().all(|e| *e <= GRID_REL_TOL);
    let shrinking = (0..names.len()).all(|j| errors[0][j] > errors[1][j] && errors[1][j] > errors[2][j]);
    let summary: Vec<String> = names
        .iter()
        .enumerate()
        .map(|(j, name)| format!("{name} {:.1e}/{:.1e}/{:.1e}", errors[0][j], errors[1][j], errors[2][j]))
        .collect();
    outcome(
        within && shrinking,
        format!("relative errors at n=1e2/1e3/1e4: {}", summary.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let u = uniform();
    let cfg = SimConfig {
        n: 10_000,
        reps: 2_000,
        seed: MC_SEED,
        ..SimConfig::default()
    };
    let rct = DesignFunction::constant(0.5).unwrap();
    let three = build_design(DesignKind::ThreeLevel { z_tilde: -0.7, delta: 0.05 }, &u).unwrap();
    let a = simulate_variance(&u, &rct, &cfg).unwrap();
    let b = simulate_variance(&u, &three, &cfg).unwrap();
    let again = simulate_variance(&u, &rct, &cfg).unwrap();
    let deterministic = again.empirical.to_bits() == a.empirical.to_bits();
    let elapsed = start.elapsed();
    let ok = a.rel_error <= MC_REL_TOL
        && b.rel_error <= MC_REL_TOL
        && rel(b.predicted, THREE_LEVEL_INV) <= TABLE_REL_TOL
        && deterministic
        && elapsed < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "RCT {:.4} vs {:.4} ({:.2}%), three-level {:.3} vs {:.3} ({:.2}%), seed {MC_SEED}, deterministic {deterministic}, rejected {}/{}; {:.1}s",
            a.empirical,
            a.predicted,
            100.0 * a.rel_error,
            b.empirical,
            b.predicted,
            100.0 * b.rel_error,
            a.rejected_replicates,
            b.rejected_replicates,
            elapsed.as_secs_f64()
        ),
    )
}

fn closed_form_gap(c: &Constraints, kind: Option<ExtremalKind>) -> f64 {
    let u = uniform();
    let closed = uniform_closed_form(c, kind).unwrap();
    let generic = match kind {
        Some(k) => solve_extremal_detailed(&u, c, k).unwrap().params,
        None => DesignParams::ThreeLevel {
            delta: three_level_delta(&u, c.z_tilde, c.xz).unwrap(),
        },
    };
    match (closed, generic) {
        (DesignParams::Max { a1, a2 }, DesignParams::Max { a1: x, a2: y })
        | (DesignParams::Min { b1: a1, b2: a2 }, DesignParams::Min { b1: x, b2: y })
        | (DesignParams::MaxMonotone { l: a1, t: a2 }, DesignParams::MaxMonotone { l: x, t: y })
        | (DesignParams::MinMonotone { u: a1, s: a2 }, DesignParams::MinMonotone { u: x, s: y }) => {
            (a1 - x).abs().max((a2 - y).abs())
        }
        (DesignParams::ThreeLevel { delta: a }, DesignParams::ThreeLevel { delta: b }) => (a - b).abs(),
        _ => f64::INFINITY,
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dists = [
        uniform(),
        Distribution::weibull(0.5, 1.0).unwrap(),
        Distribution::gaussian(1.0).unwrap(),
    ];
    let mut worst_det: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut min_m11 = f64::INFINITY;
    for i in 0..1000 {
        let dist = &dists[i % dists.len()];
        let z: f64 = rng.random_range(-0.95..0.95);
        let delta: f64 = rng.random_range(0.0..1.0);
        let c = Constraints::from_delta(dist, z, delta).unwrap();
        let ex2 = dist.second_moment();
        let mono = rng.random_bool(0.5);
        let (lo_kind, hi_kind) = ExtremalKind::pair(mono);
        let lo = solve_extremal_detailed(dist, &c, lo_kind).unwrap();
        let hi = solve_extremal_detailed(dist, &c, hi_kind).unwrap();
        for m in [&lo.moments, &hi.moments] {
            worst_residual = worst_residual.max((m.ez - z).abs()).max((m.exz - c.xz).abs());
        }
        let x2z = rng.random_range(lo.moments.ex2z..=hi.moments.ex2z);
        let t = MomentTriple::new(z, c.xz, x2z);
        min_m11 = min_m11.min(m11(z, c.xz, ex2));
        let closed = ex2 * det_m(z, c.xz, x2z, ex2);
        worst_det = worst_det.max(rel(closed, info_matrix(&t, ex2).determinant()));
        let r = optimal_design(dist, &c, &CriterionSpec::Eff, mono).unwrap();
        worst_residual = worst_residual.max(r.feasibility_residuals.0).max(r.feasibility_residuals.1);
    }

    let u = uniform();
    let mut worst_closed: f64 = 0.0;
    for z in [-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9] {
        for delta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = Constraints::from_delta(&u, z, delta).unwrap();
            for kind in ExtremalKind::ALL {
                worst_closed = worst_closed.max(closed_form_gap(&c, Some(kind)));
            }
            if three_level_delta(&u, z, c.xz).is_some() {
                worst_closed = worst_closed.max(closed_form_gap(&c, None));
            }
        }
    }
    let ok = worst_residual <= RESIDUAL_TOL && min_m11 > 0.0 && worst_det <= DET_REL_TOL && worst_closed <= CLOSED_FORM_TOL;
    outcome(
        ok,
        format!(
            "max residual {worst_residual:.1e}, min M11 {min_m11:.3e}, max det rel err {worst_det:.1e}, max closed-form gap {worst_closed:.1e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let w = Distribution::weibull(0.5, 1.0).unwrap();
    let ex2 = w.second_moment();
    let mut best = (0.0, 0.0);
    for delta in [0.9, 0.92, 0.94, 0.96, 0.98, 0.99, 0.995, 0.999] {
        let c = Constraints::from_delta(&w, 0.0, delta).unwrap();
        let opt = optimal_design(&w, &c, &CriterionSpec::Eff, false).unwrap();
        let Some(d3) = three_level_delta(&w, 0.0, c.xz) else {
            continue;
        };
        let three = build_design(DesignKind::ThreeLevel { z_tilde: 0.0, delta: d3 }, &w).unwrap();
        let factor = eff_inv(&three.moments(&w), ex2) / opt.eff_inv;
        if factor > best.0 {
            best = (factor, delta);
        }
    }
    outcome(
        best.0 >= WEIBULL_FACTOR_FLOOR,
        format!(
            "largest Eff^-1(three-level)/Eff^-1(optimal) = {:.2} at delta {} (floor {WEIBULL_FACTOR_FLOOR}); xz_max(0) = {:.6}",
            best.0,
            best.1,
            xz_max(&w, 0.0)
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 reference inverse efficiencies", criterion_1),
        ("2 optimal monotone parameters", criterion_2),
        ("3 efficiency points at z=-0.5", criterion_3),
        ("4 monotonicity and RCT inadmissibility", criterion_4),
        ("5 LP oracle and canonical agreement", criterion_5),
        ("6 discrete grid consistency", criterion_6),
        ("7 Monte Carlo variance", criterion_7),
        ("8 structural invariants", criterion_8),
        ("9 Weibull efficiency ratio", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let result = run();
        println!("{} criterion {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
