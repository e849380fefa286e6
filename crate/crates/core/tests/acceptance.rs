//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use recourse_core::convexity::{self, RiskObjective};
use recourse_core::linalg;
use recourse_core::measures::{wasserstein1, DiscreteMeasure, PerturbationPlan, RegionV};
use recourse_core::risk::{self, Quadrature, RiskSpec};
use recourse_core::rng;
use recourse_core::solver::{
    grid_search_oracle, solve_two_stage, PreparedProblem, SolveOptions, SolverPath, TwoStageProblem,
};
use recourse_core::stability::{estimate_holder_exponent, run_stability_experiment, PlanSpec, StabilityOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Criterion 1: closed-form φ against the primal LP.
fn duality() -> Outcome {
    let instances = [abs_1d(), skew_1d(), triangle_2d(), box_2d(), random_2d(5)];
    let mut worst: f64 = 0.0;
    for (k, rd) in instances.iter().enumerate() {
        let f = fan(rd);
        let mut r = rng::stream(100, k as u64);
        for _ in 0..200 {
            let t: Vec<f64> = (0..rd.dim()).map(|_| r.random_range(-5.0..5.0)).collect();
            let lp = rd.phi_lp(&t).map_err(|e| e.to_string())?;
            worst = worst.max((f.phi(&t) - lp).abs());
        }
    }
    check(worst <= 1e-7, || format!("max |phi - LP| = {worst:e}"))?;
    Ok(format!("5 instances x 200 points, max |phi - LP| = {worst:.1e}"))
}

/// Criterion 2: gradient against central differences at tie-free points.
fn gradient() -> Outcome {
    let h = 1e-5;
    let skew_box = Quadrature::new(
        &recourse_core::measures::BoxDensityMeasure::new(vec![-1.0], vec![2.0])
            .unwrap()
            .into(),
        None,
    )
    .unwrap();
    let cases: Vec<(&str, recourse_core::geometry::DualVertexFan, Quadrature, bool, f64, f64)> = vec![
        ("abs/exact", fan(&abs_1d()), exact_unit_interval(), false, -0.2, 1.2),
        ("skew/exact", fan(&skew_1d()), skew_box, false, -1.2, 2.2),
        (
            "triangle/R60",
            fan(&triangle_2d()),
            discretized_unit_box(2, 60),
            true,
            -0.1,
            1.1,
        ),
        (
            "random/atoms",
            fan(&random_2d(8)),
            Quadrature::from(random_atoms(40, 2, 8)),
            true,
            0.0,
            1.0,
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (ci, (name, f, q, discrete, lo, hi)) in cases.iter().enumerate() {
        for (si, spec) in SPECS.iter().enumerate() {
            let mut r = rng::stream(200 + ci as u64, si as u64);
            let mut done = 0;
            while done < 100 {
                let x: Vec<f64> = (0..f.dim).map(|_| r.random_range(*lo..*hi)).collect();
                let det = risk::grad_q_detailed(f, q, *spec, &x).map_err(|e| e.to_string())?;
                let g = det.gradient.clone();
                let mut fd = vec![0.0; f.dim];
                let mut tie = det.has_ties();
                for j in 0..f.dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    if *discrete {
                        // a kink inside the stencil shows up as a gradient change
                        let gp = risk::grad_q(f, q, *spec, &xp).unwrap();
                        let gm = risk::grad_q(f, q, *spec, &xm).unwrap();
                        tie |= linalg::distance(&gp, &g) > 1e-12 || linalg::distance(&gm, &g) > 1e-12;
                    }
                    fd[j] =
                        (risk::eval_q(f, q, *spec, &xp).unwrap() - risk::eval_q(f, q, *spec, &xm).unwrap()) / (2.0 * h);
                }
                if tie {
                    skipped += 1;
                    continue;
                }
                let rel = linalg::distance(&g, &fd) / linalg::norm(&g).max(linalg::norm(&fd)).max(1e-8);
                if rel > 1e-3 {
                    return Err(format!("{name} {spec:?} x={x:?}: grad {g:?} vs fd {fd:?}"));
                }
                worst = worst.max(rel);
                done += 1;
            }
        }
    }
    Ok(format!(
        "4 instances x 3 specs x 100 points, max rel err {worst:.1e} ({skipped} tied points redrawn)"
    ))
}

/// Criterion 3: both sides of the representation formula.
fn representation() -> Outcome {
    let mut worst: f64 = 0.0;
    let benches: [(usize, recourse_core::geometry::DualVertexFan, RegionV); 2] = [
        (1, fan(&abs_1d()), RegionV::new(vec![0.2], vec![0.8], 0.1).unwrap()),
        (
            2,
            fan(&triangle_2d()),
            RegionV::new(vec![0.25, 0.25], vec![0.75, 0.75], 0.1).unwrap(),
        ),
    ];
    let mut count = 0;
    for (dim, f, v) in &benches {
        let q = discretized_unit_box(*dim, 1000);
        for (si, spec) in SPECS.iter().enumerate() {
            let mut r = rng::stream(300 + *dim as u64, si as u64);
            for _ in 0..50 {
                let x: Vec<f64> = (0..*dim).map(|j| r.random_range(v.lo[j]..v.hi[j])).collect();
                let y: Vec<f64> = (0..*dim).map(|j| r.random_range(v.lo[j]..v.hi[j])).collect();
                let u = linalg::sub(&y, &x);
                let lhs = risk::representation_lhs(f, &q, *spec, &x, &u).map_err(|e| e.to_string())?;
                let rhs = risk::representation_rhs(f, &q, *spec, &x, &u).map_err(|e| e.to_string())?;
                if (lhs - rhs).abs() > 5e-3 {
                    return Err(format!("{dim}-D {spec:?} x={x:?} u={u:?}: lhs {lhs} rhs {rhs}"));
                }
                worst = worst.max((lhs - rhs).abs());
                count += 1;
            }
        }
    }
    Ok(format!("{count} pairs at R = 1000/axis, max |lhs - rhs| = {worst:.1e}"))
}

fn v_benchmark() -> RegionV {
    RegionV::new(vec![0.1], vec![0.9], 0.1).unwrap()
}

/// Criterion 4: modulus of the expectation on the 1-D benchmark.
fn expectation_modulus() -> Outcome {
    let (f, q) = (fan(&abs_1d()), exact_unit_interval());
    let rep = convexity::monotonicity_modulus(
        &RiskObjective::new(&f, &q, RiskSpec::Expectation),
        &v_benchmark(),
        500,
        4,
    )
    .map_err(|e| e.to_string())?;
    check((1.9..=2.1).contains(&rep.kappa_hat), || {
        format!("kappa_hat = {}", rep.kappa_hat)
    })?;
    Ok(format!("kappa_hat(Q_E) = {:.6}", rep.kappa_hat))
}

/// Criterion 5: expected-excess threshold sweep.
fn excess_sweep() -> Outcome {
    let (f, q) = (fan(&abs_1d()), exact_unit_interval());
    let grid = [-1.0, -0.5, 0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 1.5];
    let sweep = convexity::eta_threshold_sweep(&f, &q, &v_benchmark(), &grid, 500, 5).map_err(|e| e.to_string())?;
    let k: Vec<f64> = sweep.points.iter().map(|p| p.kappa_hat).collect();
    for (eta, kh) in grid.iter().zip(&k) {
        if *eta <= 0.0 {
            check((1.9..=2.1).contains(kh), || format!("kappa_hat({eta}) = {kh}"))?;
        }
    }
    check(k.windows(2).all(|w| w[1] <= w[0] + 1e-9), || {
        format!("not nonincreasing: {k:?}")
    })?;
    check(*k.last().unwrap() <= 1e-6, || {
        format!("kappa_hat(1.5) = {}", k.last().unwrap())
    })?;
    Ok(format!(
        "kappa_hat over eta grid = {:?}, c_hat = {:?}",
        k.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        sweep.c_hat
    ))
}

/// Criterion 6: semideviation modulus and its consistency checks.
fn semideviation_modulus() -> Outcome {
    let (f, q) = (fan(&abs_1d()), exact_unit_interval());
    let obj = RiskObjective::new(&f, &q, RiskSpec::UpperSemideviation);
    let v = v_benchmark();
    let rep = convexity::monotonicity_modulus(&obj, &v, 500, 6).map_err(|e| e.to_string())?;
    check(rep.kappa_hat > 0.1, || format!("kappa_hat(Q_D+) = {}", rep.kappa_hat))?;
    // minimizer over V by ternary search on the convex objective
    let (mut a, mut b) = (v.lo[0], v.hi[0]);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        let f1 = risk::eval_q(&f, &q, RiskSpec::UpperSemideviation, &[m1]).unwrap();
        let f2 = risk::eval_q(&f, &q, RiskSpec::UpperSemideviation, &[m2]).unwrap();
        if f1 < f2 {
            b = m2;
        } else {
            a = m1;
        }
    }
    let x_star = [0.5 * (a + b)];
    let k95 = 0.95 * rep.kappa_hat;
    let mid = convexity::midpoint_test(&obj, &v, k95, 500, 61).map_err(|e| e.to_string())?;
    let growth = convexity::quadratic_growth_check(&obj, &x_star, &v, k95, 500, 62).map_err(|e| e.to_string())?;
    check(mid.passed, || {
        format!("midpoint test failed at 0.95 kappa_hat: worst {}", mid.worst)
    })?;
    check(growth.passed, || {
        format!("growth check failed at 0.95 kappa_hat: worst {}", growth.worst)
    })?;
    Ok(format!(
        "kappa_hat(Q_D+) = {:.6} at x = {:.4}; x* = {:.6}; midpoint and growth pass at {:.4}",
        rep.kappa_hat, rep.worst_pair.x[0], x_star[0], k95
    ))
}

/// Criterion 7: discrete measures give no modulus.
fn negative_control() -> Outcome {
    let cases: Vec<(recourse_core::geometry::DualVertexFan, DiscreteMeasure, RegionV)> = vec![
        (
            fan(&abs_1d()),
            uniform_atoms(vec![vec![0.1], vec![0.3], vec![0.5], vec![0.7], vec![0.9]]),
            v_benchmark(),
        ),
        (
            fan(&triangle_2d()),
            random_atoms(20, 2, 7),
            RegionV::new(vec![0.2, 0.2], vec![0.8, 0.8], 0.1).unwrap(),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (f, mu, v) in &cases {
        let q = Quadrature::from(mu.clone());
        for spec in SPECS {
            let rep = convexity::monotonicity_modulus(&RiskObjective::new(f, &q, spec), v, 300, 7)
                .map_err(|e| e.to_string())?;
            worst = worst.max(rep.kappa_hat);
        }
    }
    check(worst <= 1e-6, || format!("max kappa_hat = {worst:e}"))?;
    Ok(format!("2 discrete instances x 3 specs, max kappa_hat = {worst:.1e}"))
}

fn regression_instances() -> Vec<(&'static str, TwoStageProblem)> {
    let t2 = vec![vec![1.0], vec![0.5]];
    let skew_atoms = random_atoms(7, 1, 11);
    let atoms_2d = random_atoms(12, 2, 12);
    let ee = |eta| RiskSpec::ExpectedExcess { eta };
    vec![
        ("median E", median_problem(RiskSpec::Expectation)),
        (
            "median E +H",
            problem(
                abs_1d(),
                nine_atoms(),
                RiskSpec::Expectation,
                vec![vec![1.0]],
                vec![0.0],
                true,
                &[0.0],
                &[1.0],
            ),
        ),
        (
            "median EE",
            problem(
                abs_1d(),
                nine_atoms(),
                ee(0.1),
                vec![vec![1.0]],
                vec![0.05],
                false,
                &[0.0],
                &[1.0],
            ),
        ),
        (
            "median EE +H",
            problem(
                abs_1d(),
                nine_atoms(),
                ee(0.2),
                vec![vec![1.0]],
                vec![-0.5],
                true,
                &[0.0],
                &[1.0],
            ),
        ),
        (
            "skew D+",
            problem(
                skew_1d(),
                skew_atoms.clone(),
                RiskSpec::UpperSemideviation,
                vec![vec![1.0]],
                vec![0.1],
                false,
                &[-1.0],
                &[2.0],
            ),
        ),
        (
            "skew D+ +H",
            problem(
                skew_1d(),
                skew_atoms.clone(),
                RiskSpec::UpperSemideviation,
                vec![vec![1.0]],
                vec![0.0],
                true,
                &[-1.0],
                &[2.0],
            ),
        ),
        (
            "skew E",
            problem(
                skew_1d(),
                skew_atoms,
                RiskSpec::Expectation,
                vec![vec![1.0]],
                vec![0.3],
                false,
                &[-1.0],
                &[2.0],
            ),
        ),
        (
            "triangle E",
            problem(
                triangle_2d(),
                atoms_2d.clone(),
                RiskSpec::Expectation,
                t2.clone(),
                vec![0.0],
                false,
                &[-1.0],
                &[2.0],
            ),
        ),
        (
            "triangle D+",
            problem(
                triangle_2d(),
                atoms_2d.clone(),
                RiskSpec::UpperSemideviation,
                t2.clone(),
                vec![-0.2],
                false,
                &[-1.0],
                &[2.0],
            ),
        ),
        (
            "triangle EE +H",
            problem(triangle_2d(), atoms_2d, ee(0.3), t2, vec![0.1], true, &[-1.0], &[2.0]),
        ),
    ]
}

/// Criterion 8: solver against the grid oracle; epigraph consistency.
fn solver() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    let mut worst_consistency: f64 = 0.0;
    for (name, p) in regression_instances() {
        let r = solve_two_stage(&p, &SolveOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let o = grid_search_oracle(&p, 1e-4).map_err(|e| format!("{name}: {e}"))?;
        let gap = (r.value - o.value).abs();
        check(gap <= 1e-3, || {
            format!("{name}: solver {} vs oracle {}", r.value, o.value)
        })?;
        check(p.first_stage.x_set.contains(&r.x, 1e-8), || {
            format!("{name}: x* infeasible")
        })?;
        worst_gap = worst_gap.max(gap);
        if r.path == SolverPath::DetEquivalent {
            let prep = PreparedProblem::new(&p, None).unwrap();
            worst_consistency = worst_consistency.max((prep.value(&r.x).unwrap() - r.value).abs());
        }
        if let Some(t) = r.diagnostics.epigraph_t {
            let mu = p.measure.as_discrete().unwrap();
            let tx = p.first_stage.t.mul_vec(&r.x);
            let resolved = linalg::compensated_sum(
                mu.atoms()
                    .iter()
                    .zip(mu.weights())
                    .map(|(z, w)| w * p.recourse.phi_lp(&linalg::sub(z, &tx)).unwrap()),
            );
            worst_t = worst_t.max((t - resolved).abs());
        }
    }
    check(worst_t <= 1e-7, || format!("epigraph t off by {worst_t:e}"))?;
    check(worst_consistency <= 1e-6, || {
        format!("LP value vs evaluation off by {worst_consistency:e}")
    })?;
    Ok(format!(
        "10 instances, max |solver - oracle| = {worst_gap:.1e}, max |t - resolved| = {worst_t:.1e}, max |LP - eval| = {worst_consistency:.1e}"
    ))
}

/// Criterion 9: stability under translation and jitter.
fn stability() -> Outcome {
    let p = median_problem(RiskSpec::Expectation);
    let opts = StabilityOptions::default();
    let eps = [1e-3, 1e-2, 1e-1];
    let shifts: Vec<PlanSpec> = eps
        .iter()
        .map(|&e| PlanSpec {
            plan: PerturbationPlan::Shift { v: vec![e] },
            seed: 0,
        })
        .collect();
    let recs = run_stability_experiment(&p, &shifts, &opts).map_err(|e| e.to_string())?;
    for (r, e) in recs.iter().zip(eps) {
        check((r.w1 - e).abs() <= 1e-6 && (r.d_hausdorff - e).abs() <= 1e-6, || {
            format!("shift {e}: W1 {} d_H {}", r.w1, r.d_hausdorff)
        })?;
    }
    let jitters: Vec<PlanSpec> = eps
        .iter()
        .flat_map(|&s| {
            (0..10).map(move |k| PlanSpec {
                plan: PerturbationPlan::Jitter { sigma: s },
                seed: 900 + k,
            })
        })
        .collect();
    let recs = run_stability_experiment(&p, &jitters, &opts).map_err(|e| e.to_string())?;
    let slope = estimate_holder_exponent(&recs).map_err(|e| e.to_string())?;
    let mut ratios: Vec<f64> = recs.iter().filter_map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let max = *ratios.last().unwrap();
    let median = ratios[ratios.len() / 2];
    check(slope >= 0.4, || format!("jitter exponent {slope}"))?;
    check(max / median <= 10.0, || format!("max/median ratio {}", max / median))?;
    Ok(format!(
        "shifts exact; jitter exponent {slope:.3}, max/median ratio {:.2}",
        max / median
    ))
}

/// Criterion 10: W1 metric axioms.
fn metric_axioms() -> Outcome {
    let mut r = rng::stream(1000, 0);
    let measure = |r: &mut rng::Stream| {
        let n = r.random_range(1..=6);
        let atoms: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let rest: f64 = w[..n - 1].iter().sum();
        w[n - 1] = 1.0 - rest;
        DiscreteMeasure::new(atoms, w).unwrap()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a, b, c) = (measure(&mut r), measure(&mut r), measure(&mut r));
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| wasserstein1(x, y).unwrap();
        let (ab, ba, bc, ac, aa) = (w(&a, &b), w(&b, &a), w(&b, &c), w(&a, &c), w(&a, &a));
        worst = worst.max((ab - ba).abs()).max(aa.abs()).max(ac - ab - bc);
        check(ab >= 0.0, || "negative distance".into())?;
    }
    check(worst <= 1e-9, || format!("axiom slack {worst:e}"))?;
    Ok(format!("50 triples, max violation {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 duality phi = LP", duality, 5),
        ("2 gradient vs finite differences", gradient, 10),
        ("3 representation lhs = rhs", representation, 60),
        ("4 modulus of Q_E", expectation_modulus, 10),
        ("5 expected-excess sweep", excess_sweep, 30),
        ("6 semideviation modulus", semideviation_modulus, 30),
        ("7 discrete negative control", negative_control, 10),
        ("8 solver vs grid oracle", solver, 60),
        ("9 stability", stability, 120),
        ("10 W1 metric axioms", metric_axioms, 10),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let over = took > Duration::from_secs(limit);
        let (tag, detail) = match (&out, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; runtime over {limit} s")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("[{tag}] criterion {name} ({:.2} s): {detail}", took.as_secs_f64());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
