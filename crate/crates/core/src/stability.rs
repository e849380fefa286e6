//! Quantitative stability of the solution set under perturbation of μ.
//!
//! Each plan perturbs the base measure, re-solves, and records the
//! Wasserstein distance next to the Hausdorff distance between minimizer
//! sets. Runs are independent and recorded in plan order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{perturb, wasserstein1, DiscreteMeasure, Measure, PerturbationPlan, RegionV};
use crate::solver::{grid_evaluate, solve_two_stage, SolveOptions, TwoStageProblem};

/// Symmetric Hausdorff distance between finite point sets (Euclidean).
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("Hausdorff distance of an empty set"));
    }
    let directed = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        p.iter()
            .map(|x| q.iter().map(|y| linalg::distance(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub plan: PerturbationPlan,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ArgminMode {
    /// Minimizers are unique; use the solver's point.
    Singleton,
    /// Approximate each solution set by all grid points within
    /// `value_tol` of the grid minimum.
    GridApprox { grid_step: f64, value_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub solve: SolveOptions,
    pub mode: ArgminMode,
    /// Runs with `W_1 > delta_max` are flagged, not failed.
    pub delta_max: Option<f64>,
    /// Certification region; `T x*` of the base solution must lie in it.
    pub region: Option<RegionV>,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            mode: ArgminMode::Singleton,
            delta_max: None,
            region: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub plan_id: usize,
    pub kind: String,
    pub param: f64,
    pub seed: u64,
    pub w1: f64,
    pub d_hausdorff: f64,
    /// `d_H / W_1^{1/2}`, absent when `W_1 = 0`.
    pub ratio: Option<f64>,
    pub value_mu: f64,
    pub value_nu: f64,
    pub x_star_mu: Vec<f64>,
    pub x_star_nu: Vec<f64>,
    pub beyond_delta: bool,
    /// Whether `T x*` for the perturbed measure lies in the region.
    pub region_ok: Option<bool>,
}

/// Solution set representatives and the optimal value.
fn argmin_set(p: &TwoStageProblem, opts: &StabilityOptions) -> Result<(Vec<Vec<f64>>, f64)> {
    match opts.mode {
        ArgminMode::Singleton => {
            let r = solve_two_stage(p, &opts.solve)?;
            Ok((vec![r.x], r.value))
        }
        ArgminMode::GridApprox { grid_step, value_tol } => {
            let pts = grid_evaluate(p, grid_step, opts.solve.resolution)?;
            let best = pts.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
            let set = pts
                .into_iter()
                .filter(|(_, v)| *v <= best + value_tol)
                .map(|(x, _)| x)
                .collect();
            Ok((set, best))
        }
    }
}

fn base_measure(p: &TwoStageProblem) -> Result<&DiscreteMeasure> {
    match &p.measure {
        Measure::Discrete(d) => Ok(d),
        Measure::UniformBox(_) => Err(Error::input("stability experiments need a discrete base measure")),
    }
}

fn in_region(p: &TwoStageProblem, region: &RegionV, set: &[Vec<f64>]) -> bool {
    set.iter().all(|x| region.contains_closed(&p.first_stage.t.mul_vec(x)))
}

pub fn run_stability_experiment(
    p: &TwoStageProblem,
    plans: &[PlanSpec],
    opts: &StabilityOptions,
) -> Result<Vec<StabilityRecord>> {
    p.validate()?;
    let mu = base_measure(p)?;
    let (set_mu, value_mu) = argmin_set(p, opts)?;
    if let Some(region) = &opts.region {
        if !in_region(p, region, &set_mu) {
            return Err(Error::Assumption {
                assumption: "region",
                detail: "T x* of the base problem lies outside V".into(),
            });
        }
    }
    plans
        .par_iter()
        .enumerate()
        .map(|(id, spec)| {
            let wrap = |e: Error| match e {
                Error::InvalidInput(m) => Error::InvalidInput(format!("plan {id}: {m}")),
                Error::Numeric(m) => Error::Numeric(format!("plan {id}: {m}")),
                Error::Infeasible(m) => Error::Infeasible(format!("plan {id}: {m}")),
                Error::Unbounded(m) => Error::Unbounded(format!("plan {id}: {m}")),
                other => other,
            };
            let nu = perturb(mu, &spec.plan, spec.seed).map_err(wrap)?;
            let w1 = wasserstein1(mu, &nu).map_err(wrap)?;
            let pn = p.with_measure(nu);
            let (set_nu, value_nu) = argmin_set(&pn, opts).map_err(wrap)?;
            let d = hausdorff(&set_mu, &set_nu)?;
            Ok(StabilityRecord {
                plan_id: id,
                kind: spec.plan.kind().to_string(),
                param: spec.plan.param(),
                seed: spec.seed,
                w1,
                d_hausdorff: d,
                ratio: (w1 > 0.0).then(|| d / w1.sqrt()),
                value_mu,
                value_nu,
                x_star_mu: set_mu[0].clone(),
                x_star_nu: set_nu[0].clone(),
                beyond_delta: opts.delta_max.is_some_and(|dm| w1 > dm),
                region_ok: opts.region.as_ref().map(|r| in_region(&pn, r, &set_nu)),
            })
        })
        .collect()
}

/// Writes records as CSV; the header carries one column per coordinate of the minimizers.
pub fn write_csv<W: Write>(records: &[StabilityRecord], out: W) -> Result<()> {
    let n = records.first().map_or(0, |r| r.x_star_mu.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "plan_id",
        "kind",
        "param",
        "seed",
        "w1",
        "d_hausdorff",
        "ratio",
        "value_mu",
        "value_nu",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..n).map(|i| format!("x_star_mu_{i}")));
    header.extend((0..n).map(|i| format!("x_star_nu_{i}")));
    let io = |e: csv::Error| Error::input(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![
            r.plan_id.to_string(),
            r.kind.clone(),
            r.param.to_string(),
            r.seed.to_string(),
            r.w1.to_string(),
            r.d_hausdorff.to_string(),
            r.ratio.map_or(String::new(), |v| v.to_string()),
            r.value_mu.to_string(),
            r.value_nu.to_string(),
        ];
        row.extend(r.x_star_mu.iter().map(|v| v.to_string()));
        row.extend(r.x_star_nu.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::input(format!("csv: {e}")))?;
    Ok(())
}

/// Least-squares slope of `log d_H` against `log W_1` over records with
/// positive distances.
pub fn estimate_holder_exponent(records: &[StabilityRecord]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.w1 > 0.0 && r.d_hausdorff > 0.0 && r.w1.is_finite() && r.d_hausdorff.is_finite())
        .map(|r| (r.w1.ln(), r.d_hausdorff.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable records, need 3", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-24 {
        return Err(Error::InsufficientData("all W1 values coincide".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RecourseData;
    use crate::linalg::DenseMatrix;
    use crate::risk::RiskSpec;
    use crate::solver::{FirstStage, Polyhedron};

    fn median() -> TwoStageProblem {
        TwoStageProblem {
            first_stage: FirstStage {
                t: DenseMatrix::from_rows(vec![vec![1.0]]).unwrap(),
                h: vec![0.0],
                hq: None,
                x_set: Polyhedron::from_box(&[0.0], &[1.0]).unwrap(),
            },
            recourse: RecourseData::new(DenseMatrix::from_rows(vec![vec![1.0, -1.0]]).unwrap(), vec![1.0, 1.0])
                .unwrap(),
            measure: DiscreteMeasure::uniform((1..=9).map(|i| vec![i as f64 / 10.0]).collect())
                .unwrap()
                .into(),
            risk: RiskSpec::Expectation,
        }
    }

    fn record(w1: f64, d: f64) -> StabilityRecord {
        StabilityRecord {
            plan_id: 0,
            kind: "shift".into(),
            param: w1,
            seed: 0,
            w1,
            d_hausdorff: d,
            ratio: None,
            value_mu: 0.0,
            value_nu: 0.0,
            x_star_mu: vec![],
            x_star_nu: vec![],
            beyond_delta: false,
            region_ok: None,
        }
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(&[vec![0.0]], &[vec![1.0]]).unwrap(), 1.0);
        assert_eq!(hausdorff(&[vec![0.0], vec![2.0]], &[vec![1.0]]).unwrap(), 1.0);
        let a = vec![vec![0.3, 1.0], vec![-2.0, 0.5]];
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert!(hausdorff(&[], &a).is_err());
    }

    #[test]
    fn shifts_move_the_median() {
        let plans: Vec<PlanSpec> = [1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&e| PlanSpec {
                plan: PerturbationPlan::Shift { v: vec![e] },
                seed: 0,
            })
            .collect();
        let recs = run_stability_experiment(&median(), &plans, &StabilityOptions::default()).unwrap();
        for (r, e) in recs.iter().zip([1e-3, 1e-2, 1e-1]) {
            assert!((r.w1 - e).abs() <= 1e-6);
            assert!((r.d_hausdorff - e).abs() <= 1e-6);
        }
        assert!((estimate_holder_exponent(&recs).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_perturbation() {
        let plans = [PlanSpec {
            plan: PerturbationPlan::Jitter { sigma: 0.0 },
            seed: 1,
        }];
        let r = &run_stability_experiment(&median(), &plans, &StabilityOptions::default()).unwrap()[0];
        assert_eq!(r.w1, 0.0);
        assert!(r.d_hausdorff <= 1e-9);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn grid_mode_for_flat_minimizers() {
        // even atom count: every point between the middle atoms is optimal
        let mut p = median();
        p.measure = DiscreteMeasure::uniform(vec![vec![0.2], vec![0.6]]).unwrap().into();
        let opts = StabilityOptions {
            mode: ArgminMode::GridApprox {
                grid_step: 0.01,
                value_tol: 1e-6,
            },
            ..Default::default()
        };
        let plans = [PlanSpec {
            plan: PerturbationPlan::Shift { v: vec![0.1] },
            seed: 0,
        }];
        let r = &run_stability_experiment(&p, &plans, &opts).unwrap()[0];
        assert!((r.d_hausdorff - 0.1).abs() < 1e-9);
    }

    #[test]
    fn region_condition_is_enforced() {
        let opts = StabilityOptions {
            region: Some(RegionV::new(vec![0.6], vec![0.9], 0.1).unwrap()),
            ..Default::default()
        };
        let e = run_stability_experiment(&median(), &[], &opts).unwrap_err();
        assert!(matches!(e, Error::Assumption { .. }));
    }

    #[test]
    fn holder_fit() {
        let lin: Vec<_> = [1e-3, 1e-2, 1e-1].iter().map(|&w| record(w, w)).collect();
        assert!((estimate_holder_exponent(&lin).unwrap() - 1.0).abs() < 1e-12);
        let sq: Vec<_> = [1e-4, 1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&w| record(w, 3.0 * w.sqrt()))
            .collect();
        assert!((estimate_holder_exponent(&sq).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            estimate_holder_exponent(&lin[..2]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let mut r = record(0.1, 0.1);
        r.x_star_mu = vec![0.5];
        r.x_star_nu = vec![0.6];
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .starts_with("plan_id,kind,param,seed,w1,d_hausdorff,ratio,value_mu,value_nu,x_star_mu_0,x_star_nu_0\n"));
    }
}
