#![allow(dead_code)]

use rand::Rng;
use recourse_core::geometry::{enumerate_dual_vertices, DualVertexFan, RecourseData};
use recourse_core::linalg::DenseMatrix;
use recourse_core::measures::{BoxDensityMeasure, DiscreteMeasure, Measure};
use recourse_core::risk::{Quadrature, RiskSpec};
use recourse_core::rng;
use recourse_core::solver::{FirstStage, Polyhedron, TwoStageProblem};

pub fn recourse(w: Vec<Vec<f64>>, q: Vec<f64>) -> RecourseData {
    RecourseData::new(DenseMatrix::from_rows(w).unwrap(), q).unwrap()
}

/// `φ = |·|`.
pub fn abs_1d() -> RecourseData {
    recourse(vec![vec![1.0, -1.0]], vec![1.0, 1.0])
}

/// `φ(t) = max{−t, 1.5 t}`.
pub fn skew_1d() -> RecourseData {
    recourse(vec![vec![1.0, -1.0, 2.0]], vec![2.0, 1.0, 3.0])
}

/// Dual polyhedron: triangle with vertices (1,1), (1,−2), (−2,1).
pub fn triangle_2d() -> RecourseData {
    recourse(vec![vec![1.0, 0.0, -1.0], vec![0.0, 1.0, -1.0]], vec![1.0, 1.0, 1.0])
}

/// `φ(t) = max{t₁, −2t₁} + max{t₂, −3t₂}`.
pub fn box_2d() -> RecourseData {
    recourse(
        vec![vec![1.0, -1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, -1.0]],
        vec![1.0, 2.0, 1.0, 3.0],
    )
}

/// Five columns spread around the circle with random lengths and costs.
pub fn random_2d(seed: u64) -> RecourseData {
    let mut r = rng::stream(seed, 0);
    let mut rows = vec![vec![], vec![]];
    let mut q = vec![];
    for k in 0..5 {
        let ang = std::f64::consts::TAU * k as f64 / 5.0 + r.random_range(-0.3..0.3);
        let len = r.random_range(0.5..2.0);
        rows[0].push(len * ang.cos());
        rows[1].push(len * ang.sin());
        q.push(r.random_range(0.5..2.0));
    }
    recourse(rows, q)
}

pub fn fan(rd: &RecourseData) -> DualVertexFan {
    enumerate_dual_vertices(rd).unwrap()
}

pub fn unit_box(dim: usize) -> Measure {
    BoxDensityMeasure::new(vec![0.0; dim], vec![1.0; dim]).unwrap().into()
}

pub fn exact_unit_interval() -> Quadrature {
    Quadrature::new(&unit_box(1), None).unwrap()
}

pub fn discretized_unit_box(dim: usize, resolution: usize) -> Quadrature {
    Quadrature::new(&unit_box(dim), Some(resolution)).unwrap()
}

pub fn uniform_atoms(points: Vec<Vec<f64>>) -> DiscreteMeasure {
    DiscreteMeasure::uniform(points).unwrap()
}

pub fn random_atoms(n: usize, dim: usize, seed: u64) -> DiscreteMeasure {
    let mut r = rng::stream(seed, 1);
    let pts = (0..n)
        .map(|_| (0..dim).map(|_| r.random_range(0.0..1.0)).collect())
        .collect();
    uniform_atoms(pts)
}

pub fn nine_atoms() -> DiscreteMeasure {
    uniform_atoms((1..=9).map(|i| vec![i as f64 / 10.0]).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn problem(
    rd: RecourseData,
    measure: DiscreteMeasure,
    risk: RiskSpec,
    t: Vec<Vec<f64>>,
    h: Vec<f64>,
    quadratic: bool,
    lo: &[f64],
    hi: &[f64],
) -> TwoStageProblem {
    let n = h.len();
    TwoStageProblem {
        first_stage: FirstStage {
            t: DenseMatrix::from_rows(t).unwrap(),
            h,
            hq: quadratic.then(|| DenseMatrix::identity(n)),
            x_set: Polyhedron::from_box(lo, hi).unwrap(),
        },
        recourse: rd,
        measure: measure.into(),
        risk,
    }
}

/// The 1-D median instance: `φ = |·|`, nine equal atoms, `T = 1`, `X = [0, 1]`.
pub fn median_problem(risk: RiskSpec) -> TwoStageProblem {
    problem(
        abs_1d(),
        nine_atoms(),
        risk,
        vec![vec![1.0]],
        vec![0.0],
        false,
        &[0.0],
        &[1.0],
    )
}

pub const SPECS: [RiskSpec; 3] = [
    RiskSpec::Expectation,
    RiskSpec::ExpectedExcess { eta: 0.1 },
    RiskSpec::UpperSemideviation,
];
