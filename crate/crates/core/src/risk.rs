//! Risk functionals of the recourse value and their derivatives.
//!
//! All three objectives share the form
//! `Q_g(x) = ∫ max{ g(x), φ(z − x) } μ(dz)`:
//!
//! * expectation `Q_E`: `g ≡ −∞`
//! * expected excess `Q_EE(·; η)`: `g ≡ η`
//! * upper semideviation `Q_D+`: `g = Q_E`
//!
//! Derivatives come from differentiating under the integral sign:
//! `Q_g'(x) = π_0 g'(x) − Σ_i π_i d_i` with `π_0 = μ(g(x) > φ(z − x))` and
//! `π_i` the mass of the cell `x + K_i` above the level. The monotonicity
//! quantity `[Q_g'(x+u) − Q_g'(x)]u` has an equivalent representation as a
//! `τ`-integral of set-difference masses; [`representation_rhs`] evaluates
//! that form by set membership so it can be checked against
//! [`representation_lhs`].

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DualVertexFan;
use crate::linalg::{self, dot, CompensatedSum};
use crate::measures::{self, DiscreteMeasure, Measure};

const CHUNK: usize = 4096;
const LEVEL_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskSpec {
    Expectation,
    ExpectedExcess { eta: f64 },
    UpperSemideviation,
}

impl RiskSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RiskSpec::ExpectedExcess { eta } if !eta.is_finite() => {
                Err(Error::input("expected excess target must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RiskSpec::Expectation => "expectation",
            RiskSpec::ExpectedExcess { .. } => "expected_excess",
            RiskSpec::UpperSemideviation => "upper_semideviation",
        }
    }
}

/// How integrals against the measure are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    /// Finite sum over atoms (discrete measures and discretized boxes).
    Atoms(DiscreteMeasure),
    /// Exact piecewise-linear integration against the uniform density on
    /// `[lo, hi]` (one dimension only).
    ExactInterval { lo: f64, hi: f64 },
}

impl Quadrature {
    /// Discrete measures integrate over their atoms. Box densities use the
    /// midpoint rule at `resolution` cells per axis; without a resolution only
    /// one-dimensional boxes are accepted, integrated exactly.
    pub fn new(measure: &Measure, resolution: Option<usize>) -> Result<Self> {
        match (measure, resolution) {
            (Measure::Discrete(d), _) => Ok(Quadrature::Atoms(d.clone())),
            (Measure::UniformBox(b), Some(r)) => Ok(Quadrature::Atoms(measures::discretize(b, r)?)),
            (Measure::UniformBox(b), None) if b.dim() == 1 => Ok(Quadrature::ExactInterval {
                lo: b.lo()[0],
                hi: b.hi()[0],
            }),
            (Measure::UniformBox(b), None) => Err(Error::input(format!(
                "a quadrature resolution is required for {}-dimensional box densities",
                b.dim()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Quadrature::Atoms(d) => d.dim(),
            Quadrature::ExactInterval { .. } => 1,
        }
    }
}

impl From<DiscreteMeasure> for Quadrature {
    fn from(d: DiscreteMeasure) -> Self {
        Quadrature::Atoms(d)
    }
}

fn check_inputs(fan: &DualVertexFan, quad: &Quadrature, spec: &RiskSpec, x: &[f64]) -> Result<()> {
    spec.validate()?;
    if fan.is_empty() {
        return Err(Error::Assumption {
            assumption: "A2",
            detail: "empty dual vertex set: φ is unbounded".into(),
        });
    }
    if quad.dim() != fan.dim || x.len() != fan.dim {
        return Err(Error::dim(format!(
            "fan dimension {}, measure dimension {}, point dimension {}",
            fan.dim,
            quad.dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("evaluation point must be finite"));
    }
    Ok(())
}

/// Ordered parallel fold over atoms in fixed-size chunks; the merge order is
/// the chunk order, so results do not depend on the thread count.
fn fold_atoms<T, I, F, M>(m: &DiscreteMeasure, init: I, f: F, merge: M) -> T
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[f64], f64) + Sync,
    M: Fn(&mut T, T),
{
    let parts: Vec<T> = m
        .atoms()
        .par_chunks(CHUNK)
        .zip(m.weights().par_chunks(CHUNK))
        .map(|(atoms, weights)| {
            let mut acc = init();
            for (z, &p) in atoms.iter().zip(weights) {
                f(&mut acc, z, p);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// `fold_atoms` over the shifted atoms `z − x`, reusing one buffer per chunk.
fn fold_shifted<T, I, F, M>(m: &DiscreteMeasure, x: &[f64], init: I, f: F, merge: M) -> T
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[f64], f64) + Sync,
    M: Fn(&mut T, T),
{
    fold_atoms(
        m,
        || (init(), vec![0.0; x.len()]),
        |(acc, t), z, p| {
            for ((tk, zk), xk) in t.iter_mut().zip(z).zip(x) {
                *tk = zk - xk;
            }
            f(acc, t, p);
        },
        |(a, _), (b, _)| merge(a, b),
    )
    .0
}

/// Segments of `[lo, hi]` cut at the given points.
fn segments(lo: f64, hi: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|c| *c > lo && *c < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Kinks of `z ↦ max{level, φ(z − x)}` in one dimension.
fn kinks_1d(fan: &DualVertexFan, x: f64, level: Option<f64>) -> Vec<f64> {
    let mut cuts = vec![x];
    if let Some(c) = level {
        for d in &fan.vertices {
            if d[0] != 0.0 {
                cuts.push(x + c / d[0]);
            }
        }
    }
    cuts
}

fn integrand(fan: &DualVertexFan, t: &[f64], level: Option<f64>) -> f64 {
    let phi = fan.phi(t);
    match level {
        Some(c) => phi.max(c),
        None => phi,
    }
}

/// `∫ max{level, φ(z − x)} μ(dz)`, with `level = None` meaning `−∞`.
fn integrate_max(fan: &DualVertexFan, quad: &Quadrature, x: &[f64], level: Option<f64>) -> f64 {
    match quad {
        Quadrature::Atoms(m) => fold_shifted(
            m,
            x,
            CompensatedSum::new,
            |acc, t, p| acc.add(p * integrand(fan, t, level)),
            |a, b| a.merge(&b),
        )
        .value(),
        Quadrature::ExactInterval { lo, hi } => {
            let len = hi - lo;
            let mut acc = CompensatedSum::new();
            for (a, b) in segments(*lo, *hi, &kinks_1d(fan, x[0], level)) {
                let ha = integrand(fan, &[a - x[0]], level);
                let hb = integrand(fan, &[b - x[0]], level);
                acc.add((b - a) / len * 0.5 * (ha + hb));
            }
            acc.value()
        }
    }
}

/// The level `g(x)` of a risk spec (`None` for the expectation).
fn level(fan: &DualVertexFan, quad: &Quadrature, spec: &RiskSpec, x: &[f64]) -> Option<f64> {
    match spec {
        RiskSpec::Expectation => None,
        RiskSpec::ExpectedExcess { eta } => Some(*eta),
        RiskSpec::UpperSemideviation => Some(integrate_max(fan, quad, x, None)),
    }
}

/// Evaluates `Q_E`, `Q_EE(·; η)` or `Q_D+` at the (transformed) point `x`.
pub fn eval_q(fan: &DualVertexFan, quad: &Quadrature, spec: RiskSpec, x: &[f64]) -> Result<f64> {
    check_inputs(fan, quad, &spec, x)?;
    if let RiskSpec::ExpectedExcess { eta } = spec {
        if eta == 0.0 && fan.contains_origin() {
            log::warn!(
                "expected excess with eta = 0 while 0 is a vertex of M_D (A5 fails); derivative formula may miss mass"
            );
        }
    }
    let lvl = level(fan, quad, &spec, x);
    Ok(integrate_max(fan, quad, x, lvl))
}

/// Masses `π_0 = μ(M_0(x))` and `π_i = μ(M_i(x))`, indexed like the fan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDecomposition {
    pub pi0: f64,
    pub pi: Vec<f64>,
    /// Mass of atoms that sat on a cell boundary or on the level set and
    /// were assigned by the tie-breaking rule.
    pub tie_mass: f64,
}

impl CellDecomposition {
    pub fn total(&self) -> f64 {
        linalg::compensated_sum(std::iter::once(self.pi0).chain(self.pi.iter().copied()))
    }
}

struct CellAcc {
    pi0: CompensatedSum,
    pi: Vec<CompensatedSum>,
    tie: CompensatedSum,
}

/// Classifies `t = z − x`: returns the tie-broken cell, `φ(t)` and whether
/// several cells attain the max.
fn classify(fan: &DualVertexFan, t: &[f64]) -> (usize, f64, bool) {
    let best = fan.vertices.iter().map(|d| dot(d, t)).fold(f64::NEG_INFINITY, f64::max);
    let tol = crate::geometry::TIE_TOL * (best.abs() + 1.0);
    let mut first = None;
    let mut count = 0;
    for (i, d) in fan.vertices.iter().enumerate() {
        if dot(d, t) >= best - tol {
            count += 1;
            first.get_or_insert(i);
        }
    }
    (first.unwrap_or(0), best, count > 1)
}

/// Atom assignment: `M_0` when `g(x) > φ(z − x)` strictly, otherwise the
/// lowest-index active cone.
pub fn cell_measures(
    fan: &DualVertexFan,
    quad: &Quadrature,
    g_value: Option<f64>,
    x: &[f64],
) -> Result<CellDecomposition> {
    check_inputs(fan, quad, &RiskSpec::Expectation, x)?;
    if g_value.is_some_and(|g| !g.is_finite()) {
        return Err(Error::input("level g(x) must be finite"));
    }
    let n = fan.len();
    let assign = |acc: &mut CellAcc, t: &[f64], p: f64| {
        let (i, phi, tied_cell) = classify(fan, t);
        let mut tied = tied_cell;
        match g_value {
            Some(g) if g > phi => {
                acc.pi0.add(p);
                tied = (g - phi).abs() <= LEVEL_TIE_TOL * (1.0 + phi.abs());
            }
            Some(g) => {
                acc.pi[i].add(p);
                tied |= (g - phi).abs() <= LEVEL_TIE_TOL * (1.0 + phi.abs());
            }
            None => acc.pi[i].add(p),
        }
        if tied {
            acc.tie.add(p);
        }
    };
    let init = || CellAcc {
        pi0: CompensatedSum::new(),
        pi: vec![CompensatedSum::new(); n],
        tie: CompensatedSum::new(),
    };
    let acc = match quad {
        Quadrature::Atoms(m) => fold_shifted(
            m,
            x,
            init,
            |acc, t, p| assign(acc, t, p),
            |a, b| {
                a.pi0.merge(&b.pi0);
                a.tie.merge(&b.tie);
                for (u, v) in a.pi.iter_mut().zip(&b.pi) {
                    u.merge(v);
                }
            },
        ),
        Quadrature::ExactInterval { lo, hi } => {
            let mut acc = init();
            let len = hi - lo;
            for (a, b) in segments(*lo, *hi, &kinks_1d(fan, x[0], g_value)) {
                assign(&mut acc, &[0.5 * (a + b) - x[0]], (b - a) / len);
            }
            // segment interiors never tie
            acc.tie = CompensatedSum::new();
            acc
        }
    };
    Ok(CellDecomposition {
        pi0: acc.pi0.value(),
        pi: acc.pi.iter().map(CompensatedSum::value).collect(),
        tie_mass: acc.tie.value(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEval {
    pub gradient: Vec<f64>,
    pub cells: CellDecomposition,
    /// `g'(x)` used for the `M_0` term (zero for `Q_E` and `Q_EE`).
    pub level_gradient: Vec<f64>,
}

impl GradientEval {
    /// True when some mass sat on a tie and the gradient is a tie-broken
    /// selection from the subdifferential.
    pub fn has_ties(&self) -> bool {
        self.cells.tie_mass > 0.0
    }
}

pub fn grad_q_detailed(fan: &DualVertexFan, quad: &Quadrature, spec: RiskSpec, x: &[f64]) -> Result<GradientEval> {
    check_inputs(fan, quad, &spec, x)?;
    let s = fan.dim;
    let (lvl, level_gradient) = match spec {
        RiskSpec::Expectation => (None, vec![0.0; s]),
        RiskSpec::ExpectedExcess { eta } => (Some(eta), vec![0.0; s]),
        RiskSpec::UpperSemideviation => {
            let qe = integrate_max(fan, quad, x, None);
            let inner = grad_q_detailed(fan, quad, RiskSpec::Expectation, x)?;
            (Some(qe), inner.gradient)
        }
    };
    let cells = cell_measures(fan, quad, lvl, x)?;
    let mut gradient: Vec<f64> = level_gradient.iter().map(|g| cells.pi0 * g).collect();
    for (d, p) in fan.vertices.iter().zip(&cells.pi) {
        for (gr, dk) in gradient.iter_mut().zip(d) {
            *gr -= p * dk;
        }
    }
    Ok(GradientEval {
        gradient,
        cells,
        level_gradient,
    })
}

/// `Q'(x) = π_0 g'(x) − Σ π_i d_i`.
pub fn grad_q(fan: &DualVertexFan, quad: &Quadrature, spec: RiskSpec, x: &[f64]) -> Result<Vec<f64>> {
    Ok(grad_q_detailed(fan, quad, spec, x)?.gradient)
}

/// The derivative `Q'(x)u` as a discrete distribution: values
/// `y_0 = g'(x)u`, `y_i = −d_iᵀu` with probabilities `π_0`, `π_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointProfile {
    pub y0: f64,
    pub y: Vec<f64>,
    pub pi0: f64,
    pub pi: Vec<f64>,
    /// Sorted distinct values carrying the jumps of the cdf.
    pub breakpoints: Vec<f64>,
}

impl BreakpointProfile {
    /// `F(τ) = Σ_{i : y_i ≤ τ} π_i`.
    pub fn cdf(&self, tau: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        if self.y0 <= tau {
            acc.add(self.pi0);
        }
        for (y, p) in self.y.iter().zip(&self.pi) {
            if *y <= tau {
                acc.add(*p);
            }
        }
        acc.value()
    }

    /// Mean of the distribution, i.e. `Q'(x)u`.
    pub fn mean(&self) -> f64 {
        linalg::compensated_sum(
            std::iter::once(self.pi0 * self.y0).chain(self.y.iter().zip(&self.pi).map(|(y, p)| y * p)),
        )
    }

    /// `∫ (F_self − F_other)(τ) dτ`, exact for step functions.
    pub fn cdf_gap_integral(&self, other: &BreakpointProfile) -> f64 {
        let mut pts: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut acc = CompensatedSum::new();
        for w in pts.windows(2) {
            acc.add((self.cdf(w[0]) - other.cdf(w[0])) * (w[1] - w[0]));
        }
        acc.value()
    }
}

pub fn breakpoint_profile(
    fan: &DualVertexFan,
    quad: &Quadrature,
    spec: RiskSpec,
    x: &[f64],
    u: &[f64],
) -> Result<BreakpointProfile> {
    let ge = grad_q_detailed(fan, quad, spec, x)?;
    if u.len() != fan.dim {
        return Err(Error::dim("direction must have dimension s"));
    }
    let y0 = dot(&ge.level_gradient, u);
    let y: Vec<f64> = fan.vertices.iter().map(|d| -dot(d, u)).collect();
    let mut breakpoints: Vec<f64> = y.clone();
    if !matches!(spec, RiskSpec::Expectation) {
        breakpoints.push(y0);
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    Ok(BreakpointProfile {
        y0,
        y,
        pi0: ge.cells.pi0,
        pi: ge.cells.pi,
        breakpoints,
    })
}

/// `[Q'(x+u) − Q'(x)]u` from two gradient evaluations.
pub fn representation_lhs(fan: &DualVertexFan, quad: &Quadrature, spec: RiskSpec, x: &[f64], u: &[f64]) -> Result<f64> {
    if u.len() != x.len() {
        return Err(Error::dim("direction must match the point dimension"));
    }
    let xu = linalg::add(x, u);
    let g0 = grad_q(fan, quad, spec, x)?;
    let g1 = grad_q(fan, quad, spec, &xu)?;
    Ok(dot(&linalg::sub(&g1, &g0), u))
}

/// Level `g(y)` and directional derivative `g'(y)u` of the spec's level function.
fn level_and_slope(
    fan: &DualVertexFan,
    quad: &Quadrature,
    spec: &RiskSpec,
    y: &[f64],
    u: &[f64],
) -> Result<(Option<f64>, f64)> {
    Ok(match spec {
        RiskSpec::Expectation => (None, 0.0),
        RiskSpec::ExpectedExcess { eta } => (Some(*eta), 0.0),
        RiskSpec::UpperSemideviation => {
            let g = eval_q(fan, quad, RiskSpec::Expectation, y)?;
            let dg = grad_q(fan, quad, RiskSpec::Expectation, y)?;
            (Some(g), dot(&dg, u))
        }
    })
}

/// Bitset of the sets `M_0(y), M_1(y), …` containing `z`, by the set
/// definitions: cone membership through the inequality description of `K_i`
/// and strict comparison with the level. Points on the level set belong to
/// none of them; points on cone boundaries belong to every adjacent cell.
fn memberships(fan: &DualVertexFan, z: &[f64], y: &[f64], level: Option<f64>, vals: &mut [f64], out: &mut [u64]) {
    out.iter_mut().for_each(|w| *w = 0);
    let mut scale: f64 = 0.0;
    for (k, d) in fan.vertices.iter().enumerate() {
        let v: f64 = d.iter().zip(z.iter().zip(y)).map(|(dk, (zk, yk))| dk * (zk - yk)).sum();
        vals[k] = v;
        scale = scale.max(v.abs());
    }
    let tol = 1e-12 * (1.0 + scale);
    let mut set = |bit: usize| out[bit / 64] |= 1u64 << (bit % 64);
    for i in 0..fan.len() {
        if !fan.neighbors(i).iter().all(|&j| vals[i] >= vals[j] - tol) {
            continue;
        }
        let phi = vals[i];
        match level {
            Some(g) if g > phi => set(0),
            Some(g) if g == phi => {}
            _ => set(i + 1),
        }
    }
}

/// The `τ`-integral of `μ(∪_{I(x,u)(τ)} M_i(x) \ ∪_{I(x+u,u)(τ)} M_i(x+u))`.
///
/// The integrand is piecewise constant between the breakpoints of both
/// profiles, so the integral is a finite sum. Set masses are computed by
/// grouping points on their joint membership pattern at `x` and `x + u`.
pub fn representation_rhs(fan: &DualVertexFan, quad: &Quadrature, spec: RiskSpec, x: &[f64], u: &[f64]) -> Result<f64> {
    check_inputs(fan, quad, &spec, x)?;
    if u.len() != x.len() {
        return Err(Error::dim("direction must match the point dimension"));
    }
    let xu = linalg::add(x, u);
    let (g_x, y0_x) = level_and_slope(fan, quad, &spec, x, u)?;
    let (g_xu, y0_xu) = level_and_slope(fan, quad, &spec, &xu, u)?;
    let y: Vec<f64> = fan.vertices.iter().map(|d| -dot(d, u)).collect();

    let n = fan.len();
    let words = (n + 1).div_ceil(64);
    let table: BTreeMap<Vec<u64>, CompensatedSum> = match quad {
        Quadrature::Atoms(m) => {
            // per-chunk scratch buffers; runs of equal keys are summed before touching the map
            struct Acc {
                map: BTreeMap<Vec<u64>, CompensatedSum>,
                vals: Vec<f64>,
                key: Vec<u64>,
                run_key: Vec<u64>,
                run: CompensatedSum,
            }
            impl Acc {
                fn flush(&mut self) {
                    if self.run_key.is_empty() {
                        return;
                    }
                    self.map
                        .entry(std::mem::take(&mut self.run_key))
                        .or_default()
                        .merge(&self.run);
                    self.run = CompensatedSum::new();
                }
            }
            let init = || Acc {
                map: BTreeMap::new(),
                vals: vec![0.0; n],
                key: vec![0u64; 2 * words],
                run_key: Vec::new(),
                run: CompensatedSum::new(),
            };
            let classify_into = |acc: &mut Acc, z: &[f64], p: f64| {
                let (a, b) = acc.key.split_at_mut(words);
                memberships(fan, z, x, g_x, &mut acc.vals, a);
                memberships(fan, z, &xu, g_xu, &mut acc.vals, b);
                if acc.key != acc.run_key {
                    acc.flush();
                    acc.run_key.clone_from(&acc.key);
                }
                acc.run.add(p);
            };
            let mut acc = fold_atoms(m, init, classify_into, |a, mut b| {
                b.flush();
                for (k, v) in b.map {
                    a.map.entry(k).or_default().merge(&v);
                }
            });
            acc.flush();
            acc.map
        }
        Quadrature::ExactInterval { lo, hi } => {
            let mut cuts = kinks_1d(fan, x[0], g_x);
            cuts.extend(kinks_1d(fan, xu[0], g_xu));
            let len = hi - lo;
            let mut acc: BTreeMap<Vec<u64>, CompensatedSum> = BTreeMap::new();
            let mut vals = vec![0.0; n];
            for (a, b) in segments(*lo, *hi, &cuts) {
                let z = [0.5 * (a + b)];
                let mut key = vec![0u64; 2 * words];
                let (ka, kb) = key.split_at_mut(words);
                memberships(fan, &z, x, g_x, &mut vals, ka);
                memberships(fan, &z, &xu, g_xu, &mut vals, kb);
                acc.entry(key).or_default().add((b - a) / len);
            }
            acc
        }
    };

    let mut taus: Vec<f64> = y.clone();
    if g_x.is_some() {
        taus.push(y0_x);
        taus.push(y0_xu);
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();

    let bit = |key: &[u64], b: usize| key[b / 64] >> (b % 64) & 1 == 1;
    let reached = |key: &[u64], y0: f64, tau: f64| {
        (g_x.is_some() && bit(key, 0) && y0 <= tau) || (0..n).any(|i| bit(key, i + 1) && y[i] <= tau)
    };
    let mut total = CompensatedSum::new();
    for w in taus.windows(2) {
        let tau = 0.5 * (w[0] + w[1]);
        let mut mass = CompensatedSum::new();
        for (key, p) in &table {
            let (kx, kxu) = key.split_at(words);
            if reached(kx, y0_x, tau) && !reached(kxu, y0_xu, tau) {
                mass.merge(p);
            }
        }
        total.add(mass.value() * (w[1] - w[0]));
    }
    Ok(total.value())
}
