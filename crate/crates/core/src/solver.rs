//! Two-stage problems `min { xᵀHx + hᵀx + Q(Tx) : A_X x ≤ b_X }`.
//!
//! With `H = 0` and a discrete measure the problem is one linear program
//! (the deterministic equivalent). Otherwise it is solved by projected
//! subgradient descent. The gap bound comes from an aggregated minorant
//! `Σ w_k [f_k + g_kᵀ(y − x_k) + (κ/2)‖y − x_k‖²] / Σ w_k` minimized over
//! `X`: a projection when `κ > 0`, a linear program when `κ = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::Objective;
use crate::error::{Error, Result};
use crate::geometry::{enumerate_dual_vertices, DualVertexFan, RecourseData};
use crate::linalg::{self, dot, DenseMatrix};
use crate::lp::{solve_lp, LinearProgram, LpStatus, RowSense, Sense};
use crate::measures::{self, DiscreteMeasure, Measure};
use crate::risk::{self, Quadrature, RiskSpec};

/// `{x : A x ≤ b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl Polyhedron {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let p = Self { a, b };
        if p.a.rows() != p.b.len() {
            return Err(Error::dim("X: A and b have different row counts"));
        }
        if !p.a.is_finite() || p.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("X: entries must be finite"));
        }
        Ok(p)
    }

    /// The box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::dim("box corners differ in dimension"));
        }
        let mut rows = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for j in 0..n {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            rows.push(r.clone());
            b.push(hi[j]);
            r[j] = -1.0;
            rows.push(r);
            b.push(-lo[j]);
        }
        Polyhedron::new(DenseMatrix::from_rows(rows)?, b)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.b.len())
            .map(|i| dot(self.a.row(i), x) - self.b[i])
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    fn lp(&self, cost: Vec<f64>, sense: Sense) -> LinearProgram {
        let n = cost.len();
        LinearProgram::new(
            sense,
            cost,
            self.a.clone(),
            vec![RowSense::Le; self.b.len()],
            self.b.clone(),
        )
        .with_bounds(vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    /// Coordinate bounds of the polyhedron, by `2n` linear programs.
    pub fn bounding_box(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.a.rows() > 0 && self.a.cols() != n {
            return Err(Error::dim(format!("X has {} columns, expected {n}", self.a.cols())));
        }
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for j in 0..n {
            let mut c = vec![0.0; n];
            c[j] = 1.0;
            for (sense, out) in [(Sense::Min, &mut lo), (Sense::Max, &mut hi)] {
                let r = solve_lp(&self.lp(c.clone(), sense))?;
                match r.status {
                    LpStatus::Optimal => out[j] = r.value,
                    LpStatus::Infeasible => return Err(Error::Infeasible("X is empty".into())),
                    LpStatus::Unbounded => return Err(Error::Unbounded("X is unbounded".into())),
                }
            }
        }
        Ok((lo, hi))
    }

    /// Euclidean projection of `v`, by a primal active-set method started
    /// from the feasible point `start`.
    pub fn project(&self, v: &[f64], start: &[f64]) -> Result<Vec<f64>> {
        let m = self.b.len();
        let n = v.len();
        let mut y = start.to_vec();
        let mut ws: Vec<usize> = Vec::new();
        let scale = 1.0 + linalg::norm(v) + linalg::norm(start);
        for _ in 0..(20 * (m + n) + 100) {
            let (target, lambda) = if ws.is_empty() {
                (v.to_vec(), Vec::new())
            } else {
                let k = ws.len();
                let mut g = DenseMatrix::zeros(k, k);
                let mut rhs = vec![0.0; k];
                for (r, &i) in ws.iter().enumerate() {
                    for (c, &j) in ws.iter().enumerate() {
                        g[(r, c)] = dot(self.a.row(i), self.a.row(j));
                    }
                    rhs[r] = dot(self.a.row(i), v) - self.b[i];
                }
                let lambda = linalg::solve(&g, &rhs, 1e-12)
                    .ok_or_else(|| Error::Numeric("projection: dependent active constraints".into()))?;
                let mut t = v.to_vec();
                for (l, &i) in lambda.iter().zip(&ws) {
                    for (tk, ak) in t.iter_mut().zip(self.a.row(i)) {
                        *tk -= l * ak;
                    }
                }
                (t, lambda)
            };
            let p = linalg::sub(&target, &y);
            if linalg::norm(&p) <= 1e-13 * scale {
                match lambda.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
                    Some((r, l)) if *l < -1e-12 * scale => {
                        ws.remove(r);
                        continue;
                    }
                    _ => return Ok(target),
                }
            }
            let mut alpha = 1.0;
            let mut block = None;
            for i in (0..m).filter(|i| !ws.contains(i)) {
                let ap = dot(self.a.row(i), &p);
                if ap > 1e-14 * scale {
                    let r = ((self.b[i] - dot(self.a.row(i), &y)) / ap).max(0.0);
                    if r < alpha {
                        alpha = r;
                        block = Some(i);
                    }
                }
            }
            for (yk, pk) in y.iter_mut().zip(&p) {
                *yk += alpha * pk;
            }
            if let Some(i) = block {
                ws.push(i);
            }
        }
        Err(Error::Numeric("projection: active-set iteration limit".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    /// Technology matrix, `s × n`.
    #[serde(rename = "T")]
    pub t: DenseMatrix,
    pub h: Vec<f64>,
    /// Quadratic cost; absent means zero.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub hq: Option<DenseMatrix>,
    #[serde(rename = "X")]
    pub x_set: Polyhedron,
}

impl FirstStage {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn has_quadratic(&self) -> bool {
        self.hq.as_ref().is_some_and(|h| !h.is_zero())
    }

    /// Smallest eigenvalue of `H` (zero when absent).
    pub fn h_min_eigenvalue(&self) -> f64 {
        match &self.hq {
            Some(h) => linalg::symmetric_eigenvalues(h).first().copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn validate(&self, s: usize) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::dim("first stage has no variables"));
        }
        if self.t.rows() != s || self.t.cols() != n {
            return Err(Error::dim(format!(
                "T is {}x{}, expected {s}x{n}",
                self.t.rows(),
                self.t.cols()
            )));
        }
        if !self.t.is_finite() || self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("T and h must be finite"));
        }
        if self.x_set.a.rows() != self.x_set.b.len() || (self.x_set.a.rows() > 0 && self.x_set.a.cols() != n) {
            return Err(Error::dim("X: A must be m x n with b of length m"));
        }
        if !self.x_set.a.is_finite() || self.x_set.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("X: entries must be finite"));
        }
        if let Some(h) = &self.hq {
            if h.rows() != n || h.cols() != n {
                return Err(Error::dim(format!("H must be {n}x{n}")));
            }
            if !h.is_finite() {
                return Err(Error::input("H must be finite"));
            }
            for i in 0..n {
                for j in 0..i {
                    if (h[(i, j)] - h[(j, i)]).abs() > 1e-9 {
                        return Err(Error::input("H must be symmetric"));
                    }
                }
            }
            if self.h_min_eigenvalue() < -1e-9 {
                return Err(Error::input("H must be positive semidefinite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageProblem {
    pub first_stage: FirstStage,
    pub recourse: RecourseData,
    pub measure: Measure,
    pub risk: RiskSpec,
}

impl TwoStageProblem {
    pub fn validate(&self) -> Result<()> {
        self.recourse.validate()?;
        let s = self.recourse.dim();
        self.first_stage.validate(s)?;
        if self.measure.dim() != s {
            return Err(Error::dim(format!(
                "measure has dimension {}, recourse {s}",
                self.measure.dim()
            )));
        }
        self.risk.validate()
    }

    pub fn with_measure(&self, measure: DiscreteMeasure) -> Self {
        Self {
            measure: measure.into(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPath {
    DetEquivalent,
    Subgradient,
    GridOracle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Certified bound on `value − optimum` (subgradient path).
    pub gap_bound: Option<f64>,
    /// Modulus used by the subgradient lower model.
    pub modulus: Option<f64>,
    /// Epigraph variable `t = Q_E(Tx*)` of the semideviation program.
    pub epigraph_t: Option<f64>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub path: SolverPath,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for the certified gap of the subgradient path.
    pub tol: f64,
    pub max_iters: usize,
    /// Step numerator `a` in `a/(k+1)`; defaults to `2/κ`.
    pub step_scale: Option<f64>,
    /// Strong-convexity modulus of the whole objective; defaults to `2·λ_min(H)`.
    pub modulus: Option<f64>,
    /// Cells per axis for box densities.
    pub resolution: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 1_000_000,
            step_scale: None,
            modulus: None,
            resolution: None,
        }
    }
}

/// Column and row layout of a deterministic equivalent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub recourse_cols: usize,
    pub scenarios: usize,
    pub y_offset: usize,
    pub w_offset: Option<usize>,
    pub t_index: Option<usize>,
    pub recourse_rows: usize,
    pub x_rows: usize,
}

impl Layout {
    pub fn y(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.y_offset + k * self.recourse_cols;
        start..start + self.recourse_cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicEquivalent {
    pub lp: LinearProgram,
    pub layout: Layout,
    /// Scenarios actually encoded (zero-weight atoms dropped).
    pub scenarios: DiscreteMeasure,
}

fn discrete_measure(p: &TwoStageProblem, resolution: Option<usize>) -> Result<DiscreteMeasure> {
    match (&p.measure, resolution) {
        (Measure::Discrete(d), _) => Ok(d.without_null_atoms()),
        (Measure::UniformBox(b), Some(r)) => Ok(measures::discretize(b, r)?.without_null_atoms()),
        (Measure::UniformBox(_), None) => Err(Error::input(
            "the deterministic equivalent needs a discrete measure (or a quadrature resolution)",
        )),
    }
}

pub fn build_deterministic_equivalent(p: &TwoStageProblem) -> Result<DeterministicEquivalent> {
    build_deterministic_equivalent_with(p, None)
}

pub fn build_deterministic_equivalent_with(
    p: &TwoStageProblem,
    resolution: Option<usize>,
) -> Result<DeterministicEquivalent> {
    p.validate()?;
    if p.first_stage.has_quadratic() {
        return Err(Error::input("H is nonzero: use subgradient path"));
    }
    let scen = discrete_measure(p, resolution)?;
    let fs = &p.first_stage;
    let (n, s) = (fs.n(), p.recourse.dim());
    let m = p.recourse.num_recourse();
    let k = scen.len();
    let w = &p.recourse.w;
    let q = &p.recourse.q;

    let y_offset = n;
    let mut nvars = n + k * m;
    let (w_offset, t_index) = match p.risk {
        RiskSpec::Expectation => (None, None),
        RiskSpec::ExpectedExcess { .. } => {
            nvars += k;
            (Some(n + k * m), None)
        }
        RiskSpec::UpperSemideviation => {
            nvars += k + 1;
            (Some(n + k * m), Some(n + k * m + k))
        }
    };
    let layout = Layout {
        n,
        recourse_cols: m,
        scenarios: k,
        y_offset,
        w_offset,
        t_index,
        recourse_rows: k * s,
        x_rows: fs.x_set.b.len(),
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut senses = Vec::new();
    let mut rhs = Vec::new();
    for (kk, z) in scen.atoms().iter().enumerate() {
        for r in 0..s {
            let mut row = vec![0.0; nvars];
            row[..n].copy_from_slice(fs.t.row(r));
            row[layout.y(kk)].copy_from_slice(w.row(r));
            rows.push(row);
            senses.push(RowSense::Eq);
            rhs.push(z[r]);
        }
    }
    for i in 0..fs.x_set.b.len() {
        let mut row = vec![0.0; nvars];
        row[..n].copy_from_slice(fs.x_set.a.row(i));
        rows.push(row);
        senses.push(RowSense::Le);
        rhs.push(fs.x_set.b[i]);
    }
    let qy_row = |kk: usize, row: &mut [f64], sign: f64| {
        for (c, qc) in layout.y(kk).zip(q) {
            row[c] += sign * qc;
        }
    };
    match p.risk {
        RiskSpec::Expectation => {}
        RiskSpec::ExpectedExcess { eta } => {
            let wo = w_offset.expect("layout");
            for kk in 0..k {
                let mut row = vec![0.0; nvars];
                row[wo + kk] = 1.0;
                rows.push(row);
                senses.push(RowSense::Ge);
                rhs.push(eta);
            }
            for kk in 0..k {
                let mut row = vec![0.0; nvars];
                row[wo + kk] = 1.0;
                qy_row(kk, &mut row, -1.0);
                rows.push(row);
                senses.push(RowSense::Ge);
                rhs.push(0.0);
            }
        }
        RiskSpec::UpperSemideviation => {
            let wo = w_offset.expect("layout");
            let ti = t_index.expect("layout");
            let mut row = vec![0.0; nvars];
            row[ti] = 1.0;
            for (kk, pk) in scen.weights().iter().enumerate() {
                for (c, qc) in layout.y(kk).zip(q) {
                    row[c] -= pk * qc;
                }
            }
            rows.push(row);
            senses.push(RowSense::Eq);
            rhs.push(0.0);
            for kk in 0..k {
                let mut row = vec![0.0; nvars];
                row[wo + kk] = 1.0;
                row[ti] = -1.0;
                rows.push(row);
                senses.push(RowSense::Ge);
                rhs.push(0.0);
            }
            for kk in 0..k {
                let mut row = vec![0.0; nvars];
                row[wo + kk] = 1.0;
                qy_row(kk, &mut row, -1.0);
                rows.push(row);
                senses.push(RowSense::Ge);
                rhs.push(0.0);
            }
        }
    }

    let mut cost = vec![0.0; nvars];
    cost[..n].copy_from_slice(&fs.h);
    for (kk, pk) in scen.weights().iter().enumerate() {
        match w_offset {
            None => qy_row(kk, &mut cost, *pk),
            Some(wo) => cost[wo + kk] = *pk,
        }
    }
    let mut lower = vec![0.0; nvars];
    let upper = vec![f64::INFINITY; nvars];
    lower[..n].fill(f64::NEG_INFINITY);
    if let Some(wo) = w_offset {
        lower[wo..].fill(f64::NEG_INFINITY);
    }
    let a = if rows.is_empty() {
        DenseMatrix::zeros(0, nvars)
    } else {
        DenseMatrix::from_rows(rows)?
    };
    let lp = LinearProgram::new(Sense::Min, cost, a, senses, rhs).with_bounds(lower, upper);
    Ok(DeterministicEquivalent {
        lp,
        layout,
        scenarios: scen,
    })
}

/// A validated problem with its fan, quadrature and feasible-set data.
#[derive(Debug, Clone)]
pub struct PreparedProblem<'a> {
    pub problem: &'a TwoStageProblem,
    pub fan: DualVertexFan,
    pub quad: Quadrature,
    pub bbox: (Vec<f64>, Vec<f64>),
    pub feasible_point: Vec<f64>,
}

impl<'a> PreparedProblem<'a> {
    pub fn new(problem: &'a TwoStageProblem, resolution: Option<usize>) -> Result<Self> {
        problem.validate()?;
        let fan = enumerate_dual_vertices(&problem.recourse)?;
        let quad = Quadrature::new(&problem.measure, resolution)?;
        let fs = &problem.first_stage;
        let bbox = fs.x_set.bounding_box(fs.n())?;
        let n = fs.n();
        let r = solve_lp(&fs.x_set.lp(vec![0.0; n], Sense::Min))?;
        if !r.is_optimal() {
            return Err(Error::Infeasible("X is empty".into()));
        }
        Ok(Self {
            problem,
            fan,
            quad,
            bbox,
            feasible_point: r.primal,
        })
    }

    fn fs(&self) -> &FirstStage {
        &self.problem.first_stage
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let fs = self.fs();
        let quad_part = fs.hq.as_ref().map_or(0.0, |h| dot(x, &h.mul_vec(x)));
        let q = risk::eval_q(&self.fan, &self.quad, self.problem.risk, &fs.t.mul_vec(x))?;
        Ok(quad_part + dot(&fs.h, x) + q)
    }

    /// `2Hx + h + Tᵀ∇Q(Tx)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let fs = self.fs();
        let gq = risk::grad_q(&self.fan, &self.quad, self.problem.risk, &fs.t.mul_vec(x))?;
        let mut g = linalg::add(&fs.h, &fs.t.tmul_vec(&gq));
        if let Some(h) = &fs.hq {
            for (gi, hx) in g.iter_mut().zip(h.mul_vec(x)) {
                *gi += 2.0 * hx;
            }
        }
        Ok(g)
    }
}

impl Objective for PreparedProblem<'_> {
    fn dim(&self) -> usize {
        self.fs().n()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        PreparedProblem::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        PreparedProblem::gradient(self, x)
    }
}

pub fn solve_two_stage(p: &TwoStageProblem, options: &SolveOptions) -> Result<ArgminResult> {
    p.validate()?;
    if p.first_stage.has_quadratic() {
        let prep = PreparedProblem::new(p, options.resolution)?;
        subgradient(&prep, options)
    } else {
        solve_deterministic_equivalent(p, options.resolution)
    }
}

fn solve_deterministic_equivalent(p: &TwoStageProblem, resolution: Option<usize>) -> Result<ArgminResult> {
    // X is checked separately so that emptiness or unboundedness of X is not
    // confused with a property of the recourse.
    p.first_stage.x_set.bounding_box(p.first_stage.n())?;
    let de = build_deterministic_equivalent_with(p, resolution)?;
    let out = solve_lp(&de.lp)?;
    match out.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(
                "deterministic equivalent has no feasible point".into(),
            ))
        }
        LpStatus::Unbounded => {
            return Err(Error::Unbounded(
                "deterministic equivalent is unbounded (recourse cost not bounded below)".into(),
            ))
        }
    }
    let n = de.layout.n;
    Ok(ArgminResult {
        x: out.primal[..n].to_vec(),
        value: out.value,
        path: SolverPath::DetEquivalent,
        diagnostics: SolveDiagnostics {
            iterations: out.iterations,
            epigraph_t: de.layout.t_index.map(|t| out.primal[t]),
            ..Default::default()
        },
    })
}

/// Aggregated minorant `(κ/2)‖y‖² + bᵀy + c` of the objective.
struct LowerModel {
    weight: f64,
    lin: Vec<f64>,
    constant: f64,
}

impl LowerModel {
    fn add(&mut self, w: f64, f: f64, g: &[f64], x: &[f64], kappa: f64) {
        self.weight += w;
        for ((l, gi), xi) in self.lin.iter_mut().zip(g).zip(x) {
            *l += w * (gi - kappa * xi);
        }
        self.constant += w * (f - dot(g, x) + 0.5 * kappa * dot(x, x));
    }

    fn eval(&self, y: &[f64], kappa: f64) -> f64 {
        (0.5 * kappa * self.weight * dot(y, y) + dot(&self.lin, y) + self.constant) / self.weight
    }

    fn minimum(&self, x_set: &Polyhedron, start: &[f64], kappa: f64) -> Result<f64> {
        if kappa > 0.0 {
            let c: Vec<f64> = self.lin.iter().map(|l| -l / (kappa * self.weight)).collect();
            let y = x_set.project(&c, start)?;
            Ok(self.eval(&y, kappa))
        } else {
            let r = solve_lp(&x_set.lp(self.lin.clone(), Sense::Min))?;
            if !r.is_optimal() {
                return Err(Error::Numeric("lower model LP failed on X".into()));
            }
            Ok(self.eval(&r.primal, 0.0))
        }
    }
}

fn subgradient(prep: &PreparedProblem<'_>, opts: &SolveOptions) -> Result<ArgminResult> {
    let fs = prep.fs();
    let x_set = &fs.x_set;
    let kappa = opts.modulus.unwrap_or(2.0 * fs.h_min_eigenvalue()).max(0.0);
    let (lo, hi) = &prep.bbox;
    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut x = x_set.project(&center, &prep.feasible_point)?;
    let mut model = LowerModel {
        weight: 0.0,
        lin: vec![0.0; x.len()],
        constant: 0.0,
    };
    let mut best_x = x.clone();
    let mut best_f = f64::INFINITY;
    let mut best_lb = f64::NEG_INFINITY;
    let mut a = opts.step_scale;
    let check_every = 10;
    for k in 1..=opts.max_iters {
        let f = prep.value(&x)?;
        let g = prep.gradient(&x)?;
        if f < best_f {
            best_f = f;
            best_x.clone_from(&x);
        }
        model.add(k as f64, f, &g, &x, kappa);
        if k % check_every == 0 || k == opts.max_iters {
            best_lb = best_lb.max(model.minimum(x_set, &best_x, kappa)?);
            if best_f - best_lb <= opts.tol {
                return Ok(ArgminResult {
                    x: best_x,
                    value: best_f,
                    path: SolverPath::Subgradient,
                    diagnostics: SolveDiagnostics {
                        iterations: k,
                        gap_bound: Some((best_f - best_lb).max(0.0)),
                        modulus: Some(kappa),
                        ..Default::default()
                    },
                });
            }
        }
        let a = *a.get_or_insert_with(|| {
            if kappa > 0.0 {
                2.0 / kappa
            } else {
                linalg::distance(lo, hi).max(1e-12) / linalg::norm(&g).max(1e-12)
            }
        });
        let step = a / (k as f64 + 1.0);
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        x = x_set.project(&trial, &x)?;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        gap_bound: best_f - best_lb,
        best_x,
        best_value: best_f,
    })
}

const GRID_LIMIT: usize = 50_000_000;

/// All feasible grid points of `X`'s bounding box with their objective values.
pub fn grid_evaluate(p: &TwoStageProblem, grid_step: f64, resolution: Option<usize>) -> Result<Vec<(Vec<f64>, f64)>> {
    p.validate()?;
    let n = p.first_stage.n();
    if n > 2 {
        return Err(Error::OracleDimension(n));
    }
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::input("grid step must be positive"));
    }
    let prep = PreparedProblem::new(p, resolution)?;
    let (lo, hi) = &prep.bbox;
    let counts: Vec<usize> = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| ((h - l) / grid_step + 1e-9).floor() as usize + 1)
        .collect();
    let total = counts
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(*c))
        .unwrap_or(usize::MAX);
    if total > GRID_LIMIT {
        return Err(Error::input(format!("grid has {total} points, limit {GRID_LIMIT}")));
    }
    let x_set = &p.first_stage.x_set;
    let rows: Vec<Option<(Vec<f64>, f64)>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|j| {
                    let i = rem % counts[j];
                    rem /= counts[j];
                    (lo[j] + i as f64 * grid_step).min(hi[j])
                })
                .collect();
            if !x_set.contains(&x, 1e-9) {
                return Ok(None);
            }
            Ok(Some((x.clone(), prep.value(&x)?)))
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(Vec<f64>, f64)> = rows.into_iter().flatten().collect();
    if pts.is_empty() {
        return Err(Error::input("no grid point lies in X; reduce the grid step"));
    }
    Ok(pts)
}

/// Exhaustive minimization over a grid (`n ≤ 2`); ties go to the first point.
pub fn grid_search_oracle(p: &TwoStageProblem, grid_step: f64) -> Result<ArgminResult> {
    grid_search_oracle_with(p, grid_step, None)
}

pub fn grid_search_oracle_with(p: &TwoStageProblem, grid_step: f64, resolution: Option<usize>) -> Result<ArgminResult> {
    let pts = grid_evaluate(p, grid_step, resolution)?;
    let count = pts.len();
    let (x, value) = pts
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("nonempty grid");
    Ok(ArgminResult {
        x,
        value,
        path: SolverPath::GridOracle,
        diagnostics: SolveDiagnostics {
            grid_points: Some(count),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn median_problem(h: f64, atoms: Vec<f64>, risk: RiskSpec) -> TwoStageProblem {
        TwoStageProblem {
            first_stage: FirstStage {
                t: DenseMatrix::from_rows(vec![vec![1.0]]).unwrap(),
                h: vec![h],
                hq: None,
                x_set: Polyhedron::from_box(&[0.0], &[1.0]).unwrap(),
            },
            recourse: RecourseData::new(DenseMatrix::from_rows(vec![vec![1.0, -1.0]]).unwrap(), vec![1.0, 1.0])
                .unwrap(),
            measure: DiscreteMeasure::uniform(atoms.into_iter().map(|a| vec![a]).collect())
                .unwrap()
                .into(),
            risk,
        }
    }

    fn nine() -> Vec<f64> {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn layout_counts() {
        let p = median_problem(0.0, vec![0.2, 0.6], RiskSpec::Expectation);
        let de = build_deterministic_equivalent(&p).unwrap();
        assert_eq!(de.layout.recourse_rows, 2);
        assert_eq!(de.lp.num_vars(), 1 + 2 * 2);

        let p = median_problem(0.0, vec![0.2, 0.5, 0.6], RiskSpec::ExpectedExcess { eta: 0.1 });
        let e = build_deterministic_equivalent(&p).unwrap();
        let base = median_problem(0.0, vec![0.2, 0.5, 0.6], RiskSpec::Expectation);
        let b = build_deterministic_equivalent(&base).unwrap();
        assert_eq!(e.lp.num_vars() - b.lp.num_vars(), 3);
        assert_eq!(e.lp.num_rows() - b.lp.num_rows(), 6);
    }

    #[test]
    fn median_instance() {
        let p = median_problem(0.0, nine(), RiskSpec::Expectation);
        let r = solve_two_stage(&p, &SolveOptions::default()).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-9);
        assert!((r.value - 2.0 / 9.0).abs() < 1e-12);
        let o = grid_search_oracle(&p, 1e-4).unwrap();
        assert!((o.x[0] - 0.5).abs() <= 1e-4);
        assert!((o.value - r.value).abs() <= 1e-4);
    }

    #[test]
    fn steep_cost_drives_to_bound() {
        let r = solve_two_stage(
            &median_problem(10.0, nine(), RiskSpec::Expectation),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.x[0].abs() < 1e-9);
    }

    #[test]
    fn dirac_recourse_vanishes() {
        let r = solve_two_stage(
            &median_problem(0.0, vec![0.7], RiskSpec::Expectation),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((r.x[0] - 0.7).abs() < 1e-9);
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn semideviation_lp_matches_evaluation() {
        let p = median_problem(0.3, vec![0.1, 0.25, 0.7, 0.95], RiskSpec::UpperSemideviation);
        let r = solve_two_stage(&p, &SolveOptions::default()).unwrap();
        let prep = PreparedProblem::new(&p, None).unwrap();
        assert!((prep.value(&r.x).unwrap() - r.value).abs() < 1e-6);
        let qe = risk::eval_q(&prep.fan, &prep.quad, RiskSpec::Expectation, &r.x).unwrap();
        assert!((r.diagnostics.epigraph_t.unwrap() - qe).abs() < 1e-7);
    }

    #[test]
    fn quadratic_path_certifies_gap() {
        let mut p = median_problem(0.0, nine(), RiskSpec::Expectation);
        p.first_stage.hq = Some(DenseMatrix::identity(1));
        let r = solve_two_stage(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.path, SolverPath::Subgradient);
        assert!(r.diagnostics.gap_bound.unwrap() <= 1e-4);
        let o = grid_search_oracle(&p, 1e-4).unwrap();
        assert!((o.value - r.value).abs() <= 1e-3);
        assert!(p.first_stage.x_set.contains(&r.x, 1e-8));
    }

    #[test]
    fn constant_objective_on_grid() {
        let p = median_problem(0.0, nine(), RiskSpec::ExpectedExcess { eta: 100.0 });
        let o = grid_search_oracle(&p, 0.01).unwrap();
        assert!((o.value - 100.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_quadratic_minimum() {
        // f(x) = x² − x + Q with the recourse pinned at zero by μ = δ_0 and T = 0
        let p = TwoStageProblem {
            first_stage: FirstStage {
                t: DenseMatrix::from_rows(vec![vec![0.0]]).unwrap(),
                h: vec![-1.0],
                hq: Some(DenseMatrix::identity(1)),
                x_set: Polyhedron::from_box(&[-2.0], &[2.0]).unwrap(),
            },
            ..median_problem(0.0, vec![0.0], RiskSpec::Expectation)
        };
        let o = grid_search_oracle(&p, 1e-3).unwrap();
        assert!((o.x[0] - 0.5).abs() <= 1e-3);
        let r = solve_two_stage(&p, &SolveOptions::default()).unwrap();
        assert!((r.x[0] - 0.5).abs() <= 1e-2);
    }

    #[test]
    fn projection_onto_triangle() {
        // {x ≥ 0, y ≥ 0, x + y ≤ 1}
        let x = Polyhedron::new(
            DenseMatrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]]).unwrap(),
            vec![0.0, 0.0, 1.0],
        )
        .unwrap();
        let p = x.project(&[2.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let p = x.project(&[3.0, -1.0], &[0.2, 0.2]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let p = x.project(&[0.1, 0.2], &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.1, 0.2]);
    }

    #[test]
    fn bad_feasible_sets() {
        let mut p = median_problem(0.0, nine(), RiskSpec::Expectation);
        p.first_stage.x_set = Polyhedron::new(DenseMatrix::from_rows(vec![vec![1.0]]).unwrap(), vec![1.0]).unwrap();
        assert!(matches!(
            solve_two_stage(&p, &SolveOptions::default()),
            Err(Error::Unbounded(_))
        ));
        p.first_stage.x_set = Polyhedron::new(
            DenseMatrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(),
            vec![0.0, -1.0],
        )
        .unwrap();
        assert!(matches!(
            solve_two_stage(&p, &SolveOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn errors() {
        let mut p = median_problem(0.0, nine(), RiskSpec::Expectation);
        p.first_stage.hq = Some(DenseMatrix::identity(1));
        assert!(build_deterministic_equivalent(&p).is_err());
        p.first_stage.hq = Some(DenseMatrix::from_rows(vec![vec![-1.0]]).unwrap());
        assert!(p.validate().is_err());
        let mut q = median_problem(0.0, nine(), RiskSpec::Expectation);
        q.first_stage = FirstStage {
            t: DenseMatrix::from_rows(vec![vec![1.0, 1.0, 1.0]]).unwrap(),
            h: vec![0.0; 3],
            hq: None,
            x_set: Polyhedron::from_box(&[0.0; 3], &[1.0; 3]).unwrap(),
        };
        assert_eq!(grid_search_oracle(&q, 0.1).unwrap_err(), Error::OracleDimension(3));
    }

    #[test]
    fn problem_json_round_trip() {
        let json = r#"{"first_stage":{"T":[[1.0]],"h":[0.0],"X":{"A":[[1.0],[-1.0]],"b":[1.0,0.0]}},
            "recourse":{"W":[[1.0,-1.0]],"q":[1.0,1.0]},
            "measure":{"type":"discrete","atoms":[[0.2],[0.8]],"weights":[0.5,0.5]},
            "risk":{"kind":"expected_excess","eta":0.25}}"#;
        let p: TwoStageProblem = serde_json::from_str(json).unwrap();
        p.validate().unwrap();
        let back: TwoStageProblem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }
}
