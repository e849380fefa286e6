//! Polyhedral structure of the recourse value function
//! `φ(t) = min { qᵀy | W y = t, y ≥ 0 }`.
//!
//! Under complete recourse and strict dual feasibility the dual polyhedron
//! `M_D = { z | Wᵀz ≤ q }` is a polytope with vertices `d_i`, and
//! `φ(t) = max_i d_iᵀt`. The linearity cells `K_i = { t | (d_i − d_j)ᵀt ≥ 0 }`
//! form a fan covering ℝ^s; `K_i` is the normal cone of `M_D` at `d_i`, so it
//! is generated by the columns of `W` tight at `d_i`.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, DenseMatrix};
use crate::lp::{self, LinearProgram, LpStatus, RowSense, Sense};
use crate::rng;

/// Euclidean distance below which two dual vertices are merged.
pub const VERTEX_MERGE_TOL: f64 = 1e-9;
/// Relative tolerance (against `|φ(t)| + 1`) for ties in [`DualVertexFan::active_cell`].
pub const TIE_TOL: f64 = 1e-9;
const TIGHT_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseData {
    #[serde(rename = "W")]
    pub w: DenseMatrix,
    pub q: Vec<f64>,
}

impl RecourseData {
    pub fn new(w: DenseMatrix, q: Vec<f64>) -> Result<Self> {
        let rd = Self { w, q };
        rd.validate()?;
        Ok(rd)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.rows() == 0 || self.w.cols() == 0 {
            return Err(Error::dim("W must be at least 1x1"));
        }
        if self.q.len() != self.w.cols() {
            return Err(Error::dim(format!(
                "q has {} entries but W has {} columns",
                self.q.len(),
                self.w.cols()
            )));
        }
        if !self.w.is_finite() || self.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("W and q must be finite"));
        }
        Ok(())
    }

    /// Dimension `s` of the right-hand side.
    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// Number `m` of recourse variables.
    pub fn num_recourse(&self) -> usize {
        self.w.cols()
    }

    /// `φ(t)` by solving the primal recourse LP directly.
    pub fn phi_lp(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(Error::dim("t must have dimension s"));
        }
        let lp = LinearProgram::new(
            Sense::Min,
            self.q.clone(),
            self.w.clone(),
            vec![RowSense::Eq; self.dim()],
            t.to_vec(),
        );
        let out = lp::solve_lp(&lp)?;
        match out.status {
            LpStatus::Optimal => Ok(out.value),
            LpStatus::Infeasible => Err(Error::Infeasible(format!("W y = {t:?} has no y >= 0"))),
            LpStatus::Unbounded => Err(Error::Unbounded("recourse LP".into())),
        }
    }

    fn tight_columns(&self, z: &[f64]) -> Vec<usize> {
        (0..self.num_recourse())
            .filter(|&k| {
                let wk = self.w.column(k);
                (dot(&wk, z) - self.q[k]).abs() <= TIGHT_TOL * (1.0 + self.q[k].abs())
            })
            .collect()
    }

    fn dual_feasible(&self, z: &[f64]) -> bool {
        (0..self.num_recourse()).all(|k| {
            let wk = self.w.column(k);
            dot(&wk, z) <= self.q[k] + TIGHT_TOL * (1.0 + self.q[k].abs())
        })
    }

    /// All basic feasible points of `Wᵀz ≤ q`: solutions of `B ᵀz = q_B` for
    /// nonsingular `s×s` column subsets `B`, deduplicated.
    fn basic_dual_points(&self) -> Vec<Vec<f64>> {
        let s = self.dim();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for cols in (0..self.num_recourse()).combinations(s) {
            let bt = self.w.select_columns(&cols).transpose();
            let qb: Vec<f64> = cols.iter().map(|&k| self.q[k]).collect();
            let Some(z) = linalg::solve(&bt, &qb, 1e-12) else {
                continue;
            };
            if !self.dual_feasible(&z) {
                continue;
            }
            if out.iter().any(|v| linalg::distance(v, &z) <= VERTEX_MERGE_TOL) {
                continue;
            }
            out.push(z);
        }
        out
    }

    /// Whether `W y = ±e_j, y ≥ 0` is solvable for every unit vector. Returns
    /// the first unreachable direction as `(j, sign)`.
    fn unreachable_direction(&self) -> Result<Option<(usize, f64)>> {
        let s = self.dim();
        let m = self.num_recourse();
        for j in 0..s {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; s];
                e[j] = sign;
                let ok = lp::check_feasible(
                    &self.w,
                    &vec![RowSense::Eq; s],
                    &e,
                    &vec![0.0; m],
                    &vec![f64::INFINITY; m],
                )?;
                if !ok {
                    return Ok(Some((j, sign)));
                }
            }
        }
        Ok(None)
    }

    /// Largest `ε` with `Wᵀξ + ε·1 ≤ q` for some `ξ` (`+∞` when unbounded).
    fn strict_dual_margin(&self) -> Result<f64> {
        let s = self.dim();
        let m = self.num_recourse();
        let mut a = DenseMatrix::zeros(m, s + 1);
        for k in 0..m {
            for r in 0..s {
                a[(k, r)] = self.w[(r, k)];
            }
            a[(k, s)] = 1.0;
        }
        let mut cost = vec![0.0; s + 1];
        cost[s] = 1.0;
        let lp = LinearProgram::new(Sense::Max, cost, a, vec![RowSense::Le; m], self.q.clone())
            .with_bounds(vec![f64::NEG_INFINITY; s + 1], vec![f64::INFINITY; s + 1]);
        let out = lp::solve_lp(&lp)?;
        Ok(match out.status {
            LpStatus::Optimal => out.value,
            LpStatus::Unbounded => f64::INFINITY,
            LpStatus::Infeasible => f64::NEG_INFINITY,
        })
    }
}

/// Dual vertices of `M_D` together with the fan of linearity cones of `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVertexFan {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    /// Pairs `(i, j)`, `i < j`, of adjacent vertices (`dim(K_i ∩ K_j) = s − 1`).
    pub adjacency: Vec<(usize, usize)>,
    /// Inequality normals `d_i − d_j` of `K_i`, one per neighbor `j`.
    pub generators: Vec<Vec<Vec<f64>>>,
    /// Extreme directions of `K_i`: the columns of `W` tight at `d_i`.
    pub rays: Vec<Vec<Vec<f64>>>,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
}

/// Vertex enumeration by exhaustive basis-submatrix search.
pub fn enumerate_dual_vertices(rd: &RecourseData) -> Result<DualVertexFan> {
    rd.validate()?;
    let s = rd.dim();
    if linalg::rank(&rd.w, RANK_TOL) < s {
        return Err(Error::Assumption {
            assumption: "A1",
            detail: format!("rank(W) < s = {s}"),
        });
    }
    if let Some((j, sign)) = rd.unreachable_direction()? {
        return Err(Error::Assumption {
            assumption: "A1",
            detail: format!(
                "W y = {}e_{j} has no solution y >= 0",
                if sign > 0.0 { "+" } else { "-" }
            ),
        });
    }
    let vertices = rd.basic_dual_points();
    if vertices.is_empty() {
        return Err(Error::Assumption {
            assumption: "A2",
            detail: "dual polyhedron { z | W^T z <= q } is empty".into(),
        });
    }
    Ok(build_fan(rd, vertices))
}

fn build_fan(rd: &RecourseData, vertices: Vec<Vec<f64>>) -> DualVertexFan {
    let s = rd.dim();
    let tight: Vec<Vec<usize>> = vertices.iter().map(|v| rd.tight_columns(v)).collect();
    let mut adjacency = Vec::new();
    let mut neighbors = vec![Vec::new(); vertices.len()];
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            let common: Vec<usize> = tight[i].iter().copied().filter(|k| tight[j].contains(k)).collect();
            let r = if common.is_empty() {
                0
            } else {
                linalg::rank(&rd.w.select_columns(&common), RANK_TOL)
            };
            if r + 1 == s {
                adjacency.push((i, j));
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    let generators = (0..vertices.len())
        .map(|i| {
            neighbors[i]
                .iter()
                .map(|&j| linalg::sub(&vertices[i], &vertices[j]))
                .collect()
        })
        .collect();
    let rays = tight
        .iter()
        .map(|cols| cols.iter().map(|&k| rd.w.column(k)).collect())
        .collect();
    DualVertexFan {
        dim: s,
        vertices,
        adjacency,
        generators,
        rays,
        neighbors,
    }
}

impl DualVertexFan {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `φ(t) = max_i d_iᵀt`.
    pub fn phi(&self, t: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|d| dot(d, t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first vertex attaining the max together with `φ(t)`.
    pub fn argmax(&self, t: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, d) in self.vertices.iter().enumerate() {
            let v = dot(d, t);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// All vertices attaining `φ(t)` within the tie tolerance.
    pub fn active_cell(&self, t: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.vertices.iter().map(|d| dot(d, t)).collect();
        let phi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = TIE_TOL * (phi.abs() + 1.0);
        vals.iter()
            .enumerate()
            .filter(|(_, v)| **v >= phi - tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Lowest-index vertex of the active cell, i.e. the tie-broken cone of `t`.
    pub fn cell_index(&self, t: &[f64]) -> usize {
        let vals: Vec<f64> = self.vertices.iter().map(|d| dot(d, t)).collect();
        let phi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = TIE_TOL * (phi.abs() + 1.0);
        vals.iter().position(|v| *v >= phi - tol).unwrap_or(0)
    }

    /// Membership `t ∈ K_i` tested on the inequality description.
    pub fn in_cone(&self, i: usize, t: &[f64], tol: f64) -> bool {
        self.generators[i].iter().all(|g| dot(g, t) >= -tol)
    }

    pub fn contains_origin(&self) -> bool {
        self.vertices.iter().any(|v| linalg::norm(v) <= VERTEX_MERGE_TOL)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("fan serializes")
    }

    /// Restores neighbor lists after deserialization.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let mut fan: DualVertexFan = serde_json::from_value(v.clone()).map_err(|e| Error::input(e.to_string()))?;
        fan.neighbors = vec![Vec::new(); fan.vertices.len()];
        for &(i, j) in &fan.adjacency {
            if i >= fan.vertices.len() || j >= fan.vertices.len() {
                return Err(Error::input("adjacency index out of range"));
            }
            fan.neighbors[i].push(j);
            fan.neighbors[j].push(i);
        }
        Ok(fan)
    }
}

/// Free-function form of [`DualVertexFan::phi`].
pub fn phi(fan: &DualVertexFan, t: &[f64]) -> f64 {
    fan.phi(t)
}

pub fn active_cell(fan: &DualVertexFan, t: &[f64]) -> Vec<usize> {
    fan.active_cell(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Complete recourse: `pos(W) = ℝ^s`.
    pub a1: bool,
    /// Human-readable witness for `a1` (an unreachable direction when false).
    pub a1_witness: String,
    /// Strict dual feasibility `Wᵀξ < q`.
    pub a2: bool,
    /// Largest uniform slack `ε` in `Wᵀξ + ε·1 ≤ q`; positive iff `a2`.
    pub a2_margin: f64,
    /// 0 is not a vertex of `M_D`.
    pub a5: bool,
    /// `q ≥ 0` componentwise.
    pub a6: bool,
    pub diagnostics: Vec<String>,
}

/// Checks A1, A2, A5 and A6. Failures are reported rather than returned as
/// errors; `Err` only signals a numerical breakdown in the underlying LPs.
/// When `fan` is `None` the vertex list for A5 is computed here.
pub fn check_assumptions(rd: &RecourseData, fan: Option<&DualVertexFan>) -> Result<AssumptionReport> {
    rd.validate()?;
    let s = rd.dim();
    let mut diagnostics = Vec::new();

    let rank = linalg::rank(&rd.w, RANK_TOL);
    let (a1, a1_witness) = if rank < s {
        (false, format!("rank(W) = {rank} < s = {s}"))
    } else {
        match rd.unreachable_direction()? {
            None => (true, format!("W y = ±e_j solvable with y >= 0 for all j < {s}")),
            Some((j, sign)) => (
                false,
                format!(
                    "W y = {}e_{j} has no solution y >= 0",
                    if sign > 0.0 { "+" } else { "-" }
                ),
            ),
        }
    };

    let mut margin = rd.strict_dual_margin()?;
    let a2 = margin > TIGHT_TOL;
    if !a2 && margin > 0.0 {
        margin = 0.0;
    }
    if margin == f64::INFINITY {
        diagnostics.push("strict dual margin is unbounded (M_D unbounded)".into());
    }

    let a5 = match fan {
        Some(f) => !f.contains_origin(),
        None => !rd
            .basic_dual_points()
            .iter()
            .any(|v| linalg::norm(v) <= VERTEX_MERGE_TOL),
    };
    if !a5 {
        diagnostics.push("0 is a vertex of M_D: the sets {z | φ(z − x) = 0} may carry mass".into());
    }
    let a6 = rd.q.iter().all(|&v| v >= 0.0);
    if !a6 {
        diagnostics.push("q has negative entries".into());
    }
    Ok(AssumptionReport {
        a1,
        a1_witness,
        a2,
        a2_margin: margin,
        a5,
        a6,
        diagnostics,
    })
}

/// Sampled estimate of the cone constant
/// `α = inf_{u ∈ K_i, ‖u‖ = 1} max_j (d_i − d_j)ᵀu`.
///
/// The first sample is the normalized sum of the unit rays of `K_i` (the
/// cone's axis); further samples are random conic combinations of the rays.
/// Since the infimum is taken over a finite sample the result is an upper
/// bound on the true constant.
pub fn estimate_cone_alpha(fan: &DualVertexFan, i: usize, n_samples: usize, seed: u64) -> Result<f64> {
    if i >= fan.len() {
        return Err(Error::input(format!("vertex index {i} out of range")));
    }
    if n_samples == 0 {
        return Err(Error::input("n_samples must be positive"));
    }
    let gens = &fan.generators[i];
    if gens.is_empty() {
        return Err(Error::ConeDegenerate(format!(
            "K_{i} has no generators (single-vertex fan)"
        )));
    }
    let gmat = DenseMatrix::from_rows(gens.clone())?;
    if linalg::rank(&gmat, RANK_TOL) < fan.dim {
        return Err(Error::ConeDegenerate(format!("K_{i} is not pointed")));
    }
    let rays: Vec<Vec<f64>> = fan.rays[i]
        .iter()
        .map(|r| {
            let n = linalg::norm(r);
            r.iter().map(|c| c / n).collect()
        })
        .collect();
    let rmat = DenseMatrix::from_rows(rays.clone())?;
    if linalg::rank(&rmat, RANK_TOL) < fan.dim {
        return Err(Error::ConeDegenerate(format!("K_{i} is lower-dimensional")));
    }

    let score = |u: &[f64]| gens.iter().map(|g| dot(g, u)).fold(f64::NEG_INFINITY, f64::max);
    let normalize = |v: Vec<f64>| {
        let n = linalg::norm(&v);
        v.into_iter().map(|c| c / n).collect::<Vec<f64>>()
    };

    let mut axis = vec![0.0; fan.dim];
    for r in &rays {
        for (a, c) in axis.iter_mut().zip(r) {
            *a += c;
        }
    }
    let mut best = score(&normalize(axis));
    let mut stream = rng::stream(seed, i as u64);
    for _ in 1..n_samples {
        use rand_distr::{Distribution, Exp1};
        let mut u = vec![0.0; fan.dim];
        for r in &rays {
            let w: f64 = Exp1.sample(&mut stream);
            for (a, c) in u.iter_mut().zip(r) {
                *a += w * c;
            }
        }
        if linalg::norm(&u) < 1e-14 {
            continue;
        }
        best = best.min(score(&normalize(u)));
    }
    Ok(best)
}
