//! Dense linear programming kernel.
//!
//! Revised simplex on the standard form `min cᵀx, Ax = b, x ≥ 0` with an
//! explicit basis inverse, Bland's anti-cycling rule for both pricing and the
//! ratio test, and a fresh Gauss-Jordan refactorization every
//! [`LpOptions::refactor_every`] pivots. General problems are brought into
//! standard form by shifting/reflecting bounded variables, splitting free
//! ones, adding slacks and, where no slack can start in the basis, phase-1
//! artificials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, invert, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub a: DenseMatrix,
    pub row_senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program with all variables bounded below by zero.
    pub fn new(sense: Sense, cost: Vec<f64>, a: DenseMatrix, row_senses: Vec<RowSense>, rhs: Vec<f64>) -> Self {
        let n = cost.len();
        Self {
            sense,
            cost,
            a,
            row_senses,
            rhs,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        let m = self.rhs.len();
        if self.row_senses.len() != m {
            return Err(Error::dim(format!("{} row senses for {m} rows", self.row_senses.len())));
        }
        if self.a.rows() != m || (m > 0 && self.a.cols() != n) {
            return Err(Error::dim(format!(
                "constraint matrix is {}x{}, expected {m}x{n}",
                self.a.rows(),
                self.a.cols()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::dim("bound vectors must have one entry per variable"));
        }
        if !self.a.is_finite() || self.cost.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(Error::input("costs, matrix and right-hand side must be finite"));
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan())
            || self.lower.contains(&f64::INFINITY)
            || self.upper.contains(&f64::NEG_INFINITY)
        {
            return Err(Error::input("invalid variable bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Objective value in the program's own sense. `+∞`/`-∞` encode
    /// infeasible and unbounded in minimization terms (mirrored for max).
    pub value: f64,
    /// Primal solution in the original variables (empty unless optimal).
    pub primal: Vec<f64>,
    /// One multiplier per original row (empty unless optimal). For programs
    /// with default bounds, `rhsᵀ dual == value` at optimality.
    pub dual: Vec<f64>,
    /// Basic columns of the internal standard form.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            optimality_tol: 1e-8,
            pivot_tol: 1e-10,
            refactor_every: 50,
            max_iterations: 200_000,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_lp_with(lp, &LpOptions::default())
}

/// True iff `{x : A x (senses) b, lower ≤ x ≤ upper}` is nonempty.
pub fn check_feasible(a: &DenseMatrix, senses: &[RowSense], b: &[f64], lower: &[f64], upper: &[f64]) -> Result<bool> {
    let lp = LinearProgram::new(
        Sense::Min,
        vec![0.0; lower.len()],
        a.clone(),
        senses.to_vec(),
        b.to_vec(),
    )
    .with_bounds(lower.to_vec(), upper.to_vec());
    Ok(solve_lp(&lp)?.status != LpStatus::Infeasible)
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + col
    Shift { col: usize, offset: f64 },
    /// x = offset - col
    Reflect { col: usize, offset: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: DenseMatrix,
    b: Vec<f64>,
    cost: Vec<f64>,
    var_map: Vec<VarMap>,
    /// ±1 applied to each row to make the rhs nonnegative.
    flip: Vec<f64>,
    n_orig_rows: usize,
    /// Columns at or beyond this index are artificials.
    first_artificial: usize,
    initial_basis: Vec<usize>,
}

fn to_standard_form(lp: &LinearProgram) -> Result<StandardForm> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let minimize = lp.sense == Sense::Min;

    let mut var_map = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u {
            return Err(Error::Infeasible(format!("variable {j} has lower > upper")));
        }
        let map = match (l.is_finite(), u.is_finite()) {
            (true, _) => {
                let col = n_struct;
                n_struct += 1;
                if u.is_finite() {
                    bound_rows.push((col, u - l));
                }
                VarMap::Shift { col, offset: l }
            }
            (false, true) => {
                let col = n_struct;
                n_struct += 1;
                VarMap::Reflect { col, offset: u }
            }
            (false, false) => {
                let pos = n_struct;
                n_struct += 2;
                VarMap::Split { pos, neg: pos + 1 }
            }
        };
        var_map.push(map);
    }

    let rows = m + bound_rows.len();
    let mut senses: Vec<RowSense> = lp.row_senses.clone();
    senses.extend(std::iter::repeat_n(RowSense::Le, bound_rows.len()));
    let n_slack = senses.iter().filter(|s| **s != RowSense::Eq).count();

    let mut struct_rows = DenseMatrix::zeros(rows, n_struct);
    let mut b = vec![0.0; rows];
    let mut cost = vec![0.0; n_struct];
    for i in 0..m {
        let mut rhs = lp.rhs[i];
        for j in 0..n {
            let aij = lp.a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shift { col, offset } => {
                    struct_rows[(i, col)] += aij;
                    rhs -= aij * offset;
                }
                VarMap::Reflect { col, offset } => {
                    struct_rows[(i, col)] -= aij;
                    rhs -= aij * offset;
                }
                VarMap::Split { pos, neg } => {
                    struct_rows[(i, pos)] += aij;
                    struct_rows[(i, neg)] -= aij;
                }
            }
        }
        b[i] = rhs;
    }
    for (k, &(col, width)) in bound_rows.iter().enumerate() {
        struct_rows[(m + k, col)] = 1.0;
        b[m + k] = width;
    }
    for j in 0..n {
        let cj = if minimize { lp.cost[j] } else { -lp.cost[j] };
        match var_map[j] {
            VarMap::Shift { col, .. } => cost[col] += cj,
            VarMap::Reflect { col, .. } => cost[col] -= cj,
            VarMap::Split { pos, neg } => {
                cost[pos] += cj;
                cost[neg] -= cj;
            }
        }
    }

    let mut flip = vec![1.0; rows];
    for i in 0..rows {
        if b[i] < 0.0 {
            flip[i] = -1.0;
        }
    }

    // Slack columns, then artificials for rows without a +1 slack.
    let mut slack_coef: Vec<Option<(usize, f64)>> = vec![None; rows];
    let mut next = n_struct;
    for i in 0..rows {
        let sign = match senses[i] {
            RowSense::Le => 1.0,
            RowSense::Ge => -1.0,
            RowSense::Eq => continue,
        };
        slack_coef[i] = Some((next, sign * flip[i]));
        next += 1;
    }
    debug_assert_eq!(next, n_struct + n_slack);
    let first_artificial = next;
    let mut initial_basis = vec![0usize; rows];
    let mut artificial_rows = Vec::new();
    for i in 0..rows {
        match slack_coef[i] {
            Some((col, c)) if c > 0.0 => initial_basis[i] = col,
            _ => {
                initial_basis[i] = next;
                artificial_rows.push(i);
                next += 1;
            }
        }
    }
    let total = next;

    let mut a = DenseMatrix::zeros(rows, total);
    for i in 0..rows {
        for j in 0..n_struct {
            a[(i, j)] = flip[i] * struct_rows[(i, j)];
        }
        if let Some((col, c)) = slack_coef[i] {
            a[(i, col)] = c;
        }
        b[i] *= flip[i];
    }
    for (k, &i) in artificial_rows.iter().enumerate() {
        a[(i, first_artificial + k)] = 1.0;
    }
    cost.resize(total, 0.0);

    Ok(StandardForm {
        a,
        b,
        cost,
        var_map,
        flip,
        n_orig_rows: m,
        first_artificial,
        initial_basis,
    })
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    a: &'a DenseMatrix,
    b: &'a [f64],
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DenseMatrix,
    xb: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    opts: LpOptions,
}

impl<'a> Simplex<'a> {
    fn new(a: &'a DenseMatrix, b: &'a [f64], basis: Vec<usize>, opts: LpOptions) -> Result<Self> {
        let mut is_basic = vec![false; a.cols()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut s = Self {
            a,
            b,
            basis,
            is_basic,
            binv: DenseMatrix::identity(b.len()),
            xb: b.to_vec(),
            since_refactor: 0,
            iterations: 0,
            opts,
        };
        s.refactor()?;
        Ok(s)
    }

    fn refactor(&mut self) -> Result<()> {
        let bmat = self.a.select_columns(&self.basis);
        self.binv = invert(&bmat, self.opts.pivot_tol).map_err(|c| {
            Error::Numeric(format!(
                "singular basis at refactorization (position {c}, column {})",
                self.basis[c]
            ))
        })?;
        self.xb = self.binv.mul_vec(self.b);
        self.since_refactor = 0;
        self.clean_xb()
    }

    fn clean_xb(&mut self) -> Result<()> {
        for (i, v) in self.xb.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -1e-6 * (1.0 + self.b.iter().fold(0.0f64, |a, x| a.max(x.abs()))) {
                    return Err(Error::Numeric(format!(
                        "basic variable at position {i} drifted to {v:e}"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.basis.len();
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb == 0.0 {
                continue;
            }
            for (yk, bk) in y.iter_mut().zip(self.binv.row(i)) {
                *yk += cb * bk;
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (r, yr) in y.iter().enumerate() {
            d -= yr * self.a[(r, j)];
        }
        d
    }

    /// `B⁻¹ A_j`
    fn column(&self, j: usize) -> Vec<f64> {
        let aj = self.a.column(j);
        self.binv.mul_vec(&aj)
    }

    fn pivot(&mut self, r: usize, entering: usize, alpha: &[f64]) -> Result<()> {
        let ar = alpha[r];
        let theta = self.xb[r] / ar;
        let m = self.basis.len();
        let pivot_row: Vec<f64> = self.binv.row(r).iter().map(|v| v / ar).collect();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = alpha[i];
            if f != 0.0 {
                for (bi, pr) in self.binv.row_mut(i).iter_mut().zip(&pivot_row) {
                    *bi -= f * pr;
                }
                self.xb[i] -= f * theta;
            }
        }
        self.binv.row_mut(r).copy_from_slice(&pivot_row);
        self.xb[r] = theta;
        self.is_basic[self.basis[r]] = false;
        self.is_basic[entering] = true;
        self.basis[r] = entering;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()
        } else {
            self.clean_xb()
        }
    }

    fn run(&mut self, cost: &[f64], barred: &[bool]) -> Result<PhaseEnd> {
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numeric(format!(
                    "iteration limit {} reached",
                    self.opts.max_iterations
                )));
            }
            let y = self.duals(cost);
            // Bland: lowest-index improving column.
            let entering = (0..self.a.cols()).find(|&j| {
                !self.is_basic[j] && !barred[j] && self.reduced_cost(cost, &y, j) < -self.opts.optimality_tol
            });
            let Some(e) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let alpha = self.column(e);
            let mut leave: Option<(usize, f64)> = None;
            for (i, &ai) in alpha.iter().enumerate() {
                if ai <= self.opts.pivot_tol {
                    continue;
                }
                let ratio = self.xb[i] / ai;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if (tie && self.basis[i] < self.basis[r]) || (!tie && ratio < best) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(r, e, &alpha)?;
        }
    }
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.num_vars();
    let minimize = lp.sense == Sense::Min;
    let (inf_value, unb_value) = if minimize {
        (f64::INFINITY, f64::NEG_INFINITY)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let failed = |status, value, iterations| LpOutcome {
        status,
        value,
        primal: Vec::new(),
        dual: Vec::new(),
        basis: Vec::new(),
        iterations,
    };

    let sf = match to_standard_form(lp) {
        Ok(sf) => sf,
        Err(Error::Infeasible(_)) => return Ok(failed(LpStatus::Infeasible, inf_value, 0)),
        Err(e) => return Err(e),
    };
    let cols = sf.a.cols();
    let is_artificial: Vec<bool> = (0..cols).map(|j| j >= sf.first_artificial).collect();
    let mut simplex = Simplex::new(&sf.a, &sf.b, sf.initial_basis.clone(), *opts)?;

    if sf.first_artificial < cols {
        let phase1_cost: Vec<f64> = is_artificial.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        let no_bar = vec![false; cols];
        simplex.run(&phase1_cost, &no_bar)?;
        let infeas: f64 = simplex
            .basis
            .iter()
            .zip(&simplex.xb)
            .filter(|(j, _)| is_artificial[**j])
            .map(|(_, v)| *v)
            .sum();
        let scale = 1.0 + sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > opts.feasibility_tol * scale {
            return Ok(failed(LpStatus::Infeasible, inf_value, simplex.iterations));
        }
        // Drive zero-level artificials out of the basis where possible; the
        // ones that stay sit on redundant rows.
        for r in 0..simplex.basis.len() {
            if !is_artificial[simplex.basis[r]] {
                continue;
            }
            simplex.xb[r] = 0.0;
            let binv_row = simplex.binv.row(r).to_vec();
            let best = (0..sf.first_artificial)
                .filter(|&j| !simplex.is_basic[j])
                .map(|j| (j, dot(&binv_row, &sf.a.column(j))))
                .filter(|(_, v)| v.abs() > opts.pivot_tol)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            if let Some((j, _)) = best {
                let alpha = simplex.column(j);
                simplex.pivot(r, j, &alpha)?;
            }
        }
    }

    match simplex.run(&sf.cost, &is_artificial)? {
        PhaseEnd::Unbounded => {
            return Ok(failed(LpStatus::Unbounded, unb_value, simplex.iterations));
        }
        PhaseEnd::Optimal => {}
    }
    simplex.refactor()?;

    let mut xs = vec![0.0; cols];
    for (&j, &v) in simplex.basis.iter().zip(&simplex.xb) {
        xs[j] = v;
    }
    let primal: Vec<f64> = sf
        .var_map
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, offset } => offset + xs[col],
            VarMap::Reflect { col, offset } => offset - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();
    debug_assert_eq!(primal.len(), n);
    let y = simplex.duals(&sf.cost);
    let sign = if minimize { 1.0 } else { -1.0 };
    let dual: Vec<f64> = (0..sf.n_orig_rows).map(|i| sign * sf.flip[i] * y[i]).collect();
    let value = dot(&lp.cost, &primal);

    Ok(LpOutcome {
        status: LpStatus::Optimal,
        value,
        primal,
        dual,
        basis: simplex.basis.clone(),
        iterations: simplex.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: Vec<Vec<f64>>) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    /// Enumerates every basic solution of `min cᵀy, Ay = b, y ≥ 0` (A with
    /// full row rank) and returns the best feasible objective.
    fn enumerate_bfs(a: &DenseMatrix, b: &[f64], c: &[f64]) -> Option<(f64, Vec<f64>)> {
        use itertools::Itertools;
        let (m, n) = (a.rows(), a.cols());
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cols in (0..n).combinations(m) {
            let bmat = a.select_columns(&cols);
            let Some(xb) = crate::linalg::solve(&bmat, b, 1e-12) else {
                continue;
            };
            if xb.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut y = vec![0.0; n];
            for (k, &j) in cols.iter().enumerate() {
                y[j] = xb[k];
            }
            let v = dot(c, &y);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, y));
            }
        }
        best
    }

    #[test]
    fn equality_example_matches_basis_enumeration() {
        let a = mat(vec![vec![1.0, -1.0]]);
        let lp = LinearProgram::new(Sense::Min, vec![1.0, 1.0], a.clone(), vec![RowSense::Eq], vec![0.7]);
        let out = solve_lp(&lp).unwrap();
        let (ov, oy) = enumerate_bfs(&a, &[0.7], &[1.0, 1.0]).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 0.7).abs() < 1e-12 && (ov - 0.7).abs() < 1e-12);
        assert!((out.primal[0] - oy[0]).abs() < 1e-12 && out.primal[1].abs() < 1e-12);
        assert!((out.dual[0] * 0.7 - out.value).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_on_nonnegative_variable_is_infeasible() {
        let lp = LinearProgram::new(
            Sense::Min,
            vec![1.0],
            mat(vec![vec![1.0]]),
            vec![RowSense::Eq],
            vec![-1.0],
        );
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn ray_is_unbounded() {
        let lp = LinearProgram::new(Sense::Max, vec![1.0], DenseMatrix::zeros(0, 1), vec![], vec![]);
        let out = solve_lp(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
        assert_eq!(out.value, f64::INFINITY);
    }

    #[test]
    fn feasibility_examples() {
        let a = mat(vec![vec![1.0, -1.0]]);
        assert!(check_feasible(&a, &[RowSense::Eq], &[5.0], &[0.0, 0.0], &[f64::INFINITY; 2]).unwrap());
        let a1 = mat(vec![vec![1.0]]);
        assert!(!check_feasible(&a1, &[RowSense::Eq], &[-1.0], &[0.0], &[f64::INFINITY]).unwrap());
        let a2 = mat(vec![vec![1.0, 1.0], vec![1.0, -1.0]]);
        assert!(!check_feasible(&a2, &[RowSense::Eq; 2], &[1.0, 3.0], &[0.0; 2], &[1.0; 2]).unwrap());
    }

    #[test]
    fn free_and_bounded_variables() {
        // max x1 + x2, x1 + 2 x2 <= 4, -1 <= x1 <= 2, x2 free, x2 >= -3 via row
        let lp = LinearProgram::new(
            Sense::Max,
            vec![1.0, 1.0],
            mat(vec![vec![1.0, 2.0], vec![0.0, 1.0]]),
            vec![RowSense::Le, RowSense::Ge],
            vec![4.0, -3.0],
        )
        .with_bounds(vec![-1.0, f64::NEG_INFINITY], vec![2.0, f64::INFINITY]);
        let out = solve_lp(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        // x1 = 2, x2 = 1
        assert!((out.value - 3.0).abs() < 1e-10, "{out:?}");
        assert!((out.primal[0] - 2.0).abs() < 1e-10 && (out.primal[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn upper_bound_only_variable() {
        // min -x, x <= 3 via bound, x unbounded below
        let lp = LinearProgram::new(Sense::Min, vec![-1.0], DenseMatrix::zeros(0, 1), vec![], vec![])
            .with_bounds(vec![f64::NEG_INFINITY], vec![3.0]);
        let out = solve_lp(&lp).unwrap();
        assert!((out.value + 3.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let a = mat(vec![vec![1.0, 1.0], vec![2.0, 2.0]]);
        let lp = LinearProgram::new(Sense::Min, vec![1.0, 2.0], a, vec![RowSense::Eq; 2], vec![1.0, 2.0]);
        let out = solve_lp(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let lp = LinearProgram::new(
            Sense::Min,
            vec![1.0, 1.0],
            mat(vec![vec![1.0]]),
            vec![RowSense::Eq],
            vec![1.0],
        );
        assert!(matches!(solve_lp(&lp), Err(Error::Dimension(_))));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let a = mat(vec![
            vec![0.25, -60.0, -0.04, 9.0],
            vec![0.5, -90.0, -0.02, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let lp = LinearProgram::new(
            Sense::Min,
            vec![-0.75, 150.0, -0.02, 6.0],
            a,
            vec![RowSense::Le; 3],
            vec![0.0, 0.0, 1.0],
        );
        let out = solve_lp(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value + 0.05).abs() < 1e-10);
    }
}
