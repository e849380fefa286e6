//! Small dense linear algebra used throughout the crate.
//!
//! Everything here works on row-major `f64` storage and is sized for
//! desk-scale problems (tens to a few hundred rows).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix. Serializes as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::dim(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `A v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Aᵀ v`
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Submatrix made of the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (k, &j) in cols.iter().enumerate() {
                m[(i, k)] = self[(i, j)];
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for DenseMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<DenseMatrix> for Vec<Vec<f64>> {
    fn from(m: DenseMatrix) -> Self {
        m.to_rows()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Numerical rank by Gaussian elimination with partial pivoting. Pivots below
/// `tol * max|entry|` count as zero.
pub fn rank(m: &DenseMatrix, tol: f64) -> usize {
    let mut a = m.clone();
    let scale = a.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let thresh = tol * scale;
    let (rows, cols) = (a.rows, a.cols);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best <= thresh {
            continue;
        }
        swap_rows(&mut a, r, p);
        for i in r + 1..rows {
            let f = a[(i, c)] / a[(r, c)];
            if f != 0.0 {
                for j in c..cols {
                    let v = a[(r, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        r += 1;
    }
    r
}

fn swap_rows(a: &mut DenseMatrix, i: usize, j: usize) {
    if i == j {
        return;
    }
    for c in 0..a.cols {
        a.data.swap(i * a.cols + c, j * a.cols + c);
    }
}

/// Solves the square system `A x = b`. Returns `None` when a pivot falls
/// below `pivot_tol` (relative to the largest entry of `A`).
pub fn solve(a: &DenseMatrix, b: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    debug_assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for c in 0..n {
        let (p, best) = (c..n)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best <= pivot_tol * scale {
            return None;
        }
        swap_rows(&mut m, c, p);
        rhs.swap(c, p);
        for i in c + 1..n {
            let f = m[(i, c)] / m[(c, c)];
            if f != 0.0 {
                for j in c..n {
                    let v = m[(c, j)];
                    m[(i, j)] -= f * v;
                }
                rhs[i] -= f * rhs[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Some(x)
}

/// Gauss-Jordan inverse with partial pivoting. On a pivot below `pivot_tol`
/// (absolute) returns the offending column.
pub fn invert(a: &DenseMatrix, pivot_tol: f64) -> std::result::Result<DenseMatrix, usize> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    for c in 0..n {
        let (p, best) = (c..n)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if best <= pivot_tol {
            return Err(c);
        }
        swap_rows(&mut m, c, p);
        swap_rows(&mut inv, c, p);
        let d = m[(c, c)];
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            if i == c {
                continue;
            }
            let f = m[(i, c)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                let (mv, iv) = (m[(c, j)], inv[(c, j)]);
                m[(i, j)] -= f * mv;
                inv[(i, j)] -= f * iv;
            }
        }
    }
    Ok(inv)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows;
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_rows() {
        let m = DenseMatrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(rank(&m, 1e-12), 1);
        assert_eq!(rank(&DenseMatrix::identity(3), 1e-12), 3);
        assert_eq!(rank(&DenseMatrix::zeros(2, 2), 1e-12), 0);
    }

    #[test]
    fn solve_and_invert_agree() {
        let a = DenseMatrix::from_rows(vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, -1.0], vec![0.0, -1.0, 2.0]]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = solve(&a, &b, 1e-12).unwrap();
        let inv = invert(&a, 1e-12).unwrap();
        let y = inv.mul_vec(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_solve_is_none() {
        let a = DenseMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(solve(&a, &[1.0, 2.0], 1e-12).is_none());
        assert!(invert(&a, 1e-12).is_err());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = DenseMatrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = compensated_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
        let t = compensated_sum(std::iter::repeat_n(1e-6, 1_000_000));
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_json_is_list_of_rows() {
        let m: DenseMatrix = serde_json::from_str("[[1,-1]]").unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert!(serde_json::from_str::<DenseMatrix>("[[1,2],[3]]").is_err());
    }
}
