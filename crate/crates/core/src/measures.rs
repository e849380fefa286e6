//! Probability measures on ℝ^s: finitely supported measures and the uniform
//! density on a box, plus discretization, perturbation and the
//! L1-Wasserstein distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, compensated_sum, DenseMatrix};
use crate::lp::{self, LinearProgram, LpOptions, LpStatus, RowSense, Sense};
use crate::rng;

pub const MAX_ATOMS: usize = 10_000_000;
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::input("a discrete measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::dim(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let s = atoms[0].len();
        if s == 0 || atoms.iter().any(|a| a.len() != s) {
            return Err(Error::dim("atoms must share a positive dimension"));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("atoms must be finite"));
        }
        if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::input("weights must be nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|c| compensated_sum(self.atoms.iter().zip(&self.weights).map(|(a, p)| a[c] * p)))
            .collect()
    }

    /// Copy with zero-weight atoms removed.
    pub fn without_null_atoms(&self) -> Self {
        let (atoms, weights) = self
            .atoms
            .iter()
            .zip(&self.weights)
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| (a.clone(), p))
            .unzip();
        Self { atoms, weights }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDensityMeasure {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDensityMeasure {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::dim("box corners must share a positive dimension"));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::input("box needs finite corners with lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// The constant density `1 / vol`.
    pub fn density(&self) -> f64 {
        1.0 / self.volume()
    }
}

/// Wire form: `{"type":"discrete","atoms":[[..]],"weights":[..]}` or
/// `{"type":"uniform_box","lo":[..],"hi":[..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawMeasure")]
pub enum Measure {
    Discrete(DiscreteMeasure),
    UniformBox(BoxDensityMeasure),
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawMeasure {
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl TryFrom<RawMeasure> for Measure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        Ok(match raw {
            RawMeasure::Discrete { atoms, weights } => Measure::Discrete(DiscreteMeasure::new(atoms, weights)?),
            RawMeasure::UniformBox { lo, hi } => Measure::UniformBox(BoxDensityMeasure::new(lo, hi)?),
        })
    }
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(d) => d.dim(),
            Measure::UniformBox(b) => b.dim(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Discrete(d) => Some(d),
            Measure::UniformBox(_) => None,
        }
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(d: DiscreteMeasure) -> Self {
        Measure::Discrete(d)
    }
}

impl From<BoxDensityMeasure> for Measure {
    fn from(b: BoxDensityMeasure) -> Self {
        Measure::UniformBox(b)
    }
}

/// Open box `V = (lo, hi)` together with the radius `ρ` of the density
/// lower-bound neighbourhood `V + B_ρ(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionV {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rho: f64,
}

impl RegionV {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, rho: f64) -> Result<Self> {
        let r = Self { lo, hi, rho };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::dim("region corners must share a positive dimension"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h)) || !self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
        {
            return Err(Error::input("region box must be nonempty and finite"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::input("rho must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        linalg::distance(&self.lo, &self.hi)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l < v && v < h)
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }
}

/// L1-Wasserstein distance between two finitely supported measures, by the
/// transport LP over all atom pairs with Euclidean ground cost.
pub fn wasserstein1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::dim(format!(
            "measures live in dimensions {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if mu == nu {
        return Ok(0.0);
    }
    // Solve one canonical orientation so the result is exactly symmetric.
    let (a, b) = if canonical_order(mu, nu) { (mu, nu) } else { (nu, mu) };
    let a = a.without_null_atoms();
    let b = b.without_null_atoms();
    let (k, l) = (a.len(), b.len());
    let mut cost = Vec::with_capacity(k * l);
    for za in a.atoms() {
        for zb in b.atoms() {
            cost.push(linalg::distance(za, zb));
        }
    }
    let mut mat = DenseMatrix::zeros(k + l, k * l);
    for i in 0..k {
        for j in 0..l {
            mat[(i, i * l + j)] = 1.0;
            mat[(k + j, i * l + j)] = 1.0;
        }
    }
    let rhs: Vec<f64> = a.weights().iter().chain(b.weights()).copied().collect();
    let lp = LinearProgram::new(Sense::Min, cost, mat, vec![RowSense::Eq; k + l], rhs);
    let opts = LpOptions {
        optimality_tol: 1e-12,
        feasibility_tol: 1e-10,
        ..LpOptions::default()
    };
    let out = lp::solve_lp_with(&lp, &opts)?;
    match out.status {
        LpStatus::Optimal => Ok(out.value.max(0.0)),
        other => Err(Error::Numeric(format!("transport LP ended {other:?}"))),
    }
}

fn canonical_order(a: &DiscreteMeasure, b: &DiscreteMeasure) -> bool {
    let key = |m: &DiscreteMeasure| {
        let mut v: Vec<f64> = vec![m.len() as f64];
        for (z, p) in m.atoms().iter().zip(m.weights()) {
            v.extend(z);
            v.push(*p);
        }
        v
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    ka.len() <= kb.len()
}

/// Midpoint rule: `resolution^s` cell centres with equal weights.
pub fn discretize(bm: &BoxDensityMeasure, resolution: usize) -> Result<DiscreteMeasure> {
    if resolution == 0 {
        return Err(Error::input("resolution must be at least 1"));
    }
    let s = bm.dim();
    let count = (resolution as u128).checked_pow(s as u32).unwrap_or(u128::MAX);
    if count > MAX_ATOMS as u128 {
        return Err(Error::input(format!(
            "resolution {resolution} in dimension {s} exceeds {MAX_ATOMS} atoms"
        )));
    }
    let count = count as usize;
    let axes: Vec<Vec<f64>> = (0..s)
        .map(|c| {
            let h = (bm.hi[c] - bm.lo[c]) / resolution as f64;
            (0..resolution).map(|k| bm.lo[c] + (k as f64 + 0.5) * h).collect()
        })
        .collect();
    let mut atoms = Vec::with_capacity(count);
    let mut idx = vec![0usize; s];
    for _ in 0..count {
        atoms.push((0..s).map(|c| axes[c][idx[c]]).collect());
        for c in (0..s).rev() {
            idx[c] += 1;
            if idx[c] < resolution {
                break;
            }
            idx[c] = 0;
        }
    }
    let w = 1.0 / count as f64;
    Ok(DiscreteMeasure {
        atoms,
        weights: vec![w; count],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    /// Finite first moments.
    pub a3: bool,
    /// Density bounded below by `r` on `V + B_ρ(0)`.
    pub a4: bool,
    pub density_lower_bound: Option<f64>,
    pub diagnostics: Vec<String>,
}

pub fn check_a3_a4(measure: &Measure, region: &RegionV) -> MeasureReport {
    let mut diagnostics = Vec::new();
    match measure {
        Measure::Discrete(_) => {
            diagnostics.push("discrete measure has no Lebesgue density".into());
            MeasureReport {
                a3: true,
                a4: false,
                density_lower_bound: None,
                diagnostics,
            }
        }
        Measure::UniformBox(b) => {
            if region.validate().is_err() || region.dim() != b.dim() {
                diagnostics.push("region invalid or of the wrong dimension".into());
                return MeasureReport {
                    a3: true,
                    a4: false,
                    density_lower_bound: None,
                    diagnostics,
                };
            }
            let inside =
                (0..b.dim()).all(|c| region.lo[c] - region.rho >= b.lo[c] && region.hi[c] + region.rho <= b.hi[c]);
            if !inside {
                diagnostics.push("V + B_rho(0) leaves the support box".into());
            }
            MeasureReport {
                a3: true,
                a4: inside,
                density_lower_bound: inside.then(|| b.density()),
                diagnostics,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationPlan {
    /// Translate every atom by `v`.
    Shift { v: Vec<f64> },
    /// Add independent `U(-sigma, sigma)` noise to every coordinate.
    Jitter { sigma: f64 },
    /// Draw `n` atoms i.i.d. from the measure, equal weights.
    Resample { n: usize },
}

impl PerturbationPlan {
    pub fn kind(&self) -> &'static str {
        match self {
            PerturbationPlan::Shift { .. } => "shift",
            PerturbationPlan::Jitter { .. } => "jitter",
            PerturbationPlan::Resample { .. } => "resample",
        }
    }

    /// Scalar summary: `‖v‖`, `σ` or `n`.
    pub fn param(&self) -> f64 {
        match self {
            PerturbationPlan::Shift { v } => linalg::norm(v),
            PerturbationPlan::Jitter { sigma } => *sigma,
            PerturbationPlan::Resample { n } => *n as f64,
        }
    }
}

pub fn perturb(mu: &DiscreteMeasure, plan: &PerturbationPlan, seed: u64) -> Result<DiscreteMeasure> {
    match plan {
        PerturbationPlan::Shift { v } => {
            if v.len() != mu.dim() || v.iter().any(|c| !c.is_finite()) {
                return Err(Error::input(
                    "shift vector must be finite and match the measure dimension",
                ));
            }
            let atoms = mu.atoms().iter().map(|a| linalg::add(a, v)).collect();
            DiscreteMeasure::new(atoms, mu.weights().to_vec())
        }
        PerturbationPlan::Jitter { sigma } => {
            if !(*sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::input("jitter amplitude must be finite and nonnegative"));
            }
            if *sigma == 0.0 {
                return Ok(mu.clone());
            }
            let mut r = rng::stream(seed, 0);
            let atoms = mu
                .atoms()
                .iter()
                .map(|a| a.iter().map(|c| c + r.random_range(-*sigma..*sigma)).collect())
                .collect();
            DiscreteMeasure::new(atoms, mu.weights().to_vec())
        }
        PerturbationPlan::Resample { n } => {
            if *n == 0 {
                return Err(Error::input("resample size must be positive"));
            }
            let mut r = rng::stream(seed, 0);
            let cdf: Vec<f64> = mu
                .weights()
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let atoms = (0..*n)
                .map(|_| {
                    let u: f64 = r.random::<f64>() * cdf[cdf.len() - 1];
                    let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    mu.atoms()[k].clone()
                })
                .collect();
            DiscreteMeasure::uniform(atoms)
        }
    }
}
