//! Euclidean projection onto polyhedral cones {θ : a_r·θ ≤ 0 for all r}.
//!
//! The reference solver is Dykstra's cyclic algorithm over the halfspaces,
//! followed by an exact least-squares solve on the identified active face.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_finite, Result, ShapeError};

/// Default convergence tolerance, in units of ||y||∞.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Ordered design points with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Series {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(ShapeError::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(ShapeError::LengthMismatch {
                expected: y.len(),
                got: x.len(),
            });
        }
        check_finite(&x)?;
        check_finite(&y)?;
        if let Some(i) = (1..x.len()).find(|&i| x[i] <= x[i - 1]) {
            return Err(ShapeError::NonIncreasingDesign { index: i });
        }
        Ok(Series { x, y })
    }

    /// Design x_i = i/n, i = 1..n.
    pub fn equispaced(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Series::new(grid(n), y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// True when consecutive gaps agree to a relative 1e-9.
    pub fn is_equispaced(&self) -> bool {
        if self.x.len() < 3 {
            return true;
        }
        let h = (self.x[self.x.len() - 1] - self.x[0]) / (self.x.len() - 1) as f64;
        self.x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300))
    }
}

/// The grid i/n for i = 1..n.
pub fn grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// A sparse homogeneous inequality a·θ ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub coef: Vec<f64>,
}

impl SparseRow {
    pub fn new(idx: Vec<usize>, coef: Vec<f64>) -> Self {
        SparseRow { idx, coef }
    }

    /// θ_i − θ_j ≤ 0.
    pub fn leq(i: usize, j: usize) -> Self {
        SparseRow::new(vec![i, j], vec![1.0, -1.0])
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&i, &c)| c * v[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coef.iter().map(|c| c * c).sum()
    }
}

/// A closed convex cone given by sparse homogeneous inequalities, with
/// optional cone members used to certify a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    pub n: usize,
    pub constraints: Vec<SparseRow>,
    pub probes: Vec<Vec<f64>>,
}

/// Probes are materialized densely, so generators are only attached up to this size.
const MAX_PROBE_DIM: usize = 512;

impl ConeSpec {
    pub fn new(n: usize, constraints: Vec<SparseRow>) -> Result<Self> {
        for row in &constraints {
            if row.idx.len() != row.coef.len() {
                return Err(ShapeError::InvalidParameter(
                    "constraint row index/coefficient lengths differ".into(),
                ));
            }
            if row.idx.iter().any(|&i| i >= n) {
                return Err(ShapeError::InvalidParameter(
                    "constraint row index out of range".into(),
                ));
            }
            if row.norm_sq() == 0.0 || !row.norm_sq().is_finite() {
                return Err(ShapeError::InvalidParameter("zero constraint row".into()));
            }
        }
        Ok(ConeSpec {
            n,
            constraints,
            probes: Vec::new(),
        })
    }

    pub fn with_probes(mut self, probes: Vec<Vec<f64>>) -> Self {
        self.probes = probes;
        self
    }

    /// Monotone cone θ_1 ≤ … ≤ θ_n, with its n+1 generators as probes.
    pub fn isotonic(n: usize) -> Self {
        let rows = (0..n.saturating_sub(1)).map(|i| SparseRow::leq(i, i + 1)).collect();
        let mut cone = ConeSpec::new(n, rows).expect("valid rows");
        if n <= MAX_PROBE_DIM {
            let mut probes = vec![vec![1.0; n], vec![-1.0; n]];
            for j in 1..n {
                probes.push((0..n).map(|i| if i >= j { 1.0 } else { 0.0 }).collect());
            }
            cone.probes = probes;
        }
        cone
    }

    /// Convex sequences on design x via divided differences, with the
    /// generators ±1, ±x and hinges (x − x_j)_+ as probes.
    pub fn convex(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if let Some(i) = (1..n).find(|&i| x[i] <= x[i - 1]) {
            return Err(ShapeError::NonIncreasingDesign { index: i });
        }
        let mut rows = Vec::new();
        for i in 1..n.saturating_sub(1) {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            // −(θ_{i+1}−θ_i)/h1 + (θ_i−θ_{i−1})/h0 ≤ 0
            rows.push(SparseRow::new(
                vec![i - 1, i, i + 1],
                vec![-1.0 / h0, 1.0 / h0 + 1.0 / h1, -1.0 / h1],
            ));
        }
        let mut cone = ConeSpec::new(n, rows)?;
        if n <= MAX_PROBE_DIM {
            let mut probes = vec![
                vec![1.0; n],
                vec![-1.0; n],
                x.to_vec(),
                x.iter().map(|v| -v).collect(),
            ];
            for j in 1..n.saturating_sub(1) {
                probes.push(x.iter().map(|&v| (v - x[j]).max(0.0)).collect());
            }
            cone.probes = probes;
        }
        Ok(cone)
    }

    /// {θ : ∇^k θ ≥ 0} on an equispaced design.
    pub fn k_monotone(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(ShapeError::InvalidParameter("k must be at least 1".into()));
        }
        if k >= n {
            return Err(ShapeError::BadOrder { k, n });
        }
        let binom: Vec<f64> = (0..=k).map(|m| binomial(k, m)).collect();
        let rows = (0..n - k)
            .map(|i| {
                let coef = (0..=k)
                    .map(|m| {
                        let sign = if (k - m) % 2 == 0 { 1.0 } else { -1.0 };
                        -sign * binom[m]
                    })
                    .collect();
                SparseRow::new((i..=i + k).collect(), coef)
            })
            .collect();
        let mut cone = ConeSpec::new(n, rows)?;
        if n <= MAX_PROBE_DIM {
            let mut probes = Vec::new();
            // polynomials of degree < k lie in the lineality space
            for d in 0..k.min(4) {
                let p: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 / n as f64).powi(d as i32)).collect();
                probes.push(p.iter().map(|v| -v).collect());
                probes.push(p);
            }
            cone.probes = probes;
        }
        Ok(cone)
    }

    /// Order cone θ_i ≤ θ_j for each listed pair (i, j).
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let rows = pairs.iter().map(|&(i, j)| SparseRow::leq(i, j)).collect();
        ConeSpec::new(n, rows)
    }

    /// Largest constraint value max_r a_r·θ (≤ 0 means feasible).
    pub fn max_violation(&self, theta: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|r| r.dot(theta) / r.norm_sq().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        self.max_violation(theta) <= tol
    }
}

fn binomial(k: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// A maximal run of indices sharing one fitted value; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Result of a projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub blocks: Vec<Block>,
    pub knots: Vec<usize>,
    pub sse: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

pub fn sse(y: &[f64], theta: &[f64]) -> f64 {
    y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Runs of equal values, equality judged to `tol` relative to the largest magnitude.
pub fn blocks_of(theta: &[f64], tol: f64) -> Vec<Block> {
    let scale = theta.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut out: Vec<Block> = Vec::new();
    for (i, &v) in theta.iter().enumerate() {
        match out.last_mut() {
            Some(b) if (v - b.value).abs() <= tol * scale => b.end = i + 1,
            _ => out.push(Block {
                start: i,
                end: i + 1,
                value: v,
            }),
        }
    }
    out
}

/// Characterization check: max(0, max_p ⟨y−θ̂, p−θ̂⟩, |⟨y−θ̂, θ̂⟩|).
pub fn verify_projection(y: &[f64], theta_hat: &[f64], probes: &[Vec<f64>]) -> f64 {
    let r: Vec<f64> = y.iter().zip(theta_hat).map(|(a, b)| a - b).collect();
    let r_theta: f64 = r.iter().zip(theta_hat).map(|(a, b)| a * b).sum();
    let mut worst = r_theta.abs();
    for p in probes {
        let v: f64 = r.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - r_theta;
        worst = worst.max(v);
    }
    worst.max(0.0)
}

/// Projects y onto the cone. `max_iter` counts full sweeps over the rows.
pub fn project_cone(y: &[f64], cone: &ConeSpec, tol: f64, max_iter: usize) -> Result<FitResult> {
    if y.len() != cone.n {
        return Err(ShapeError::LengthMismatch {
            expected: cone.n,
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    check_finite(y)?;
    if !(tol > 0.0) {
        return Err(ShapeError::InvalidParameter("tol must be positive".into()));
    }
    if cone.constraints.iter().all(|r| r.dot(y) <= 0.0) {
        return Ok(finish(y, y.to_vec(), cone, 0, Vec::new()));
    }
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let rows: Vec<SparseRow> = cone
        .constraints
        .iter()
        .map(|r| {
            let nrm = r.norm_sq().sqrt();
            SparseRow::new(r.idx.clone(), r.coef.iter().map(|c| c / nrm).collect())
        })
        .collect();

    let (x, sweeps, converged, viol, gap) = dykstra(&u, &rows, tol, max_iter);
    let polished = polish(&u, &rows, &x, tol);
    let accepted = match polished {
        Some(p) => p,
        None if converged => x,
        None => {
            return Err(ShapeError::NonConvergence {
                iterations: sweeps,
                violation: viol,
                gap,
                best: x.iter().map(|v| v * scale).collect(),
            })
        }
    };
    let theta: Vec<f64> = accepted.iter().map(|v| v * scale).collect();
    Ok(finish(y, theta, cone, sweeps, Vec::new()))
}

fn finish(y: &[f64], theta: Vec<f64>, cone: &ConeSpec, iterations: usize, knots: Vec<usize>) -> FitResult {
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let probes: Vec<Vec<f64>> = cone
        .probes
        .iter()
        .map(|p| {
            let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pn == 0.0 {
                p.clone()
            } else {
                p.iter().map(|v| v * ynorm / pn).collect()
            }
        })
        .collect();
    FitResult {
        blocks: blocks_of(&theta, 1e-9),
        knots,
        sse: sse(y, &theta),
        kkt_residual: verify_projection(y, &theta, &probes),
        iterations,
        theta_hat: theta,
    }
}

/// Cyclic Dykstra over unit-norm halfspaces. Returns
/// (iterate, sweeps, converged, violation, gap).
fn dykstra(u: &[f64], rows: &[SparseRow], tol: f64, max_iter: usize) -> (Vec<f64>, usize, bool, f64, f64) {
    let mut x = u.to_vec();
    let mut c = vec![0.0; rows.len()];
    let mut prev = x.clone();
    let (mut viol, mut gap) = (f64::INFINITY, f64::INFINITY);
    for sweep in 1..=max_iter.max(1) {
        prev.copy_from_slice(&x);
        let mut dual_gap = 0.0f64;
        for (r, row) in rows.iter().enumerate() {
            let d = row.dot(&x) + c[r];
            let new_c = d.max(0.0);
            let delta = c[r] - new_c;
            dual_gap = dual_gap.max(delta.abs());
            if delta != 0.0 {
                for (&i, &a) in row.idx.iter().zip(&row.coef) {
                    x[i] += delta * a;
                }
            }
            c[r] = new_c;
        }
        gap = x.iter().zip(&prev).fold(dual_gap, |m, (a, b)| m.max((a - b).abs()));
        viol = rows.iter().map(|r| r.dot(&x)).fold(0.0, f64::max);
        if viol <= tol && gap <= tol {
            return (x, sweep, true, viol, gap);
        }
    }
    (x, max_iter.max(1), false, viol, gap)
}

/// Exact refinement of an approximate projection `x` of `y` onto `cone`,
/// returning the exact projection when the face of `x` is identified correctly.
pub(crate) fn refine(y: &[f64], cone: &ConeSpec, x: &[f64], tol: f64) -> Option<Vec<f64>> {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Some(vec![0.0; y.len()]);
    }
    let u: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let xs: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let rows: Vec<SparseRow> = cone
        .constraints
        .iter()
        .map(|r| {
            let nrm = r.norm_sq().sqrt();
            SparseRow::new(r.idx.clone(), r.coef.iter().map(|c| c / nrm).collect())
        })
        .collect();
    polish(&u, &rows, &xs, tol).map(|t| t.into_iter().map(|v| v * scale).collect())
}

/// Largest face dimension for which the exact refinement is attempted.
const POLISH_MAX_DIM: usize = 400;

/// Exact projection onto the span of the face identified from `x`; accepted
/// only when the result is feasible and the multipliers are nonnegative.
/// Activity thresholds are tried from loose to tight.
fn polish(u: &[f64], rows: &[SparseRow], x: &[f64], tol: f64) -> Option<Vec<f64>> {
    if u.len() > POLISH_MAX_DIM {
        return None;
    }
    let first = (tol.sqrt() * 10.0).max(1e-7);
    let mut snaps = vec![first];
    snaps.extend([1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10].into_iter().filter(|&s| s < first));
    if let Some(t) = snaps.into_iter().find_map(|snap| polish_face(u, rows, x, snap)) {
        return Some(t);
    }
    // dependent active rows: solve the dual exactly over a superset of the face
    let near: Vec<&SparseRow> = rows.iter().filter(|r| r.dot(x) >= -1e-3).collect();
    if let Some(t) = dual_nnls(u, &near).filter(|t| rows.iter().all(|r| r.dot(t) <= 1e-11)) {
        return Some(t);
    }
    if rows.len() <= POLISH_MAX_DIM {
        let all: Vec<&SparseRow> = rows.iter().collect();
        return dual_nnls(u, &all).filter(|t| rows.iter().all(|r| r.dot(t) <= 1e-11));
    }
    None
}

/// Projection of u onto {θ : aθ ≤ 0 for the given rows}, as u − Aᵀλ with λ
/// the Lawson–Hanson solution of min_{λ ≥ 0} ||Aᵀλ − u||² in Gram form.
fn dual_nnls(u: &[f64], rows: &[&SparseRow]) -> Option<Vec<f64>> {
    let (m, n) = (rows.len(), u.len());
    if m == 0 || m > POLISH_MAX_DIM {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(m, n);
    for (r, row) in rows.iter().enumerate() {
        for (&i, &c) in row.idx.iter().zip(&row.coef) {
            a[(r, i)] += c;
        }
    }
    let uvec = nalgebra::DVector::from_column_slice(u);
    let g = &a * a.transpose();
    let b = &a * &uvec;
    let eps = 1e-13;
    let mut lambda = nalgebra::DVector::<f64>::zeros(m);
    let mut passive = vec![false; m];
    let solve = |set: &[usize]| -> Option<nalgebra::DVector<f64>> {
        let k = set.len();
        let gp = DMatrix::from_fn(k, k, |i, j| g[(set[i], set[j])]);
        let bp = nalgebra::DVector::from_fn(k, |i, _| b[set[i]]);
        match gp.clone().cholesky() {
            Some(ch) => Some(ch.solve(&bp)),
            None => gp.svd(true, true).solve(&bp, 1e-14).ok(),
        }
    };
    for _ in 0..3 * m + 10 {
        let w = &b - &g * &lambda;
        let next = (0..m).filter(|&j| !passive[j] && w[j] > eps).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else {
            // complementary slackness certifies the passive solve
            if (0..m).any(|i| passive[i] && w[i].abs() > 1e-10) {
                return None;
            }
            let theta = &uvec - a.transpose() * &lambda;
            return Some(theta.as_slice().to_vec());
        };
        passive[j] = true;
        loop {
            let set: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let z = solve(&set)?;
            if z.iter().all(|&v| v > 0.0) {
                lambda.fill(0.0);
                for (i, &idx) in set.iter().enumerate() {
                    lambda[idx] = z[i];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (i, &idx) in set.iter().enumerate() {
                if z[i] <= 0.0 {
                    alpha = alpha.min(lambda[idx] / (lambda[idx] - z[i]));
                }
            }
            for (i, &idx) in set.iter().enumerate() {
                lambda[idx] += alpha * (z[i] - lambda[idx]);
                if lambda[idx] <= 1e-15 {
                    lambda[idx] = 0.0;
                    passive[idx] = false;
                }
            }
        }
    }
    None
}

fn polish_face(u: &[f64], rows: &[SparseRow], x: &[f64], snap: f64) -> Option<Vec<f64>> {
    let n = u.len();
    let active: Vec<&SparseRow> = rows.iter().filter(|r| r.dot(x) >= -snap).collect();
    if active.is_empty() {
        return if rows.iter().all(|r| r.dot(u) <= 1e-12) {
            Some(u.to_vec())
        } else {
            None
        };
    }
    if active.len() > POLISH_MAX_DIM {
        return None;
    }
    let m = active.len();
    let mut a = DMatrix::<f64>::zeros(m, n);
    for (r, row) in active.iter().enumerate() {
        for (&i, &c) in row.idx.iter().zip(&row.coef) {
            a[(r, i)] += c;
        }
    }
    // u − θ = Aᵀλ with θ in the null space of A
    let at = a.transpose();
    let svd = at.clone().svd(true, true);
    let uvec = nalgebra::DVector::from_column_slice(u);
    let lambda = svd.solve(&uvec, 1e-12).ok()?;
    let theta = &uvec - &at * &lambda;
    if (&a * &theta).amax() > 1e-12 {
        return None;
    }
    if lambda.iter().any(|&l| l < -1e-10) {
        return None;
    }
    if rows.iter().any(|r| r.dot(theta.as_slice()) > 1e-12) {
        return None;
    }
    Some(theta.as_slice().to_vec())
}
