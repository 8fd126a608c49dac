//! Monte Carlo risk estimation, closed-form bound right-hand sides, oracle
//! estimators, statistical dimension, and rate slopes.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::io::Write;

use rand::Rng;
use rand_distr::{StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Result, ShapeError};
use crate::inference::rep_rng;
use crate::isotonic::isotonic_fitted;
use crate::projection::Series;
use crate::shapes::{fit_convex1d, fit_matrix_isotonic, fit_unimodal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Isotonic,
    Unimodal,
    Convex,
    Matrix,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Isotonic => "isotonic",
            Family::Unimodal => "unimodal",
            Family::Convex => "convex",
            Family::Matrix => "matrix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Gaussian,
    /// ±1 with equal probability.
    Rademacher,
    /// Student t with 5 degrees of freedom, scaled to unit variance.
    T5,
}

impl ErrorLaw {
    pub fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Gaussian => rng.sample(StandardNormal),
            ErrorLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ErrorLaw::T5 => {
                let t = StudentT::new(5.0).expect("five degrees of freedom");
                rng.sample(t) * (3.0f64 / 5.0).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// The least squares estimator of the scenario family.
    Lse,
    /// Block means over the constant runs of θ*.
    Oracle,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Lse => "lse",
            Estimator::Oracle => "oracle",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Named θ* generators. One-dimensional truths use the design x_i = (i−1)/(n−1);
/// matrix truths live on an m×m grid with m² = n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truth {
    Constant {
        #[serde(default)]
        value: f64,
    },
    /// θ_i = V·x_i.
    Ramp { v: f64 },
    /// k nearly equal blocks with levels 0, h, …, (k−1)h.
    Blocks {
        k: usize,
        #[serde(default = "one")]
        height: f64,
    },
    /// k unit-step blocks on the first half, then a strictly increasing
    /// stretch of variation V.
    Hybrid { k: usize, v: f64 },
    /// θ_i = c·(x_i − 1/2)².
    ConvexQuadratic {
        #[serde(default = "one")]
        curvature: f64,
    },
    /// θ_i = a + b·x_i.
    Affine { a: f64, b: f64 },
    /// θ_i = V·|2x_i − 1|.
    UnimodalValley { v: f64 },
    /// θ_ij = V·(i + j)/(2(m − 1)), 0-based.
    MatrixRamp { v: f64 },
    MatrixConstant {
        #[serde(default)]
        value: f64,
    },
}

impl Truth {
    fn is_matrix(&self) -> bool {
        matches!(self, Truth::MatrixRamp { .. } | Truth::MatrixConstant { .. })
    }

    /// θ* of length n (row-major for matrix truths).
    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        let x = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        Ok(match *self {
            Truth::Constant { value } => vec![value; n],
            Truth::Ramp { v } => (0..n).map(|i| v * x(i)).collect(),
            Truth::Blocks { k, height } => {
                if k == 0 || k > n {
                    return Err(ShapeError::InvalidParameter(format!("cannot form {k} blocks of {n} points")));
                }
                block_lengths_equal(n, k)
                    .iter()
                    .enumerate()
                    .flat_map(|(j, &l)| std::iter::repeat_n(j as f64 * height, l))
                    .collect()
            }
            Truth::Hybrid { k, v } => {
                let m = n / 2;
                if k == 0 || k > m {
                    return Err(ShapeError::InvalidParameter(format!("cannot form {k} blocks of {m} points")));
                }
                let mut out: Vec<f64> = block_lengths_equal(m, k)
                    .iter()
                    .enumerate()
                    .flat_map(|(j, &l)| std::iter::repeat_n(j as f64, l))
                    .collect();
                let rest = n - m;
                out.extend((1..=rest).map(|i| (k - 1) as f64 + v * i as f64 / rest as f64));
                out
            }
            Truth::ConvexQuadratic { curvature } => (0..n).map(|i| curvature * (x(i) - 0.5).powi(2)).collect(),
            Truth::Affine { a, b } => (0..n).map(|i| a + b * x(i)).collect(),
            Truth::UnimodalValley { v } => (0..n).map(|i| v * (2.0 * x(i) - 1.0).abs()).collect(),
            Truth::MatrixRamp { v } => {
                let m = square_side(n)?;
                let d = if m == 1 { 1.0 } else { 2.0 * (m - 1) as f64 };
                (0..n).map(|c| v * ((c / m) + (c % m)) as f64 / d).collect()
            }
            Truth::MatrixConstant { value } => {
                square_side(n)?;
                vec![value; n]
            }
        })
    }
}

/// k contiguous lengths summing to n, differing by at most one.
pub fn block_lengths_equal(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| (j + 1) * n / k - j * n / k).collect()
}

fn square_side(n: usize) -> Result<usize> {
    let m = (n as f64).sqrt().round() as usize;
    if m * m != n || m == 0 {
        return Err(ShapeError::InvalidParameter(format!("matrix scenarios need a square n, got {n}")));
    }
    Ok(m)
}

fn default_law() -> ErrorLaw {
    ErrorLaw::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub family: Family,
    pub truth: Truth,
    /// Number of observations (cells for matrix scenarios).
    pub n: usize,
    pub sigma: f64,
    #[serde(default = "default_law")]
    pub error_law: ErrorLaw,
    /// Set when θ* is deliberately outside the family.
    #[serde(default)]
    pub misspecified: bool,
}

impl Scenario {
    pub fn new(id: &str, family: Family, truth: Truth, n: usize, sigma: f64, error_law: ErrorLaw) -> Self {
        Scenario {
            id: id.to_string(),
            family,
            truth,
            n,
            sigma,
            error_law,
            misspecified: false,
        }
    }

    /// Copy with a different sample size.
    pub fn with_n(&self, n: usize) -> Self {
        Scenario { n, ..self.clone() }
    }

    /// Generates θ* and checks it against the family.
    pub fn theta_star(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(ShapeError::EmptyInput);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ShapeError::InvalidParameter(format!("sigma = {}", self.sigma)));
        }
        if self.truth.is_matrix() != (self.family == Family::Matrix) {
            return Err(ShapeError::FamilyMismatch(format!(
                "truth {:?} does not fit family {}",
                self.truth,
                self.family.name()
            )));
        }
        if self.family == Family::Convex && self.n < 3 {
            return Err(ShapeError::InvalidParameter("convex scenarios need n >= 3".into()));
        }
        let theta = self.truth.generate(self.n)?;
        if !self.misspecified && !in_family(&theta, self.family) {
            return Err(ShapeError::FamilyMismatch(format!(
                "truth lies outside the {} family",
                self.family.name()
            )));
        }
        Ok(theta)
    }

    /// (θ*_n − θ*_1, max − min).
    pub fn variations(&self) -> Result<(f64, f64)> {
        let t = self.theta_star()?;
        let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        Ok((t[t.len() - 1] - t[0], hi - lo))
    }
}

const FAMILY_TOL: f64 = 1e-12;

fn scale_of(t: &[f64]) -> f64 {
    1.0 + t.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn is_isotonic(t: &[f64]) -> bool {
    let tol = FAMILY_TOL * scale_of(t);
    t.windows(2).all(|w| w[1] >= w[0] - tol)
}

fn in_family(t: &[f64], family: Family) -> bool {
    let tol = FAMILY_TOL * scale_of(t);
    match family {
        Family::Isotonic => is_isotonic(t),
        Family::Convex => t.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -tol),
        Family::Unimodal => {
            let mode = (0..t.len()).fold(0, |m, i| if t[i] < t[m] { i } else { m });
            t[..=mode].windows(2).all(|w| w[1] <= w[0] + tol) && is_isotonic(&t[mode..])
        }
        Family::Matrix => {
            let Ok(m) = square_side(t.len()) else { return false };
            (0..m).all(|i| (1..m).all(|j| t[i * m + j] >= t[i * m + j - 1] - tol))
                && (1..m).all(|i| (0..m).all(|j| t[i * m + j] >= t[(i - 1) * m + j] - tol))
        }
    }
}

/// Lengths of maximal runs of exactly equal values.
pub fn constant_runs(t: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, &v) in t.iter().enumerate() {
        if i > 0 && t[i - 1] == v {
            *out.last_mut().unwrap() += 1;
        } else {
            out.push(1);
        }
    }
    out
}

/// Blockwise means of y over the contiguous blocks with the given lengths.
pub fn oracle_fit(y: &[f64], lengths: &[usize]) -> Result<Vec<f64>> {
    if lengths.contains(&0) || lengths.iter().sum::<usize>() != y.len() {
        return Err(ShapeError::BadPartition);
    }
    let mut out = Vec::with_capacity(y.len());
    let mut start = 0;
    for &l in lengths {
        let m = y[start..start + l].iter().sum::<f64>() / l as f64;
        out.extend(std::iter::repeat_n(m, l));
        start += l;
    }
    Ok(out)
}

/// Fit of `estimator` to y under `family`; `theta_star` supplies the oracle's blocks.
pub fn fit_family(y: &[f64], family: Family, estimator: Estimator, theta_star: &[f64]) -> Result<Vec<f64>> {
    match (estimator, family) {
        (Estimator::Lse, Family::Isotonic) => Ok(isotonic_fitted(y)),
        (Estimator::Lse, Family::Unimodal) => Ok(fit_unimodal(y)?.values),
        (Estimator::Lse, Family::Convex) => Ok(fit_convex1d(&Series::equispaced(y.to_vec())?)?.theta_hat),
        (Estimator::Lse, Family::Matrix) => {
            let m = square_side(y.len())?;
            let rows: Vec<Vec<f64>> = y.chunks(m).map(|r| r.to_vec()).collect();
            Ok(fit_matrix_isotonic(&rows)?.theta_hat.concat())
        }
        (Estimator::Oracle, Family::Isotonic | Family::Unimodal) => oracle_fit(y, &constant_runs(theta_star)),
        (Estimator::Oracle, f) => Err(ShapeError::FamilyMismatch(format!(
            "the block oracle is not defined for the {} family",
            f.name()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub p: f64,
    pub risk: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Kahan-compensated sum in slice order.
pub fn kahan_sum(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in v {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Mean and standard error of the mean of `v`.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = kahan_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (kahan_sum(&dev) / (n - 1.0) / n).sqrt())
}

/// Per-replication losses (1/n)·Σ|θ̂ − θ*|^p.
pub fn mc_losses(sc: &Scenario, estimator: Estimator, p: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(ShapeError::BadExponent(p));
    }
    if reps == 0 {
        return Err(ShapeError::TooFewReplications { min: 1, got: 0 });
    }
    let theta = sc.theta_star()?;
    if estimator == Estimator::Oracle && !matches!(sc.family, Family::Isotonic | Family::Unimodal) {
        return Err(ShapeError::FamilyMismatch(format!(
            "the block oracle is not defined for the {} family",
            sc.family.name()
        )));
    }
    let n = theta.len();
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rep_rng(seed, r);
            let y: Vec<f64> = theta.iter().map(|t| t + sc.sigma * sc.error_law.sample(&mut rng)).collect();
            let fit = fit_family(&y, sc.family, estimator, &theta)?;
            Ok(fit.iter().zip(&theta).map(|(a, b)| (a - b).abs().powf(p)).sum::<f64>() / n as f64)
        })
        .collect()
}

/// Monte Carlo ℓ_p risk of `estimator` on `sc`.
pub fn mc_risk(sc: &Scenario, estimator: Estimator, p: f64, reps: usize, seed: u64) -> Result<RiskEstimate> {
    let losses = mc_losses(sc, estimator, p, reps, seed)?;
    let (risk, se) = mean_se(&losses);
    Ok(RiskEstimate { p, risk, se, reps, seed })
}

/// E|η|^p for standard normal η.
pub fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// (E|η|^p)·σ^p·(1/n)·Σ n_i^{(2−p)/2}.
pub fn lp_oracle_risk(lengths: &[usize], sigma: f64, p: f64, n: usize) -> Result<f64> {
    if !(p > 0.0) {
        return Err(ShapeError::BadExponent(p));
    }
    let s: f64 = lengths.iter().map(|&l| (l as f64).powf((2.0 - p) / 2.0)).sum();
    Ok(normal_abs_moment(p) * sigma.powf(p) * s / n as f64)
}

/// Range of the residual of θ after projecting out affine sequences.
pub fn affine_residual_range(t: &[f64]) -> f64 {
    let n = t.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = t.iter().sum::<f64>() / n;
    let sxx: f64 = (0..t.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let sxy: f64 = t.iter().enumerate().map(|(i, &v)| (i as f64 - xm) * (v - ym)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r: Vec<f64> = t.iter().enumerate().map(|(i, &v)| v - ym - b * (i as f64 - xm)).collect();
    let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let scale = scale_of(t);
    let range = hi - lo;
    if range <= 1e-12 * scale {
        0.0
    } else {
        range
    }
}

/// Structural part of the worst-case bound of the family, with constants set to 1.
pub fn worst_case_bound_rhs(sc: &Scenario) -> Result<f64> {
    let t = sc.theta_star()?;
    let n = t.len() as f64;
    let s2 = sc.sigma * sc.sigma;
    let (endpoint, range) = sc.variations()?;
    Ok(match sc.family {
        Family::Isotonic => (s2 * endpoint / n).powf(2.0 / 3.0) + s2 * (std::f64::consts::E * n).ln() / n,
        Family::Convex => (s2 * affine_residual_range(&t).sqrt() / n).powf(0.8) + s2 * n.powf(-0.8),
        Family::Matrix => {
            let l = n.ln();
            (s2 * endpoint * endpoint / n).sqrt() * l.powi(4) + s2 / n * l.powi(8)
        }
        Family::Unimodal => (s2 * range / n).powf(2.0 / 3.0) + s2 * n.powf(-2.0 / 3.0),
    })
}

fn kterm(k: f64, n: f64) -> f64 {
    k / n * (std::f64::consts::E * n / k).ln()
}

/// Greedy merging of adjacent blocks of a monotone or unimodal block-mean
/// sequence: returns (k, ||θ* − θ_k||²) for every k reached, starting from the
/// given blocks.
fn greedy_merge_path(t: &[f64], lengths: &[usize]) -> Vec<(usize, f64)> {
    let mut sum: Vec<f64> = Vec::with_capacity(lengths.len());
    let mut w: Vec<f64> = Vec::with_capacity(lengths.len());
    let mut sq = 0.0;
    let mut start = 0;
    for &l in lengths {
        let s: f64 = t[start..start + l].iter().sum();
        sq += t[start..start + l].iter().map(|v| v * v).sum::<f64>();
        sum.push(s);
        w.push(l as f64);
        start += l;
    }
    let mut sse = (sq - sum.iter().zip(&w).map(|(s, w)| s * s / w).sum::<f64>()).max(0.0);
    let k0 = sum.len();
    let mut alive = vec![true; k0];
    let mut next: Vec<usize> = (1..=k0).collect();
    let mut prev: Vec<Option<usize>> = (0..k0).map(|i| i.checked_sub(1)).collect();
    let mut version = vec![0u64; k0];
    let cost = |sum: &[f64], w: &[f64], a: usize, b: usize| {
        let d = sum[a] / w[a] - sum[b] / w[b];
        w[a] * w[b] / (w[a] + w[b]) * d * d
    };
    struct Key(f64);
    impl PartialEq for Key {
        fn eq(&self, o: &Self) -> bool {
            self.cmp(o).is_eq()
        }
    }
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }
    let mut heap = BinaryHeap::new();
    for a in 0..k0.saturating_sub(1) {
        heap.push(Reverse((Key(cost(&sum, &w, a, a + 1)), a, version[a], version[a + 1])));
    }
    let mut path = vec![(k0, sse)];
    let mut k = k0;
    while let Some(Reverse((Key(c), a, va, vb))) = heap.pop() {
        let b = next[a];
        if !alive[a] || b >= k0 || !alive[b] || version[a] != va || version[b] != vb {
            continue;
        }
        sum[a] += sum[b];
        w[a] += w[b];
        alive[b] = false;
        next[a] = next[b];
        if next[a] < k0 {
            prev[next[a]] = Some(a);
        }
        version[a] += 1;
        sse += c;
        k -= 1;
        path.push((k, sse));
        if let Some(p) = prev[a] {
            heap.push(Reverse((Key(cost(&sum, &w, p, a)), p, version[p], version[a])));
        }
        if next[a] < k0 {
            let nx = next[a];
            heap.push(Reverse((Key(cost(&sum, &w, a, nx)), a, version[a], version[nx])));
        }
    }
    path
}

/// Convex interpolants of `base` at q+1 equispaced knots: (q, ||θ* − θ_q||²).
fn convex_interpolant_path(t: &[f64], base: &[f64]) -> Vec<(usize, f64)> {
    let n = t.len();
    let mut qs: BTreeSet<usize> = (1..=n.saturating_sub(1).min(64)).collect();
    let mut q = 64;
    while q < n - 1 {
        qs.insert(q);
        q *= 2;
    }
    qs.insert(n - 1);
    qs.into_iter()
        .map(|q| {
            let knots: Vec<usize> = (0..=q).map(|j| j * (n - 1) / q).collect();
            let mut sse = 0.0;
            for w in knots.windows(2) {
                let (a, b) = (w[0], w[1]);
                for i in a..=b {
                    if i == b && b != n - 1 {
                        continue;
                    }
                    let v = base[a] + (base[b] - base[a]) * (i - a) as f64 / (b - a) as f64;
                    sse += (t[i] - v).powi(2);
                }
            }
            (q, sse)
        })
        .collect()
}

/// Candidate-restricted adaptive bound inf_θ {||θ* − θ||²/n + c·σ²·pen(θ)}.
///
/// Isotonic: c = 1 when `sharp`, else 4, pen = (k/n)log(en/k), candidates are
/// greedy block merges of the isotonic projection of θ*. Unimodal: penalty in
/// k + 1, constant 1. Convex: c = 8 over q affine pieces, candidates are
/// equispaced convex interpolants of the convex projection. Matrix:
/// pen = (k/n)(log n)^8 with constant 1, candidates are θ* (k bounded by row
/// or column run counts), row means, column means and the grand mean.
pub fn adaptive_bound_rhs(theta_star: &[f64], sigma: f64, family: Family, sharp: bool) -> Result<f64> {
    if theta_star.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    crate::error::check_finite(theta_star)?;
    let n = theta_star.len() as f64;
    let s2 = sigma * sigma;
    let best = |path: Vec<(usize, f64)>, pen: &dyn Fn(f64) -> f64| {
        path.into_iter()
            .map(|(k, sse)| sse / n + pen(k as f64))
            .fold(f64::INFINITY, f64::min)
    };
    Ok(match family {
        Family::Isotonic => {
            let c = if sharp { 1.0 } else { 4.0 };
            let proj = isotonic_fitted(theta_star);
            let mut path = greedy_merge_path(theta_star, &constant_runs(&proj));
            if is_isotonic(theta_star) {
                path.push((constant_runs(theta_star).len(), 0.0));
            }
            best(path, &|k| c * s2 * kterm(k, n))
        }
        Family::Unimodal => {
            let proj = fit_unimodal(theta_star)?.values;
            best(greedy_merge_path(theta_star, &constant_runs(&proj)), &|k| s2 * kterm(k + 1.0, n))
        }
        Family::Convex => {
            if theta_star.len() < 3 {
                return Err(ShapeError::InvalidParameter("convex bounds need n >= 3".into()));
            }
            let fit = fit_convex1d(&Series::equispaced(theta_star.to_vec())?)?;
            let exact_sse: f64 = fit.theta_hat.iter().zip(theta_star).map(|(a, b)| (a - b).powi(2)).sum();
            let mut path = convex_interpolant_path(theta_star, &fit.theta_hat);
            path.push((fit.knots.len() + 1, exact_sse));
            best(path, &|q| 8.0 * s2 * kterm(q, n))
        }
        Family::Matrix => {
            let m = square_side(theta_star.len())?;
            let l8 = n.ln().powi(8);
            let pen = |k: f64| s2 * k / n * l8;
            let t = theta_star;
            let mut cands: Vec<(usize, f64)> = Vec::new();
            if in_family(t, Family::Matrix) {
                let rows: usize = t.chunks(m).map(|r| constant_runs(r).len()).sum();
                let cols: usize = (0..m)
                    .map(|j| constant_runs(&(0..m).map(|i| t[i * m + j]).collect::<Vec<_>>()).len())
                    .sum();
                cands.push((rows.min(cols), 0.0));
            }
            let mean = t.iter().sum::<f64>() / n;
            cands.push((1, t.iter().map(|v| (v - mean).powi(2)).sum()));
            let row_means: Vec<f64> = t.chunks(m).map(|r| r.iter().sum::<f64>() / m as f64).collect();
            let col_means: Vec<f64> = (0..m).map(|j| (0..m).map(|i| t[i * m + j]).sum::<f64>() / m as f64).collect();
            for (means, by_row) in [(row_means, true), (col_means, false)] {
                let proj = isotonic_fitted(&means);
                let k = constant_runs(&proj).len();
                let sse: f64 = (0..m * m)
                    .map(|c| {
                        let v = if by_row { proj[c / m] } else { proj[c % m] };
                        (t[c] - v).powi(2)
                    })
                    .sum();
                cands.push((k, sse));
            }
            best(cands, &pen)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeTag {
    /// All of R^n.
    Full,
    /// Nondecreasing sequences.
    Isotonic,
    /// Nonnegative orthant.
    Orthant,
}

/// Monte Carlo E||Π_K(Z)||² for standard Gaussian Z.
pub fn statistical_dimension(cone: ConeTag, n: usize, reps: usize, seed: u64) -> Result<RiskEstimate> {
    if n == 0 {
        return Err(ShapeError::EmptyInput);
    }
    if reps == 0 {
        return Err(ShapeError::TooFewReplications { min: 1, got: 0 });
    }
    let vals: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rep_rng(seed, r);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            match cone {
                ConeTag::Full => z.iter().map(|v| v * v).sum(),
                ConeTag::Orthant => z.iter().map(|v| v.max(0.0).powi(2)).sum(),
                ConeTag::Isotonic => isotonic_fitted(&z).iter().map(|v| v * v).sum(),
            }
        })
        .collect();
    let (risk, se) = mean_se(&vals);
    Ok(RiskEstimate { p: 2.0, risk, se, reps, seed })
}

/// Block lengths of an isotonic θ; the tangent cone at θ is the product of
/// monotone cones over these blocks.
pub fn tangent_cone_isotonic(theta: &[f64]) -> Result<Vec<usize>> {
    if theta.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    if theta.windows(2).any(|w| w[1] < w[0]) {
        return Err(ShapeError::NotIsotonic);
    }
    Ok(constant_runs(theta))
}

/// Projection onto I_{n₁}×…×I_{n_k}: blockwise isotonic fits.
pub fn project_tangent(lengths: &[usize], z: &[f64]) -> Result<Vec<f64>> {
    if lengths.contains(&0) || lengths.iter().sum::<usize>() != z.len() {
        return Err(ShapeError::BadPartition);
    }
    let mut out = Vec::with_capacity(z.len());
    let mut start = 0;
    for &l in lengths {
        out.extend(isotonic_fitted(&z[start..start + l]));
        start += l;
    }
    Ok(out)
}

/// Greedy partition with within-block variation at most δ:
/// (V_π, k(π)), V_π measured as the largest θ_last − θ_first over blocks.
fn delta_partition(t: &[f64], delta: f64) -> (f64, usize) {
    let (mut vmax, mut k, mut s) = (0.0f64, 1usize, 0usize);
    for i in 1..t.len() {
        if t[i] - t[s] > delta {
            vmax = vmax.max(t[i - 1] - t[s]);
            s = i;
            k += 1;
        }
    }
    vmax = vmax.max(t[t.len() - 1] - t[s]);
    (vmax, k)
}

/// min over δ-partitions of V_π^p + σ^p (k(π)/n)^{min(p,2)/2}, C_p = 1.
pub fn pro_bound_rhs(theta_star: &[f64], sigma: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p != 2.0 && p.is_finite()) {
        return Err(ShapeError::BadExponent(p));
    }
    if theta_star.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    if !is_isotonic(theta_star) {
        return Err(ShapeError::NotIsotonic);
    }
    let n = theta_star.len() as f64;
    let v = theta_star[theta_star.len() - 1] - theta_star[0];
    let e = p.min(2.0) / 2.0;
    let value = |(vp, k): (f64, usize)| vp.powf(p) + sigma.powf(p) * (k as f64 / n).powf(e);
    let mut best = value(delta_partition(theta_star, 0.0));
    if v > 0.0 {
        let m = 400;
        for j in 0..=m {
            let delta = v * 10f64.powf(-8.0 * (1.0 - j as f64 / m as f64));
            best = best.min(value(delta_partition(theta_star, delta)));
        }
    }
    Ok(best)
}

/// OLS slope of log(risk) on log(n); needs ≥ 4 points spanning ≥ 1.5 decades.
pub fn rate_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 4 || pairs.iter().any(|&(n, r)| !(n > 0.0 && r > 0.0)) {
        return Err(ShapeError::TooFewPoints);
    }
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(n, _)| (l.min(n), h.max(n)));
    if (hi / lo).log10() < 1.5 {
        return Err(ShapeError::TooFewPoints);
    }
    let k = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    Ok(sxy / sxx)
}

/// One CSV result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub scenario_id: String,
    pub family: String,
    pub estimator: String,
    pub n: usize,
    pub sigma: f64,
    pub p: f64,
    pub reps: usize,
    pub risk: f64,
    pub se: f64,
    pub seed: u64,
}

impl RiskRow {
    pub fn new(sc: &Scenario, estimator: Estimator, est: &RiskEstimate) -> Self {
        RiskRow {
            scenario_id: sc.id.clone(),
            family: sc.family.name().to_string(),
            estimator: estimator.name().to_string(),
            n: sc.n,
            sigma: sc.sigma,
            p: est.p,
            reps: est.reps,
            risk: est.risk,
            se: est.se,
            seed: est.seed,
        }
    }
}

/// Writes rows with a header line.
pub fn write_rows<W: Write>(out: W, rows: &[RiskRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| ShapeError::Table(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["scenario_id", "family", "estimator", "n", "sigma", "p", "reps", "risk", "se", "seed"])
            .map_err(|e| ShapeError::Table(e.to_string()))?;
    }
    w.flush().map_err(|e| ShapeError::Table(e.to_string()))
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Lse]
}

fn default_p() -> Vec<f64> {
    vec![2.0]
}

fn default_reps() -> usize {
    1000
}

pub const DEFAULT_SEED: u64 = 20_170_601;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A risk-simulation experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Experiment {
    /// Rows for every (scenario, estimator, p) combination, in that order.
    pub fn run(&self) -> Result<Vec<RiskRow>> {
        let mut rows = Vec::new();
        for sc in &self.scenarios {
            for &est in &self.estimators {
                for &p in &self.p {
                    let r = mc_risk(sc, est, p, self.reps, self.seed)?;
                    rows.push(RiskRow::new(sc, est, &r));
                }
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(truth: Truth, n: usize, sigma: f64) -> Scenario {
        Scenario::new("t", Family::Isotonic, truth, n, sigma, ErrorLaw::Gaussian)
    }

    #[test]
    fn zero_noise_zero_risk() {
        let cases = [
            Scenario::new("a", Family::Isotonic, Truth::Ramp { v: 1.0 }, 30, 0.0, ErrorLaw::Gaussian),
            Scenario::new("b", Family::Convex, Truth::ConvexQuadratic { curvature: 2.0 }, 30, 0.0, ErrorLaw::Gaussian),
            Scenario::new("c", Family::Unimodal, Truth::UnimodalValley { v: 1.0 }, 31, 0.0, ErrorLaw::Gaussian),
            Scenario::new("d", Family::Matrix, Truth::MatrixRamp { v: 1.0 }, 16, 0.0, ErrorLaw::Gaussian),
        ];
        for sc in &cases {
            let r = mc_risk(sc, Estimator::Lse, 2.0, 5, 1).unwrap();
            assert!(r.risk < 1e-18, "{} {}", sc.id, r.risk);
        }
    }

    #[test]
    fn origin_identity_small() {
        let r = mc_risk(&iso(Truth::Constant { value: 0.0 }, 3, 1.0), Estimator::Lse, 2.0, 100_000, 5).unwrap();
        let total = 3.0 * r.risk;
        assert!((total - 11.0 / 6.0).abs() <= 3.0 * 3.0 * r.se, "{total}");
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_fit(&[1.0, 3.0, 2.0, 4.0], &[2, 2]).unwrap(), vec![2.0, 2.0, 3.0, 3.0]);
        assert_eq!(oracle_fit(&[1.0, 3.0, 2.0], &[1, 1, 1]).unwrap(), vec![1.0, 3.0, 2.0]);
        assert_eq!(oracle_fit(&[1.0, 3.0, 2.0], &[3]).unwrap(), vec![2.0; 3]);
        assert_eq!(oracle_fit(&[1.0, 3.0], &[3]).unwrap_err(), ShapeError::BadPartition);
        assert_eq!(oracle_fit(&[1.0, 3.0], &[0, 2]).unwrap_err(), ShapeError::BadPartition);
    }

    #[test]
    fn lp_oracle_closed_form() {
        assert!((lp_oracle_risk(&[25, 25, 25, 25], 1.0, 2.0, 100).unwrap() - 0.04).abs() < 1e-15);
        let v = lp_oracle_risk(&[400], 2.0, 1.0, 400).unwrap();
        assert!((v - (2.0 / std::f64::consts::PI).sqrt() * 2.0 / 20.0).abs() < 1e-14);
        assert!((normal_abs_moment(4.0) - 3.0).abs() < 1e-12);
        assert!(lp_oracle_risk(&[1], 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn oracle_mc_matches_closed_form() {
        for (truth, n) in [(Truth::Blocks { k: 3, height: 1.0 }, 40), (Truth::Hybrid { k: 2, v: 1.0 }, 20)] {
            let sc = iso(truth, n, 0.7);
            let lengths = constant_runs(&sc.theta_star().unwrap());
            for p in [1.0, 2.0, 3.0] {
                let r = mc_risk(&sc, Estimator::Oracle, p, 20_000, 3).unwrap();
                let exact = lp_oracle_risk(&lengths, 0.7, p, n).unwrap();
                assert!((r.risk - exact).abs() <= 3.5 * r.se, "{p}: {} vs {exact}", r.risk);
            }
        }
    }

    #[test]
    fn worst_case_examples() {
        let affine = Scenario::new("a", Family::Convex, Truth::Affine { a: 1.0, b: -2.0 }, 50, 1.0, ErrorLaw::Gaussian);
        assert!((worst_case_bound_rhs(&affine).unwrap() - 50f64.powf(-0.8)).abs() < 1e-15);
        let c = iso(Truth::Constant { value: 2.0 }, 100, 1.0);
        assert!((worst_case_bound_rhs(&c).unwrap() - (100.0 * std::f64::consts::E).ln() / 100.0).abs() < 1e-15);
        let r = iso(Truth::Ramp { v: 1.0 }, 1000, 1.0);
        let expect = 0.001f64.powf(2.0 / 3.0) + (1000.0 * std::f64::consts::E).ln() / 1000.0;
        assert!((worst_case_bound_rhs(&r).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn adaptive_examples() {
        let t = iso(Truth::Blocks { k: 4, height: 10.0 }, 100, 1.0).theta_star().unwrap();
        let b = adaptive_bound_rhs(&t, 1.0, Family::Isotonic, false).unwrap();
        assert!((b - 4.0 * kterm(4.0, 100.0)).abs() < 1e-15);
        let b2 = adaptive_bound_rhs(&[5.0, 5.0], 1.0, Family::Isotonic, true).unwrap();
        assert!((b2 - 0.5 * (2.0 * std::f64::consts::E).ln()).abs() < 1e-15);
        let hy = iso(Truth::Hybrid { k: 3, v: 1.0 }, 400, 1.0).theta_star().unwrap();
        let hb = adaptive_bound_rhs(&hy, 1.0, Family::Isotonic, true).unwrap();
        let reference = kterm(3.0, 400.0) + (1.0f64 / 400.0).powf(2.0 / 3.0);
        assert!(hb <= 3.0 * reference && hb >= reference / 3.0, "{hb} vs {reference}");
    }

    #[test]
    fn greedy_path_is_monotone() {
        let t: Vec<f64> = (0..50).map(|i| ((i as f64) * 0.3).sin() + i as f64 * 0.1).collect();
        let proj = isotonic_fitted(&t);
        let path = greedy_merge_path(&t, &constant_runs(&proj));
        assert_eq!(path.last().unwrap().0, 1);
        let mean = t.iter().sum::<f64>() / 50.0;
        let total: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
        assert!((path.last().unwrap().1 - total).abs() < 1e-9);
        assert!(path.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12));
    }

    #[test]
    fn statistical_dimension_examples() {
        let f = statistical_dimension(ConeTag::Full, 7, 2000, 1).unwrap();
        assert!((f.risk - 7.0).abs() <= 3.0 * f.se);
        let o = statistical_dimension(ConeTag::Orthant, 10, 20_000, 2).unwrap();
        assert!((o.risk - 5.0).abs() <= 3.0 * o.se);
        let i = statistical_dimension(ConeTag::Isotonic, 10, 20_000, 3).unwrap();
        assert!((i.risk - 2.928_968_253_968_254).abs() <= 3.0 * i.se);
    }

    #[test]
    fn tangent_cone_examples() {
        assert_eq!(tangent_cone_isotonic(&[1.0; 4]).unwrap(), vec![4]);
        assert_eq!(tangent_cone_isotonic(&[1.0, 2.0, 3.0]).unwrap(), vec![1, 1, 1]);
        assert_eq!(tangent_cone_isotonic(&[0.0, 0.0, 1.0]).unwrap(), vec![2, 1]);
        assert_eq!(tangent_cone_isotonic(&[1.0, 0.0]).unwrap_err(), ShapeError::NotIsotonic);
        let z = [0.4, -0.2, 1.5];
        let p = project_tangent(&[2, 1], &z).unwrap();
        assert_eq!(p, vec![0.1, 0.1, 1.5]);
    }

    #[test]
    fn pro_bound_examples() {
        let n = 1000;
        assert!((pro_bound_rhs(&vec![1.0; n], 2.0, 1.0).unwrap() - 2.0 / (n as f64).sqrt()).abs() < 1e-15);
        let t = iso(Truth::Blocks { k: 5, height: 1.0 }, n, 1.0).theta_star().unwrap();
        let b = pro_bound_rhs(&t, 1.0, 3.0).unwrap();
        assert!((b - (5.0 / n as f64)).abs() < 1e-15);
        let ramp = iso(Truth::Ramp { v: 1.0 }, n, 1.0).theta_star().unwrap();
        let b = pro_bound_rhs(&ramp, 1.0, 1.0).unwrap();
        let reference = (1.0 / n as f64).powf(1.0 / 3.0) + (1.0 / n as f64).sqrt();
        assert!(b <= 2.0 * reference && b >= reference / 2.0, "{b} vs {reference}");
        assert_eq!(pro_bound_rhs(&t, 1.0, 2.0).unwrap_err(), ShapeError::BadExponent(2.0));
    }

    #[test]
    fn slope_examples() {
        let pairs: Vec<(f64, f64)> = [100.0f64, 300.0, 1000.0, 10000.0].iter().map(|&n| (n, 3.0 * n.powf(-2.0 / 3.0))).collect();
        assert!((rate_slope(&pairs).unwrap() + 2.0 / 3.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = [10.0, 30.0, 100.0, 1000.0].iter().map(|&n| (n, 0.5)).collect();
        assert!(rate_slope(&flat).unwrap().abs() < 1e-12);
        assert_eq!(rate_slope(&flat[..3]).unwrap_err(), ShapeError::TooFewPoints);
        let narrow: Vec<(f64, f64)> = [10.0, 20.0, 30.0, 40.0].iter().map(|&n| (n, 1.0 / n)).collect();
        assert_eq!(rate_slope(&narrow).unwrap_err(), ShapeError::TooFewPoints);
    }

    #[test]
    fn family_checks() {
        let bad = Scenario::new("x", Family::Isotonic, Truth::UnimodalValley { v: 1.0 }, 10, 1.0, ErrorLaw::Gaussian);
        assert!(matches!(bad.theta_star(), Err(ShapeError::FamilyMismatch(_))));
        let ok = Scenario { misspecified: true, ..bad.clone() };
        assert!(ok.theta_star().is_ok());
        let m = Scenario::new("m", Family::Isotonic, Truth::MatrixConstant { value: 0.0 }, 16, 1.0, ErrorLaw::Gaussian);
        assert!(matches!(m.theta_star(), Err(ShapeError::FamilyMismatch(_))));
        let cvx = Scenario::new("c", Family::Convex, Truth::Ramp { v: 1.0 }, 10, 1.0, ErrorLaw::Gaussian);
        assert!(matches!(mc_risk(&cvx, Estimator::Oracle, 2.0, 2, 0), Err(ShapeError::FamilyMismatch(_))));
    }

    #[test]
    fn unimodal_variations() {
        let sc = Scenario::new("u", Family::Unimodal, Truth::UnimodalValley { v: 2.0 }, 21, 1.0, ErrorLaw::Gaussian);
        assert_eq!(sc.variations().unwrap(), (0.0, 2.0));
    }

    #[test]
    fn error_laws_have_unit_variance() {
        for law in [ErrorLaw::Gaussian, ErrorLaw::Rademacher, ErrorLaw::T5] {
            let mut rng = rep_rng(11, 0);
            let v: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng).powi(2)).collect();
            let (m, se) = mean_se(&v);
            assert!((m - 1.0).abs() < 4.0 * se + 1e-12, "{law:?} {m}");
        }
    }

    #[test]
    fn experiment_json() {
        let text = r#"{"scenarios":[{"id":"r","family":"isotonic","truth":{"kind":"ramp","v":1.0},"n":20,"sigma":1.0}],"reps":50}"#;
        let e: Experiment = serde_json::from_str(text).unwrap();
        let rows = e.run().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows, e.run().unwrap());
        let bad = r#"{"scenarios":[],"reps":5,"colour":1}"#;
        assert!(serde_json::from_str::<Experiment>(bad).is_err());
        let bad_truth = r#"{"kind":"ramp","v":1.0,"w":2}"#;
        assert!(serde_json::from_str::<Truth>(bad_truth).is_err());
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("scenario_id,family,estimator,n,sigma,p,reps,risk,se,seed\n"));
    }
}
