//! Shape-restricted additive models by backfitting, oracle components, and a
//! monotone single-index fitter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_finite, Result, ShapeError};
use crate::isotonic::{pava_unchecked, Direction, StepFit};
use crate::shapes::convex_weighted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentShape {
    Nondecreasing,
    Nonincreasing,
    Convex,
}

impl std::str::FromStr for ComponentShape {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inc" | "nondecreasing" => Ok(ComponentShape::Nondecreasing),
            "dec" | "nonincreasing" => Ok(ComponentShape::Nonincreasing),
            "cvx" | "convex" => Ok(ComponentShape::Convex),
            other => Err(ShapeError::InvalidParameter(format!("unknown shape {other:?}"))),
        }
    }
}

/// A fitted component on the distinct values of one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub shape: ComponentShape,
    /// Distinct design values, increasing.
    pub xs: Vec<f64>,
    /// Fitted values at `xs`.
    pub values: Vec<f64>,
    /// Number of observations at each distinct value.
    pub counts: Vec<f64>,
}

impl Component {
    /// Count-weighted mean over the design.
    pub fn design_mean(&self) -> f64 {
        let n: f64 = self.counts.iter().sum();
        self.values.iter().zip(&self.counts).map(|(v, c)| v * c).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveFit {
    pub mu_hat: f64,
    pub components: Vec<Component>,
    pub fitted: Vec<f64>,
    pub sse: f64,
    pub backfit_iterations: usize,
}

/// Distinct values of one coordinate with the observation → value map.
struct Axis {
    xs: Vec<f64>,
    index: Vec<usize>,
    counts: Vec<f64>,
}

fn axis(col: &[f64]) -> Axis {
    let mut order: Vec<usize> = (0..col.len()).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut xs: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut index = vec![0; col.len()];
    for &i in &order {
        if xs.last() != Some(&col[i]) {
            xs.push(col[i]);
            counts.push(0.0);
        }
        *counts.last_mut().unwrap() += 1.0;
        index[i] = xs.len() - 1;
    }
    Axis { xs, index, counts }
}

/// Centered 1-D shape fit of `target` against one coordinate, pooling ties.
fn fit_on_axis(ax: &Axis, target: &[f64], shape: ComponentShape) -> Result<Component> {
    let m = ax.xs.len();
    let mut sums = vec![0.0; m];
    for (i, &t) in target.iter().enumerate() {
        sums[ax.index[i]] += t;
    }
    let n: f64 = ax.counts.iter().sum();
    let mean = sums.iter().sum::<f64>() / n;
    let pooled: Vec<f64> = sums.iter().zip(&ax.counts).map(|(s, c)| s / c - mean).collect();
    let mut values = match shape {
        ComponentShape::Nondecreasing => pava_unchecked(&pooled, &ax.counts, Direction::Nondecreasing, Vec::new()).fitted(),
        ComponentShape::Nonincreasing => pava_unchecked(&pooled, &ax.counts, Direction::Nonincreasing, Vec::new()).fitted(),
        ComponentShape::Convex => convex_weighted(&ax.xs, &pooled, &ax.counts)?.0,
    };
    let drift = values.iter().zip(&ax.counts).map(|(v, c)| v * c).sum::<f64>() / n;
    values.iter_mut().for_each(|v| *v -= drift);
    Ok(Component {
        shape,
        xs: ax.xs.clone(),
        values,
        counts: ax.counts.clone(),
    })
}

fn validate_design(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if y.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(ShapeError::LengthMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ShapeError::DimMismatch(d, r.len()));
    }
    check_finite(y)?;
    for r in x {
        check_finite(r)?;
    }
    Ok(d)
}

/// Cyclic backfitting: each component is refit by its exact 1-D projection of
/// the partial residuals and recentered; stops when the SSE decrease over a
/// cycle falls below `tol`.
pub fn backfit_additive(
    x: &[Vec<f64>],
    y: &[f64],
    shapes: &[ComponentShape],
    tol: f64,
    max_cycles: usize,
) -> Result<AdditiveFit> {
    let d = validate_design(x, y)?;
    if shapes.len() != d {
        return Err(ShapeError::LengthMismatch {
            expected: d,
            got: shapes.len(),
        });
    }
    if d == 0 || y.len() < d {
        return Err(ShapeError::InvalidParameter("need n >= d >= 1".into()));
    }
    let n = y.len();
    let axes: Vec<Axis> = (0..d).map(|k| axis(&x.iter().map(|r| r[k]).collect::<Vec<_>>())).collect();
    let mu = y.iter().sum::<f64>() / n as f64;
    let mut contrib = vec![vec![0.0; n]; d];
    let mut components: Vec<Component> = axes
        .iter()
        .zip(shapes)
        .map(|(ax, &shape)| Component {
            shape,
            xs: ax.xs.clone(),
            values: vec![0.0; ax.xs.len()],
            counts: ax.counts.clone(),
        })
        .collect();
    let sse_of = |contrib: &Vec<Vec<f64>>| -> f64 {
        (0..n)
            .map(|i| {
                let r = y[i] - mu - contrib.iter().map(|c| c[i]).sum::<f64>();
                r * r
            })
            .sum()
    };
    let mut prev = sse_of(&contrib);
    let mut cycles = 0;
    let mut partial = vec![0.0; n];
    loop {
        cycles += 1;
        for k in 0..d {
            for i in 0..n {
                let others: f64 = (0..d).filter(|&j| j != k).map(|j| contrib[j][i]).sum();
                partial[i] = y[i] - mu - others;
            }
            let comp = fit_on_axis(&axes[k], &partial, shapes[k])?;
            for i in 0..n {
                contrib[k][i] = comp.values[axes[k].index[i]];
            }
            components[k] = comp;
        }
        let cur = sse_of(&contrib);
        let decrease = prev - cur;
        prev = cur;
        if decrease < tol {
            break;
        }
        if cycles >= max_cycles {
            let best = (0..n).map(|i| mu + contrib.iter().map(|c| c[i]).sum::<f64>()).collect();
            return Err(ShapeError::NonConvergence {
                iterations: cycles,
                violation: decrease,
                gap: decrease,
                best,
            });
        }
    }
    let fitted: Vec<f64> = (0..n).map(|i| mu + contrib.iter().map(|c| c[i]).sum::<f64>()).collect();
    Ok(AdditiveFit {
        mu_hat: mu,
        components,
        sse: prev,
        fitted,
        backfit_iterations: cycles,
    })
}

/// Backfitting with the default stop rule (SSE decrease < 1e-10, 500 cycles).
pub fn backfit_additive_default(x: &[Vec<f64>], y: &[f64], shapes: &[ComponentShape]) -> Result<AdditiveFit> {
    backfit_additive(x, y, shapes, 1e-10, 500)
}

/// The fit of coordinate k that knows μ* and every other component.
pub fn oracle_component(
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    true_others: &[&dyn Fn(f64) -> f64],
    mu_star: f64,
    shape: ComponentShape,
) -> Result<Component> {
    let d = validate_design(x, y)?;
    if k >= d {
        return Err(ShapeError::IndexOutOfRange { index: k, max: d - 1 });
    }
    if true_others.len() != d {
        return Err(ShapeError::LengthMismatch {
            expected: d,
            got: true_others.len(),
        });
    }
    let target: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let others: f64 = (0..d).filter(|&j| j != k).map(|j| true_others[j](row[j])).sum();
            yi - mu_star - others
        })
        .collect();
    let ax = axis(&x.iter().map(|r| r[k]).collect::<Vec<_>>());
    fit_on_axis(&ax, &target, shape)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleIndexFit {
    pub beta_hat: Vec<f64>,
    /// Link fit over the sorted distinct projections x·β̂.
    pub psi_hat: StepFit,
    pub sse: f64,
}

/// SSE of the best monotone link along β (None when all projections coincide),
/// together with that link.
pub fn profile_sse(x: &[Vec<f64>], y: &[f64], beta: &[f64], direction: Direction) -> Option<(f64, StepFit)> {
    let t: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let spread = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(hi - lo > 1e-12 * spread.max(1e-300)) {
        return None;
    }
    let ax = axis(&t);
    let m = ax.xs.len();
    let mut sums = vec![0.0; m];
    for (i, &v) in y.iter().enumerate() {
        sums[ax.index[i]] += v;
    }
    let pooled: Vec<f64> = sums.iter().zip(&ax.counts).map(|(s, c)| s / c).collect();
    let fit = pava_unchecked(&pooled, &ax.counts, direction, ax.xs.clone());
    let vals = fit.fitted();
    let sse = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = v - vals[ax.index[i]];
            r * r
        })
        .sum();
    Some((sse, fit))
}

fn normalize(v: &mut [f64]) -> bool {
    let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nrm == 0.0 || !nrm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|a| *a /= nrm);
    true
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Candidate directions: a uniform angle grid for d = 2, otherwise Halton
/// points pushed through the normal quantile and normalized.
pub fn candidate_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut v: Vec<f64> = (0..d)
            .map(|k| normal.inverse_cdf(radical_inverse(i, PRIMES[k % PRIMES.len()]).clamp(1e-12, 1.0 - 1e-12)))
            .collect();
        i += 1;
        if normalize(&mut v) {
            out.push(v);
        }
    }
    out
}

/// Profile search for the monotone single-index model y ≈ ψ(x·β), ψ nondecreasing.
///
/// Every candidate is scored in parallel; the winner is the smallest
/// (sse, candidate index). For d ≥ 3 the winner is then refined by
/// coordinate steps that are accepted only on strict improvement.
pub fn fit_monotone_single_index(
    x: &[Vec<f64>],
    y: &[f64],
    n_directions: usize,
    refine_steps: usize,
) -> Result<SingleIndexFit> {
    let d = validate_design(x, y)?;
    if d < 2 || y.len() < 3 {
        return Err(ShapeError::InvalidParameter("single index needs d >= 2 and n >= 3".into()));
    }
    if n_directions == 0 {
        return Err(ShapeError::InvalidParameter("need at least one direction".into()));
    }
    let cands = candidate_directions(d, n_directions);
    let scored: Vec<Option<f64>> = cands
        .par_iter()
        .map(|b| profile_sse(x, y, b, Direction::Nondecreasing).map(|(s, _)| s))
        .collect();
    let (best_idx, mut best_sse) = scored
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or(ShapeError::DegenerateProjection)?;
    let mut beta = cands[best_idx].clone();
    if d >= 3 {
        let mut step = (std::f64::consts::PI / (n_directions as f64).powf(1.0 / (d - 1) as f64)).min(0.5);
        for _ in 0..refine_steps {
            let mut improved = false;
            for c in 0..d {
                for sign in [1.0, -1.0] {
                    let mut trial = beta.clone();
                    trial[c] += sign * step;
                    if !normalize(&mut trial) {
                        continue;
                    }
                    if let Some((s, _)) = profile_sse(x, y, &trial, Direction::Nondecreasing) {
                        if s < best_sse {
                            best_sse = s;
                            beta = trial;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    let (sse, psi_hat) = profile_sse(x, y, &beta, Direction::Nondecreasing).ok_or(ShapeError::DegenerateProjection)?;
    Ok(SingleIndexFit {
        beta_hat: beta,
        psi_hat,
        sse,
    })
}
