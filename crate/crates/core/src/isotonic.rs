//! Univariate isotonic regression: PAVA, the min-max formula, the cumulative
//! sum diagram with its greatest convex minorant, the pinned-value fit and
//! left-continuous step evaluation.

use std::ops::Range;

use serde::Serialize;

use crate::error::{check_finite, Result, ShapeError};
use crate::projection::{grid, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
}

/// Piecewise-constant fit over design points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFit {
    /// Design points the fit lives on.
    pub breakpoints: Vec<f64>,
    /// One level per block.
    pub values: Vec<f64>,
    pub blocks: Vec<Range<usize>>,
    pub direction: Direction,
}

impl StepFit {
    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Fitted vector, one entry per design point.
    pub fn fitted(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (b, &v) in self.blocks.iter().zip(&self.values) {
            out.extend(std::iter::repeat_n(v, b.len()));
        }
        out
    }

    /// Replace the design points (same length).
    pub fn with_breakpoints(mut self, x: &[f64]) -> Self {
        assert_eq!(x.len(), self.breakpoints.len());
        self.breakpoints = x.to_vec();
        self
    }

    /// Builds a fit from a fitted vector by grouping equal neighbours.
    pub fn from_fitted(x: &[f64], theta: &[f64], direction: Direction) -> Self {
        let mut blocks: Vec<Range<usize>> = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in theta.iter().enumerate() {
            match (blocks.last_mut(), values.last()) {
                (Some(b), Some(&last)) if last == v => b.end = i + 1,
                _ => {
                    blocks.push(i..i + 1);
                    values.push(v);
                }
            }
        }
        StepFit {
            breakpoints: x.to_vec(),
            values,
            blocks,
            direction,
        }
    }

    /// Jumps (location, size): the fit changes right after `location`.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.blocks
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(b, v)| (self.breakpoints[b[0].end - 1], v[1] - v[0]))
            .collect()
    }
}

fn validate(y: &[f64], w: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    if w.len() != y.len() {
        return Err(ShapeError::LengthMismatch {
            expected: y.len(),
            got: w.len(),
        });
    }
    check_finite(y)?;
    if let Some(index) = w.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(ShapeError::BadWeight { index });
    }
    Ok(())
}

/// Stack-based pool-adjacent-violators. Blocks carry exact sums so that block
/// levels are sum/weight, and equal neighbours are merged.
#[derive(Debug, Clone, Default)]
pub(crate) struct PavaStack {
    pub sum: Vec<f64>,
    pub weight: Vec<f64>,
    pub len: Vec<usize>,
}

impl PavaStack {
    pub fn with_capacity(n: usize) -> Self {
        PavaStack {
            sum: Vec::with_capacity(n),
            weight: Vec::with_capacity(n),
            len: Vec::with_capacity(n),
        }
    }

    fn mean(&self, k: usize) -> f64 {
        self.sum[k] / self.weight[k]
    }

    /// Push one weighted observation, pooling while the top two blocks violate
    /// (or tie). Returns the change in Σ sum²/weight.
    pub fn push(&mut self, y: f64, w: f64) -> f64 {
        let mut delta = w * y * y;
        self.sum.push(w * y);
        self.weight.push(w);
        self.len.push(1);
        while self.sum.len() > 1 {
            let k = self.sum.len() - 1;
            if self.mean(k - 1) < self.mean(k) {
                break;
            }
            delta -= self.sum[k] * self.sum[k] / self.weight[k];
            delta -= self.sum[k - 1] * self.sum[k - 1] / self.weight[k - 1];
            let (s, wt, l) = (self.sum.pop().unwrap(), self.weight.pop().unwrap(), self.len.pop().unwrap());
            self.sum[k - 1] += s;
            self.weight[k - 1] += wt;
            self.len[k - 1] += l;
            delta += self.sum[k - 1] * self.sum[k - 1] / self.weight[k - 1];
        }
        delta
    }

    pub fn into_fit(self, x: Vec<f64>, negate: bool) -> StepFit {
        let mut blocks = Vec::with_capacity(self.len.len());
        let mut start = 0;
        for &l in &self.len {
            blocks.push(start..start + l);
            start += l;
        }
        let values = self
            .sum
            .iter()
            .zip(&self.weight)
            .map(|(s, w)| if negate { -(s / w) } else { s / w })
            .collect();
        StepFit {
            breakpoints: x,
            values,
            blocks,
            direction: if negate {
                Direction::Nonincreasing
            } else {
                Direction::Nondecreasing
            },
        }
    }
}

/// Weighted isotonic regression in O(n). Design points default to i/n.
pub fn pava(y: &[f64], w: &[f64], direction: Direction) -> Result<StepFit> {
    validate(y, w)?;
    Ok(pava_unchecked(y, w, direction, grid(y.len())))
}

pub(crate) fn pava_unchecked(y: &[f64], w: &[f64], direction: Direction, x: Vec<f64>) -> StepFit {
    let negate = direction == Direction::Nonincreasing;
    let mut st = PavaStack::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        st.push(if negate { -v } else { v }, wt);
    }
    st.into_fit(x, negate)
}

/// Unit-weight nondecreasing fit.
pub fn isotonic(y: &[f64]) -> Result<StepFit> {
    pava(y, &vec![1.0; y.len()], Direction::Nondecreasing)
}

/// Unit-weight nondecreasing fit carrying the series' design points.
pub fn isotonic_series(s: &Series) -> StepFit {
    pava_unchecked(s.y(), &vec![1.0; s.len()], Direction::Nondecreasing, s.x().to_vec())
}

/// Fitted vector of the unit-weight nondecreasing fit.
pub fn isotonic_fitted(y: &[f64]) -> Vec<f64> {
    pava_unchecked(y, &vec![1.0; y.len()], Direction::Nondecreasing, vec![0.0; y.len()]).fitted()
}

/// min over v ≥ j of max over u ≤ j of mean(y_u..y_v), with j 1-based.
pub fn minmax_value(y: &[f64], j: usize) -> Result<f64> {
    let n = y.len();
    if j == 0 || j > n {
        return Err(ShapeError::IndexOutOfRange { index: j, max: n });
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + y[i];
    }
    let mut best = f64::INFINITY;
    for v in j..=n {
        let mut inner = f64::NEG_INFINITY;
        for u in 1..=j {
            inner = inner.max((prefix[v] - prefix[u - 1]) / (v - u + 1) as f64);
        }
        best = best.min(inner);
    }
    Ok(best)
}

/// Continuous piecewise-linear function given by its knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(ShapeError::EmptyInput);
        }
        if knots.len() != values.len() {
            return Err(ShapeError::LengthMismatch {
                expected: knots.len(),
                got: values.len(),
            });
        }
        if let Some(i) = (1..knots.len()).find(|&i| knots[i] <= knots[i - 1]) {
            return Err(ShapeError::NonIncreasingDesign { index: i });
        }
        Ok(PiecewiseLinear { knots, values })
    }

    /// Linear interpolation; constant beyond the end knots.
    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0] {
            return self.values[0];
        }
        if t >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&v| v <= t);
        let (a, b) = (k[i - 1], k[i]);
        let (fa, fb) = (self.values[i - 1], self.values[i]);
        fa + (fb - fa) * (t - a) / (b - a)
    }

    /// Slope of the segment ending at knot i (i ≥ 1).
    pub fn left_slope(&self, i: usize) -> f64 {
        (self.values[i] - self.values[i - 1]) / (self.knots[i] - self.knots[i - 1])
    }
}

/// Cumulative sum diagram: (0,0) and (i/n, (1/n)Σ_{j≤i} y_j).
pub fn csd(s: &Series) -> PiecewiseLinear {
    let n = s.len();
    let mut knots = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    knots.push(0.0);
    values.push(0.0);
    let mut acc = 0.0;
    for (i, &v) in s.y().iter().enumerate() {
        acc += v;
        knots.push((i + 1) as f64 / n as f64);
        values.push(acc / n as f64);
    }
    PiecewiseLinear { knots, values }
}

/// Greatest convex minorant via the lower convex hull of the knot points.
pub fn gcm(f: &PiecewiseLinear) -> PiecewiseLinear {
    let idx = lower_hull(&f.knots, &f.values);
    PiecewiseLinear {
        knots: idx.iter().map(|&i| f.knots[i]).collect(),
        values: idx.iter().map(|&i| f.values[i]).collect(),
    }
}

/// Indices of the lower convex hull (monotone chain), collinear points dropped.
fn lower_hull(x: &[f64], y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // keep b only if it lies strictly below the chord a→i
            let cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if cross > 0.0 {
                break;
            }
            hull.pop();
        }
        hull.push(i);
    }
    hull
}

/// Left slopes of the GCM of the CSD at the design points. The hull is taken
/// on unscaled cumulative coordinates (i, Σ_{j≤i} y_j), which changes no slope.
pub fn slope_fit(s: &Series) -> StepFit {
    let n = s.len();
    let xs: Vec<f64> = (0..=n).map(|i| i as f64).collect();
    let mut ys = vec![0.0; n + 1];
    for i in 0..n {
        ys[i + 1] = ys[i] + s.y()[i];
    }
    let hull = lower_hull(&xs, &ys);
    let mut blocks = Vec::new();
    let mut values = Vec::new();
    for w in hull.windows(2) {
        blocks.push(w[0]..w[1]);
        values.push((ys[w[1]] - ys[w[0]]) / (w[1] - w[0]) as f64);
    }
    StepFit {
        breakpoints: s.x().to_vec(),
        values,
        blocks,
        direction: Direction::Nondecreasing,
    }
}

/// Isotonic fit pinned at φ₀ between positions l and l+1 (l is a 1-based count).
pub fn constrained_pava(y: &[f64], l: usize, phi0: f64) -> Result<StepFit> {
    let n = y.len();
    if l == 0 || l >= n {
        return Err(ShapeError::IndexOutOfRange {
            index: l,
            max: n.saturating_sub(1),
        });
    }
    check_finite(y)?;
    if !phi0.is_finite() {
        return Err(ShapeError::InvalidParameter("phi0 must be finite".into()));
    }
    let mut theta = isotonic_fitted(&y[..l]);
    theta.iter_mut().for_each(|v| *v = v.min(phi0));
    theta.extend(isotonic_fitted(&y[l..]).into_iter().map(|v| v.max(phi0)));
    #[cfg(debug_assertions)]
    certify_pinned(y, l, phi0, &theta);
    Ok(StepFit::from_fitted(&grid(n), &theta, Direction::Nondecreasing))
}

/// Debug-build cross-check against the generic cone solver, after the shift
/// θ − φ₀ turns the pinned polyhedron into a cone.
#[cfg(debug_assertions)]
fn certify_pinned(y: &[f64], l: usize, phi0: f64, theta: &[f64]) {
    if y.len() > 32 {
        return;
    }
    let cone = pinned_cone(y.len(), l);
    let shifted: Vec<f64> = y.iter().map(|v| v - phi0).collect();
    if let Ok(fit) = crate::projection::project_cone(&shifted, &cone, 1e-10, 20_000) {
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs())) + phi0.abs();
        for (a, b) in fit.theta_hat.iter().zip(theta) {
            debug_assert!((a + phi0 - b).abs() <= 1e-6 * scale, "pinned fit disagrees with generic solver");
        }
    }
}

/// Cone {θ : θ_1 ≤ … ≤ θ_l ≤ 0 ≤ θ_{l+1} ≤ … ≤ θ_n}.
pub fn pinned_cone(n: usize, l: usize) -> crate::projection::ConeSpec {
    use crate::projection::{ConeSpec, SparseRow};
    let mut rows: Vec<SparseRow> = (0..n - 1).filter(|&i| i + 1 != l).map(|i| SparseRow::leq(i, i + 1)).collect();
    rows.push(SparseRow::new(vec![l - 1], vec![1.0]));
    rows.push(SparseRow::new(vec![l], vec![-1.0]));
    ConeSpec::new(n, rows).expect("valid pinned rows")
}

/// Left-continuous evaluation: the value at t is θ̂_i for t ∈ (x_{i−1}, x_i].
/// The domain is (0, x_n] when x_1 > 0, otherwise [x_1, x_n].
pub fn eval_step(fit: &StepFit, t: f64) -> Result<f64> {
    let x = &fit.breakpoints;
    let n = x.len();
    let lower_ok = if x[0] > 0.0 { t > 0.0 } else { t >= x[0] };
    if !t.is_finite() || !lower_ok || t > x[n - 1] {
        return Err(ShapeError::OutOfDomain { t });
    }
    let i = x.partition_point(|&v| v < t);
    let b = fit.blocks.partition_point(|r| r.end <= i);
    Ok(fit.values[b])
}

/// KKT residual of a weighted monotone fit, using the cone generators
/// ±1 and the step vectors 1{i ≥ j}: max over probes of ⟨W r, g⟩ and |⟨W r, θ⟩|.
pub fn isotonic_kkt(y: &[f64], w: &[f64], theta: &[f64], direction: Direction) -> f64 {
    let sign = if direction == Direction::Nondecreasing { 1.0 } else { -1.0 };
    let r: Vec<f64> = y.iter().zip(theta).zip(w).map(|((a, b), c)| c * (a - b)).collect();
    let orth: f64 = r.iter().zip(theta).map(|(a, b)| a * b).sum();
    let total: f64 = r.iter().sum();
    let mut worst = orth.abs().max(total.abs());
    let mut suffix = 0.0;
    for j in (1..r.len()).rev() {
        suffix += r[j];
        worst = worst.max(sign * suffix);
    }
    worst.max(0.0)
}
