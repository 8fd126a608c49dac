//! Unimodal, convex, k-monotone and matrix isotonic projections.

use serde::Serialize;

use crate::error::{check_finite, Result, ShapeError};
use crate::isotonic::{pava_unchecked, Direction, PavaStack};
use crate::projection::{project_cone, refine, sse, ConeSpec, FitResult, Series, SparseRow, DEFAULT_TOL};

/// Valley-shaped fit θ_1 ≥ … ≥ θ_m ≤ θ_{m+1} ≤ … ≤ θ_n with 1-based mode m.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnimodalFit {
    pub values: Vec<f64>,
    pub mode: usize,
    pub sse: f64,
}

/// Smallest m with v nonincreasing on 1..m and nondecreasing on m..n.
fn valley_mode(v: &[f64]) -> usize {
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    v.iter().position(|&a| a == min).unwrap_or(0) + 1
}

fn split_fit(y: &[f64], s: usize) -> Vec<f64> {
    let ones = vec![1.0; y.len()];
    let mut out = if s > 0 {
        pava_unchecked(&y[..s], &ones[..s], Direction::Nonincreasing, vec![0.0; s]).fitted()
    } else {
        Vec::new()
    };
    if s < y.len() {
        let m = y.len() - s;
        out.extend(pava_unchecked(&y[s..], &ones[s..], Direction::Nondecreasing, vec![0.0; m]).fitted());
    }
    out
}

/// Projection onto the union of the valley cones I_1 … I_n.
///
/// Every member of the union is nonincreasing on a prefix and nondecreasing
/// on the complementary suffix, so the search runs over the n+1 split points
/// with prefix/suffix PAVA objectives maintained incrementally in O(n).
pub fn fit_unimodal(y: &[f64]) -> Result<UnimodalFit> {
    let n = y.len();
    if n == 0 {
        return Err(ShapeError::EmptyInput);
    }
    check_finite(y)?;
    // pooled Σ sum²/w of the antitonic prefix fit and of the isotonic suffix fit
    let mut pre = vec![0.0; n + 1];
    let mut st = PavaStack::with_capacity(n);
    for i in 0..n {
        pre[i + 1] = pre[i] + st.push(-y[i], 1.0);
    }
    let mut suf = vec![0.0; n + 1];
    let mut st = PavaStack::with_capacity(n);
    for i in (0..n).rev() {
        suf[i] = suf[i + 1] + st.push(-y[i], 1.0);
    }
    let total: f64 = y.iter().map(|v| v * v).sum();
    let obj: Vec<f64> = (0..=n).map(|s| total - pre[s] - suf[s]).collect();
    let best = obj.iter().cloned().fold(f64::INFINITY, f64::min);
    let slack = 1e-10 * (1.0 + total);

    let mut chosen: Option<UnimodalFit> = None;
    for s in (0..=n).filter(|&s| obj[s] <= best + slack) {
        let values = split_fit(y, s);
        let fit = UnimodalFit {
            mode: valley_mode(&values),
            sse: sse(y, &values),
            values,
        };
        chosen = match chosen {
            None => Some(fit),
            Some(c) => {
                let better = fit.sse < c.sse - slack || (fit.sse <= c.sse + slack && fit.mode < c.mode);
                Some(if better { fit } else { c })
            }
        };
    }
    Ok(chosen.expect("at least one split"))
}

/// Convex least squares on a strictly increasing design.
///
/// Solved exactly by an active-set method over the hinge generators
/// (x − x_j)_+: each step is a linear-spline least-squares fit with knots at
/// the active set, a tridiagonal solve. Knots are interior indices where the
/// slope increases.
pub fn fit_convex1d(s: &Series) -> Result<FitResult> {
    if s.len() < 2 {
        return Err(ShapeError::InvalidParameter("convex fit needs n >= 2".into()));
    }
    let w = vec![1.0; s.len()];
    let (theta, knots, iterations) = convex_weighted(s.x(), s.y(), &w)?;
    let mut fit = FitResult {
        sse: sse(s.y(), &theta),
        theta_hat: theta,
        blocks: Vec::new(),
        knots,
        kkt_residual: 0.0,
        iterations,
    };
    fit.kkt_residual = verify_convex_characterization(s, &fit);
    Ok(fit)
}

/// Weighted convex least squares. Returns (fit, knot indices, iterations).
pub(crate) fn convex_weighted(x: &[f64], y: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<usize>, usize)> {
    let n = y.len();
    check_finite(y)?;
    if n <= 2 {
        return Ok((y.to_vec(), Vec::new(), 0));
    }
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok((vec![0.0; n], Vec::new(), 0));
    }
    let range = x[n - 1] - x[0];
    let xs: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let u: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let wsum: f64 = w.iter().sum();
    let dual_tol = 1e-11 * wsum;

    let mut nodes: Vec<usize> = vec![0, n - 1];
    let mut theta = spline_ls(&xs, &u, w, &nodes);
    let mut iterations = 0;
    let max_outer = 4 * n + 10;
    loop {
        iterations += 1;
        if iterations > max_outer {
            return Err(ShapeError::NonConvergence {
                iterations,
                violation: f64::NAN,
                gap: f64::NAN,
                best: theta.iter().map(|v| v * scale).collect(),
            });
        }
        let (jstar, gmax) = best_hinge(&xs, &u, w, &theta, &nodes);
        if gmax <= dual_tol {
            break;
        }
        let pos = nodes.partition_point(|&v| v < jstar);
        nodes.insert(pos, jstar);
        let mut stalled = false;
        loop {
            let z = spline_ls(&xs, &u, w, &nodes);
            let kz = kinks(&xs, &z, &nodes);
            if kz.iter().all(|&k| k > 0.0) {
                theta = z;
                break;
            }
            let kc = kinks(&xs, &theta, &nodes);
            let mut alpha = f64::INFINITY;
            let mut drop = 0;
            for (q, (&c, &zv)) in kc.iter().zip(&kz).enumerate() {
                if zv <= 0.0 {
                    let a = if c - zv > 0.0 { c / (c - zv) } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        drop = q;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (t, zv) in theta.iter_mut().zip(&z) {
                *t += alpha * (zv - *t);
            }
            let kt = kinks(&xs, &theta, &nodes);
            let removed: Vec<usize> = (0..kt.len())
                .filter(|&q| q == drop || kt[q] <= 1e-15)
                .map(|q| nodes[q + 1])
                .collect();
            if removed.contains(&jstar) {
                stalled = true;
            }
            nodes.retain(|v| !removed.contains(v));
            if stalled {
                theta = spline_ls(&xs, &u, w, &nodes);
                break;
            }
        }
        if stalled {
            break;
        }
    }
    let kt = kinks(&xs, &theta, &nodes);
    let knots = nodes[1..nodes.len() - 1]
        .iter()
        .zip(&kt)
        .filter(|(_, &k)| k > 1e-6)
        .map(|(&j, _)| j)
        .collect();
    Ok((theta.into_iter().map(|v| v * scale).collect(), knots, iterations))
}

/// Slope increase at each interior node.
fn kinks(xs: &[f64], theta: &[f64], nodes: &[usize]) -> Vec<f64> {
    nodes
        .windows(3)
        .map(|w| {
            let left = (theta[w[1]] - theta[w[0]]) / (xs[w[1]] - xs[w[0]]);
            let right = (theta[w[2]] - theta[w[1]]) / (xs[w[2]] - xs[w[1]]);
            right - left
        })
        .collect()
}

/// Most violated hinge: argmax_j ⟨W r, (x − x_j)_+⟩ over non-nodes.
fn best_hinge(xs: &[f64], u: &[f64], w: &[f64], theta: &[f64], nodes: &[usize]) -> (usize, f64) {
    let n = u.len();
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut best = (0, f64::NEG_INFINITY);
    let mut next_node = nodes.len() - 1;
    for j in (1..n - 1).rev() {
        let r = w[j + 1] * (u[j + 1] - theta[j + 1]);
        s0 += r;
        s1 += r * xs[j + 1];
        while next_node > 0 && nodes[next_node] > j {
            next_node -= 1;
        }
        if nodes[next_node] == j {
            continue;
        }
        let g = s1 - xs[j] * s0;
        if g > best.1 {
            best = (j, g);
        }
    }
    best
}

/// Weighted least-squares linear spline with knots at `nodes` (which include
/// both ends), via the tridiagonal normal equations of the hat basis.
fn spline_ls(xs: &[f64], u: &[f64], w: &[f64], nodes: &[usize]) -> Vec<f64> {
    let m = nodes.len();
    let n = u.len();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m - 1];
    let mut rhs = vec![0.0; m];
    for k in 0..m - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let len = xs[b] - xs[a];
        for i in a..b {
            let t = (xs[i] - xs[a]) / len;
            let (p, q) = (1.0 - t, t);
            diag[k] += w[i] * p * p;
            off[k] += w[i] * p * q;
            diag[k + 1] += w[i] * q * q;
            rhs[k] += w[i] * p * u[i];
            rhs[k + 1] += w[i] * q * u[i];
        }
    }
    diag[m - 1] += w[n - 1];
    rhs[m - 1] += w[n - 1] * u[n - 1];
    // Thomas algorithm
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = if m > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for k in 1..m {
        let denom = diag[k] - off[k - 1] * c[k - 1];
        if k < m - 1 {
            c[k] = off[k] / denom;
        }
        d[k] = (rhs[k] - off[k - 1] * d[k - 1]) / denom;
    }
    let mut beta = vec![0.0; m];
    beta[m - 1] = d[m - 1];
    for k in (0..m - 1).rev() {
        beta[k] = d[k] - c[k] * beta[k + 1];
    }
    let mut theta = vec![0.0; n];
    for k in 0..m - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let len = xs[b] - xs[a];
        for i in a..b {
            let t = (xs[i] - xs[a]) / len;
            theta[i] = beta[k] * (1.0 - t) + beta[k + 1] * t;
        }
    }
    theta[n - 1] = beta[m - 1];
    theta
}

/// Largest violation of the convex characterization.
///
/// With R_m = Σ_{k≤m}(y_k − θ̂_k) and h̄ the mean spacing, the quantity
/// C_j = −Σ_{m<j} R_m (x_{m+1} − x_m)/(n h̄) must be ≥ 0 for every j, vanish at
/// knots and at j = n, and R_n must vanish. On the grid i/n, C_j is
/// Σ_{i<j} Θ̂_i − Σ_{i<j} F_n(i/n) with Θ̂ the cumulative sums of θ̂ over n.
pub fn verify_convex_characterization(s: &Series, fit: &FitResult) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let (x, y) = (s.x(), s.y());
    let hbar = (x[n - 1] - x[0]) / (n - 1) as f64;
    let norm = n as f64 * hbar;
    let mut cum_r = 0.0;
    let mut c = vec![0.0; n + 1];
    for m in 1..n {
        cum_r += y[m - 1] - fit.theta_hat[m - 1];
        c[m + 1] = c[m] - cum_r * (x[m] - x[m - 1]) / norm;
    }
    let r_n = cum_r + y[n - 1] - fit.theta_hat[n - 1];
    let mut worst = (r_n / n as f64).abs().max(c[n].abs());
    for j in 2..=n {
        worst = worst.max(-c[j]);
    }
    for &q in &fit.knots {
        worst = worst.max(c[q + 1].abs());
    }
    worst.max(0.0)
}

/// Projection onto {θ : ∇^k θ ≥ 0} on an equispaced design.
pub fn fit_k_monotone(y: &[f64], k: usize) -> Result<FitResult> {
    fit_k_monotone_with(y, k, DEFAULT_TOL)
}

/// [`fit_k_monotone`] with an explicit solver tolerance.
pub fn fit_k_monotone_with(y: &[f64], k: usize, tol: f64) -> Result<FitResult> {
    let n = y.len();
    if n == 0 {
        return Err(ShapeError::EmptyInput);
    }
    let cone = ConeSpec::k_monotone(n, k)?;
    project_cone(y, &cone, tol, 100 * n)
}

/// k-monotone fit on a series. Orders k ≥ 3 require an equispaced design.
pub fn fit_k_monotone_series(s: &Series, k: usize) -> Result<FitResult> {
    match k {
        1 => {
            let w = vec![1.0; s.len()];
            let theta = pava_unchecked(s.y(), &w, Direction::Nondecreasing, s.x().to_vec()).fitted();
            let kkt = crate::isotonic::isotonic_kkt(s.y(), &w, &theta, Direction::Nondecreasing);
            Ok(FitResult {
                sse: sse(s.y(), &theta),
                blocks: crate::projection::blocks_of(&theta, 0.0),
                theta_hat: theta,
                knots: Vec::new(),
                kkt_residual: kkt,
                iterations: 1,
            })
        }
        2 => fit_convex1d(s),
        _ if !s.is_equispaced() => Err(ShapeError::InvalidParameter(
            "k-monotone fits of order k >= 3 need an equispaced design".into(),
        )),
        _ => fit_k_monotone(s.y(), k),
    }
}

/// Bivariate isotonic fit: θ_ij ≤ θ_kl whenever i ≤ k and j ≤ l.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixFit {
    pub theta_hat: Vec<Vec<f64>>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Grid cells above which the exact face refinement is skipped.
const MATRIX_REFINE_MAX: usize = 400;

/// Dykstra alternation between the row-isotonic and column-isotonic cones,
/// each projected exactly by PAVA.
pub fn fit_matrix_isotonic(y: &[Vec<f64>]) -> Result<MatrixFit> {
    fit_matrix_isotonic_with(y, DEFAULT_TOL, None)
}

pub fn fit_matrix_isotonic_with(y: &[Vec<f64>], tol: f64, max_iter: Option<usize>) -> Result<MatrixFit> {
    let n1 = y.len();
    if n1 == 0 || y[0].is_empty() {
        return Err(ShapeError::EmptyInput);
    }
    let n2 = y[0].len();
    if let Some(r) = y.iter().find(|r| r.len() != n2) {
        return Err(ShapeError::LengthMismatch {
            expected: n2,
            got: r.len(),
        });
    }
    let flat: Vec<f64> = y.iter().flatten().cloned().collect();
    check_finite(&flat)?;
    let scale = flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(MatrixFit {
            theta_hat: vec![vec![0.0; n2]; n1],
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    if row_violation(&flat, n1, n2) <= 0.0 && col_violation(&flat, n1, n2) <= 0.0 {
        return Ok(MatrixFit {
            theta_hat: y.to_vec(),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let max_iter = max_iter.unwrap_or(100 * n1 * n2).max(10);
    let u: Vec<f64> = flat.iter().map(|v| v / scale).collect();
    let cells = n1 * n2;
    let mut x = u.clone();
    let mut p = vec![0.0; cells];
    let mut q = vec![0.0; cells];
    let mut z = vec![0.0; cells];
    let mut mid = vec![0.0; cells];
    let ones_r = vec![1.0; n2];
    let ones_c = vec![1.0; n1];
    let mut col = vec![0.0; n1];
    let mut converged = false;
    let (mut iterations, mut viol, mut gap) = (0, f64::INFINITY, f64::INFINITY);
    while iterations < max_iter {
        iterations += 1;
        for i in 0..cells {
            z[i] = x[i] + p[i];
        }
        for r in 0..n1 {
            let row = &z[r * n2..(r + 1) * n2];
            let fit = pava_unchecked(row, &ones_r, Direction::Nondecreasing, Vec::new()).fitted();
            mid[r * n2..(r + 1) * n2].copy_from_slice(&fit);
        }
        gap = 0.0;
        for i in 0..cells {
            let np = z[i] - mid[i];
            gap = f64::max(gap, (np - p[i]).abs());
            p[i] = np;
            z[i] = mid[i] + q[i];
        }
        for c in 0..n2 {
            for r in 0..n1 {
                col[r] = z[r * n2 + c];
            }
            let fit = pava_unchecked(&col, &ones_c, Direction::Nondecreasing, Vec::new()).fitted();
            for r in 0..n1 {
                let i = r * n2 + c;
                let nq = z[i] - fit[r];
                gap = f64::max(gap, (fit[r] - x[i]).abs()).max((nq - q[i]).abs());
                q[i] = nq;
                x[i] = fit[r];
            }
        }
        viol = row_violation(&x, n1, n2);
        if viol <= tol && gap <= tol {
            converged = true;
            break;
        }
    }
    if cells <= MATRIX_REFINE_MAX {
        let cone = grid_cone(n1, n2);
        if let Some(exact) = refine(&u, &cone, &x, tol) {
            x = exact;
            converged = true;
        }
    }
    let theta: Vec<f64> = x.iter().map(|v| v * scale).collect();
    if !converged {
        return Err(ShapeError::NonConvergence {
            iterations,
            violation: viol,
            gap,
            best: theta,
        });
    }
    Ok(MatrixFit {
        kkt_residual: matrix_kkt(&flat, &theta, n1, n2),
        theta_hat: theta.chunks(n2).map(|c| c.to_vec()).collect(),
        iterations,
    })
}

fn row_violation(x: &[f64], n1: usize, n2: usize) -> f64 {
    let mut v = 0.0f64;
    for r in 0..n1 {
        for c in 1..n2 {
            v = v.max(x[r * n2 + c - 1] - x[r * n2 + c]);
        }
    }
    v
}

fn col_violation(x: &[f64], n1: usize, n2: usize) -> f64 {
    let mut v = 0.0f64;
    for r in 1..n1 {
        for c in 0..n2 {
            v = v.max(x[(r - 1) * n2 + c] - x[r * n2 + c]);
        }
    }
    v
}

/// Order cone of the n1 × n2 grid (row-major), adjacent comparisons only.
pub fn grid_cone(n1: usize, n2: usize) -> ConeSpec {
    let mut rows = Vec::new();
    for r in 0..n1 {
        for c in 0..n2 {
            let i = r * n2 + c;
            if c + 1 < n2 {
                rows.push(SparseRow::leq(i, i + 1));
            }
            if r + 1 < n1 {
                rows.push(SparseRow::leq(i, i + n2));
            }
        }
    }
    ConeSpec::new(n1 * n2, rows).expect("valid grid rows")
}

/// Certificate over the probes ±1 and the upper-orthant indicators
/// 1{i ≥ a, j ≥ b}, all evaluated through 2-D suffix sums.
pub fn matrix_kkt(y: &[f64], theta: &[f64], n1: usize, n2: usize) -> f64 {
    let r: Vec<f64> = y.iter().zip(theta).map(|(a, b)| a - b).collect();
    let orth: f64 = r.iter().zip(theta).map(|(a, b)| a * b).sum();
    let mut s = vec![0.0; (n1 + 1) * (n2 + 1)];
    let at = |a: usize, b: usize| a * (n2 + 1) + b;
    let mut worst = orth.abs();
    for a in (0..n1).rev() {
        for b in (0..n2).rev() {
            s[at(a, b)] = r[a * n2 + b] + s[at(a + 1, b)] + s[at(a, b + 1)] - s[at(a + 1, b + 1)];
            worst = worst.max(s[at(a, b)]);
        }
    }
    worst.max(-s[at(0, 0)]).max(0.0)
}
