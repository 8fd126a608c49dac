//! Isotonic regression over partial orders on multivariate design points.

use serde::Serialize;

use crate::error::{check_finite, Result, ShapeError};
use crate::projection::{project_cone, ConeSpec, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Coordinatewise,
    WeakMajorization,
    Explicit,
}

/// A partial order: a comparator on points, or explicit edges (i, j)
/// meaning x_i ≼ x_j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRelation {
    pub kind: OrderKind,
    pub edges: Vec<(usize, usize)>,
}

impl OrderRelation {
    pub fn coordinatewise() -> Self {
        OrderRelation {
            kind: OrderKind::Coordinatewise,
            edges: Vec::new(),
        }
    }

    pub fn weak_majorization() -> Self {
        OrderRelation {
            kind: OrderKind::WeakMajorization,
            edges: Vec::new(),
        }
    }

    pub fn explicit(edges: Vec<(usize, usize)>) -> Self {
        OrderRelation {
            kind: OrderKind::Explicit,
            edges,
        }
    }

    /// u ≼ v under a comparator kind.
    pub fn leq(&self, u: &[f64], v: &[f64]) -> Result<bool> {
        match self.kind {
            OrderKind::Coordinatewise => coordinatewise_leq(u, v),
            OrderKind::WeakMajorization => weak_majorization_leq(u, v),
            OrderKind::Explicit => Err(ShapeError::NoComparator),
        }
    }
}

pub fn coordinatewise_leq(u: &[f64], v: &[f64]) -> Result<bool> {
    if u.len() != v.len() {
        return Err(ShapeError::DimMismatch(u.len(), v.len()));
    }
    Ok(u.iter().zip(v).all(|(a, b)| a <= b))
}

/// All prefix sums of u are at most those of v.
pub fn weak_majorization_leq(u: &[f64], v: &[f64]) -> Result<bool> {
    if u.len() != v.len() {
        return Err(ShapeError::DimMismatch(u.len(), v.len()));
    }
    let (mut su, mut sv) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        su += a;
        sv += b;
        if su > sv {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Strict-order closure: closure[i][j] is true when x_i ≺ x_j.
fn closure(points: &[Vec<f64>], n: usize, order: &OrderRelation) -> Result<Vec<Vec<bool>>> {
    let mut c = vec![vec![false; n]; n];
    match order.kind {
        OrderKind::Explicit => {
            let mut adj = vec![Vec::new(); n];
            for &(i, j) in &order.edges {
                if i >= n || j >= n {
                    return Err(ShapeError::IndexOutOfRange {
                        index: i.max(j),
                        max: n.saturating_sub(1),
                    });
                }
                if i == j {
                    return Err(ShapeError::CyclicOrder);
                }
                adj[i].push(j);
            }
            for s in 0..n {
                let mut stack = adj[s].clone();
                while let Some(v) = stack.pop() {
                    if v == s {
                        return Err(ShapeError::CyclicOrder);
                    }
                    if !c[s][v] {
                        c[s][v] = true;
                        stack.extend(adj[v].iter().cloned());
                    }
                }
            }
        }
        _ => {
            if points.len() != n {
                return Err(ShapeError::LengthMismatch {
                    expected: n,
                    got: points.len(),
                });
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && order.leq(&points[i], &points[j])? {
                        if c[j][i] {
                            return Err(ShapeError::DuplicatePoint(j, i));
                        }
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Covering pairs of a strict order given by its transitive closure.
fn reduction(c: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n = c.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if c[i][j] && !(0..n).any(|k| c[i][k] && c[k][j]) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Fitted values over the design, with the reduced comparisons used as constraints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoFit {
    pub theta_hat: Vec<f64>,
    pub order: OrderRelation,
    pub points: Vec<Vec<f64>>,
    pub constraints: Vec<(usize, usize)>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Projection onto {θ : θ_i ≤ θ_j whenever x_i ≼ x_j}. For explicit orders
/// `points` may be empty.
pub fn fit_isotonic_po(points: &[Vec<f64>], y: &[f64], order: &OrderRelation) -> Result<PoFit> {
    fit_isotonic_po_with(points, y, order, DEFAULT_TOL)
}

/// [`fit_isotonic_po`] with an explicit solver tolerance.
pub fn fit_isotonic_po_with(points: &[Vec<f64>], y: &[f64], order: &OrderRelation, tol: f64) -> Result<PoFit> {
    let n = y.len();
    if n == 0 {
        return Err(ShapeError::EmptyInput);
    }
    check_finite(y)?;
    if let Some(p) = points.first() {
        if let Some(q) = points.iter().find(|q| q.len() != p.len()) {
            return Err(ShapeError::DimMismatch(p.len(), q.len()));
        }
    }
    let c = closure(points, n, order)?;
    let edges = reduction(&c);
    let mut probes = vec![vec![1.0; n], vec![-1.0; n]];
    for j in 0..n {
        // upper set of x_j, and the complement of its lower set
        probes.push((0..n).map(|i| if i == j || c[j][i] { 1.0 } else { 0.0 }).collect());
        probes.push((0..n).map(|i| if i == j || c[i][j] { 0.0 } else { 1.0 }).collect());
    }
    let cone = ConeSpec::from_pairs(n, &edges)?.with_probes(probes);
    let fit = project_cone(y, &cone, tol, 100 * n)?;
    Ok(PoFit {
        theta_hat: fit.theta_hat,
        order: order.clone(),
        points: points.to_vec(),
        constraints: edges,
        kkt_residual: fit.kkt_residual,
        iterations: fit.iterations,
    })
}

/// sup over design points x_j ≼ x of θ̂_j; −∞ when no design point precedes x.
pub fn extend_fit(fit: &PoFit, x: &[f64]) -> Result<f64> {
    if fit.order.kind == OrderKind::Explicit {
        return Err(ShapeError::NoComparator);
    }
    let mut best = f64::NEG_INFINITY;
    for (p, &t) in fit.points.iter().zip(&fit.theta_hat) {
        if fit.order.leq(p, x)? {
            best = best.max(t);
        }
    }
    Ok(best)
}

/// True iff every sampled gradient is nonincreasing across coordinates and
/// its last entry is nonnegative.
pub fn check_gradient_order_preserving<F>(grad: F, sample_points: &[Vec<f64>]) -> bool
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    sample_points.iter().all(|z| {
        let g = grad(z);
        g.windows(2).all(|w| w[0] >= w[1]) && g.last().is_none_or(|&v| v >= 0.0)
    })
}

/// T_{k,ε}(z): moves mass ε from coordinate k+1 to coordinate k (0-based k).
pub fn transfer(z: &[f64], k: usize, eps: f64) -> Vec<f64> {
    let mut out = z.to_vec();
    out[k] += eps;
    out[k + 1] -= eps;
    out
}

/// Parses lines "i j" (0-based, x_i ≼ x_j). Blank lines and '#' comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || ShapeError::InvalidParameter(format!("edge list line {}: expected \"i j\"", lineno + 1));
        if fields.len() != 2 {
            return Err(bad());
        }
        let i = fields[0].parse().map_err(|_| bad())?;
        let j = fields[1].parse().map_err(|_| bad())?;
        edges.push((i, j));
    }
    Ok(edges)
}
