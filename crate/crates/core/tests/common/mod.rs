//! Independent reference solvers shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Row e_i − e_j, i.e. θ_i ≤ θ_j.
pub fn leq_row(n: usize, i: usize, j: usize) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r[i] = 1.0;
    r[j] = -1.0;
    r
}

/// Dense rows of a sparse cone description.
pub fn dense_rows(cone: &shapereg::ConeSpec) -> Vec<Vec<f64>> {
    cone.constraints
        .iter()
        .map(|row| {
            let mut r = vec![0.0; cone.n];
            for (&i, &c) in row.idx.iter().zip(&row.coef) {
                r[i] += c;
            }
            r
        })
        .collect()
}

/// Projection onto {θ : Aθ ≤ b} by enumerating every candidate active set.
///
/// For each subset S the nearest point of {A_S θ = b_S} is computed with a
/// pseudo-inverse; the feasible candidate closest to y is the projection.
pub fn active_set_projection(y: &[f64], rows: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = y.len();
    let m = rows.len();
    assert!(m <= 20, "active-set oracle limited to 20 constraints");
    assert_eq!(b.len(), m);
    let yv = DVector::from_column_slice(y);
    let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs())) + b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let feas_tol = 1e-9 * scale;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let theta = if active.is_empty() {
            yv.clone()
        } else {
            let a = DMatrix::from_fn(active.len(), n, |r, c| rows[active[r]][c]);
            let bs = DVector::from_iterator(active.len(), active.iter().map(|&i| b[i]));
            let gram = &a * a.transpose();
            let pinv = gram.pseudo_inverse(1e-12).expect("pseudo-inverse");
            let lambda = pinv * (&a * &yv - bs);
            &yv - a.transpose() * lambda
        };
        let t: Vec<f64> = theta.iter().copied().collect();
        let feasible = rows.iter().zip(b).all(|(r, &bi)| dot(r, &t) - bi <= feas_tol);
        if !feasible {
            continue;
        }
        let d: f64 = y.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, t));
        }
    }
    best.expect("the feasible set is nonempty").1
}

/// Cone projection (b = 0) by active-set enumeration.
pub fn cone_oracle(y: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    active_set_projection(y, rows, &vec![0.0; rows.len()])
}

/// Adjacent grid comparisons of an n1×n2 matrix stored row-major.
pub fn grid_rows(n1: usize, n2: usize) -> Vec<Vec<f64>> {
    let n = n1 * n2;
    let mut rows = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            for k in i..n1 {
                for l in j..n2 {
                    if (k, l) != (i, j) && (k - i) + (l - j) == 1 {
                        rows.push(leq_row(n, i * n2 + j, k * n2 + l));
                    }
                }
            }
        }
    }
    rows
}

/// Isotonic LSE by search over all partitions into consecutive blocks.
pub fn brute_isotonic(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1u32 << (n - 1)) {
        let mut theta = Vec::with_capacity(n);
        let mut start = 0;
        for end in 1..=n {
            if end == n || cuts & (1 << (end - 1)) != 0 {
                let m = y[start..end].iter().sum::<f64>() / (end - start) as f64;
                theta.extend(std::iter::repeat(m).take(end - start));
                start = end;
            }
        }
        if theta.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            continue;
        }
        let d: f64 = y.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd - 1e-12) {
            best = Some((d, theta));
        }
    }
    best.expect("a constant fit is always feasible").1
}

/// max_{u ≤ j} min_{v ≥ j} mean(y_u..y_v): the max-min form, evaluated directly.
pub fn maxmin_direct(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|j| {
            (0..=j)
                .map(|u| {
                    (j..n)
                        .map(|v| y[u..=v].iter().sum::<f64>() / (v - u + 1) as f64)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Unimodal (valley) LSE by enumerating the split between the decreasing and increasing parts.
pub fn brute_valley_sse(y: &[f64]) -> f64 {
    let n = y.len();
    (0..=n)
        .map(|s| {
            let left: Vec<f64> = y[..s].iter().map(|v| -v).collect();
            let mut theta: Vec<f64> = if s > 0 { brute_or_pava(&left).iter().map(|v| -v).collect() } else { Vec::new() };
            if s < n {
                theta.extend(brute_or_pava(&y[s..]));
            }
            y.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Pooling by repeated merging of the first violating pair, run to a fixpoint.
pub fn naive_pool(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = y.iter().map(|&v| (v, 1)).collect();
    loop {
        let Some(i) = (0..blocks.len().saturating_sub(1)).find(|&i| blocks[i].0 > blocks[i + 1].0) else {
            break;
        };
        let (a, na) = blocks[i];
        let (b, nb) = blocks.remove(i + 1);
        blocks[i] = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
    }
    blocks.into_iter().flat_map(|(v, c)| std::iter::repeat(v).take(c)).collect()
}

fn brute_or_pava(y: &[f64]) -> Vec<f64> {
    if y.len() <= 12 {
        brute_isotonic(y)
    } else {
        naive_pool(y)
    }
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn int_vec(rng: &mut ChaCha8Rng, n: usize, lo: i32, hi: i32) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi) as f64).collect()
}

/// Every integer vector of length n with entries in lo..=hi.
pub fn all_int_vectors(n: usize, lo: i32, hi: i32) -> impl Iterator<Item = Vec<f64>> {
    let base = (hi - lo + 1) as usize;
    (0..base.pow(n as u32)).map(move |mut code| {
        (0..n)
            .map(|_| {
                let v = lo + (code % base) as i32;
                code /= base;
                v as f64
            })
            .collect()
    })
}

/// Left slopes of the GCM of the cumulative sum diagram at the design points.
pub fn gcm_slopes(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let g = shapereg::isotonic::gcm(&shapereg::isotonic::csd(&shapereg::projection::Series::equispaced(y.to_vec()).unwrap()));
    (1..=n).map(|i| (g.eval(i as f64 / n as f64) - g.eval((i - 1) as f64 / n as f64)) * n as f64).collect()
}

/// Isotonic projection with θ_l ≤ φ₀ ≤ θ_{l+1} (l a 1-based count), by enumeration.
pub fn pinned_oracle(y: &[f64], l: usize, phi0: f64) -> Vec<f64> {
    let n = y.len();
    let mut rows: Vec<Vec<f64>> = (0..n - 1).filter(|&i| i + 1 != l).map(|i| leq_row(n, i, i + 1)).collect();
    let mut b = vec![0.0; rows.len()];
    let mut upper = vec![0.0; n];
    upper[l - 1] = 1.0;
    rows.push(upper);
    b.push(phi0);
    let mut lower = vec![0.0; n];
    lower[l] = -1.0;
    rows.push(lower);
    b.push(-phi0);
    active_set_projection(y, &rows, &b)
}

pub type Fitter = Box<dyn Fn(&[f64]) -> Vec<f64>>;

/// Input length used by [`fitter_battery`].
pub const BATTERY_N: usize = 12;

/// Every least-squares fitter of the library as a map R^12 → R^12.
pub fn fitter_battery() -> Vec<(&'static str, Fitter)> {
    use shapereg::additive::{backfit_additive, ComponentShape};
    use shapereg::isotonic::{isotonic, pava, Direction};
    use shapereg::partial_order::{fit_isotonic_po_with, OrderRelation};
    use shapereg::projection::Series;
    use shapereg::risklab::oracle_fit;
    use shapereg::shapes::{fit_convex1d, fit_k_monotone_with, fit_matrix_isotonic_with, fit_unimodal};

    let n = BATTERY_N;
    let mut r = rng(99);
    let mut points: Vec<Vec<f64>> = Vec::new();
    while points.len() < n {
        let p = int_vec(&mut r, 2, 0, 5);
        if !points.contains(&p) {
            points.push(p);
        }
    }
    let pts_major = points.clone();
    let design: Vec<Vec<f64>> = (0..3).flat_map(|i| (0..4).map(move |j| vec![i as f64, j as f64 * j as f64])).collect();
    vec![
        ("isotonic", Box::new(|y: &[f64]| isotonic(y).unwrap().fitted()) as Fitter),
        ("antitonic", Box::new(|y: &[f64]| pava(y, &vec![1.0; y.len()], Direction::Nonincreasing).unwrap().fitted())),
        ("unimodal", Box::new(|y: &[f64]| fit_unimodal(y).unwrap().values)),
        ("convex", Box::new(|y: &[f64]| fit_convex1d(&Series::equispaced(y.to_vec()).unwrap()).unwrap().theta_hat)),
        ("k_monotone_3", Box::new(|y: &[f64]| fit_k_monotone_with(y, 3, 1e-13).unwrap().theta_hat)),
        (
            "matrix_3x4",
            Box::new(|y: &[f64]| {
                let m: Vec<Vec<f64>> = y.chunks(4).map(|c| c.to_vec()).collect();
                fit_matrix_isotonic_with(&m, 1e-13, None).unwrap().theta_hat.concat()
            }),
        ),
        (
            "coordinatewise_order",
            Box::new(move |y: &[f64]| fit_isotonic_po_with(&points, y, &OrderRelation::coordinatewise(), 1e-13).unwrap().theta_hat),
        ),
        (
            "weak_majorization_order",
            Box::new(move |y: &[f64]| {
                fit_isotonic_po_with(&pts_major, y, &OrderRelation::weak_majorization(), 1e-13).unwrap().theta_hat
            }),
        ),
        (
            "additive_inc_cvx",
            Box::new(move |y: &[f64]| {
                backfit_additive(&design, y, &[ComponentShape::Nondecreasing, ComponentShape::Convex], 1e-14, 1000)
                    .unwrap()
                    .fitted
            }),
        ),
        ("block_oracle", Box::new(|y: &[f64]| oracle_fit(y, &[3, 4, 5]).unwrap())),
    ]
}

/// Largest violation, relative to the input scale, of the five algebraic
/// invariants at (y, c, shift).
pub fn invariant_violations(f: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64], c: f64, shift: f64) -> [f64; 5] {
    let theta = f(y);
    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
    let c_theta: Vec<f64> = theta.iter().map(|v| c * v).collect();
    let homog = max_abs_diff(&f(&cy), &c_theta) / (c * scale);
    let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
    let ts: Vec<f64> = theta.iter().map(|v| v + shift).collect();
    let transl = max_abs_diff(&f(&ys), &ts) / (scale + shift.abs());
    let mean_gap = (mean(&theta) - mean(y)).abs() / scale;
    let r: Vec<f64> = y.iter().zip(&theta).map(|(a, b)| a - b).collect();
    let pyth = (norm_sq(y) - norm_sq(&theta) - norm_sq(&r)).abs() / (scale * scale);
    let idem = max_abs_diff(&f(&theta), &theta) / scale;
    [homog, transl, mean_gap, pyth, idem]
}

pub const INVARIANT_NAMES: [&str; 5] = ["homogeneity", "translation", "mean", "pythagoras", "idempotence"];
