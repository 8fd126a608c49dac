mod common;

use common::*;
use rand::RngCore;
use shapereg::isotonic::{constrained_pava, isotonic, minmax_value, pava, slope_fit, Direction};
use shapereg::partial_order::{fit_isotonic_po, OrderRelation};
use shapereg::projection::{grid, project_cone, ConeSpec, Series};
use shapereg::shapes::{fit_convex1d, fit_k_monotone, fit_k_monotone_series, fit_matrix_isotonic, fit_unimodal};

#[test]
fn pava_minmax_gcm_and_partition_search_agree() {
    for n in 1..=6 {
        for y in all_int_vectors(n, -3, 3) {
            let p = isotonic(&y).unwrap().fitted();
            let brute = brute_isotonic(&y);
            let mm: Vec<f64> = (1..=n).map(|j| minmax_value(&y, j).unwrap()).collect();
            let slopes = slope_fit(&Series::equispaced(y.clone()).unwrap()).fitted();
            for other in [&brute, &mm, &maxmin_direct(&y), &slopes, &gcm_slopes(&y)] {
                assert!(max_abs_diff(&p, other) <= 1e-9, "y = {y:?}");
            }
        }
    }
}

#[test]
fn pava_matches_partition_search_on_random_lengths() {
    let mut r = rng(11);
    for n in 7..=12 {
        for _ in 0..300 {
            let y = int_vec(&mut r, n, -3, 3);
            assert!(max_abs_diff(&isotonic(&y).unwrap().fitted(), &brute_isotonic(&y)) <= 1e-9);
        }
    }
}

#[test]
fn weighted_pava_equals_replicated_pava() {
    let mut r = rng(12);
    for _ in 0..500 {
        let n = 1 + (r.next_u64() % 8) as usize;
        let y = int_vec(&mut r, n, -3, 3);
        let w: Vec<usize> = (0..n).map(|_| 1 + (r.next_u64() % 3) as usize).collect();
        let wf: Vec<f64> = w.iter().map(|&c| c as f64).collect();
        let fit = pava(&y, &wf, Direction::Nondecreasing).unwrap().fitted();
        let expanded: Vec<f64> = y.iter().zip(&w).flat_map(|(&v, &c)| std::iter::repeat(v).take(c)).collect();
        let full = naive_pool(&expanded);
        let mut pos = 0;
        for (i, &c) in w.iter().enumerate() {
            assert!((fit[i] - full[pos]).abs() <= 1e-9);
            pos += c;
        }
    }
}

#[test]
fn cone_solver_matches_active_set_enumeration() {
    let mut r = rng(13);
    for n in 2..=6 {
        let cones = [ConeSpec::isotonic(n), ConeSpec::convex(&grid(n)).unwrap(), ConeSpec::k_monotone(n, (n - 1).min(3)).unwrap()];
        for cone in &cones {
            let rows = dense_rows(cone);
            for _ in 0..40 {
                let y = int_vec(&mut r, n, -1, 2);
                let fit = project_cone(&y, cone, 1e-12, 100_000).unwrap();
                let oracle = cone_oracle(&y, &rows);
                assert!(max_abs_diff(&fit.theta_hat, &oracle) <= 1e-6, "y = {y:?}");
            }
        }
    }
}

#[test]
fn random_cones_match_active_set_enumeration() {
    let mut r = rng(14);
    for _ in 0..200 {
        let n = 2 + (r.next_u64() % 5) as usize;
        let m = 1 + (r.next_u64() % 6) as usize;
        let rows: Vec<Vec<f64>> = (0..m).map(|_| int_vec(&mut r, n, -2, 2)).filter(|row| row.iter().any(|&v| v != 0.0)).collect();
        if rows.is_empty() {
            continue;
        }
        let sparse = rows
            .iter()
            .map(|row| {
                let idx: Vec<usize> = (0..n).filter(|&i| row[i] != 0.0).collect();
                let coef = idx.iter().map(|&i| row[i]).collect();
                shapereg::projection::SparseRow::new(idx, coef)
            })
            .collect();
        let cone = ConeSpec::new(n, sparse).unwrap();
        let y = int_vec(&mut r, n, -1, 2);
        let fit = project_cone(&y, &cone, 1e-12, 200_000).unwrap();
        assert!(max_abs_diff(&fit.theta_hat, &cone_oracle(&y, &rows)) <= 1e-6, "rows {rows:?} y {y:?}");
    }
}

#[test]
fn matrix_fit_matches_dense_oracle() {
    let mut r = rng(15);
    for (n1, n2) in [(1, 3), (2, 2), (2, 3), (3, 2), (3, 3)] {
        let rows = grid_rows(n1, n2);
        for _ in 0..25 {
            let flat = int_vec(&mut r, n1 * n2, -3, 3);
            let y: Vec<Vec<f64>> = flat.chunks(n2).map(|c| c.to_vec()).collect();
            let fit = fit_matrix_isotonic(&y).unwrap();
            let got: Vec<f64> = fit.theta_hat.concat();
            assert!(max_abs_diff(&got, &cone_oracle(&flat, &rows)) <= 1e-6, "y = {y:?}");
        }
    }
}

#[test]
fn constrained_pava_matches_pinned_oracle() {
    for n in 2..=5 {
        for y in all_int_vectors(n, -2, 2) {
            for l in 1..n {
                for phi0 in [-1.5, 0.0, 0.5, 2.0] {
                    let got = constrained_pava(&y, l, phi0).unwrap().fitted();
                    assert!(max_abs_diff(&got, &pinned_oracle(&y, l, phi0)) <= 1e-6, "y {y:?} l {l} phi0 {phi0}");
                }
            }
        }
    }
}

#[test]
fn unimodal_sse_is_minimum_over_modes() {
    let mut r = rng(16);
    for n in [1, 2, 3, 5, 8, 13, 21, 34, 50] {
        for _ in 0..20 {
            let y = gaussian_vec(&mut r, n);
            let fit = fit_unimodal(&y).unwrap();
            let best = brute_valley_sse(&y);
            assert!((fit.sse - best).abs() <= 1e-9 * (1.0 + best), "n {n}");
        }
    }
}

#[test]
fn k_monotone_low_orders_match_specialised_solvers() {
    let mut r = rng(17);
    for n in 3..=12 {
        for _ in 0..20 {
            let y = gaussian_vec(&mut r, n);
            let iso = isotonic(&y).unwrap().fitted();
            let k1 = fit_k_monotone(&y, 1).unwrap().theta_hat;
            assert!(max_abs_diff(&k1, &iso) <= 1e-6);
            let s = Series::equispaced(y.clone()).unwrap();
            let cvx = fit_convex1d(&s).unwrap().theta_hat;
            let k2 = fit_k_monotone(&y, 2).unwrap().theta_hat;
            assert!(max_abs_diff(&k2, &cvx) <= 1e-6);
            assert!(max_abs_diff(&fit_k_monotone_series(&s, 2).unwrap().theta_hat, &cvx) <= 1e-12);
        }
    }
}

#[test]
fn convex_fit_matches_oracle_on_uneven_designs() {
    let mut r = rng(18);
    for n in 3..=6 {
        for _ in 0..30 {
            let mut x: Vec<f64> = (0..n).map(|_| (r.next_u64() % 1000) as f64 / 100.0).collect();
            x.sort_by(f64::total_cmp);
            x.dedup();
            if x.len() < 3 {
                continue;
            }
            let y = int_vec(&mut r, x.len(), -2, 2);
            let rows = dense_rows(&ConeSpec::convex(&x).unwrap());
            let fit = fit_convex1d(&Series::new(x.clone(), y.clone()).unwrap()).unwrap();
            assert!(max_abs_diff(&fit.theta_hat, &cone_oracle(&y, &rows)) <= 1e-6, "x {x:?} y {y:?}");
        }
    }
}

#[test]
fn poset_fit_matches_dense_oracle() {
    let mut r = rng(19);
    for _ in 0..150 {
        let n = 2 + (r.next_u64() % 5) as usize;
        let mut points: Vec<Vec<f64>> = Vec::new();
        while points.len() < n {
            let p = int_vec(&mut r, 2, 0, 3);
            if !points.contains(&p) {
                points.push(p);
            }
        }
        let y = int_vec(&mut r, n, -3, 3);
        let order = OrderRelation::coordinatewise();
        let fit = fit_isotonic_po(&points, &y, &order).unwrap();
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && order.leq(&points[i], &points[j]).unwrap() {
                    rows.push(leq_row(n, i, j));
                }
            }
        }
        let oracle = if rows.len() <= 20 { cone_oracle(&y, &rows) } else { continue };
        assert!(max_abs_diff(&fit.theta_hat, &oracle) <= 1e-6, "points {points:?} y {y:?}");
    }
}

#[test]
fn explicit_order_matches_dense_oracle() {
    let mut r = rng(20);
    for _ in 0..100 {
        let n = 3 + (r.next_u64() % 4) as usize;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.next_u64() % 3 == 0 {
                    edges.push((i, j));
                }
            }
        }
        let y = int_vec(&mut r, n, -3, 3);
        let fit = fit_isotonic_po(&[], &y, &OrderRelation::explicit(edges.clone())).unwrap();
        let rows: Vec<Vec<f64>> = edges.iter().map(|&(i, j)| leq_row(n, i, j)).collect();
        assert!(max_abs_diff(&fit.theta_hat, &cone_oracle(&y, &rows)) <= 1e-6, "edges {edges:?} y {y:?}");
    }
}
