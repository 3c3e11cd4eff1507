mod common;

use common::*;
use nonsmooth::expr::{eval, Expr};
use nonsmooth::gallery::pa_items;
use nonsmooth::polyhedra::{ConvexSetSpec, HPolyhedron, Halfspace};
use nonsmooth::stationarity::{classify, convex_optimality_check, ConvexObjective, DEFAULT_TOL};
use nonsmooth::subdiff::dir_deriv;
use proptest::prelude::*;

/// Coercive max-affine function with extra pieces `±3(z_k − p_k) + c`.
fn coercive(n: usize) -> impl Strategy<Value = Rows> {
    (rows(n, 1..=3), prop::collection::vec(-1.0..1.0f64, n), -1.0..1.0f64).prop_map(move |(mut r, p, c)| {
        for k in 0..n {
            for s in [-3.0, 3.0] {
                let mut a = vec![0.0; n];
                a[k] = s;
                r.push((a, c - s * p[k]));
            }
        }
        r
    })
}

/// `[−1,1]ⁿ` cut by up to two halfspaces that keep the origin inside.
fn polytope(n: usize) -> impl Strategy<Value = Vec<Halfspace>> {
    prop::collection::vec((prop::collection::vec(-1.0..1.0f64, n), 0.2..1.0f64), 0..=2).prop_map(move |cuts| {
        let mut h = HPolyhedron::box_bounds(&vec![-1.0; n], &vec![1.0; n]).halfspaces;
        h.extend(cuts.into_iter().map(|(a, b)| Halfspace::new(a, b)));
        h
    })
}

fn hierarchy_ok(e: &Expr, x: &[f64]) -> Result<(), TestCaseError> {
    let r = classify(e, x, DEFAULT_TOL).unwrap();
    prop_assert!(!r.is_d || r.is_l, "d without l at {x:?} for {e}");
    prop_assert!(!r.is_l || r.is_c, "l without C at {x:?} for {e}");
    if let Some(w) = &r.witness {
        prop_assert!(!r.is_d);
        let q = quotient(e, x, &w.direction, 1e-7);
        prop_assert!(q < -DEFAULT_TOL / 2.0, "witness {:?} has quotient {q}", w.direction);
    } else {
        prop_assert!(r.is_d);
    }
    Ok(())
}

#[test]
fn gallery_reports_respect_hierarchy() {
    for (e, x) in pa_items() {
        hierarchy_ok(&e, &x).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hierarchy_and_witness((e, x) in pa_instance(6)) {
        hierarchy_ok(&e, &x)?;
    }

    #[test]
    fn local_minima_are_d_stationary((h1, h2) in (1usize..=2).prop_flat_map(|n| (coercive(n), coercive(n)))) {
        let n = h1[0].0.len();
        let f = Expr::Min(vec![max_affine(&h1), max_affine(&h2)]);
        for (h, other) in [(&h1, &h2), (&h2, &h1)] {
            let z = brute_force_min(h, &[], n);
            prop_assume!(value(h, &z) < value(other, &z) - 1e-2);
            // grid check of the oracle, step 1e-3
            let fz = eval(&f, &z).unwrap();
            for k in 0..3usize.pow(n as u32) {
                let off: Vec<f64> = (0..n).map(|i| ((k / 3usize.pow(i as u32)) % 3) as f64 - 1.0).collect();
                let y: Vec<f64> = z.iter().zip(&off).map(|(a, b)| a + 1e-3 * b).collect();
                prop_assert!(eval(&f, &y).unwrap() >= fz - 1e-12);
            }
            let r = classify(&f, &z, DEFAULT_TOL).unwrap();
            prop_assert!(r.is_d, "local minimum {z:?} of {f} not d-stationary: {:?}", r.witness);
        }
    }

    #[test]
    fn convex_optimality_matches_directions(
        (g, facets, extra, ys) in (1usize..=2).prop_flat_map(|n| (
            rows(n, 1..=4),
            polytope(n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), 3),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), 400),
        ))
    ) {
        let n = g[0].0.len();
        let set = ConvexSetSpec::Polyhedron(HPolyhedron::new(n, facets.clone()).unwrap());
        let obj = ConvexObjective::Expr(max_affine(&g));
        let e = max_affine(&g);
        let star = brute_force_min(&g, &facets, n);
        let mut feasible: Vec<Vec<f64>> = ys.into_iter().filter(|y| set.contains(y, 0.0)).take(200).collect();
        feasible.push(star.clone());
        let mut xs = vec![star];
        xs.extend(extra.into_iter().filter(|y| set.contains(y, 0.0)));
        for x in xs {
            let flag = convex_optimality_check(&obj, &set, &x, DEFAULT_TOL).unwrap().optimal;
            let directional = feasible.iter().all(|y| {
                let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                d.iter().all(|v| v.abs() < 1e-15) || dir_deriv(&e, &x, &d).unwrap().value >= -DEFAULT_TOL
            });
            prop_assert_eq!(flag, directional, "x = {:?}", x);
        }
    }
}
