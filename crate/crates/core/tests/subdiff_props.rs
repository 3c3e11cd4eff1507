mod common;

use common::*;
use nonsmooth::expr::{active_pattern, eval, Expr};
use nonsmooth::polyhedra::{conv_hull, set_distance, SetUnion};
use nonsmooth::subdiff::{clarke, clarke_dir_deriv, dir_deriv, frechet, limiting};
use proptest::prelude::*;

const TOL: f64 = 1e-8;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inclusion_chain((e, x) in pa_instance(6)) {
        let fr = frechet(&e, &x).unwrap();
        let li = limiting(&e, &x).unwrap();
        let cl = clarke(&e, &x).unwrap();
        prop_assert!(!li.is_empty());
        for p in sample_points(&fr.set) {
            prop_assert!(li.contains(&p, TOL).unwrap(), "Fréchet point {p:?} outside limiting set of {e}");
        }
        for p in sample_points(&li.set) {
            prop_assert!(cl.contains(&p, TOL).unwrap(), "limiting point {p:?} outside Clarke set of {e}");
        }
    }

    #[test]
    fn clarke_is_hull_of_limiting((e, x) in pa_instance(6)) {
        let li = limiting(&e, &x).unwrap();
        let cl = clarke(&e, &x).unwrap();
        let hull = conv_hull(&li.set.vertices().unwrap(), x.len()).unwrap();
        prop_assert!(set_distance(&cl.set, &SetUnion::single(hull)).unwrap() <= TOL);
    }

    #[test]
    fn clarke_derivative_is_support((e, x, d) in pa_instance_dir(6)) {
        let cl = clarke(&e, &x).unwrap();
        let fo = clarke_dir_deriv(&e, &x, &d).unwrap().value;
        prop_assert!((fo - cl.set.support_value(&d).unwrap()).abs() <= TOL);
    }

    #[test]
    fn directional_below_clarke((e, x, d) in pa_instance_dir(6)) {
        let fd = dir_deriv(&e, &x, &d).unwrap().value;
        let fo = clarke_dir_deriv(&e, &x, &d).unwrap().value;
        prop_assert!(fd <= fo + TOL, "f' = {fd} > f° = {fo} for {e}");
        // PA functions are affine along short rays
        let q = quotient(&e, &x, &d, 1e-7);
        prop_assert!((fd - q).abs() <= 1e-5 * (1.0 + fd.abs()), "f' = {fd}, quotient {q}");
    }

    #[test]
    fn clarke_derivative_is_sublinear((e, x, d1) in pa_instance_dir(6), d2 in direction(3), lam in 0.01..10.0f64) {
        let n = x.len();
        let d2 = &d2[..n];
        let f = |d: &[f64]| clarke_dir_deriv(&e, &x, d).unwrap().value;
        let scaled: Vec<f64> = d1.iter().map(|v| lam * v).collect();
        prop_assert!((f(&scaled) - lam * f(&d1)).abs() <= 1e-12 * (1.0 + lam * f(&d1).abs()));
        let sum: Vec<f64> = d1.iter().zip(d2).map(|(a, b)| a + b).collect();
        prop_assert!(f(&sum) <= f(&d1) + f(d2) + TOL);
    }

    #[test]
    fn weak_sum_rule((t1, t2, x) in (1usize..=3).prop_flat_map(|n| (pa_tree(n, 4), pa_tree(n, 4), point(n)))) {
        let (f1, f2) = (t1.at(&x), t2.at(&x));
        let total = Expr::Sum(vec![f1.clone(), f2.clone()]);
        let c1 = clarke(&f1, &x).unwrap();
        let c2 = clarke(&f2, &x).unwrap();
        let msum = c1.polytope().unwrap().minkowski(c2.polytope().unwrap()).unwrap();
        for v in clarke(&total, &x).unwrap().set.vertices().unwrap() {
            prop_assert!(msum.contains(&v, TOL).unwrap(), "{v:?} outside the Minkowski sum");
        }
    }

    #[test]
    fn sum_rule_is_exact_for_convex((t1, t2, x) in (1usize..=3).prop_flat_map(|n| (max_affine_tree(n, 1..=3), max_affine_tree(n, 1..=3), point(n)))) {
        let (f1, f2) = (t1.at(&x), t2.at(&x));
        let total = clarke(&Expr::Sum(vec![f1.clone(), f2.clone()]), &x).unwrap();
        let msum = clarke(&f1, &x).unwrap().polytope().unwrap()
            .minkowski(clarke(&f2, &x).unwrap().polytope().unwrap()).unwrap();
        prop_assert!(set_distance(&total.set, &SetUnion::single(msum)).unwrap() <= TOL);
    }

    #[test]
    fn affine_chain_rule((t, a, b, x) in chain_instance()) {
        let u: Vec<f64> = a.iter().zip(&b).map(|(row, bi)| dot(row, &x) + bi).collect();
        let g = t.at(&u);
        let f = compose(&g, &a, &b);
        prop_assert!((eval(&f, &x).unwrap() - eval(&g, &u).unwrap()).abs() <= 1e-9);
        let n = x.len();
        let at: Vec<Vec<f64>> = (0..n).map(|j| a.iter().map(|row| row[j]).collect()).collect();
        let pulled = clarke(&g, &u).unwrap().polytope().unwrap().affine_image(&at, &vec![0.0; n]).unwrap();
        let direct = clarke(&f, &x).unwrap();
        prop_assert!(set_distance(&direct.set, &SetUnion::single(pulled)).unwrap() <= TOL);
    }

    #[test]
    fn convex_sets_coincide((t, x) in (1usize..=3).prop_flat_map(|n| (max_affine_tree(n, 1..=5), point(n)))) {
        let e = t.at(&x);
        let fr = frechet(&e, &x).unwrap();
        let li = limiting(&e, &x).unwrap();
        let cl = clarke(&e, &x).unwrap();
        prop_assert!(set_distance(&fr.set, &cl.set).unwrap() <= TOL);
        prop_assert!(set_distance(&li.set, &cl.set).unwrap() <= TOL);
    }

    #[test]
    fn smooth_points_have_gradient_singleton(
        (e, _, y) in (1usize..=3).prop_flat_map(|n| (pa_tree(n, 6), point(n), prop::collection::vec(-2.0..2.0f64, n)))
            .prop_map(|(t, x, y)| (t.at(&x), x, y))
    ) {
        prop_assume!(active_pattern(&e, &y, 0.0).unwrap().is_smooth());
        let h = 1e-6;
        let grad: Vec<f64> = (0..y.len()).map(|i| {
            let mut p = y.clone();
            let mut m = y.clone();
            p[i] += h;
            m[i] -= h;
            (eval(&e, &p).unwrap() - eval(&e, &m).unwrap()) / (2.0 * h)
        }).collect();
        let cl = clarke(&e, &y).unwrap();
        let poly = cl.polytope().unwrap();
        prop_assert_eq!(poly.vertices.len(), 1);
        for (g, v) in grad.iter().zip(&poly.vertices[0]) {
            prop_assert!((g - v).abs() <= 1e-6 * (1.0 + v.abs()), "fd {g} vs {v}");
        }
    }
}
