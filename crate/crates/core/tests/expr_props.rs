mod common;

use common::*;
use nonsmooth::expr::{active_pattern, ae_gradient, classify_fragment, eval, parse_expr, Builtin, Expr, FragmentClass};
use nonsmooth::gallery::{pa_items, F1, F2, RELU_LOSS};
use proptest::prelude::*;

fn round_trip(e: &Expr) {
    let text = e.to_string();
    let back = parse_expr(&text).unwrap_or_else(|err| panic!("{text}: {err}"));
    assert_eq!(&back, e, "{text}");
    assert_eq!(back.to_string(), text);
}

#[test]
fn named_examples_round_trip() {
    let mut corpus: Vec<Expr> = pa_items().into_iter().map(|(e, _)| e).collect();
    for text in [
        F1,
        F2,
        RELU_LOSS,
        "(builtin xsqsin (var 0))",
        "(builtin xsinlog (var 0))",
        "(max (affine (1 1) 0) (affine (1 -1) 0) (affine (-2 1) 0) (affine (-2 -1) 0))",
        "(sum (abs (var 0)) (abs (var 1)) (abs (var 2)))",
        "(sq (max (affine (0.25 -1.5) 1e-3) (const 0)))",
        "(min (const -0.1) (scale 2.5 (var 1)))",
        "(scale -1 (min (abs (var 0)) (sq (var 0))))",
        "(sum (sq (sum (max (var 0) (const 0)) (const -1))) (const 0.1))",
    ] {
        corpus.push(parse_expr(text).unwrap());
    }
    assert!(corpus.len() >= 20);
    corpus.iter().for_each(round_trip);
}

#[test]
fn builtins_are_not_pa() {
    let e = Expr::builtin(Builtin::XSqSin, Expr::var(0));
    assert_eq!(classify_fragment(&e), FragmentClass::Smooth1D);
    assert_eq!(eval(&e, &[0.0]).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_trees_round_trip((e, _) in pa_instance(6)) {
        round_trip(&e);
        round_trip(&Expr::sq(e.clone()));
    }

    #[test]
    fn abs_is_max_of_signs(
        (e, pts) in (1usize..=3).prop_flat_map(|n| (pa_tree(n, 6).prop_map(move |t| t.at(&vec![0.0; n])),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), 1000)))
    ) {
        let a = Expr::abs(e.clone());
        let m = Expr::Max(vec![e.clone(), Expr::scale(-1.0, e)]);
        for x in &pts {
            prop_assert_eq!(eval(&a, x).unwrap(), eval(&m, x).unwrap());
        }
    }

    #[test]
    fn squaring_never_yields_pa((e, _) in pa_instance(6)) {
        prop_assert_eq!(classify_fragment(&e), FragmentClass::PA);
        let class = classify_fragment(&Expr::sq(e.clone()));
        prop_assert!(matches!(class, FragmentClass::PLQ | FragmentClass::General));
        let sum = Expr::Sum(vec![e.clone(), Expr::sq(e)]);
        prop_assert_ne!(classify_fragment(&sum), FragmentClass::PA);
    }

    #[test]
    fn singleton_pattern_matches_finite_differences(
        (e, y) in (1usize..=3).prop_flat_map(|n| (pa_tree(n, 6), point(n), prop::collection::vec(-2.0..2.0f64, n)))
            .prop_map(|(t, x, y)| (Expr::sq(t.at(&x)), y))
    ) {
        prop_assume!(active_pattern(&e, &y, 0.0).unwrap().is_smooth());
        let g = ae_gradient(&e, &y).unwrap();
        let h = 1e-5;
        for i in 0..y.len() {
            let mut p = y.clone();
            let mut m = y.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (eval(&e, &p).unwrap() - eval(&e, &m).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "fd {} vs {}", fd, g[i]);
        }
    }
}
