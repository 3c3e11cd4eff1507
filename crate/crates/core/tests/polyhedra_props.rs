use nalgebra::{DMatrix, DVector};
use nonsmooth::polyhedra::{
    conv_hull, dual_cone, lp_solve, set_distance, support_value, Cone, HPolyhedron, Halfspace, LpOutcome, SetUnion,
};
use proptest::prelude::*;

fn vecs(n: usize, k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), k)
}

/// Best vertex among all `n`-subsets of active constraints.
fn brute_force_lp(c: &[f64], h: &HPolyhedron) -> Option<f64> {
    let n = h.dim();
    let m = h.halfspaces.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| h.halfspaces[idx[i]].normal[j]);
        let b = DVector::from_fn(n, |i, _| h.halfspaces[idx[i]].offset);
        if a.determinant().abs() > 1e-9 {
            if let Some(z) = a.lu().solve(&b) {
                let z: Vec<f64> = z.iter().copied().collect();
                if h.contains(&z, 1e-9) {
                    let v: f64 = c.iter().zip(&z).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in (i + 1)..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn bounded_polyhedron() -> impl Strategy<Value = HPolyhedron> {
    (1usize..=4).prop_flat_map(|n| {
        prop::collection::vec((prop::collection::vec(-1.0..1.0f64, n), 0.1..1.0f64), 0..=12 - 2 * n).prop_map(move |cuts| {
            let mut h = HPolyhedron::box_bounds(&vec![-1.0; n], &vec![1.0; n]);
            for (a, b) in cuts {
                h.push(Halfspace::new(a, b));
            }
            h
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_matches_vertex_enumeration((h, c) in bounded_polyhedron().prop_flat_map(|h| {
        let n = h.dim();
        (Just(h), prop::collection::vec(-1.0..1.0f64, n))
    })) {
        let out = lp_solve(&c, &h).unwrap();
        let LpOutcome::Optimal { point, value } = out else {
            return Err(TestCaseError::fail(format!("expected an optimum, got {out:?}")));
        };
        prop_assert!(h.contains(&point, 1e-8));
        let brute = brute_force_lp(&c, &h).unwrap();
        prop_assert!((value - brute).abs() <= 1e-8, "simplex {value} vs enumeration {brute}");
    }

    #[test]
    fn hull_is_idempotent(pts in (1usize..=3).prop_flat_map(|n| vecs(n, 1..=10))) {
        let n = pts[0].len();
        let p = conv_hull(&pts, n).unwrap();
        let q = conv_hull(&p.vertices, n).unwrap();
        prop_assert_eq!(p.vertices.len(), q.vertices.len());
        prop_assert!(set_distance(&SetUnion::single(p), &SetUnion::single(q)).unwrap() <= 1e-12);
    }

    #[test]
    fn hull_contains_its_points(pts in (1usize..=3).prop_flat_map(|n| vecs(n, 1..=10))) {
        let n = pts[0].len();
        let p = conv_hull(&pts, n).unwrap();
        for x in &pts {
            prop_assert!(p.contains(x, 1e-9).unwrap());
        }
    }

    #[test]
    fn support_is_subadditive((pts, d1, d2) in (1usize..=3).prop_flat_map(|n| (
        vecs(n, 1..=8),
        prop::collection::vec(-1.0..1.0f64, n),
        prop::collection::vec(-1.0..1.0f64, n),
    ))) {
        let s = conv_hull(&pts, pts[0].len()).unwrap();
        let sum: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
        let lhs = support_value(&s, &sum).unwrap();
        prop_assert!(lhs <= support_value(&s, &d1).unwrap() + support_value(&s, &d2).unwrap() + 1e-12);
    }

    #[test]
    fn double_dual_is_identity(gens in (2usize..=3).prop_flat_map(|n| vecs(n, 1..=4))) {
        let n = gens[0].len();
        let c = Cone::from_generators(n, gens).unwrap();
        let dd = dual_cone(&dual_cone(&c).unwrap()).unwrap();
        let d = set_distance(&SetUnion::single(c.cap().unwrap()), &SetUnion::single(dd.cap().unwrap())).unwrap();
        prop_assert!(d <= 1e-8, "distance {d}");
    }
}
