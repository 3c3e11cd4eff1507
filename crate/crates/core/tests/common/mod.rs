#![allow(dead_code)]

use nonsmooth::expr::Expr;
use proptest::prelude::*;

/// Shape of a random PA expression. Leaves are written relative to the
/// evaluation point so that ties there are common.
#[derive(Clone, Debug)]
pub enum Tree {
    Leaf(Vec<f64>, f64),
    Max(Vec<Tree>),
    Min(Vec<Tree>),
    Sum(Vec<Tree>),
    Scale(f64, Box<Tree>),
    Abs(Box<Tree>),
}

impl Tree {
    pub fn leaves(&self) -> usize {
        match self {
            Tree::Leaf(..) => 1,
            Tree::Max(c) | Tree::Min(c) | Tree::Sum(c) => c.iter().map(Tree::leaves).sum(),
            Tree::Scale(_, c) | Tree::Abs(c) => c.leaves(),
        }
    }

    /// Leaf `a·(z − x) + c` becomes `Affine(a, c − a·x)`.
    pub fn at(&self, x: &[f64]) -> Expr {
        match self {
            Tree::Leaf(a, c) => {
                let ax: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                Expr::affine(a.clone(), c - ax)
            }
            Tree::Max(cs) => Expr::Max(cs.iter().map(|t| t.at(x)).collect()),
            Tree::Min(cs) => Expr::Min(cs.iter().map(|t| t.at(x)).collect()),
            Tree::Sum(cs) => Expr::Sum(cs.iter().map(|t| t.at(x)).collect()),
            Tree::Scale(s, c) => Expr::scale(*s, c.at(x)),
            Tree::Abs(c) => Expr::abs(c.at(x)),
        }
    }
}

fn leaf(dim: usize) -> impl Strategy<Value = Tree> {
    (
        prop::collection::vec(-2i32..=2, dim),
        prop_oneof![8 => Just(0.0), 1 => Just(1.0), 1 => Just(-1.0), 1 => -1.0..1.0f64],
    )
        .prop_map(|(a, c)| Tree::Leaf(a.into_iter().map(f64::from).collect(), c))
}

fn combine(inner: impl Strategy<Value = Tree> + Clone) -> impl Strategy<Value = Tree> {
    prop_oneof![
        3 => prop::collection::vec(inner.clone(), 2..=3).prop_map(Tree::Max),
        3 => prop::collection::vec(inner.clone(), 2..=3).prop_map(Tree::Min),
        1 => prop::collection::vec(inner.clone(), 2..=2).prop_map(Tree::Sum),
        1 => (prop_oneof![Just(-1.0), Just(-2.0), Just(0.5), Just(2.0)], inner.clone())
            .prop_map(|(s, t)| Tree::Scale(s, Box::new(t))),
        1 => inner.prop_map(|t| Tree::Abs(Box::new(t))),
    ]
}

/// Random PA trees with at most `max_leaves` affine leaves and a
/// non-leaf root.
pub fn pa_tree(dim: usize, max_leaves: usize) -> impl Strategy<Value = Tree> {
    let inner = leaf(dim).prop_recursive(2, max_leaves as u32, 3, |inner| combine(inner.boxed()));
    combine(inner.boxed()).prop_filter("too many pieces", move |t| t.leaves() <= max_leaves)
}

pub fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), Just(1.0), Just(-0.5), -2.0..2.0f64],
        dim,
    )
}

pub fn direction(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim).prop_filter("zero direction", |d| {
        d.iter().map(|v| v * v).sum::<f64>() > 1e-6
    })
}

/// A PA instance `(expr, x)` in dimension 1..=3.
pub fn pa_instance(max_leaves: usize) -> impl Strategy<Value = (Expr, Vec<f64>)> {
    (1usize..=3).prop_flat_map(move |n| {
        (pa_tree(n, max_leaves), point(n)).prop_map(|(t, x)| (t.at(&x), x))
    })
}

/// A PA instance with a direction.
pub fn pa_instance_dir(max_leaves: usize) -> impl Strategy<Value = (Expr, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(move |n| {
        (pa_tree(n, max_leaves), point(n), direction(n)).prop_map(|(t, x, d)| (t.at(&x), x, d))
    })
}

/// Max of affine pieces, convex by construction.
pub fn max_affine_tree(dim: usize, pieces: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Tree> {
    prop::collection::vec(leaf(dim), pieces).prop_map(Tree::Max)
}

/// Independent one-sided difference quotient.
pub fn quotient(e: &Expr, x: &[f64], d: &[f64], t: f64) -> f64 {
    let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
    (nonsmooth::expr::eval(e, &y).unwrap() - nonsmooth::expr::eval(e, x).unwrap()) / t
}

/// Vertices of every component plus pairwise midpoints and centroids.
pub fn sample_points(s: &nonsmooth::polyhedra::SetUnion) -> Vec<Vec<f64>> {
    use nonsmooth::polyhedra::Component;
    let mut out = Vec::new();
    for c in &s.components {
        let verts = match c {
            Component::Poly(p) => p.vertices.clone(),
            Component::Halfspaces(h) => h.to_vpolytope().unwrap().vertices,
            Component::Ball { ball } => vec![ball.center.clone()],
        };
        let n = s.dim;
        for i in 0..verts.len() {
            out.push(verts[i].clone());
            for j in (i + 1)..verts.len() {
                out.push((0..n).map(|k| 0.5 * (verts[i][k] + verts[j][k])).collect());
            }
        }
        if !verts.is_empty() {
            let m = verts.len() as f64;
            out.push((0..n).map(|k| verts.iter().map(|v| v[k]).sum::<f64>() / m).collect());
        }
    }
    out
}

/// Affine rows `(a, b)` meaning `aᵀz + b`.
pub type Rows = Vec<(Vec<f64>, f64)>;

pub fn max_affine(rows: &Rows) -> Expr {
    Expr::Max(rows.iter().map(|(a, b)| Expr::affine(a.clone(), *b)).collect())
}

pub fn value(rows: &Rows, z: &[f64]) -> f64 {
    rows.iter()
        .map(|(a, b)| a.iter().zip(z).map(|(p, q)| p * q).sum::<f64>() + b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `Σ_j m[i][j] z_j = r[i]` for n ≤ 2 by Cramer's rule.
pub fn solve(m: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    match m.len() {
        1 => (m[0][0].abs() > 1e-9).then(|| vec![r[0] / m[0][0]]),
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            (det.abs() > 1e-9).then(|| {
                vec![
                    (r[0] * m[1][1] - m[0][1] * r[1]) / det,
                    (m[0][0] * r[1] - r[0] * m[1][0]) / det,
                ]
            })
        }
        _ => unreachable!(),
    }
}

/// Exact minimizer of a max-affine function over `{z : hᵀz ≤ c}` by
/// enumerating points where `n` tie or facet equations hold.
pub fn brute_force_min(rows: &Rows, facets: &[nonsmooth::polyhedra::Halfspace], n: usize) -> Vec<f64> {
    let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let a: Vec<f64> = rows[i].0.iter().zip(&rows[j].0).map(|(p, q)| p - q).collect();
            eqs.push((a, rows[j].1 - rows[i].1));
        }
    }
    eqs.extend(facets.iter().map(|h| (h.normal.clone(), h.offset)));
    let feasible = |z: &[f64]| facets.iter().all(|h| h.violation(z) <= 1e-9);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |z: Vec<f64>| {
        if feasible(&z) {
            let v = value(rows, &z);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, z));
            }
        }
    };
    for i in 0..eqs.len() {
        if n == 1 {
            if let Some(z) = solve(&[eqs[i].0.clone()], &[eqs[i].1]) {
                consider(z);
            }
            continue;
        }
        for j in (i + 1)..eqs.len() {
            if let Some(z) = solve(&[eqs[i].0.clone(), eqs[j].0.clone()], &[eqs[i].1, eqs[j].1]) {
                consider(z);
            }
        }
    }
    best.expect("bounded problem has a vertex minimizer").1
}

pub fn rows(n: usize, k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Rows> {
    prop::collection::vec(
        (prop::collection::vec(-2i32..=2, n), -1.0..1.0f64)
            .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect::<Vec<f64>>(), b)),
        k,
    )
}


pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `e(A z + b)` for a PA expression `e`.
pub fn compose(e: &Expr, a: &[Vec<f64>], b: &[f64]) -> Expr {
    let n = a[0].len();
    match e {
        Expr::Affine { coeffs, offset } => {
            let c: Vec<f64> = (0..n).map(|j| (0..a.len()).map(|i| coeffs[i] * a[i][j]).sum()).collect();
            Expr::affine(c, dot(coeffs, b) + offset)
        }
        Expr::Const(c) => Expr::Const(*c),
        Expr::Var(i) => Expr::affine(a[*i].clone(), b[*i]),
        Expr::Max(cs) => Expr::Max(cs.iter().map(|c| compose(c, a, b)).collect()),
        Expr::Min(cs) => Expr::Min(cs.iter().map(|c| compose(c, a, b)).collect()),
        Expr::Sum(cs) => Expr::Sum(cs.iter().map(|c| compose(c, a, b)).collect()),
        Expr::Scale(s, c) => Expr::scale(*s, compose(c, a, b)),
        Expr::Abs(c) => Expr::abs(compose(c, a, b)),
        other => panic!("not PA: {other}"),
    }
}

pub fn chain_instance() -> impl Strategy<Value = (Tree, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=3)
        .prop_flat_map(|n| (Just(n), 1usize..=n))
        .prop_flat_map(|(n, m)| {
            (
                pa_tree(m, 6),
                prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), m),
                prop::collection::vec(-1.0..1.0f64, m),
                point(n),
            )
        })
}
