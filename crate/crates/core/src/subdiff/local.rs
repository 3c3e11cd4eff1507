//! Local structure of an expression around a point.
//!
//! A *lexicographic base* `(x; d₁, …, d_k)` stands for the points
//! `x + ε₁d₁ + ε₁ε₂d₂ + …` with `ε`'s infinitesimal. Evaluating a tree there
//! gives a vector `(f(x), f'(x;d₁), …)` and decides which branches of each
//! Max/Min/Abs node are active. Complete selections of active branches give
//! the local linear pieces; each carries the gradient and the polyhedral cone
//! (rows `rᵀu ≥ 0`) of directions `u` on which it is valid.

use crate::expr::Expr;
use crate::polyhedra::{lp_solve, ClipPolytope, HPolyhedron, Halfspace, LpOutcome};

use super::SubdiffError;

/// Tie tolerances: relative for values at the base point, and for
/// derivative levels of a lexicographic base.
#[derive(Clone, Copy, Debug)]
pub struct EngineTol {
    pub value: f64,
    pub direction: f64,
}

impl Default for EngineTol {
    fn default() -> Self {
        EngineTol {
            value: 1e-12,
            direction: 1e-9,
        }
    }
}

impl EngineTol {
    fn level(&self, k: usize, m: f64) -> f64 {
        let base = if k == 0 { self.value } else { self.direction };
        base * (1.0 + m.abs())
    }
}

pub const MAX_PIECES: usize = 1 << 14;

/// One complete selection at a lexicographic base.
#[derive(Clone, Debug)]
pub(crate) struct Piece {
    pub grad: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) struct Local {
    pub lex: Vec<f64>,
    pub pieces: Vec<Piece>,
}

/// Interior cell of the local subdivision.
#[derive(Clone, Debug)]
pub(crate) struct Cell {
    pub grad: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

fn lex_max(vs: &[Vec<f64>], tol: &EngineTol, is_max: bool) -> (Vec<usize>, Vec<f64>) {
    let len = vs[0].len();
    let mut surv: Vec<usize> = (0..vs.len()).collect();
    let mut out = vec![0.0; len];
    for k in 0..len {
        let m = if is_max {
            surv.iter()
                .map(|&i| vs[i][k])
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            surv.iter().map(|&i| vs[i][k]).fold(f64::INFINITY, f64::min)
        };
        let t = tol.level(k, m);
        surv.retain(|&i| (vs[i][k] - m).abs() <= t);
        out[k] = m;
    }
    (surv, out)
}

fn lex_sign(v: &[f64], tol: &EngineTol) -> f64 {
    for (k, &c) in v.iter().enumerate() {
        if c.abs() > tol.level(k, 0.0) {
            return c.signum();
        }
    }
    0.0
}

/// Lexicographic value vector `(f(x), f'(x; d₁), …)`.
pub(crate) fn lex_eval(
    e: &Expr,
    x: &[f64],
    dirs: &[Vec<f64>],
    tol: &EngineTol,
) -> Result<Vec<f64>, SubdiffError> {
    let k = dirs.len();
    let lin = |a: &[f64], b: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(k + 1);
        v.push(dot(a, x) + b);
        for d in dirs {
            v.push(dot(a, d));
        }
        v
    };
    Ok(match e {
        Expr::Const(c) => {
            let mut v = vec![0.0; k + 1];
            v[0] = *c;
            v
        }
        Expr::Var(i) => {
            let mut v = Vec::with_capacity(k + 1);
            v.push(x[*i]);
            for d in dirs {
                v.push(d[*i]);
            }
            v
        }
        Expr::Affine { coeffs, offset } => lin(coeffs, *offset),
        Expr::Sum(cs) => {
            let mut v = vec![0.0; k + 1];
            for c in cs {
                for (a, b) in v.iter_mut().zip(lex_eval(c, x, dirs, tol)?) {
                    *a += b;
                }
            }
            v
        }
        Expr::Scale(c, e) => lex_eval(e, x, dirs, tol)?
            .into_iter()
            .map(|v| c * v)
            .collect(),
        Expr::Max(cs) | Expr::Min(cs) => {
            let vs = cs
                .iter()
                .map(|c| lex_eval(c, x, dirs, tol))
                .collect::<Result<Vec<_>, _>>()?;
            lex_max(&vs, tol, matches!(e, Expr::Max(_))).1
        }
        Expr::Abs(c) => {
            let v = lex_eval(c, x, dirs, tol)?;
            let s = lex_sign(&v, tol);
            v.into_iter().map(|a| s * a).collect()
        }
        Expr::Sq(c) => {
            if k > 1 {
                return Err(SubdiffError::Unsupported(
                    "squares beyond first-order local analysis".into(),
                ));
            }
            let v = lex_eval(c, x, dirs, tol)?;
            let mut out = vec![v[0] * v[0]];
            if k == 1 {
                out.push(2.0 * v[0] * v[1]);
            }
            out
        }
        Expr::Builtin(b, c) => {
            if k > 1 {
                return Err(SubdiffError::Unsupported(
                    "builtin atoms beyond first-order local analysis".into(),
                ));
            }
            let v = lex_eval(c, x, dirs, tol)?;
            let mut out = vec![b.value(v[0])];
            if k == 1 {
                let dv = if v[1] == 0.0 {
                    0.0
                } else {
                    b.dir_deriv(v[0], v[1].signum())
                        .ok_or(SubdiffError::NotDirectionallyDifferentiable)?
                        * v[1].abs()
                };
                out.push(dv);
            }
            out
        }
    })
}

fn product(groups: Vec<Vec<Piece>>) -> Result<Vec<Piece>, SubdiffError> {
    let mut acc: Vec<Piece> = vec![Piece {
        grad: Vec::new(),
        rows: Vec::new(),
    }];
    for g in groups {
        if acc.len() * g.len() > MAX_PIECES {
            return Err(SubdiffError::TooManySelections(acc.len() * g.len()));
        }
        let mut next = Vec::with_capacity(acc.len() * g.len());
        for a in &acc {
            for p in &g {
                let grad = if a.grad.is_empty() {
                    p.grad.clone()
                } else {
                    a.grad.iter().zip(&p.grad).map(|(u, v)| u + v).collect()
                };
                let mut rows = a.rows.clone();
                rows.extend(p.rows.iter().cloned());
                next.push(Piece { grad, rows });
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Lexicographic value and complete local selections of `e` at the base.
pub(crate) fn local(
    e: &Expr,
    x: &[f64],
    dirs: &[Vec<f64>],
    tol: &EngineTol,
) -> Result<Local, SubdiffError> {
    let n = x.len();
    let lex = lex_eval(e, x, dirs, tol)?;
    let pieces = match e {
        Expr::Const(_) => vec![Piece {
            grad: vec![0.0; n],
            rows: Vec::new(),
        }],
        Expr::Var(i) => {
            let mut g = vec![0.0; n];
            g[*i] = 1.0;
            vec![Piece {
                grad: g,
                rows: Vec::new(),
            }]
        }
        Expr::Affine { coeffs, .. } => vec![Piece {
            grad: coeffs.clone(),
            rows: Vec::new(),
        }],
        Expr::Sum(cs) => {
            let groups = cs
                .iter()
                .map(|c| local(c, x, dirs, tol).map(|l| l.pieces))
                .collect::<Result<Vec<_>, _>>()?;
            product(groups)?
        }
        Expr::Scale(c, inner) => local(inner, x, dirs, tol)?
            .pieces
            .into_iter()
            .map(|p| Piece {
                grad: p.grad.iter().map(|g| c * g).collect(),
                rows: p.rows,
            })
            .collect(),
        Expr::Max(cs) | Expr::Min(cs) => {
            let is_max = matches!(e, Expr::Max(_));
            let locals = cs
                .iter()
                .map(|c| local(c, x, dirs, tol))
                .collect::<Result<Vec<_>, _>>()?;
            let lexes: Vec<Vec<f64>> = locals.iter().map(|l| l.lex.clone()).collect();
            let (surv, _) = lex_max(&lexes, tol, is_max);
            let mut active: Vec<Vec<Piece>> = Vec::with_capacity(surv.len());
            for &i in &surv {
                active.push(locals[i].pieces.clone());
            }
            // complete selection: one piece for every active child, then the winner
            let combos = product_indexed(&active)?;
            let mut out = Vec::new();
            for combo in combos {
                for (wj, &(cj, pj)) in combo.iter().enumerate() {
                    let winner = &active[cj][pj];
                    let mut rows = Vec::new();
                    for &(ci, pi) in &combo {
                        rows.extend(active[ci][pi].rows.iter().cloned());
                    }
                    for (oi, &(ci, pi)) in combo.iter().enumerate() {
                        if oi == wj {
                            continue;
                        }
                        let other = &active[ci][pi];
                        let r: Vec<f64> = if is_max {
                            winner
                                .grad
                                .iter()
                                .zip(&other.grad)
                                .map(|(a, b)| a - b)
                                .collect()
                        } else {
                            other
                                .grad
                                .iter()
                                .zip(&winner.grad)
                                .map(|(a, b)| a - b)
                                .collect()
                        };
                        rows.push(r);
                    }
                    out.push(Piece {
                        grad: winner.grad.clone(),
                        rows,
                    });
                    if out.len() > MAX_PIECES {
                        return Err(SubdiffError::TooManySelections(out.len()));
                    }
                }
            }
            out
        }
        Expr::Abs(c) => {
            let l = local(c, x, dirs, tol)?;
            let s = lex_sign(&l.lex, tol);
            if s == 0.0 {
                let mut out = Vec::with_capacity(2 * l.pieces.len());
                for p in l.pieces {
                    let neg: Vec<f64> = p.grad.iter().map(|g| -g).collect();
                    let mut up = p.rows.clone();
                    up.push(p.grad.clone());
                    let mut down = p.rows;
                    down.push(neg.clone());
                    out.push(Piece {
                        grad: p.grad,
                        rows: up,
                    });
                    out.push(Piece {
                        grad: neg,
                        rows: down,
                    });
                }
                out
            } else {
                l.pieces
                    .into_iter()
                    .map(|p| Piece {
                        grad: p.grad.iter().map(|g| s * g).collect(),
                        rows: p.rows,
                    })
                    .collect()
            }
        }
        Expr::Sq(c) => {
            if !dirs.is_empty() {
                return Err(SubdiffError::Unsupported(
                    "local cells of squared terms away from the base point".into(),
                ));
            }
            let l = local(c, x, dirs, tol)?;
            let v = l.lex[0];
            l.pieces
                .into_iter()
                .map(|p| Piece {
                    grad: p.grad.iter().map(|g| 2.0 * v * g).collect(),
                    rows: p.rows,
                })
                .collect()
        }
        Expr::Builtin(b, c) => {
            if !dirs.is_empty() {
                return Err(SubdiffError::Unsupported(
                    "local cells of builtin atoms away from the base point".into(),
                ));
            }
            let l = local(c, x, dirs, tol)?;
            let y = l.lex[0];
            let mut out = Vec::new();
            for p in l.pieces {
                if let Some(d) = b.derivative(y) {
                    out.push(Piece {
                        grad: p.grad.iter().map(|g| d * g).collect(),
                        rows: p.rows,
                    });
                    continue;
                }
                if p.grad.iter().all(|g| *g == 0.0) {
                    out.push(p);
                    continue;
                }
                for side in [1.0, -1.0] {
                    let d = b.derivative_limit(y, side).ok_or_else(|| {
                        SubdiffError::Unsupported(format!(
                            "`{}` has no one-sided derivative limit at {y}",
                            b.name()
                        ))
                    })?;
                    let mut rows = p.rows.clone();
                    rows.push(p.grad.iter().map(|g| side * g).collect());
                    out.push(Piece {
                        grad: p.grad.iter().map(|g| d * g).collect(),
                        rows,
                    });
                }
            }
            out
        }
    };
    Ok(Local { lex, pieces })
}

fn product_indexed(groups: &[Vec<Piece>]) -> Result<Vec<Vec<(usize, usize)>>, SubdiffError> {
    let mut acc: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for (ci, g) in groups.iter().enumerate() {
        if acc.len() * g.len() > MAX_PIECES {
            return Err(SubdiffError::TooManySelections(acc.len() * g.len()));
        }
        let mut next = Vec::with_capacity(acc.len() * g.len());
        for a in &acc {
            for pi in 0..g.len() {
                let mut c = a.clone();
                c.push((ci, pi));
                next.push(c);
            }
        }
        acc = next;
    }
    Ok(acc)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(r: &[f64]) -> Option<Vec<f64>> {
    let n = dot(r, r).sqrt();
    (n > 1e-10).then(|| r.iter().map(|v| v / n).collect())
}

fn same_dir(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10)
}

/// Normalizes, drops null rows, removes duplicates.
pub(crate) fn clean_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if let Some(u) = normalized(r) {
            if !out.iter().any(|o| same_dir(o, &u)) {
                out.push(u);
            }
        }
    }
    out
}

/// Largest margin `t ≤ 1` with `rᵀu ≥ t` for all rows and `u ∈ [−1,1]ⁿ`.
pub(crate) fn interior_margin(
    rows: &[Vec<f64>],
    n: usize,
) -> Result<(f64, Vec<f64>), SubdiffError> {
    if rows.is_empty() {
        let mut u = vec![0.0; n];
        if n > 0 {
            u[0] = 1.0;
        }
        return Ok((1.0, u));
    }
    let dim = n + 1;
    let mut hs = Vec::with_capacity(rows.len() + 2 * n + 1);
    for r in rows {
        let mut a: Vec<f64> = r.iter().map(|v| -v).collect();
        a.push(1.0);
        hs.push(Halfspace::new(a, 0.0));
    }
    for i in 0..n {
        let mut up = vec![0.0; dim];
        up[i] = 1.0;
        hs.push(Halfspace::new(up, 1.0));
        let mut down = vec![0.0; dim];
        down[i] = -1.0;
        hs.push(Halfspace::new(down, 1.0));
    }
    let mut cap = vec![0.0; dim];
    cap[n] = 1.0;
    hs.push(Halfspace::new(cap, 1.0));
    let mut obj = vec![0.0; dim];
    obj[n] = -1.0;
    let poly = HPolyhedron {
        dim,
        halfspaces: hs,
    };
    match lp_solve(&obj, &poly)? {
        LpOutcome::Optimal { point, .. } => {
            let t = point[n];
            Ok((t, point[..n].to_vec()))
        }
        // u = 0, t = 0 is always feasible and t ≤ 1 bounds the objective
        other => Err(SubdiffError::Geom(crate::polyhedra::GeomError::Numerical(
            format!("margin LP returned {other:?}"),
        ))),
    }
}

pub(crate) const INTERIOR_MARGIN: f64 = 1e-9;

/// Cells with non-empty interior at the base.
pub(crate) fn interior_cells(
    e: &Expr,
    x: &[f64],
    dirs: &[Vec<f64>],
    tol: &EngineTol,
) -> Result<Vec<Cell>, SubdiffError> {
    let l = local(e, x, dirs, tol)?;
    let n = x.len();
    let mut cells = Vec::new();
    for p in l.pieces {
        let rows = clean_rows(&p.rows);
        let (margin, _) = interior_margin(&rows, n)?;
        if margin > INTERIOR_MARGIN {
            cells.push(Cell { grad: p.grad, rows });
        }
    }
    Ok(cells)
}

/// All kink hyperplanes (normals, up to sign) of the local subdivision.
pub(crate) fn kink_normals(
    e: &Expr,
    x: &[f64],
    tol: &EngineTol,
) -> Result<Vec<Vec<f64>>, SubdiffError> {
    let l = local(e, x, &[], tol)?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in &l.pieces {
        for r in clean_rows(&p.rows) {
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            if !out.iter().any(|o| same_dir(o, &r) || same_dir(o, &neg)) {
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Vertices of `{u : rᵀu ≥ 0 ∀r} ∩ [−1,1]ⁿ` other than the origin.
pub(crate) fn cone_box_vertices(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut clip = ClipPolytope::from_box(&vec![-1.0; n], &vec![1.0; n]);
    for r in rows {
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        clip.clip(&neg, 0.0);
    }
    clip.vertices()
        .into_iter()
        .filter(|v| dot(v, v).sqrt() > 1e-12)
        .collect()
}

/// Minorant constraints `sᵀv ≤ gᵀv` over the cell generators, plus a
/// bounding box containing every cell gradient.
pub(crate) fn frechet_constraints(
    cells: &[Cell],
    n: usize,
) -> (Vec<Halfspace>, Vec<f64>, Vec<f64>) {
    let mut hs: Vec<Halfspace> = Vec::new();
    for c in cells {
        for v in cone_box_vertices(&c.rows, n) {
            let nv = dot(&v, &v).sqrt();
            let a: Vec<f64> = v.iter().map(|t| t / nv).collect();
            let b = dot(&c.grad, &a);
            let dup = hs
                .iter()
                .any(|h| same_dir(&h.normal, &a) && (h.offset - b).abs() <= 1e-12);
            if !dup {
                hs.push(Halfspace::new(a, b));
            }
        }
    }
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for c in cells {
        for i in 0..n {
            lo[i] = lo[i].min(c.grad[i] - 1.0);
            hi[i] = hi[i].max(c.grad[i] + 1.0);
        }
    }
    (hs, lo, hi)
}

/// Representative directions for every relatively open face of dimension
/// `1..n−1` of the arrangement of `normals` (`n ≤ 3`).
pub(crate) fn lower_face_reps(normals: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut reps = Vec::new();
    match n {
        2 => {
            for r in normals {
                let t = vec![-r[1], r[0]];
                reps.push(t.clone());
                reps.push(t.iter().map(|v| -v).collect());
            }
        }
        3 => {
            let mut lines: Vec<Vec<f64>> = Vec::new();
            for (i, a) in normals.iter().enumerate() {
                for b in normals.iter().skip(i + 1) {
                    if let Some(l) = normalized(&cross(a, b)) {
                        let neg: Vec<f64> = l.iter().map(|v| -v).collect();
                        if !lines.iter().any(|o| same_dir(o, &l) || same_dir(o, &neg)) {
                            lines.push(l);
                        }
                    }
                }
            }
            for l in &lines {
                reps.push(l.clone());
                reps.push(l.iter().map(|v| -v).collect());
            }
            for r in normals {
                let (b1, b2) = plane_basis(r);
                let mut angles: Vec<f64> = Vec::new();
                for l in &lines {
                    if dot(l, r).abs() <= 1e-9 {
                        let a = dot(l, &b2).atan2(dot(l, &b1));
                        angles.push(a);
                        angles.push(if a > 0.0 {
                            a - std::f64::consts::PI
                        } else {
                            a + std::f64::consts::PI
                        });
                    }
                }
                if angles.is_empty() {
                    reps.push(b1.clone());
                    reps.push(b1.iter().map(|v| -v).collect());
                    continue;
                }
                angles.sort_by(|a, b| a.total_cmp(b));
                angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                let m = angles.len();
                for k in 0..m {
                    let a0 = angles[k];
                    let a1 = if k + 1 < m {
                        angles[k + 1]
                    } else {
                        angles[0] + 2.0 * std::f64::consts::PI
                    };
                    let mid = 0.5 * (a0 + a1);
                    reps.push(
                        b1.iter()
                            .zip(&b2)
                            .map(|(p, q)| mid.cos() * p + mid.sin() * q)
                            .collect(),
                    );
                }
            }
        }
        _ => {}
    }
    reps
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn plane_basis(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = (0..3)
        .min_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs()))
        .unwrap();
    let mut e = vec![0.0; 3];
    e[k] = 1.0;
    let b1 = normalized(&cross(r, &e)).expect("normal is unit length");
    let b2 = normalized(&cross(r, &b1)).expect("normal is unit length");
    (b1, b2)
}
