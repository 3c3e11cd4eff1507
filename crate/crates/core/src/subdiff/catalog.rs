//! Closed-form subdifferentials of common convex functions, the maximum
//! eigenvalue, and normal cones of simple convex sets.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{SubdiffError, SubdiffKind, SubdiffSet};
use crate::polyhedra::{conv_hull, Ball, Component, Cone, ConvexSetSpec, SetUnion, VPolytope};

/// Smooth convex piece `½xᵀQx + aᵀx + b` of a pointwise maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothPiece {
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    Quadratic {
        q: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: f64,
    },
}

impl SmoothPiece {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothPiece::Affine { a, b } => dot(a, x) + b,
            SmoothPiece::Quadratic { q, a, b } => {
                let qx = matvec(q, x);
                0.5 * dot(&qx, x) + dot(a, x) + b
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SmoothPiece::Affine { a, .. } => a.clone(),
            SmoothPiece::Quadratic { q, a, .. } => {
                matvec(q, x).iter().zip(a).map(|(u, v)| u + v).collect()
            }
        }
    }
}

/// Convex functions with a known subdifferential formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CatalogId {
    L1Norm,
    L2Norm,
    MaxOfSmooth(Vec<SmoothPiece>),
    /// `α₁f₁ + α₂f₂` with `α₁, α₂ ≥ 0`.
    ScaledSum(f64, Box<CatalogId>, f64, Box<CatalogId>),
    /// `g(A₀x + b)`, `A₀` given by rows.
    AffineCompose {
        a0: Vec<Vec<f64>>,
        b: Vec<f64>,
        g: Box<CatalogId>,
    },
}

/// Convex subdifferential before wrapping: a polytope or a ball.
enum Piece {
    Poly(VPolytope),
    Ball(Ball),
}

impl CatalogId {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            CatalogId::L1Norm => x.iter().map(|v| v.abs()).sum(),
            CatalogId::L2Norm => dot(x, x).sqrt(),
            CatalogId::MaxOfSmooth(ps) => ps
                .iter()
                .map(|p| p.value(x))
                .fold(f64::NEG_INFINITY, f64::max),
            CatalogId::ScaledSum(a1, f1, a2, f2) => a1 * f1.value(x) + a2 * f2.value(x),
            CatalogId::AffineCompose { a0, b, g } => g.value(&inner(a0, b, x)),
        }
    }

    /// `g'(x; d)`, the support function of `∂g(x)`.
    pub fn dir_deriv(&self, x: &[f64], d: &[f64]) -> Result<f64, SubdiffError> {
        Ok(convex_catalog_subdiff(self, x)?.set.support_value(d)?)
    }

    fn subdiff(&self, x: &[f64]) -> Result<Piece, SubdiffError> {
        let n = x.len();
        Ok(match self {
            CatalogId::L1Norm => {
                let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
                for &v in x {
                    let opts: &[f64] = if v > 0.0 {
                        &[1.0]
                    } else if v < 0.0 {
                        &[-1.0]
                    } else {
                        &[-1.0, 1.0]
                    };
                    pts = pts
                        .into_iter()
                        .flat_map(|p| {
                            opts.iter().map(move |o| {
                                let mut q = p.clone();
                                q.push(*o);
                                q
                            })
                        })
                        .collect();
                }
                Piece::Poly(conv_hull(&pts, n)?)
            }
            CatalogId::L2Norm => {
                let r = dot(x, x).sqrt();
                if r == 0.0 {
                    Piece::Ball(Ball {
                        center: vec![0.0; n],
                        radius: 1.0,
                    })
                } else {
                    Piece::Poly(VPolytope::singleton(x.iter().map(|v| v / r).collect()))
                }
            }
            CatalogId::MaxOfSmooth(ps) => {
                if ps.is_empty() {
                    return Err(SubdiffError::UnsupportedComposition(
                        "maximum of no pieces".into(),
                    ));
                }
                let vals: Vec<f64> = ps.iter().map(|p| p.value(x)).collect();
                let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = 1e-12 * (1.0 + m.abs());
                let grads: Vec<Vec<f64>> = ps
                    .iter()
                    .zip(&vals)
                    .filter(|(_, v)| **v >= m - tol)
                    .map(|(p, _)| p.gradient(x))
                    .collect();
                Piece::Poly(conv_hull(&grads, n)?)
            }
            CatalogId::ScaledSum(a1, f1, a2, f2) => {
                if *a1 < 0.0 || *a2 < 0.0 {
                    return Err(SubdiffError::UnsupportedComposition(
                        "negative weights break convexity".into(),
                    ));
                }
                let p1 = scale_piece(f1.subdiff(x)?, *a1)?;
                let p2 = scale_piece(f2.subdiff(x)?, *a2)?;
                match (p1, p2) {
                    (Piece::Poly(a), Piece::Poly(b)) => Piece::Poly(a.minkowski(&b)?),
                    (Piece::Ball(a), Piece::Ball(b)) => Piece::Ball(Ball {
                        center: a.center.iter().zip(&b.center).map(|(u, v)| u + v).collect(),
                        radius: a.radius + b.radius,
                    }),
                    (Piece::Ball(b), Piece::Poly(p)) | (Piece::Poly(p), Piece::Ball(b)) => {
                        if p.vertices.len() != 1 {
                            return Err(SubdiffError::UnsupportedComposition(
                                "sum of a ball and a polytope".into(),
                            ));
                        }
                        Piece::Ball(Ball {
                            center: b
                                .center
                                .iter()
                                .zip(&p.vertices[0])
                                .map(|(u, v)| u + v)
                                .collect(),
                            radius: b.radius,
                        })
                    }
                }
            }
            CatalogId::AffineCompose { a0, b, g } => {
                if a0.len() != b.len() || a0.iter().any(|r| r.len() != n) {
                    return Err(SubdiffError::UnsupportedComposition(
                        "inner affine map has inconsistent shape".into(),
                    ));
                }
                let m = b.len();
                let at: Vec<Vec<f64>> =
                    (0..n).map(|j| (0..m).map(|i| a0[i][j]).collect()).collect();
                match g.subdiff(&inner(a0, b, x))? {
                    Piece::Poly(p) => Piece::Poly(p.affine_image(&at, &vec![0.0; n])?),
                    Piece::Ball(ball) => {
                        let center = matvec(&at, &ball.center);
                        if ball.radius == 0.0 {
                            Piece::Poly(VPolytope::singleton(center))
                        } else if let Some(c) = scaled_orthogonal(a0) {
                            Piece::Ball(Ball {
                                center,
                                radius: c * ball.radius,
                            })
                        } else {
                            return Err(SubdiffError::UnsupportedComposition(
                                "image of a ball under a non-conformal map".into(),
                            ));
                        }
                    }
                }
            }
        })
    }
}

fn scale_piece(p: Piece, a: f64) -> Result<Piece, SubdiffError> {
    Ok(match p {
        Piece::Poly(p) => {
            let n = p.dim;
            let m: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { a } else { 0.0 }).collect())
                .collect();
            Piece::Poly(p.affine_image(&m, &vec![0.0; n])?)
        }
        Piece::Ball(b) => Piece::Ball(Ball {
            center: b.center.iter().map(|v| a * v).collect(),
            radius: a * b.radius,
        }),
    })
}

/// `c` with `A₀ᵀA₀ = c²I` and `A₀` square, if any.
fn scaled_orthogonal(a0: &[Vec<f64>]) -> Option<f64> {
    let m = a0.len();
    if m == 0 || a0[0].len() != m {
        return None;
    }
    let c2 = (0..m).map(|i| a0[i][0] * a0[i][0]).sum::<f64>();
    for j in 0..m {
        for k in 0..m {
            let g: f64 = (0..m).map(|i| a0[i][j] * a0[i][k]).sum();
            let want = if j == k { c2 } else { 0.0 };
            if (g - want).abs() > 1e-12 * (1.0 + c2) {
                return None;
            }
        }
    }
    Some(c2.sqrt())
}

fn inner(a0: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    a0.iter().zip(b).map(|(r, bi)| dot(r, x) + bi).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, x)).collect()
}

/// Convex subdifferential of a catalog item; `Sign(0)` is `[−1, 1]`.
pub fn convex_catalog_subdiff(item: &CatalogId, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
    let set = match item.subdiff(x)? {
        Piece::Poly(p) => SetUnion::single(p),
        Piece::Ball(ball) => SetUnion::new(x.len(), vec![Component::Ball { ball }]),
    };
    Ok(SubdiffSet::exact(SubdiffKind::Convex, x, set))
}

/// `∂λ_max(M) = {UZUᵀ : Z ⪰ 0, tr Z = 1}` with `U` an orthonormal basis of the
/// top eigenspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigmaxSubdiff {
    pub lambda_max: f64,
    /// Columns of `U`, each of length `n`.
    pub basis: Vec<Vec<f64>>,
}

pub const EIGMAX_DIM_CAP: usize = 4;

impl EigmaxSubdiff {
    pub fn multiplicity(&self) -> usize {
        self.basis.len()
    }

    fn n(&self) -> usize {
        self.basis[0].len()
    }

    /// `uuᵀ` for the unit vector `u = U c` (`c` normalized here).
    pub fn rank_one(&self, c: &[f64]) -> Vec<Vec<f64>> {
        let nc = dot(c, c).sqrt();
        let n = self.n();
        let u: Vec<f64> = (0..n)
            .map(|i| {
                self.basis
                    .iter()
                    .zip(c)
                    .map(|(col, ck)| col[i] * ck / nc)
                    .sum()
            })
            .collect();
        (0..n)
            .map(|i| (0..n).map(|j| u[i] * u[j]).collect())
            .collect()
    }

    /// Extreme points: the single `uuᵀ` for a simple top eigenvalue, or
    /// `samples` points on the circle of extreme points when it is double.
    pub fn extreme_points(&self, samples: usize) -> Option<Vec<Vec<Vec<f64>>>> {
        match self.multiplicity() {
            1 => Some(vec![self.rank_one(&[1.0])]),
            2 => Some(
                (0..samples.max(1))
                    .map(|k| {
                        let t = std::f64::consts::PI * k as f64 / samples.max(1) as f64;
                        self.rank_one(&[t.cos(), t.sin()])
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `σ(D) = λ_max(UᵀDU)` for symmetric `D`.
    pub fn support(&self, d: &[Vec<f64>]) -> f64 {
        let r = self.multiplicity();
        let mut m = DMatrix::<f64>::zeros(r, r);
        for a in 0..r {
            let da = matvec(d, &self.basis[a]);
            for b in 0..r {
                m[(a, b)] = dot(&self.basis[b], &da);
            }
        }
        let m = (&m + m.transpose()) * 0.5;
        SymmetricEigen::new(m).eigenvalues.max()
    }

    pub fn contains(&self, g: &[Vec<f64>], tol: f64) -> bool {
        let n = self.n();
        let r = self.multiplicity();
        if g.len() != n || g.iter().any(|row| row.len() != n) {
            return false;
        }
        let mut z = DMatrix::<f64>::zeros(r, r);
        for a in 0..r {
            let ga = matvec(g, &self.basis[a]);
            for b in 0..r {
                z[(a, b)] = dot(&self.basis[b], &ga);
            }
        }
        if (z.trace() - 1.0).abs() > tol {
            return false;
        }
        if (&z - z.transpose()).abs().max() > tol {
            return false;
        }
        if SymmetricEigen::new(z.clone()).eigenvalues.min() < -tol {
            return false;
        }
        // G must equal UZUᵀ
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for a in 0..r {
                    for b in 0..r {
                        v += self.basis[a][i] * z[(a, b)] * self.basis[b][j];
                    }
                }
                if (v - g[i][j]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Subdifferential of the largest eigenvalue at a symmetric matrix.
pub fn eigmax_subdiff(m: &[Vec<f64>]) -> Result<EigmaxSubdiff, SubdiffError> {
    let n = m.len();
    if n == 0 || n > EIGMAX_DIM_CAP {
        return Err(SubdiffError::DimensionCap {
            dim: n,
            cap: EIGMAX_DIM_CAP,
        });
    }
    let scale = m.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        if m[i].len() != n {
            return Err(SubdiffError::NonSymmetric);
        }
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(SubdiffError::NonSymmetric);
            }
        }
    }
    let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let eig = SymmetricEigen::new(mat);
    let lmax = eig.eigenvalues.max();
    let tol = 1e-10 * scale;
    let basis: Vec<Vec<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k] >= lmax - tol)
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    Ok(EigmaxSubdiff {
        lambda_max: lmax,
        basis,
    })
}

/// `N_C(x)`: generated by the active constraint normals for polyhedra, the
/// outward ray on the boundary of a ball, `{0}` in the interior.
pub fn normal_cone(c: &ConvexSetSpec, x: &[f64]) -> Result<Cone, SubdiffError> {
    let n = c.dim();
    if x.len() != n {
        return Err(crate::expr::ExprError::DimensionMismatch {
            expected: n,
            found: x.len(),
        }
        .into());
    }
    if !c.contains(x, 1e-9) {
        return Err(SubdiffError::InfeasiblePoint);
    }
    if let ConvexSetSpec::Ball(b) = c {
        let d: Vec<f64> = x.iter().zip(&b.center).map(|(u, v)| u - v).collect();
        let r = dot(&d, &d).sqrt();
        if r >= b.radius - 1e-9 && r > 0.0 {
            return Ok(Cone::from_generators(n, vec![d])?);
        }
        return Ok(Cone::trivial(n));
    }
    let hs = c.halfspaces().unwrap_or_default();
    let mut gens: Vec<Vec<f64>> = Vec::new();
    for h in hs {
        if h.violation(x).abs() <= 1e-9 * (1.0 + h.offset.abs()) && !gens.contains(&h.normal) {
            gens.push(h.normal.clone());
        }
    }
    Ok(Cone::from_generators(n, gens)?)
}
