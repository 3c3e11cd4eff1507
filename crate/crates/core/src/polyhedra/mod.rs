//! Low-dimensional polyhedral geometry: hulls, halfspace intersections,
//! cones and their duals, support functions, membership and set distance.
//!
//! Exact polytope operations are capped at dimension [`POLYTOPE_DIM_CAP`];
//! everything is dense `f64` with absolute tolerances around `1e−9`.

mod clip;
mod convex_set;
mod lp;
mod minnorm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use clip::ClipPolytope;
pub use convex_set::{ConvexSetSpec, DYKSTRA_MAX_ITER};
pub use lp::{lp_solve, LpOutcome, PIVOT_TOL};
pub use minnorm::min_norm_point;

pub const POLYTOPE_DIM_CAP: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation on an empty set")]
    EmptySet,
    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("set is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_cap(dim: usize) -> Result<(), GeomError> {
    if dim > POLYTOPE_DIM_CAP {
        Err(GeomError::DimensionCap {
            dim,
            cap: POLYTOPE_DIM_CAP,
        })
    } else {
        Ok(())
    }
}

/// `{z : aᵀz ≤ b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    #[serde(rename = "a")]
    pub normal: Vec<f64>,
    #[serde(rename = "b")]
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Halfspace { normal, offset }
    }

    pub fn violation(&self, z: &[f64]) -> f64 {
        dot(&self.normal, z) - self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HPolyhedron {
    pub dim: usize,
    pub halfspaces: Vec<Halfspace>,
}

impl HPolyhedron {
    pub fn new(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self, GeomError> {
        for h in &halfspaces {
            if h.normal.len() != dim {
                return Err(GeomError::DimensionMismatch {
                    expected: dim,
                    found: h.normal.len(),
                });
            }
        }
        Ok(HPolyhedron { dim, halfspaces })
    }

    /// The whole space.
    pub fn full(dim: usize) -> Self {
        HPolyhedron {
            dim,
            halfspaces: Vec::new(),
        }
    }

    pub fn box_bounds(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut hs = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut up = vec![0.0; dim];
            up[i] = 1.0;
            hs.push(Halfspace::new(up, hi[i]));
            let mut down = vec![0.0; dim];
            down[i] = -1.0;
            hs.push(Halfspace::new(down, -lo[i]));
        }
        HPolyhedron {
            dim,
            halfspaces: hs,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, h: Halfspace) {
        debug_assert_eq!(h.normal.len(), self.dim);
        self.halfspaces.push(h);
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.violation(z) <= tol)
    }

    /// Vertices of the polyhedron intersected with the box `[lo, hi]`.
    pub fn vertices_in_box(&self, lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<f64>>, GeomError> {
        check_cap(self.dim)?;
        let mut clip = ClipPolytope::from_box(lo, hi);
        for h in &self.halfspaces {
            clip.clip(&h.normal, h.offset);
            if clip.is_empty() {
                break;
            }
        }
        Ok(clip.vertices())
    }

    /// Converts a bounded polyhedron to vertex form. Boundedness is checked
    /// with one LP per coordinate direction.
    pub fn to_vpolytope(&self) -> Result<VPolytope, GeomError> {
        check_cap(self.dim)?;
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for i in 0..self.dim {
            for (sign, slot) in [(1.0, &mut lo), (-1.0, &mut hi)] {
                let mut c = vec![0.0; self.dim];
                c[i] = sign;
                match lp_solve(&c, self)? {
                    LpOutcome::Infeasible => return Ok(VPolytope::empty(self.dim)),
                    LpOutcome::Unbounded => return Err(GeomError::Unbounded),
                    LpOutcome::Optimal { value, .. } => slot[i] = sign * value,
                }
            }
        }
        let pad: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| 1e-6 * (1.0 + (h - l).abs()))
            .collect();
        let blo: Vec<f64> = lo.iter().zip(&pad).map(|(l, p)| l - p).collect();
        let bhi: Vec<f64> = hi.iter().zip(&pad).map(|(h, p)| h + p).collect();
        let verts = self.vertices_in_box(&blo, &bhi)?;
        let mut poly = conv_hull(&verts, self.dim)?;
        poly.halfspaces = self.halfspaces.clone();
        Ok(poly)
    }
}

/// Convex hull of finitely many points, stored as an irredundant,
/// lexicographically ordered vertex list. An empty list is the empty set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VPolytope {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    /// Facet description, when one is known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub halfspaces: Vec<Halfspace>,
}

impl VPolytope {
    pub fn empty(dim: usize) -> Self {
        VPolytope {
            dim,
            vertices: Vec::new(),
            halfspaces: Vec::new(),
        }
    }

    pub fn singleton(p: Vec<f64>) -> Self {
        VPolytope {
            dim: p.len(),
            vertices: vec![p],
            halfspaces: Vec::new(),
        }
    }

    /// 1-D interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Self {
        if lo > hi {
            return VPolytope::empty(1);
        }
        if lo == hi {
            return VPolytope::singleton(vec![lo]);
        }
        VPolytope {
            dim: 1,
            vertices: vec![vec![lo], vec![hi]],
            halfspaces: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn support_value(&self, d: &[f64]) -> Result<f64, GeomError> {
        support_value(self, d)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeomError> {
        if self.is_empty() {
            return Ok(false);
        }
        if z.len() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(convex_weights(&self.vertices, z, tol)?.is_some())
    }

    /// Euclidean distance from `z` to the polytope.
    pub fn distance(&self, z: &[f64]) -> Result<f64, GeomError> {
        if self.is_empty() {
            return Err(GeomError::EmptySet);
        }
        let shifted: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| v.iter().zip(z).map(|(a, b)| a - b).collect())
            .collect();
        Ok(norm(&min_norm_point(&shifted)))
    }

    /// Image under `z ↦ M z + t` (`M` given row-major, `out × dim`).
    pub fn affine_image(&self, m: &[Vec<f64>], t: &[f64]) -> Result<VPolytope, GeomError> {
        let pts: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| m.iter().zip(t).map(|(row, ti)| dot(row, v) + ti).collect())
            .collect();
        conv_hull(&pts, t.len())
    }

    pub fn translate(&self, t: &[f64]) -> VPolytope {
        VPolytope {
            dim: self.dim,
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().zip(t).map(|(a, b)| a + b).collect())
                .collect(),
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Halfspace::new(h.normal.clone(), h.offset + dot(&h.normal, t)))
                .collect(),
        }
    }

    /// Minkowski sum.
    pub fn minkowski(&self, other: &VPolytope) -> Result<VPolytope, GeomError> {
        if self.dim != other.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.is_empty() || other.is_empty() {
            return Ok(VPolytope::empty(self.dim));
        }
        let mut pts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                pts.push(a.iter().zip(b).map(|(x, y)| x + y).collect());
            }
        }
        conv_hull(&pts, self.dim)
    }

    /// Whether every vertex of `self` lies in `other`.
    pub fn subset_of(&self, other: &VPolytope, tol: f64) -> Result<bool, GeomError> {
        for v in &self.vertices {
            if !other.contains(v, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Finds convex weights `λ` with `Σλᵢpᵢ = z` up to `tol` (elementwise).
pub fn convex_weights(
    points: &[Vec<f64>],
    z: &[f64],
    tol: f64,
) -> Result<Option<Vec<f64>>, GeomError> {
    if points.is_empty() {
        return Ok(None);
    }
    let m = points.len();
    let n = z.len();
    if m == 1 {
        let ok = points[0].iter().zip(z).all(|(a, b)| (a - b).abs() <= tol);
        return Ok(ok.then(|| vec![1.0]));
    }
    let mut hs = Vec::with_capacity(2 * n + 2 + m);
    for i in 0..n {
        let row: Vec<f64> = points.iter().map(|p| p[i]).collect();
        hs.push(Halfspace::new(row.clone(), z[i] + tol));
        hs.push(Halfspace::new(
            row.iter().map(|v| -v).collect(),
            -z[i] + tol,
        ));
    }
    hs.push(Halfspace::new(vec![1.0; m], 1.0));
    hs.push(Halfspace::new(vec![-1.0; m], -1.0));
    for j in 0..m {
        let mut row = vec![0.0; m];
        row[j] = -1.0;
        hs.push(Halfspace::new(row, 0.0));
    }
    let poly = HPolyhedron {
        dim: m,
        halfspaces: hs,
    };
    match lp_solve(&vec![0.0; m], &poly)? {
        LpOutcome::Optimal { point, .. } => Ok(Some(point)),
        _ => Ok(None),
    }
}

/// Irredundant vertex set of the convex hull of `points`.
pub fn conv_hull(points: &[Vec<f64>], dim: usize) -> Result<VPolytope, GeomError> {
    check_cap(dim)?;
    for p in points {
        if p.len() != dim {
            return Err(GeomError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
    }
    if points.is_empty() {
        return Ok(VPolytope::empty(dim));
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    let mut uniq: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !uniq
            .iter()
            .any(|q| q.iter().zip(p).all(|(a, b)| (a - b).abs() <= tol))
        {
            uniq.push(p.clone());
        }
    }
    let mut verts = if dim == 1 {
        let lo = uniq.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = uniq.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= tol {
            vec![vec![lo]]
        } else {
            vec![vec![lo], vec![hi]]
        }
    } else if dim == 2 {
        hull_2d(uniq, tol)
    } else {
        let mut keep = uniq.clone();
        let mut i = 0;
        while i < keep.len() && keep.len() > 1 {
            let others: Vec<Vec<f64>> = keep
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            if convex_weights(&others, &keep[i], tol)?.is_some() {
                keep.remove(i);
            } else {
                i += 1;
            }
        }
        keep
    };
    verts.sort_by(|a, b| lex_cmp(a, b));
    Ok(VPolytope {
        dim,
        vertices: verts,
        halfspaces: Vec::new(),
    })
}

/// Andrew's monotone chain with an exact orientation test, followed by a
/// cyclic pass dropping vertices within `tol` of the segment joining their
/// neighbours. Testing collinearity inside the chain instead can discard a
/// true vertex when rounding perturbs the x-order along a near-vertical edge.
fn hull_2d(mut pts: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| lex_cmp(a, b));
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &[f64], a: &[f64], b: &[f64]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    let mut ring = lower;
    let off_segment = |a: &[f64], v: &[f64], b: &[f64]| {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len <= tol {
            return (v[0] - a[0]).hypot(v[1] - a[1]);
        }
        let t = ((v[0] - a[0]) * (b[0] - a[0]) + (v[1] - a[1]) * (b[1] - a[1])) / (len * len);
        if !(0.0..=1.0).contains(&t) {
            return f64::INFINITY;
        }
        cross(a, b, v).abs() / len
    };
    let mut changed = true;
    while changed && ring.len() > 2 {
        changed = false;
        for i in 0..ring.len() {
            let m = ring.len();
            let (a, v, b) = (&ring[(i + m - 1) % m], &ring[i], &ring[(i + 1) % m]);
            if off_segment(a, v, b) <= tol {
                ring.remove(i);
                changed = true;
                break;
            }
        }
    }
    ring
}

/// Lexicographic order with `-0.0 == 0.0`.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match (x + 0.0).total_cmp(&(y + 0.0)) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// `σ_S(d) = max_{s ∈ S} sᵀd`.
pub fn support_value(s: &VPolytope, d: &[f64]) -> Result<f64, GeomError> {
    if s.is_empty() {
        return Err(GeomError::EmptySet);
    }
    if d.len() != s.dim {
        return Err(GeomError::DimensionMismatch {
            expected: s.dim,
            found: d.len(),
        });
    }
    Ok(s.vertices
        .iter()
        .map(|v| dot(v, d))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        norm(&d) <= self.radius + tol
    }

    pub fn distance(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        (norm(&d) - self.radius).max(0.0)
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let n = norm(&d);
        if n <= self.radius {
            z.to_vec()
        } else {
            self.center
                .iter()
                .zip(&d)
                .map(|(c, di)| c + di * self.radius / n)
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Poly(VPolytope),
    Halfspaces(HPolyhedron),
    Ball { ball: Ball },
}

impl Component {
    pub fn dim(&self) -> usize {
        match self {
            Component::Poly(p) => p.dim,
            Component::Halfspaces(h) => h.dim,
            Component::Ball { ball } => ball.center.len(),
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeomError> {
        match self {
            Component::Poly(p) => p.contains(z, tol),
            Component::Halfspaces(h) => Ok(h.contains(z, tol)),
            Component::Ball { ball } => Ok(ball.contains(z, tol)),
        }
    }

    pub fn distance(&self, z: &[f64]) -> Result<f64, GeomError> {
        match self {
            Component::Poly(p) => p.distance(z),
            Component::Halfspaces(h) => h.to_vpolytope()?.distance(z),
            Component::Ball { ball } => Ok(ball.distance(z)),
        }
    }

    pub fn support_value(&self, d: &[f64]) -> Result<f64, GeomError> {
        match self {
            Component::Poly(p) => p.support_value(d),
            Component::Halfspaces(h) => h.to_vpolytope()?.support_value(d),
            Component::Ball { ball } => Ok(dot(&ball.center, d) + ball.radius * norm(d)),
        }
    }

    /// Finite sample of points of the component used for Hausdorff estimates:
    /// vertices, pairwise midpoints, and seeded random convex combinations.
    fn sample_points(
        &self,
        rng: &mut ChaCha8Rng,
        extra: usize,
    ) -> Result<Vec<Vec<f64>>, GeomError> {
        match self {
            Component::Poly(p) => Ok(sample_polytope(p, rng, extra)),
            Component::Halfspaces(h) => Ok(sample_polytope(&h.to_vpolytope()?, rng, extra)),
            Component::Ball { ball } => {
                let n = ball.center.len();
                let mut pts = vec![ball.center.clone()];
                for i in 0..n {
                    for s in [-1.0, 1.0] {
                        let mut p = ball.center.clone();
                        p[i] += s * ball.radius;
                        pts.push(p);
                    }
                }
                for _ in 0..extra {
                    let dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    let nd = norm(&dir).max(1e-12);
                    let r = ball.radius * rng.random::<f64>().powf(1.0 / n as f64);
                    pts.push(
                        ball.center
                            .iter()
                            .zip(&dir)
                            .map(|(c, d)| c + r * d / nd)
                            .collect(),
                    );
                }
                Ok(pts)
            }
        }
    }

    fn as_interval(&self) -> Result<Option<(f64, f64)>, GeomError> {
        if self.dim() != 1 {
            return Ok(None);
        }
        match self {
            Component::Poly(p) => Ok(interval_of(p)),
            Component::Halfspaces(h) => Ok(interval_of(&h.to_vpolytope()?)),
            Component::Ball { ball } => Ok(Some((
                ball.center[0] - ball.radius,
                ball.center[0] + ball.radius,
            ))),
        }
    }
}

fn interval_of(p: &VPolytope) -> Option<(f64, f64)> {
    if p.is_empty() {
        return None;
    }
    let lo = p
        .vertices
        .iter()
        .map(|v| v[0])
        .fold(f64::INFINITY, f64::min);
    let hi = p
        .vertices
        .iter()
        .map(|v| v[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

fn sample_polytope(p: &VPolytope, rng: &mut ChaCha8Rng, extra: usize) -> Vec<Vec<f64>> {
    let mut pts = p.vertices.clone();
    let m = p.vertices.len();
    for i in 0..m {
        for j in (i + 1)..m {
            for k in 1..8 {
                let t = k as f64 / 8.0;
                pts.push(
                    p.vertices[i]
                        .iter()
                        .zip(&p.vertices[j])
                        .map(|(a, b)| a + t * (b - a))
                        .collect(),
                );
            }
        }
    }
    if m > 2 {
        for _ in 0..extra {
            let w: Vec<f64> = (0..m)
                .map(|_| -rng.random::<f64>().max(1e-300).ln())
                .collect();
            let s: f64 = w.iter().sum();
            let mut q = vec![0.0; p.dim];
            for (v, wi) in p.vertices.iter().zip(&w) {
                for (qk, vk) in q.iter_mut().zip(v) {
                    *qk += wi / s * vk;
                }
            }
            pts.push(q);
        }
    }
    pts
}

/// A possibly non-convex finite union of convex pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetUnion {
    pub dim: usize,
    pub components: Vec<Component>,
}

impl SetUnion {
    pub fn empty(dim: usize) -> Self {
        SetUnion {
            dim,
            components: Vec::new(),
        }
    }

    /// Builds a union, dropping empty polytopes.
    pub fn new(dim: usize, components: Vec<Component>) -> Self {
        let components = components
            .into_iter()
            .filter(|c| !matches!(c, Component::Poly(p) if p.is_empty()))
            .collect();
        SetUnion { dim, components }
    }

    pub fn single(p: VPolytope) -> Self {
        SetUnion::new(p.dim, vec![Component::Poly(p)])
    }

    pub fn points(dim: usize, pts: &[Vec<f64>]) -> Self {
        SetUnion::new(
            dim,
            pts.iter()
                .map(|p| Component::Poly(VPolytope::singleton(p.clone())))
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeomError> {
        if z.len() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        for c in &self.components {
            if c.contains(z, tol)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn distance(&self, z: &[f64]) -> Result<f64, GeomError> {
        if self.is_empty() {
            return Err(GeomError::EmptySet);
        }
        let mut best = f64::INFINITY;
        for c in &self.components {
            best = best.min(c.distance(z)?);
        }
        Ok(best)
    }

    /// All polytope vertices of all components (balls contribute nothing).
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, GeomError> {
        let mut out = Vec::new();
        for c in &self.components {
            match c {
                Component::Poly(p) => out.extend(p.vertices.iter().cloned()),
                Component::Halfspaces(h) => out.extend(h.to_vpolytope()?.vertices),
                Component::Ball { .. } => {}
            }
        }
        Ok(out)
    }

    pub fn support_value(&self, d: &[f64]) -> Result<f64, GeomError> {
        if self.is_empty() {
            return Err(GeomError::EmptySet);
        }
        let mut best = f64::NEG_INFINITY;
        for c in &self.components {
            best = best.max(c.support_value(d)?);
        }
        Ok(best)
    }
}

/// Membership test over any of the set representations.
pub fn contains(s: &SetUnion, z: &[f64], tol: f64) -> Result<bool, GeomError> {
    s.contains(z, tol)
}

/// Symmetric Hausdorff distance. Exact for 1-D interval unions and when the
/// target of each one-sided term is a single convex piece; otherwise the
/// supremum is taken over a seeded sample of each component.
pub fn set_distance(a: &SetUnion, b: &SetUnion) -> Result<f64, GeomError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptySet);
    }
    if a.dim != b.dim {
        return Err(GeomError::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    check_cap(a.dim)?;
    if a.dim == 1 {
        let ia = intervals(a)?;
        let ib = intervals(b)?;
        return Ok(one_sided_1d(&ia, &ib).max(one_sided_1d(&ib, &ia)));
    }
    Ok(one_sided(a, b)?.max(one_sided(b, a)?))
}

fn intervals(s: &SetUnion) -> Result<Vec<(f64, f64)>, GeomError> {
    let mut out = Vec::new();
    for c in &s.components {
        if let Some(iv) = c.as_interval()? {
            out.push(iv);
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

fn dist_to_intervals(x: f64, ivs: &[(f64, f64)]) -> f64 {
    ivs.iter()
        .map(|&(l, h)| {
            if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn one_sided_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut cands = Vec::new();
    for &(l, h) in a {
        cands.push(l);
        cands.push(h);
        for w in b.windows(2) {
            let mid = 0.5 * (w[0].1 + w[1].0);
            if mid > l && mid < h {
                cands.push(mid);
            }
        }
    }
    cands
        .into_iter()
        .map(|x| dist_to_intervals(x, b))
        .fold(0.0, f64::max)
}

fn one_sided(a: &SetUnion, b: &SetUnion) -> Result<f64, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d157);
    let convex_target = b.components.len() == 1;
    let mut worst: f64 = 0.0;
    for c in &a.components {
        let pts = match c {
            // distance to a convex set is convex: its max over a polytope sits at a vertex
            Component::Poly(p) if convex_target => p.vertices.clone(),
            _ => c.sample_points(&mut rng, 64)?,
        };
        for p in pts {
            worst = worst.max(b.distance(&p)?);
        }
    }
    Ok(worst)
}

/// Polyhedral cone in V-rep (generators) and/or H-rep (`nᵀz ≤ 0` rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<Vec<Vec<f64>>>,
}

impl Cone {
    pub fn from_generators(dim: usize, generators: Vec<Vec<f64>>) -> Result<Self, GeomError> {
        for g in &generators {
            if g.len() != dim {
                return Err(GeomError::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
        }
        let generators = generators.into_iter().filter(|g| norm(g) > 1e-14).collect();
        Ok(Cone {
            dim,
            generators: Some(generators),
            halfspaces: None,
        })
    }

    pub fn from_halfspaces(dim: usize, normals: Vec<Vec<f64>>) -> Result<Self, GeomError> {
        for g in &normals {
            if g.len() != dim {
                return Err(GeomError::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
        }
        Ok(Cone {
            dim,
            generators: None,
            halfspaces: Some(normals),
        })
    }

    /// Builds a cone carrying both representations after checking that they
    /// agree: generators satisfy every row, and every extreme ray of the
    /// H-cone is a nonnegative combination of the generators.
    pub fn with_both(
        dim: usize,
        generators: Vec<Vec<f64>>,
        normals: Vec<Vec<f64>>,
    ) -> Result<Self, GeomError> {
        let cone = Cone {
            dim,
            generators: Some(generators),
            halfspaces: Some(normals),
        };
        cone.validate()?;
        Ok(cone)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let (Some(gens), Some(rows)) = (&self.generators, &self.halfspaces) else {
            return Ok(());
        };
        for g in gens {
            for r in rows {
                if dot(g, r) > 1e-8 * (1.0 + norm(g) * norm(r)) {
                    return Err(GeomError::Numerical(
                        "cone generator violates its own H-representation".into(),
                    ));
                }
            }
        }
        let h_only = Cone::from_halfspaces(self.dim, rows.clone())?;
        let v_only = Cone::from_generators(self.dim, gens.clone())?;
        for ray in h_only.extreme_rays()? {
            if !v_only.contains(&ray, 1e-8)? {
                return Err(GeomError::Numerical(
                    "cone H-representation is larger than its generators".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn trivial(dim: usize) -> Self {
        Cone {
            dim,
            generators: Some(Vec::new()),
            halfspaces: None,
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeomError> {
        if z.len() != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        if let Some(rows) = &self.halfspaces {
            return Ok(rows.iter().all(|r| dot(r, z) <= tol));
        }
        let gens = self.generators.as_deref().unwrap_or(&[]);
        Ok(conic_weights(gens, z, tol)?.is_some())
    }

    /// H-rows of the cone, deriving them from generators when needed.
    pub fn rows(&self) -> Result<Vec<Vec<f64>>, GeomError> {
        if let Some(rows) = &self.halfspaces {
            return Ok(rows.clone());
        }
        // polar of the generated cone: rows are the extreme rays of {v : vᵀg ≤ 0}
        let gens = self.generators.clone().unwrap_or_default();
        let polar = Cone::from_halfspaces(self.dim, gens)?;
        polar.extreme_rays()
    }

    /// Generators of the cone, enumerating them from the H-rep when needed:
    /// vertices of the cone cut by `[−1,1]ⁿ`, minus the redundant ones.
    pub fn extreme_rays(&self) -> Result<Vec<Vec<f64>>, GeomError> {
        if let Some(g) = &self.generators {
            return Ok(g.clone());
        }
        check_cap(self.dim)?;
        let rows = self.halfspaces.clone().unwrap_or_default();
        let h = HPolyhedron::new(
            self.dim,
            rows.into_iter().map(|r| Halfspace::new(r, 0.0)).collect(),
        )?;
        let verts = h.vertices_in_box(&vec![-1.0; self.dim], &vec![1.0; self.dim])?;
        let mut gens: Vec<Vec<f64>> = verts.into_iter().filter(|v| norm(v) > 1e-9).collect();
        gens.sort_by(|a, b| lex_cmp(a, b));
        let mut i = 0;
        while i < gens.len() {
            let others: Vec<Vec<f64>> = gens
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, g)| g.clone())
                .collect();
            if conic_weights(&others, &gens[i], 1e-10)?.is_some() {
                gens.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(gens)
    }

    /// Intersection with `[−1,1]ⁿ` as a polytope.
    pub fn cap(&self) -> Result<VPolytope, GeomError> {
        let rows = self.rows()?;
        let h = HPolyhedron::new(
            self.dim,
            rows.into_iter().map(|r| Halfspace::new(r, 0.0)).collect(),
        )?;
        let verts = h.vertices_in_box(&vec![-1.0; self.dim], &vec![1.0; self.dim])?;
        conv_hull(&verts, self.dim)
    }
}

/// Nonnegative weights `μ` with `Σμᵢgᵢ = z` up to `tol`.
pub fn conic_weights(
    gens: &[Vec<f64>],
    z: &[f64],
    tol: f64,
) -> Result<Option<Vec<f64>>, GeomError> {
    let n = z.len();
    let m = gens.len();
    if m == 0 {
        return Ok(z.iter().all(|v| v.abs() <= tol).then(Vec::new));
    }
    let mut hs = Vec::with_capacity(2 * n + m);
    for i in 0..n {
        let row: Vec<f64> = gens.iter().map(|g| g[i]).collect();
        hs.push(Halfspace::new(row.clone(), z[i] + tol));
        hs.push(Halfspace::new(
            row.iter().map(|v| -v).collect(),
            -z[i] + tol,
        ));
    }
    for j in 0..m {
        let mut row = vec![0.0; m];
        row[j] = -1.0;
        hs.push(Halfspace::new(row, 0.0));
    }
    let poly = HPolyhedron {
        dim: m,
        halfspaces: hs,
    };
    match lp_solve(&vec![0.0; m], &poly)? {
        LpOutcome::Optimal { point, .. } => Ok(Some(point)),
        _ => Ok(None),
    }
}

/// Dual cone `{v : vᵀr ≥ 0 for every generator r}`, with a V-rep attached
/// at dimension ≤ 3.
pub fn dual_cone(c: &Cone) -> Result<Cone, GeomError> {
    let gens = c.extreme_rays()?;
    let rows: Vec<Vec<f64>> = gens
        .iter()
        .map(|g| g.iter().map(|v| -v).collect())
        .collect();
    let mut dual = Cone::from_halfspaces(c.dim, rows)?;
    if c.dim <= 3 {
        dual.generators = Some(dual.extreme_rays()?);
    }
    Ok(dual)
}
