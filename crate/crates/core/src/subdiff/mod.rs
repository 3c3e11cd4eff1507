//! Directional derivatives and subdifferentials.
//!
//! Exact oracles work on the piecewise-affine (PA) and piecewise
//! linear-quadratic (PLQ) fragments and on one-dimensional expressions with
//! builtin atoms. They enumerate the local linear pieces of the expression
//! around the point (see [`local`]) and read every object off those pieces:
//!
//! * Bouligand: gradients of pieces whose validity cone has interior.
//! * Clarke: convex hull of the Bouligand set.
//! * Fréchet: `{s : sᵀu ≤ f'(x;u) ∀u}`, cut out by the generators of each
//!   piece's cone.
//! * limiting: Fréchet sets at `x` and at representatives of every face of
//!   the local subdivision near `x`.
//!
//! Sampling oracles for everything else live in [`sampled`]; the convex
//! catalog, eigenvalue and normal cone formulas in [`catalog`].

pub mod catalog;
pub(crate) mod local;
pub mod sampled;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{classify_fragment, Expr, ExprError, FragmentClass};
use crate::polyhedra::{
    conv_hull, lex_cmp, Component, GeomError, Halfspace, SetUnion, VPolytope, POLYTOPE_DIM_CAP,
};

pub use catalog::{
    convex_catalog_subdiff, eigmax_subdiff, normal_cone, CatalogId, EigmaxSubdiff, SmoothPiece,
};
pub use local::EngineTol;
pub use sampled::{
    fd_dir_deriv, gradient_sampling, sampled_clarke_dd, FdSchedule, GradientSample, SamplingParams,
};

use local::{dot, Cell};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubdiffError {
    #[error("expression is outside the exact fragments; use a sampled oracle")]
    UseSampled,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("function is not directionally differentiable at the point")]
    NotDirectionallyDifferentiable,
    #[error("local analysis needs {0} selections, above the cap")]
    TooManySelections(usize),
    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("point is not in the set")]
    InfeasiblePoint,
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("weak convexity modulus must be non-negative, got {0}")]
    NegativeRho(f64),
    #[error("unsupported composition: {0}")]
    UnsupportedComposition(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubdiffKind {
    Frechet,
    Limiting,
    Clarke,
    Bouligand,
    Convex,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Exactness {
    Exact,
    Sampled { tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdiffSet {
    pub kind: SubdiffKind,
    pub at: Vec<f64>,
    pub exactness: Exactness,
    #[serde(flatten)]
    pub set: SetUnion,
}

impl SubdiffSet {
    pub fn exact(kind: SubdiffKind, at: &[f64], set: SetUnion) -> Self {
        SubdiffSet {
            kind,
            at: at.to_vec(),
            exactness: Exactness::Exact,
            set,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool, GeomError> {
        self.set.contains(z, tol)
    }

    /// Single convex component, if the set has exactly one polytope piece.
    pub fn polytope(&self) -> Option<&VPolytope> {
        match self.set.components.as_slice() {
            [Component::Poly(p)] => Some(p),
            _ => None,
        }
    }

    /// One-line description for terminals.
    pub fn summary(&self) -> String {
        let body = if self.set.is_empty() {
            "∅".to_string()
        } else {
            self.set
                .components
                .iter()
                .map(describe_component)
                .collect::<Vec<_>>()
                .join(" ∪ ")
        };
        format!("{:?} at {:?}: {body}", self.kind, self.at)
    }
}

fn describe_component(c: &Component) -> String {
    match c {
        Component::Poly(p) if p.dim == 1 && p.vertices.len() == 2 => {
            format!(
                "[{}, {}]",
                fmt_num(p.vertices[0][0]),
                fmt_num(p.vertices[1][0])
            )
        }
        Component::Poly(p) if p.vertices.len() == 1 => format!("{{{}}}", fmt_vec(&p.vertices[0])),
        Component::Poly(p) => format!(
            "conv{{{}}}",
            p.vertices
                .iter()
                .map(|v| fmt_vec(v))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Component::Halfspaces(h) => format!("{} halfspaces", h.halfspaces.len()),
        Component::Ball { ball } => {
            format!("B({}, {})", fmt_vec(&ball.center), fmt_num(ball.radius))
        }
    }
}

fn fmt_num(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    if v.len() == 1 {
        return fmt_num(v[0]);
    }
    format!(
        "({})",
        v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", ")
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirDerivKind {
    Ordinary,
    Clarke,
}

/// Diagnostics of a sampled estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub converged: bool,
    /// Spread of the last few estimates.
    pub oscillation: f64,
    /// Spread over the whole schedule.
    pub amplitude: f64,
    /// Estimate per step of the schedule (quotients, or per-rung maxima).
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DerivExactness {
    Exact,
    Sampled(SampleInfo),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirDerivValue {
    pub value: f64,
    pub kind: DirDerivKind,
    pub exactness: DerivExactness,
}

impl DirDerivValue {
    fn exact(value: f64, kind: DirDerivKind) -> Self {
        DirDerivValue {
            value,
            kind,
            exactness: DerivExactness::Exact,
        }
    }

    /// False only for sampled values flagged as non-convergent.
    pub fn converged(&self) -> bool {
        match &self.exactness {
            DerivExactness::Exact => true,
            DerivExactness::Sampled(info) => info.converged,
        }
    }
}

fn prepare(e: &Expr, x: &[f64]) -> Result<FragmentClass, SubdiffError> {
    e.check_dim(x.len())?;
    if let Some(i) = x.iter().position(|c| !c.is_finite()) {
        return Err(ExprError::NonFinite(i).into());
    }
    let frag = classify_fragment(e);
    if frag == FragmentClass::General {
        return Err(SubdiffError::UseSampled);
    }
    Ok(frag)
}

fn check_direction(x: &[f64], d: &[f64]) -> Result<(), SubdiffError> {
    if d.len() != x.len() {
        return Err(ExprError::DimensionMismatch {
            expected: x.len(),
            found: d.len(),
        }
        .into());
    }
    Ok(())
}

/// `f'(x; d)`.
pub fn dir_deriv(e: &Expr, x: &[f64], d: &[f64]) -> Result<DirDerivValue, SubdiffError> {
    prepare(e, x)?;
    check_direction(x, d)?;
    let lex = local::lex_eval(e, x, &[d.to_vec()], &EngineTol::default())?;
    Ok(DirDerivValue::exact(lex[1], DirDerivKind::Ordinary))
}

/// `f°(x; d)`, the support function of the Clarke set.
pub fn clarke_dir_deriv(e: &Expr, x: &[f64], d: &[f64]) -> Result<DirDerivValue, SubdiffError> {
    check_direction(x, d)?;
    let pts = bouligand_points(e, x)?;
    let v = pts
        .iter()
        .map(|g| dot(g, d))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DirDerivValue::exact(v, DirDerivKind::Clarke))
}

fn dedup_points(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        let scale = 1.0 + p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !out.iter().any(|q| {
            q.iter()
                .zip(&p)
                .all(|(a, b)| (a - b).abs() <= 1e-10 * scale)
        }) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out
}

fn bouligand_points(e: &Expr, x: &[f64]) -> Result<Vec<Vec<f64>>, SubdiffError> {
    prepare(e, x)?;
    if x.len() > POLYTOPE_DIM_CAP {
        return Err(SubdiffError::DimensionCap {
            dim: x.len(),
            cap: POLYTOPE_DIM_CAP,
        });
    }
    let cells = local::interior_cells(e, x, &[], &EngineTol::default())?;
    Ok(dedup_points(cells.into_iter().map(|c| c.grad).collect()))
}

/// Gradients of the essentially active smooth selections at `x`.
pub fn bouligand(e: &Expr, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
    let pts = bouligand_points(e, x)?;
    Ok(SubdiffSet::exact(
        SubdiffKind::Bouligand,
        x,
        SetUnion::points(x.len(), &pts),
    ))
}

/// Convex hull of the Bouligand set.
pub fn clarke(e: &Expr, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
    let pts = bouligand_points(e, x)?;
    let hull = conv_hull(&pts, x.len())?;
    Ok(SubdiffSet::exact(
        SubdiffKind::Clarke,
        x,
        SetUnion::single(hull),
    ))
}

/// Which exact route applies for Fréchet / limiting sets.
enum Route {
    OneDim,
    Cells,
}

fn route(e: &Expr, x: &[f64]) -> Result<Route, SubdiffError> {
    let frag = prepare(e, x)?;
    match (x.len(), frag) {
        (1, _) => Ok(Route::OneDim),
        (2..=3, FragmentClass::PA) => Ok(Route::Cells),
        (n, FragmentClass::PA) => Err(SubdiffError::DimensionCap { dim: n, cap: 3 }),
        _ => Err(SubdiffError::Unsupported(
            "Fréchet and limiting sets need a piecewise-affine expression in dimension ≤ 3 or a 1-D expression".into(),
        )),
    }
}

/// One-sided derivatives `(f'(x;1), f'(x;−1))` of a 1-D expression.
fn one_sided(e: &Expr, x: &[f64]) -> Result<(f64, f64), SubdiffError> {
    let tol = EngineTol::default();
    let r = local::lex_eval(e, x, &[vec![1.0]], &tol)?[1];
    let l = local::lex_eval(e, x, &[vec![-1.0]], &tol)?[1];
    Ok((r, l))
}

fn frechet_1d(e: &Expr, x: &[f64]) -> Result<VPolytope, SubdiffError> {
    let (r, l) = one_sided(e, x)?;
    let (lo, hi) = (-l, r);
    if lo > hi + 1e-12 * (1.0 + hi.abs()) {
        return Ok(VPolytope::empty(1));
    }
    let mut p = VPolytope::interval(lo.min(hi), hi);
    p.halfspaces = vec![Halfspace::new(vec![1.0], hi), Halfspace::new(vec![-1.0], l)];
    Ok(p)
}

/// Fréchet set at the lexicographic base `(x; dirs)` from the interior cells.
fn frechet_cells(cells: &[Cell], n: usize) -> Result<VPolytope, SubdiffError> {
    let (hs, lo, hi) = local::frechet_constraints(cells, n);
    let mut clip = crate::polyhedra::ClipPolytope::from_box(&lo, &hi);
    for h in &hs {
        clip.clip(&h.normal, h.offset);
        if clip.is_empty() {
            return Ok(VPolytope::empty(n));
        }
    }
    let mut p = conv_hull(&clip.vertices(), n)?;
    if !p.is_empty() {
        p.halfspaces = hs;
    }
    Ok(p)
}

fn frechet_at(e: &Expr, x: &[f64], dirs: &[Vec<f64>]) -> Result<VPolytope, SubdiffError> {
    let cells = local::interior_cells(e, x, dirs, &EngineTol::default())?;
    frechet_cells(&cells, x.len())
}

/// Regular subgradients: linear minorants of `f'(x; ·)`.
pub fn frechet(e: &Expr, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
    let p = match route(e, x)? {
        Route::OneDim => frechet_1d(e, x)?,
        Route::Cells => frechet_at(e, x, &[])?,
    };
    Ok(SubdiffSet::exact(
        SubdiffKind::Frechet,
        x,
        SetUnion::single(p),
    ))
}

/// Limiting (Mordukhovich) subdifferential as a finite union of polytopes.
pub fn limiting(e: &Expr, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
    let n = x.len();
    let mut parts: Vec<VPolytope> = Vec::new();
    match route(e, x)? {
        Route::OneDim => {
            parts.push(frechet_1d(e, x)?);
            for g in bouligand_points(e, x)? {
                parts.push(VPolytope::singleton(g));
            }
        }
        Route::Cells => {
            let tol = EngineTol::default();
            parts.push(frechet_at(e, x, &[])?);
            for g in bouligand_points(e, x)? {
                parts.push(VPolytope::singleton(g));
            }
            let normals = local::kink_normals(e, x, &tol)?;
            for rep in local::lower_face_reps(&normals, n) {
                parts.push(frechet_at(e, x, &[rep])?);
            }
        }
    }
    let parts = prune(parts)?;
    Ok(SubdiffSet::exact(
        SubdiffKind::Limiting,
        x,
        SetUnion::new(n, parts.into_iter().map(Component::Poly).collect()),
    ))
}

/// Drops empty pieces and pieces contained in another piece.
fn prune(parts: Vec<VPolytope>) -> Result<Vec<VPolytope>, SubdiffError> {
    let parts: Vec<VPolytope> = parts.into_iter().filter(|p| !p.is_empty()).collect();
    let mut keep = vec![true; parts.len()];
    for i in 0..parts.len() {
        for j in 0..parts.len() {
            if i == j || !keep[j] {
                continue;
            }
            if parts[i].subset_of(&parts[j], 1e-9)? {
                let mutual = parts[j].subset_of(&parts[i], 1e-9)?;
                if !mutual || j < i {
                    keep[i] = false;
                    break;
                }
            }
        }
    }
    let mut out: Vec<VPolytope> = parts
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    out.sort_by(|a, b| lex_cmp(&a.vertices[0], &b.vertices[0]));
    Ok(out)
}

/// Clarke set of `f = h − (ρ/2)‖·‖²` from the convex subdifferential of `h`.
pub fn weakly_convex_subdiff(
    h_subdiff: &SubdiffSet,
    rho: f64,
    x: &[f64],
) -> Result<SubdiffSet, SubdiffError> {
    if !(rho >= 0.0) {
        return Err(SubdiffError::NegativeRho(rho));
    }
    if x.len() != h_subdiff.set.dim {
        return Err(ExprError::DimensionMismatch {
            expected: h_subdiff.set.dim,
            found: x.len(),
        }
        .into());
    }
    let shift: Vec<f64> = x.iter().map(|v| -rho * v).collect();
    let comps = h_subdiff
        .set
        .components
        .iter()
        .map(|c| match c {
            Component::Poly(p) => Component::Poly(p.translate(&shift)),
            Component::Halfspaces(h) => {
                let mut h = h.clone();
                for hs in &mut h.halfspaces {
                    hs.offset += dot(&hs.normal, &shift);
                }
                Component::Halfspaces(h)
            }
            Component::Ball { ball } => {
                let mut b = ball.clone();
                for (c, s) in b.center.iter_mut().zip(&shift) {
                    *c += s;
                }
                Component::Ball { ball: b }
            }
        })
        .collect();
    Ok(SubdiffSet {
        kind: SubdiffKind::Clarke,
        at: x.to_vec(),
        exactness: h_subdiff.exactness,
        set: SetUnion::new(x.len(), comps),
    })
}

/// Minimum of `f'(x; ·)` over the box `‖d‖∞ ≤ 1`, with a minimizing box
/// direction. Ties go to the lexicographically greatest direction.
pub fn min_dir_deriv_on_box(e: &Expr, x: &[f64]) -> Result<(f64, Vec<f64>), SubdiffError> {
    match route(e, x)? {
        Route::OneDim => {
            let (r, l) = one_sided(e, x)?;
            if l < r - 1e-12 {
                Ok((l, vec![-1.0]))
            } else {
                Ok((r, vec![1.0]))
            }
        }
        Route::Cells => {
            let n = x.len();
            let cells = local::interior_cells(e, x, &[], &EngineTol::default())?;
            let mut best: Option<(f64, Vec<f64>)> = None;
            for c in &cells {
                let mut verts = local::cone_box_vertices(&c.rows, n);
                if verts.is_empty() {
                    continue;
                }
                verts.sort_by(|a, b| lex_cmp(a, b));
                for v in verts {
                    let val = dot(&c.grad, &v);
                    let better = match &best {
                        None => true,
                        Some((b, bv)) => {
                            val < b - 1e-12 || ((val - b).abs() <= 1e-12 && lex_cmp(&v, bv).is_gt())
                        }
                    };
                    if better {
                        best = Some((val, v));
                    }
                }
            }
            best.ok_or_else(|| {
                SubdiffError::Geom(GeomError::Numerical("no interior cell found".into()))
            })
        }
    }
}
