//! Stationarity classification with certificates.
//!
//! A point is d-stationary when `0` is a regular (Fréchet) subgradient,
//! l-stationary when `0` is a limiting subgradient and C-stationary when
//! `0` is a Clarke subgradient. For the exact fragments the d-test is also
//! decided directly: `min_{‖d‖∞ ≤ 1} f'(x; d) ≥ −tol`, with a minimizing
//! direction returned as the witness of failure.

use serde::{Deserialize, Serialize};

use crate::expr::{classify_fragment, Expr, FragmentClass};
use crate::lspar::{dot, max_affine, unflatten, LsparDataset, Weights};
use crate::polyhedra::{lp_solve, Component, ConvexSetSpec, HPolyhedron, Halfspace, LpOutcome};
use crate::subdiff::{
    self, convex_catalog_subdiff, gradient_sampling, normal_cone, CatalogId, SamplingParams,
    SubdiffError, SubdiffKind, SubdiffSet,
};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const LSPAR_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub kind: SubdiffKind,
    pub contains_zero: bool,
    /// Distance from the origin to the set (`None` when the set is empty).
    pub distance: Option<f64>,
    pub summary: String,
}

impl Membership {
    fn of(s: &SubdiffSet, tol: f64) -> Result<Self, SubdiffError> {
        let zero = vec![0.0; s.set.dim];
        Ok(Membership {
            kind: s.kind,
            contains_zero: s.contains(&zero, tol)?,
            distance: if s.is_empty() {
                None
            } else {
                Some(s.set.distance(&zero)?)
            },
            summary: s.summary(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub direction: Vec<f64>,
    pub dir_deriv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub is_d: bool,
    pub is_l: bool,
    #[serde(rename = "is_C")]
    pub is_c: bool,
    pub witness: Option<Witness>,
    pub certificates: Vec<Membership>,
    pub tol: f64,
}

/// Directional d-stationarity test; works wherever one-sided derivatives
/// are exact, including 1-D expressions whose Bouligand set is unavailable.
pub fn d_stationarity(
    e: &Expr,
    x: &[f64],
    tol: f64,
) -> Result<(bool, Option<Witness>), SubdiffError> {
    let (v, d) = subdiff::min_dir_deriv_on_box(e, x)?;
    if v >= -tol {
        Ok((true, None))
    } else {
        Ok((
            false,
            Some(Witness {
                direction: d,
                dir_deriv: v,
            }),
        ))
    }
}

/// Full d/l/C report for a PA expression (dim ≤ 3) or a 1-D expression.
pub fn classify(e: &Expr, x: &[f64], tol: f64) -> Result<StationarityReport, SubdiffError> {
    let fr = subdiff::frechet(e, x)?;
    let li = subdiff::limiting(e, x)?;
    let cl = subdiff::clarke(e, x)?;
    let (is_d, witness) = d_stationarity(e, x, tol)?;
    let certs = vec![
        Membership::of(&fr, tol)?,
        Membership::of(&li, tol)?,
        Membership::of(&cl, tol)?,
    ];
    // the Fréchet and directional tests agree up to the norm used for tol
    let frechet_d = certs[0]
        .distance
        .is_some_and(|d| d <= tol * (x.len() as f64).sqrt() + tol);
    if frechet_d != is_d && certs[0].distance.is_none_or(|d| d > 1e-6) {
        return Err(SubdiffError::Geom(crate::polyhedra::GeomError::Numerical(
            format!(
                "Fréchet membership ({frechet_d}) disagrees with the directional test ({is_d})"
            ),
        )));
    }
    Ok(StationarityReport {
        is_d,
        is_l: certs[1].contains_zero || is_d,
        is_c: certs[2].contains_zero || certs[1].contains_zero || is_d,
        witness,
        certificates: certs,
        tol,
    })
}

/// Clarke stationarity judged from a sampled gradient hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledStationarity {
    pub is_c: bool,
    pub distance: f64,
    pub set: SubdiffSet,
}

pub fn classify_sampled(
    grad: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    params: &SamplingParams,
    tol: f64,
) -> Result<SampledStationarity, SubdiffError> {
    let gs = gradient_sampling(grad, x, params)?;
    let distance = gs.set.set.distance(&vec![0.0; x.len()])?;
    Ok(SampledStationarity {
        is_c: distance <= tol,
        distance,
        set: gs.set,
    })
}

/// Convex objective accepted by [`convex_optimality_check`].
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexObjective {
    Catalog(CatalogId),
    /// A PA expression the caller asserts is convex.
    Expr(Expr),
}

impl ConvexObjective {
    pub fn value(&self, x: &[f64]) -> Result<f64, SubdiffError> {
        match self {
            ConvexObjective::Catalog(c) => Ok(c.value(x)),
            ConvexObjective::Expr(e) => Ok(crate::expr::eval(e, x)?),
        }
    }

    pub fn subdiff(&self, x: &[f64]) -> Result<SubdiffSet, SubdiffError> {
        match self {
            ConvexObjective::Catalog(c) => convex_catalog_subdiff(c, x),
            ConvexObjective::Expr(e) => {
                if classify_fragment(e) != FragmentClass::PA {
                    return Err(SubdiffError::Unsupported(
                        "convex objective must be piecewise affine".into(),
                    ));
                }
                let mut s = subdiff::clarke(e, x)?;
                s.kind = SubdiffKind::Convex;
                Ok(s)
            }
        }
    }

    pub fn dir_deriv(&self, x: &[f64], d: &[f64]) -> Result<f64, SubdiffError> {
        match self {
            ConvexObjective::Catalog(c) => c.dir_deriv(x, d),
            ConvexObjective::Expr(e) => Ok(subdiff::dir_deriv(e, x, d)?.value),
        }
    }

    /// Whether convexity is certified by the form `max_i (a_iᵀx + b_i)`.
    pub fn certified_convex(&self) -> bool {
        match self {
            ConvexObjective::Catalog(_) => true,
            ConvexObjective::Expr(e) => is_max_affine(e),
        }
    }
}

fn is_max_affine(e: &Expr) -> bool {
    match e {
        Expr::Affine { .. } | Expr::Const(_) | Expr::Var(_) => true,
        Expr::Max(cs) => cs.iter().all(is_max_affine),
        Expr::Sum(cs) => cs.iter().all(is_max_affine),
        Expr::Scale(c, inner) => *c >= 0.0 && is_max_affine(inner),
        Expr::Abs(inner) => matches!(**inner, Expr::Affine { .. } | Expr::Var(_) | Expr::Const(_)),
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCertificate {
    pub optimal: bool,
    /// `s ∈ ∂g(x)` and `ν ∈ N_C(x)` with `s + ν = 0` when optimal.
    pub s: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub convexity_certified: bool,
}

/// `0 ∈ ∂g(x) + N_C(x)`, decided by an LP over hull and cone weights.
pub fn convex_optimality_check(
    g: &ConvexObjective,
    c: &ConvexSetSpec,
    x: &[f64],
    tol: f64,
) -> Result<OptimalityCertificate, SubdiffError> {
    let n = x.len();
    let cone = normal_cone(c, x)?;
    let gens = cone.generators.clone().unwrap_or_default();
    let sd = g.subdiff(x)?;
    let certified = g.certified_convex();
    let verts = match sd.set.components.as_slice() {
        [Component::Poly(p)] => p.vertices.clone(),
        [Component::Ball { ball }] => {
            // only balls containing the origin arise (‖·‖₂ at 0)
            let inside = ball.contains(&vec![0.0; n], tol);
            return Ok(OptimalityCertificate {
                optimal: inside,
                s: inside.then(|| vec![0.0; n]),
                nu: inside.then(|| vec![0.0; n]),
                convexity_certified: certified,
            });
        }
        _ => {
            return Err(SubdiffError::Unsupported(
                "subdifferential is not a single convex piece".into(),
            ))
        }
    };
    let (m, p) = (verts.len(), gens.len());
    let dim = m + p;
    let mut hs = Vec::new();
    for i in 0..n {
        let row: Vec<f64> = verts
            .iter()
            .map(|v| v[i])
            .chain(gens.iter().map(|g| g[i]))
            .collect();
        hs.push(Halfspace::new(row.clone(), tol));
        hs.push(Halfspace::new(row.iter().map(|v| -v).collect(), tol));
    }
    let mut sum = vec![0.0; dim];
    sum[..m].fill(1.0);
    hs.push(Halfspace::new(sum.clone(), 1.0));
    hs.push(Halfspace::new(sum.iter().map(|v| -v).collect(), -1.0));
    for j in 0..dim {
        let mut r = vec![0.0; dim];
        r[j] = -1.0;
        hs.push(Halfspace::new(r, 0.0));
    }
    let poly = HPolyhedron {
        dim,
        halfspaces: hs,
    };
    let out = lp_solve(&vec![0.0; dim], &poly)?;
    Ok(match out {
        LpOutcome::Optimal { point, .. } => {
            let mut s = vec![0.0; n];
            let mut nu = vec![0.0; n];
            for (w, v) in point[..m].iter().zip(&verts) {
                for i in 0..n {
                    s[i] += w * v[i];
                }
            }
            for (w, g) in point[m..].iter().zip(&gens) {
                for i in 0..n {
                    nu[i] += w * g[i];
                }
            }
            OptimalityCertificate {
                optimal: true,
                s: Some(s),
                nu: Some(nu),
                convexity_certified: certified,
            }
        }
        _ => OptimalityCertificate {
            optimal: false,
            s: None,
            nu: None,
            convexity_certified: certified,
        },
    })
}

/// Outcome of the LSPAR d-stationarity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsparCertificate {
    pub stationary: bool,
    /// `min_{‖D‖∞ ≤ 1} f'(W; D)`.
    pub min_value: f64,
    /// Minimizing `D` when the test fails.
    pub witness: Option<Weights>,
    pub selections: usize,
}

pub const MAX_TIE_SELECTIONS: usize = 1 << 12;

/// Relative tolerance defining ties among the affine pieces at a sample.
pub const LSPAR_TIE_TOL: f64 = 1e-9;

/// `f'(W; D) = (1/N) Σ_s (g_s(W) − y_s) max_{i ∈ I_s(W)} d_iᵀx_s`.
pub fn lspar_dir_deriv(data: &LsparDataset, w: &Weights, d: &Weights) -> f64 {
    let n = data.len() as f64;
    let mut total = 0.0;
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let (g, _) = max_affine(w, x);
        let act = active_set(w, x, g);
        let m = act
            .iter()
            .map(|&i| dot(&d[i], x))
            .fold(f64::NEG_INFINITY, f64::max);
        total += (g - y) * m;
    }
    total / n
}

fn active_set(w: &Weights, x: &[f64], g: f64) -> Vec<usize> {
    let t = LSPAR_TIE_TOL * (1.0 + g.abs());
    (0..w.len()).filter(|&i| dot(&w[i], x) >= g - t).collect()
}

/// Decides `min_{‖D‖∞ ≤ 1} f'(W; D) ≥ −tol` exactly.
///
/// Samples with positive residual coefficient and ties enter through
/// epigraph variables; samples with negative coefficient and ties are
/// enumerated branch by branch, one LP per joint selection.
pub fn lspar_d_stationarity_check(
    data: &LsparDataset,
    w: &Weights,
    tol: f64,
) -> Result<LsparCertificate, SubdiffError> {
    let k = w.len();
    let n = data.dim();
    let nn = data.len() as f64;
    let kn = k * n;
    let mut linear = vec![0.0; kn];
    let mut epi: Vec<(f64, Vec<usize>, &Vec<f64>)> = Vec::new();
    let mut branches: Vec<(f64, Vec<usize>, &Vec<f64>)> = Vec::new();
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let (g, _) = max_affine(w, x);
        let c = (g - y) / nn;
        if c == 0.0 {
            continue;
        }
        let act = active_set(w, x, g);
        if act.len() == 1 {
            for j in 0..n {
                linear[act[0] * n + j] += c * x[j];
            }
        } else if c > 0.0 {
            epi.push((c, act, x));
        } else {
            branches.push((c, act, x));
        }
    }
    let mut selections: usize = 1;
    for b in &branches {
        selections = selections.saturating_mul(b.1.len());
        if selections > MAX_TIE_SELECTIONS {
            return Err(SubdiffError::TooManySelections(selections));
        }
    }
    let dim = kn + epi.len();
    let mut base = Vec::new();
    for j in 0..kn {
        let mut up = vec![0.0; dim];
        up[j] = 1.0;
        base.push(Halfspace::new(up, 1.0));
        let mut down = vec![0.0; dim];
        down[j] = -1.0;
        base.push(Halfspace::new(down, 1.0));
    }
    for (t, (_, act, x)) in epi.iter().enumerate() {
        for &i in act {
            // d_iᵀx − t ≤ 0
            let mut r = vec![0.0; dim];
            for j in 0..n {
                r[i * n + j] = x[j];
            }
            r[kn + t] = -1.0;
            base.push(Halfspace::new(r, 0.0));
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut choice = vec![0usize; branches.len()];
    for _ in 0..selections {
        let mut obj = vec![0.0; dim];
        obj[..kn].copy_from_slice(&linear);
        for (t, (c, _, _)) in epi.iter().enumerate() {
            obj[kn + t] = *c;
        }
        for ((c, act, x), &ch) in branches.iter().zip(&choice) {
            let i = act[ch];
            for j in 0..n {
                obj[i * n + j] += c * x[j];
            }
        }
        let poly = HPolyhedron {
            dim,
            halfspaces: base.clone(),
        };
        if let LpOutcome::Optimal { point, value } = lp_solve(&obj, &poly)? {
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, point[..kn].to_vec()));
            }
        }
        // next selection (mixed radix)
        for (ch, (_, act, _)) in choice.iter_mut().zip(&branches) {
            *ch += 1;
            if *ch < act.len() {
                break;
            }
            *ch = 0;
        }
    }
    let (value, dvec) = best.ok_or_else(|| {
        SubdiffError::Geom(crate::polyhedra::GeomError::Numerical(
            "box LP failed".into(),
        ))
    })?;
    let stationary = value >= -tol;
    Ok(LsparCertificate {
        stationary,
        min_value: value,
        witness: (!stationary).then(|| unflatten(&dvec, k)),
        selections,
    })
}
