//! Expression trees for piecewise-defined functions on `ℝⁿ`.
//!
//! Trees are immutable after construction. Exact oracles consume the
//! piecewise-affine (PA) and piecewise linear-quadratic (PLQ) fragments;
//! `Builtin` atoms are one-dimensional escape hatches for the numeric
//! oracles and the one-dimensional exact engine.

mod builtin;
mod parse;

use std::collections::BTreeMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{Builtin, REGISTRY};
pub use parse::{parse_expr, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("dimension mismatch: expression needs {expected} coordinates, point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
}

/// A point of `ℝⁿ` with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, ExprError> {
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(ExprError::NonFinite(i));
        }
        Ok(Point(coords))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Affine { coeffs: Vec<f64>, offset: f64 },
    Sum(Vec<Expr>),
    Scale(f64, Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
    Abs(Box<Expr>),
    Sq(Box<Expr>),
    Builtin(Builtin, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FragmentClass {
    /// Piecewise affine.
    PA,
    /// Piecewise linear-quadratic: squares of PA subtrees under sums and scalings.
    PLQ,
    /// One-dimensional, containing builtin atoms.
    Smooth1D,
    General,
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn affine(coeffs: Vec<f64>, offset: f64) -> Expr {
        Expr::Affine { coeffs, offset }
    }

    pub fn scale(c: f64, e: Expr) -> Expr {
        Expr::Scale(c, Box::new(e))
    }

    pub fn abs(e: Expr) -> Expr {
        Expr::Abs(Box::new(e))
    }

    pub fn sq(e: Expr) -> Expr {
        Expr::Sq(Box::new(e))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::scale(-1.0, e)
    }

    pub fn builtin(b: Builtin, e: Expr) -> Expr {
        Expr::Builtin(b, Box::new(e))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Affine { .. } => Vec::new(),
            Expr::Sum(cs) | Expr::Max(cs) | Expr::Min(cs) => cs.iter().collect(),
            Expr::Scale(_, e) | Expr::Abs(e) | Expr::Sq(e) | Expr::Builtin(_, e) => vec![e],
        }
    }

    /// Pre-order traversal with node ids.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(usize, &'a Expr)) {
        fn go<'a>(e: &'a Expr, next: &mut usize, f: &mut impl FnMut(usize, &'a Expr)) {
            let id = *next;
            *next += 1;
            f(id, e);
            for c in e.children() {
                go(c, next, f);
            }
        }
        let mut next = 0;
        go(self, &mut next, f);
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }

    /// Smallest dimension the expression can be evaluated in.
    pub fn required_dim(&self) -> usize {
        let mut d = 0;
        self.walk(&mut |_, e| match e {
            Expr::Var(i) => d = d.max(i + 1),
            Expr::Affine { coeffs, .. } => d = d.max(coeffs.len()),
            _ => {}
        });
        d
    }

    pub fn check_dim(&self, n: usize) -> Result<(), ExprError> {
        let mut bad = None;
        self.walk(&mut |_, e| match e {
            Expr::Var(i) if *i >= n => bad = Some(i + 1),
            Expr::Affine { coeffs, .. } if coeffs.len() != n => bad = Some(coeffs.len()),
            _ => {}
        });
        match bad {
            Some(expected) => Err(ExprError::DimensionMismatch { expected, found: n }),
            None => Ok(()),
        }
    }

    fn has_builtin(&self) -> bool {
        let mut found = false;
        self.walk(&mut |_, e| found |= matches!(e, Expr::Builtin(..)));
        found
    }

    fn is_pa(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Affine { .. } => true,
            Expr::Sum(cs) | Expr::Max(cs) | Expr::Min(cs) => cs.iter().all(Expr::is_pa),
            Expr::Scale(_, e) | Expr::Abs(e) => e.is_pa(),
            Expr::Sq(_) | Expr::Builtin(..) => false,
        }
    }

    fn is_plq(&self) -> bool {
        match self {
            Expr::Sq(e) => e.is_pa(),
            Expr::Sum(cs) => cs.iter().all(Expr::is_plq),
            Expr::Scale(_, e) => e.is_plq(),
            e => e.is_pa(),
        }
    }

    /// Evaluates without dimension checks; callers go through [`eval`].
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Affine { coeffs, offset } => {
                coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset
            }
            Expr::Sum(cs) => cs.iter().map(|c| c.value(x)).sum(),
            Expr::Scale(c, e) => c * e.value(x),
            Expr::Max(cs) => cs
                .iter()
                .map(|c| c.value(x))
                .fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(cs) => cs.iter().map(|c| c.value(x)).fold(f64::INFINITY, f64::min),
            Expr::Abs(e) => e.value(x).abs(),
            Expr::Sq(e) => {
                let v = e.value(x);
                v * v
            }
            Expr::Builtin(b, e) => b.value(e.value(x)),
        }
    }

    /// Gradient almost everywhere: ties go to the first maximizing child,
    /// `|0|` and builtin breakpoints use the left-hand piece.
    pub(crate) fn ae_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self {
            Expr::Const(_) => vec![0.0; n],
            Expr::Var(i) => {
                let mut g = vec![0.0; n];
                g[*i] = 1.0;
                g
            }
            Expr::Affine { coeffs, .. } => coeffs.clone(),
            Expr::Sum(cs) => {
                let mut g = vec![0.0; n];
                for c in cs {
                    for (gi, ci) in g.iter_mut().zip(c.ae_gradient(x)) {
                        *gi += ci;
                    }
                }
                g
            }
            Expr::Scale(c, e) => e.ae_gradient(x).into_iter().map(|v| c * v).collect(),
            Expr::Max(cs) | Expr::Min(cs) => {
                let is_max = matches!(self, Expr::Max(_));
                let vals: Vec<f64> = cs.iter().map(|c| c.value(x)).collect();
                let mut best = 0;
                for (i, v) in vals.iter().enumerate() {
                    if (is_max && *v > vals[best]) || (!is_max && *v < vals[best]) {
                        best = i;
                    }
                }
                cs[best].ae_gradient(x)
            }
            Expr::Abs(e) => {
                let v = e.value(x);
                let s = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                e.ae_gradient(x).into_iter().map(|v| s * v).collect()
            }
            Expr::Sq(e) => {
                let v = e.value(x);
                e.ae_gradient(x).into_iter().map(|g| 2.0 * v * g).collect()
            }
            Expr::Builtin(b, e) => {
                let d = b.ae_derivative(e.value(x));
                e.ae_gradient(x).into_iter().map(|g| d * g).collect()
            }
        }
    }
}

/// Evaluates `e` at `x`.
pub fn eval(e: &Expr, x: &[f64]) -> Result<f64, ExprError> {
    e.check_dim(x.len())?;
    if let Some(i) = x.iter().position(|c| !c.is_finite()) {
        return Err(ExprError::NonFinite(i));
    }
    Ok(e.value(x))
}

/// A.e. gradient with dimension checks: first active branch on Max/Min
/// ties, `Sign(0) = 0` at a zero Abs argument.
pub fn ae_gradient(e: &Expr, x: &[f64]) -> Result<Vec<f64>, ExprError> {
    e.check_dim(x.len())?;
    Ok(e.ae_gradient(x))
}

/// Tightest fragment containing `e`.
pub fn classify_fragment(e: &Expr) -> FragmentClass {
    if e.has_builtin() {
        if e.required_dim() <= 1 {
            FragmentClass::Smooth1D
        } else {
            FragmentClass::General
        }
    } else if e.is_pa() {
        FragmentClass::PA
    } else if e.is_plq() {
        FragmentClass::PLQ
    } else {
        FragmentClass::General
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeActivity {
    Max { active: Vec<usize> },
    Min { active: Vec<usize> },
    Abs { child_sign: Sign },
}

/// Activity of every Max/Min/Abs node at a point, keyed by pre-order node id.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivePattern {
    pub nodes: BTreeMap<usize, NodeActivity>,
}

impl ActivePattern {
    /// All choices singleton and no Abs child at zero.
    pub fn is_smooth(&self) -> bool {
        self.nodes.values().all(|a| match a {
            NodeActivity::Max { active } | NodeActivity::Min { active } => active.len() == 1,
            NodeActivity::Abs { child_sign } => *child_sign != Sign::Zero,
        })
    }

    pub fn get(&self, node: usize) -> Option<&NodeActivity> {
        self.nodes.get(&node)
    }
}

/// Active children of each Max/Min node and the sign of each Abs child,
/// with absolute tolerance `tol`.
pub fn active_pattern(e: &Expr, x: &[f64], tol: f64) -> Result<ActivePattern, ExprError> {
    e.check_dim(x.len())?;
    let mut pat = ActivePattern::default();
    e.walk(&mut |id, node| match node {
        Expr::Max(cs) | Expr::Min(cs) => {
            let vals: Vec<f64> = cs.iter().map(|c| c.value(x)).collect();
            let active: Vec<usize> = if matches!(node, Expr::Max(_)) {
                let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (0..vals.len()).filter(|&i| vals[i] >= m - tol).collect()
            } else {
                let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
                (0..vals.len()).filter(|&i| vals[i] <= m + tol).collect()
            };
            let act = if matches!(node, Expr::Max(_)) {
                NodeActivity::Max { active }
            } else {
                NodeActivity::Min { active }
            };
            pat.nodes.insert(id, act);
        }
        Expr::Abs(c) => {
            let v = c.value(x);
            let child_sign = if v.abs() <= tol {
                Sign::Zero
            } else if v > 0.0 {
                Sign::Pos
            } else {
                Sign::Neg
            };
            pat.nodes.insert(id, NodeActivity::Abs { child_sign });
        }
        _ => {}
    });
    Ok(pat)
}
