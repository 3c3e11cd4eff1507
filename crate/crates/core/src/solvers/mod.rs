//! Subgradient-type methods and the MM solver for piecewise affine
//! regression.

mod mm;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr};
use crate::polyhedra::{ConvexSetSpec, GeomError};
use crate::subdiff::SubdiffError;

pub use mm::{mm_lspar, ridge_ls_solve, MmParams, MmResult, MmStep};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("projection failed: {0}")]
    Projection(GeomError),
    #[error(transparent)]
    Subdiff(#[from] SubdiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    Constant(f64),
    /// `c / √(k+1)`.
    Diminishing(f64),
    /// `α₀ qᵏ`.
    Geometric {
        a0: f64,
        q: f64,
    },
    /// `(f(xᵏ) − f* + margin) / ‖sᵏ‖²`.
    Polyak {
        f_star: f64,
        margin: f64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = match *self {
            StepSchedule::Constant(a) => a > 0.0,
            StepSchedule::Diminishing(c) => c > 0.0,
            StepSchedule::Geometric { a0, q } => a0 > 0.0 && q > 0.0 && q < 1.0,
            StepSchedule::Polyak { f_star, margin } => f_star.is_finite() && margin >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidParameter(format!("{self:?}")))
        }
    }

    pub fn step(&self, k: usize, f: f64, s_norm_sq: f64) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::Diminishing(c) => c / ((k + 1) as f64).sqrt(),
            StepSchedule::Geometric { a0, q } => a0 * q.powi(k as i32),
            StepSchedule::Polyak { f_star, margin } => {
                (f - f_star + margin).max(0.0) / s_norm_sq.max(1e-300)
            }
        }
    }

    /// Parses `constant:α`, `diminishing:c`, `geometric:α₀,q`, `polyak:f*,margin`.
    pub fn parse(text: &str) -> Result<Self, SolverError> {
        let bad = || SolverError::InvalidParameter(format!("schedule `{text}`"));
        let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let s = match (kind, nums.as_slice()) {
            ("constant", [a]) => StepSchedule::Constant(*a),
            ("diminishing", [c]) => StepSchedule::Diminishing(*c),
            ("geometric", [a0, q]) => StepSchedule::Geometric { a0: *a0, q: *q },
            ("polyak", [f, m]) => StepSchedule::Polyak {
                f_star: *f,
                margin: *m,
            },
            _ => return Err(bad()),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Objective with one subgradient per point.
pub trait SubgradOracle {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Oracle from an expression: exact value, a.e. gradient with first-branch
/// ties and `Sign(0) = 0`.
pub struct ExprOracle {
    pub expr: Expr,
    pub dim: usize,
}

impl SubgradOracle for ExprOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        expr::eval(&self.expr, x).expect("dimension checked at construction")
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        expr::ae_gradient(&self.expr, x).expect("dimension checked at construction")
    }
}

impl ExprOracle {
    pub fn new(expr: Expr, dim: usize) -> Result<Self, SolverError> {
        expr.check_dim(dim)
            .map_err(|e| SolverError::Subdiff(e.into()))?;
        Ok(ExprOracle { expr, dim })
    }
}

/// Oracle from a pair of closures.
pub struct FnOracle<F, G> {
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<F: Fn(&[f64]) -> f64, G: Fn(&[f64]) -> Vec<f64>> SubgradOracle for FnOracle<F, G> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (self.g)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxIter,
    TargetReached,
    ZeroSubgradient,
    Certified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    /// Iterates kept every `keep_every` steps (the first and last always).
    pub iterates: Vec<(usize, Vec<f64>)>,
    /// Objective at every iterate, `x⁰` included.
    pub objective: Vec<f64>,
    pub best: Vec<f64>,
    pub steps: Vec<f64>,
    pub dist_ref: Vec<f64>,
    pub wall_ms: Vec<f64>,
    pub termination: Termination,
    pub seed: Option<u64>,
    pub final_x: Vec<f64>,
    pub best_x: Vec<f64>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective.last().unwrap_or(&f64::NAN)
    }

    pub fn best_objective(&self) -> f64 {
        *self.best.last().unwrap_or(&f64::NAN)
    }

    /// CSV with columns `iter,f,step,dist_ref,wall_ms`; the step of row `k`
    /// is the one that produced iterate `k` (empty for `k = 0`).
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iter,f,step,dist_ref,wall_ms")?;
        for k in 0..self.objective.len() {
            let step = if k == 0 {
                String::new()
            } else {
                format!("{:e}", self.steps[k - 1])
            };
            let dist = self
                .dist_ref
                .get(k)
                .map(|d| format!("{d:e}"))
                .unwrap_or_default();
            let wall = self
                .wall_ms
                .get(k)
                .map(|w| format!("{w:.3}"))
                .unwrap_or_default();
            writeln!(out, "{k},{:e},{step},{dist},{wall}", self.objective[k])?;
        }
        Ok(())
    }
}

pub struct SolverOptions<'a> {
    pub max_iter: usize,
    /// Stop once `f(xᵏ) ≤ target`.
    pub target: Option<f64>,
    pub keep_every: usize,
    pub distance: Option<&'a dyn Fn(&[f64]) -> f64>,
    pub seed: Option<u64>,
}

impl Default for SolverOptions<'_> {
    fn default() -> Self {
        SolverOptions {
            max_iter: 1000,
            target: None,
            keep_every: 1,
            distance: None,
            seed: None,
        }
    }
}

struct Recorder<'a> {
    trace: SolverTrace,
    start: Instant,
    opts: &'a SolverOptions<'a>,
}

impl<'a> Recorder<'a> {
    fn new(x0: &[f64], f0: f64, opts: &'a SolverOptions<'a>) -> Self {
        let mut r = Recorder {
            trace: SolverTrace {
                iterates: vec![(0, x0.to_vec())],
                objective: Vec::new(),
                best: Vec::new(),
                steps: Vec::new(),
                dist_ref: Vec::new(),
                wall_ms: Vec::new(),
                termination: Termination::MaxIter,
                seed: opts.seed,
                final_x: x0.to_vec(),
                best_x: x0.to_vec(),
            },
            start: Instant::now(),
            opts,
        };
        r.record(x0, f0, None);
        r
    }

    fn record(&mut self, x: &[f64], f: f64, step: Option<f64>) {
        let t = &mut self.trace;
        let k = t.objective.len();
        if let Some(s) = step {
            t.steps.push(s);
        }
        let prev_best = t.best.last().copied().unwrap_or(f64::INFINITY);
        if f < prev_best {
            t.best_x = x.to_vec();
        }
        t.objective.push(f);
        t.best.push(prev_best.min(f));
        if let Some(d) = self.opts.distance {
            t.dist_ref.push(d(x));
        }
        t.wall_ms.push(self.start.elapsed().as_secs_f64() * 1e3);
        if k > 0 && k % self.opts.keep_every.max(1) == 0 {
            t.iterates.push((k, x.to_vec()));
        }
        t.final_x = x.to_vec();
    }

    fn finish(mut self, why: Termination) -> SolverTrace {
        let k = self.trace.objective.len() - 1;
        if self.trace.iterates.last().map(|p| p.0) != Some(k) {
            self.trace.iterates.push((k, self.trace.final_x.clone()));
        }
        self.trace.termination = why;
        self.trace
    }
}

fn run(
    oracle: &dyn SubgradOracle,
    x0: &[f64],
    schedule: &StepSchedule,
    opts: &SolverOptions<'_>,
    project: &dyn Fn(&[f64]) -> Result<Vec<f64>, SolverError>,
) -> Result<SolverTrace, SolverError> {
    schedule.validate()?;
    if x0.len() != oracle.dim() {
        return Err(SolverError::InvalidParameter(format!(
            "start point has dimension {}, oracle expects {}",
            x0.len(),
            oracle.dim()
        )));
    }
    let mut x = project(x0)?;
    let mut f = oracle.value(&x);
    let mut rec = Recorder::new(&x, f, opts);
    if opts.target.is_some_and(|t| f <= t) {
        return Ok(rec.finish(Termination::TargetReached));
    }
    for k in 0..opts.max_iter {
        let s = oracle.subgradient(&x);
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if ss == 0.0 {
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let a = schedule.step(k, f, ss);
        let y: Vec<f64> = x.iter().zip(&s).map(|(xi, si)| xi - a * si).collect();
        x = project(&y)?;
        f = oracle.value(&x);
        rec.record(&x, f, Some(a));
        if opts.target.is_some_and(|t| f <= t) {
            return Ok(rec.finish(Termination::TargetReached));
        }
    }
    Ok(rec.finish(Termination::MaxIter))
}

/// `xᵏ⁺¹ = xᵏ − αₖ sᵏ`, recording best-so-far values.
pub fn subgradient_method(
    oracle: &dyn SubgradOracle,
    x0: &[f64],
    schedule: &StepSchedule,
    opts: &SolverOptions<'_>,
) -> Result<SolverTrace, SolverError> {
    run(oracle, x0, schedule, opts, &|y| Ok(y.to_vec()))
}

/// `xᵏ⁺¹ = Π_C(xᵏ − αₖ sᵏ)`.
pub fn projected_subgradient(
    oracle: &dyn SubgradOracle,
    set: &ConvexSetSpec,
    x0: &[f64],
    schedule: &StepSchedule,
    opts: &SolverOptions<'_>,
) -> Result<SolverTrace, SolverError> {
    if set.dim() != oracle.dim() {
        return Err(SolverError::InvalidParameter(
            "set and oracle dimensions differ".into(),
        ));
    }
    run(oracle, x0, schedule, opts, &|y| {
        set.project(y).map_err(SolverError::Projection)
    })
}
