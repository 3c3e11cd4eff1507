//! Sampling oracles for functions outside the exact fragments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    DerivExactness, DirDerivKind, DirDerivValue, Exactness, SampleInfo, SubdiffKind, SubdiffSet,
};
use crate::polyhedra::{conv_hull, set_distance, GeomError, SetUnion, VPolytope};
use crate::rng;

/// Step sequence for difference quotients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSchedule {
    pub steps: Vec<f64>,
    /// Number of trailing quotients checked for convergence.
    pub window: usize,
    pub tol: f64,
}

impl Default for FdSchedule {
    fn default() -> Self {
        FdSchedule {
            steps: (8..=40).map(|k| (-(k as f64)).exp2()).collect(),
            window: 5,
            tol: 1e-6,
        }
    }
}

/// Difference quotients `(f(x + t d) − f(x)) / t` along the schedule.
///
/// The estimate is the last quotient. It is flagged non-convergent when the
/// last `window` quotients spread by more than `tol` plus the rounding floor
/// `4ε(|f(x)| + |f(x+td)|)/t`.
pub fn fd_dir_deriv(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    d: &[f64],
    schedule: &FdSchedule,
) -> DirDerivValue {
    let fx = f(x);
    let mut trace = Vec::with_capacity(schedule.steps.len());
    let mut floor: f64 = 0.0;
    for &t in &schedule.steps {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let fy = f(&y);
        trace.push((fy - fx) / t);
        floor = 4.0 * f64::EPSILON * (fx.abs() + fy.abs()) / t;
    }
    let spread = |v: &[f64]| {
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let w = schedule.window.min(trace.len()).max(1);
    let oscillation = spread(&trace[trace.len() - w..]);
    let amplitude = spread(&trace);
    let value = *trace.last().unwrap_or(&f64::NAN);
    DirDerivValue {
        value,
        kind: DirDerivKind::Ordinary,
        exactness: DerivExactness::Sampled(SampleInfo {
            converged: oscillation <= schedule.tol + floor,
            oscillation,
            amplitude,
            trace,
        }),
    }
}

/// Radius ladder `r_k = r₀·2⁻ᵏ` with a fixed number of samples per rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub r0: f64,
    pub rungs: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            r0: 1e-2,
            rungs: 5,
            samples: 200,
            seed: rng::DEFAULT_SEED,
        }
    }
}

impl SamplingParams {
    pub fn radius(&self, k: usize) -> f64 {
        self.r0 * (-(k as f64)).exp2()
    }
}

fn ball_point(rng: &mut impl Rng, x: &[f64], r: f64) -> Vec<f64> {
    let n = x.len();
    let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let rad = r * rng.random::<f64>().powf(1.0 / n as f64);
    x.iter().zip(&g).map(|(a, b)| a + rad * b / ng).collect()
}

/// Sampled `limsup` of difference quotients over base points within the
/// radius and steps `t ≤ radius` (log-uniform over nine decades).
pub fn sampled_clarke_dd(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    d: &[f64],
    params: &SamplingParams,
) -> DirDerivValue {
    let mut trace = Vec::with_capacity(params.rungs);
    for k in 0..params.rungs {
        let r = params.radius(k);
        let mut rng = rng::stream(params.seed, k as u64);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..params.samples {
            let xp = ball_point(&mut rng, x, r);
            let t = r * 10f64.powf(-9.0 * rng.random::<f64>());
            let y: Vec<f64> = xp.iter().zip(d).map(|(a, b)| a + t * b).collect();
            best = best.max((f(&y) - f(&xp)) / t);
        }
        trace.push(best);
    }
    let value = *trace.last().unwrap_or(&f64::NAN);
    let oscillation = if trace.len() >= 2 {
        (trace[trace.len() - 1] - trace[trace.len() - 2]).abs()
    } else {
        0.0
    };
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    DirDerivValue {
        value,
        kind: DirDerivKind::Clarke,
        exactness: DerivExactness::Sampled(SampleInfo {
            converged: oscillation <= 0.05 * (1.0 + value.abs()),
            oscillation,
            amplitude: hi - lo,
            trace,
        }),
    }
}

/// Result of [`gradient_sampling`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    /// Hull of the final rung's gradients.
    pub set: SubdiffSet,
    pub rung_hulls: Vec<VPolytope>,
    /// Hausdorff distance between consecutive rung hulls.
    pub trace: Vec<f64>,
}

/// Convex hulls of gradients sampled at random points of shrinking balls.
pub fn gradient_sampling(
    g: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    params: &SamplingParams,
) -> Result<GradientSample, GeomError> {
    let n = x.len();
    let mut hulls = Vec::with_capacity(params.rungs);
    for k in 0..params.rungs {
        let r = params.radius(k);
        let mut rng = rng::stream(params.seed, k as u64);
        let pts: Vec<Vec<f64>> = (0..params.samples)
            .map(|_| g(&ball_point(&mut rng, x, r)))
            .collect();
        hulls.push(conv_hull(&pts, n)?);
    }
    let mut trace = Vec::new();
    for w in hulls.windows(2) {
        trace.push(set_distance(
            &SetUnion::single(w[0].clone()),
            &SetUnion::single(w[1].clone()),
        )?);
    }
    let last = hulls.last().cloned().unwrap_or_else(|| VPolytope::empty(n));
    Ok(GradientSample {
        set: SubdiffSet {
            kind: SubdiffKind::Clarke,
            at: x.to_vec(),
            exactness: Exactness::Sampled {
                tolerance: trace.last().copied().unwrap_or(f64::NAN),
            },
            set: SetUnion::single(last),
        },
        rung_hulls: hulls,
        trace,
    })
}
