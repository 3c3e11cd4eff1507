use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::robust::{gen_robust_instance, RobustInstance, RobustKind, RobustSpec};
use super::{io_err, ExperimentError, KeyValues};
use crate::rng;
use crate::solvers::{subgradient_method, SolverOptions, SolverTrace, StepSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub spec: RobustSpec,
    pub schedule: StepSchedule,
    pub iters: usize,
    /// `x⁰ = x* + init_noise · g` with `g` standard Gaussian.
    pub init_noise: f64,
}

impl RecoveryConfig {
    pub fn sign_retrieval_desk(seed: u64) -> Self {
        RecoveryConfig {
            spec: RobustSpec::new(RobustKind::SignRetrieval, 10, 80, 0.1, seed),
            schedule: StepSchedule::Geometric { a0: 0.1, q: 0.98 },
            iters: 2000,
            init_noise: 0.1,
        }
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, ExperimentError> {
        kv.check_keys(&[
            "kind",
            "n",
            "m",
            "r",
            "outlier_frac",
            "outlier_scale",
            "lambda",
            "theta",
            "seed",
            "schedule",
            "iters",
            "init_noise",
            "out_dir",
        ])?;
        let mut c = Self::sign_retrieval_desk(0);
        if let Some(k) = kv.get_str("kind") {
            c.spec.kind = k.parse()?;
        }
        macro_rules! take {
            ($($key:literal => $field:expr),*) => {
                $(if let Some(v) = kv.get($key)? { $field = v; })*
            };
        }
        take!(
            "n" => c.spec.n,
            "m" => c.spec.m,
            "r" => c.spec.r,
            "outlier_frac" => c.spec.outlier_frac,
            "outlier_scale" => c.spec.outlier_scale,
            "lambda" => c.spec.lambda,
            "theta" => c.spec.theta,
            "seed" => c.spec.seed,
            "iters" => c.iters,
            "init_noise" => c.init_noise
        );
        if let Some(s) = kv.get_str("schedule") {
            c.schedule = StepSchedule::parse(s)?;
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub kind: RobustKind,
    pub initial_dist: f64,
    pub final_dist: f64,
    pub best_dist: f64,
    /// Least-squares slope of `ln(best-so-far distance)` per iteration.
    pub slope: f64,
    pub r2: f64,
    pub trace: SolverTrace,
}

/// Slope and `R²` of the least-squares line through `(k, ln vₖ)`; values are
/// floored at the smallest positive normal float.
pub fn fit_log_slope(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return (0.0, 1.0);
    }
    let ys: Vec<f64> = values
        .iter()
        .map(|v| v.max(f64::MIN_POSITIVE).ln())
        .collect();
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, r2)
}

pub fn initial_point(inst: &RobustInstance, noise: f64) -> Vec<f64> {
    let mut r = rng::stream(inst.seed, 2);
    inst.planted
        .iter()
        .map(|v| {
            let g: f64 = StandardNormal.sample(&mut r);
            v + noise * g
        })
        .collect()
}

/// Subgradient method from a perturbed planted signal, tracking the orbit
/// distance at every iterate.
pub fn run_recovery_experiment(
    cfg: &RecoveryConfig,
    out_dir: Option<&Path>,
) -> Result<RecoverySummary, ExperimentError> {
    let inst = gen_robust_instance(&cfg.spec)?;
    let x0 = initial_point(&inst, cfg.init_noise);
    let dist = |z: &[f64]| inst.orbit_distance(z);
    let opts = SolverOptions {
        max_iter: cfg.iters,
        keep_every: cfg.iters.max(1),
        distance: Some(&dist),
        seed: Some(cfg.spec.seed),
        ..Default::default()
    };
    let trace = subgradient_method(&inst, &x0, &cfg.schedule, &opts)?;
    let mut best = f64::INFINITY;
    let best_so_far: Vec<f64> = trace
        .dist_ref
        .iter()
        .map(|&d| {
            best = best.min(d);
            best
        })
        .collect();
    let (slope, r2) = fit_log_slope(&best_so_far);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("trace.csv");
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        trace
            .write_csv(std::io::BufWriter::new(file))
            .map_err(io_err(&path))?;
    }
    Ok(RecoverySummary {
        kind: cfg.spec.kind,
        initial_dist: trace.dist_ref[0],
        final_dist: *trace.dist_ref.last().unwrap(),
        best_dist: best,
        slope,
        r2,
        trace,
    })
}
