//! Robust recovery problems with explicit subgradient formulas.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::rng;
use crate::solvers::SubgradOracle;

/// `Sign` with `Sign(0) = 0`.
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustKind {
    MatrixRecovery,
    SignRetrieval,
    AmplitudeRetrieval,
    BlindDeconv,
    LogSumLs,
}

impl std::str::FromStr for RobustKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "matrix-recovery" => RobustKind::MatrixRecovery,
            "sign-retrieval" => RobustKind::SignRetrieval,
            "amplitude-retrieval" => RobustKind::AmplitudeRetrieval,
            "blind-deconv" => RobustKind::BlindDeconv,
            "log-sum-ls" => RobustKind::LogSumLs,
            _ => {
                return Err(ExperimentError::Config(format!(
                    "unknown problem kind `{s}`"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RobustProblem {
    /// `(1/m) ‖y − 𝒜(UUᵀ)‖₁`, `U` stored row-major `n × r`.
    MatrixRecovery {
        n: usize,
        r: usize,
        a: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
    /// `(1/m) Σ |(aᵢᵀx)² − bᵢ|`.
    SignRetrieval { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `(1/m) Σ ||aᵢᵀx| − bᵢ|`.
    AmplitudeRetrieval { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `(1/m) Σ |(aᵢᵀw)(cᵢᵀx) − bᵢ|` over `z = (w, x)`.
    BlindDeconv {
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// `(1/2m) Σ (bᵢ − aᵢᵀx)² + λ Σ log(|xⱼ| + θ)`.
    LogSumLs {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        lambda: f64,
        theta: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustInstance {
    pub problem: RobustProblem,
    pub planted: Vec<f64>,
    pub outliers: Vec<bool>,
    pub seed: u64,
}

impl RobustProblem {
    pub fn kind(&self) -> RobustKind {
        match self {
            RobustProblem::MatrixRecovery { .. } => RobustKind::MatrixRecovery,
            RobustProblem::SignRetrieval { .. } => RobustKind::SignRetrieval,
            RobustProblem::AmplitudeRetrieval { .. } => RobustKind::AmplitudeRetrieval,
            RobustProblem::BlindDeconv { .. } => RobustKind::BlindDeconv,
            RobustProblem::LogSumLs { .. } => RobustKind::LogSumLs,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RobustProblem::MatrixRecovery { n, r, .. } => n * r,
            RobustProblem::SignRetrieval { a, .. }
            | RobustProblem::AmplitudeRetrieval { a, .. }
            | RobustProblem::LogSumLs { a, .. } => a[0].len(),
            RobustProblem::BlindDeconv { a, c, .. } => a[0].len() + c[0].len(),
        }
    }

    pub fn measurements(&self) -> usize {
        match self {
            RobustProblem::MatrixRecovery { y, .. } => y.len(),
            RobustProblem::SignRetrieval { b, .. }
            | RobustProblem::AmplitudeRetrieval { b, .. }
            | RobustProblem::BlindDeconv { b, .. }
            | RobustProblem::LogSumLs { b, .. } => b.len(),
        }
    }

    fn check(&self, z: &[f64]) -> Result<(), ExperimentError> {
        if z.len() == self.dim() {
            Ok(())
        } else {
            Err(ExperimentError::Dimension {
                expected: self.dim(),
                got: z.len(),
            })
        }
    }

    /// `𝒜(UUᵀ)ᵢ = ⟨Aᵢ, UUᵀ⟩`.
    fn sense(n: usize, r: usize, ai: &[f64], u: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                let x: f64 = (0..r).map(|t| u[p * r + t] * u[q * r + t]).sum();
                s += ai[p * n + q] * x;
            }
        }
        s
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64, ExperimentError> {
        self.check(z)?;
        let m = self.measurements() as f64;
        Ok(match self {
            RobustProblem::MatrixRecovery { n, r, a, y } => {
                a.iter()
                    .zip(y)
                    .map(|(ai, yi)| (yi - Self::sense(*n, *r, ai, z)).abs())
                    .sum::<f64>()
                    / m
            }
            RobustProblem::SignRetrieval { a, b } => {
                a.iter()
                    .zip(b)
                    .map(|(ai, bi)| (dot(ai, z).powi(2) - bi).abs())
                    .sum::<f64>()
                    / m
            }
            RobustProblem::AmplitudeRetrieval { a, b } => {
                a.iter()
                    .zip(b)
                    .map(|(ai, bi)| (dot(ai, z).abs() - bi).abs())
                    .sum::<f64>()
                    / m
            }
            RobustProblem::BlindDeconv { a, c, b } => {
                let (w, x) = z.split_at(a[0].len());
                a.iter()
                    .zip(c)
                    .zip(b)
                    .map(|((ai, ci), bi)| (dot(ai, w) * dot(ci, x) - bi).abs())
                    .sum::<f64>()
                    / m
            }
            RobustProblem::LogSumLs {
                a,
                b,
                lambda,
                theta,
            } => {
                let ls = a
                    .iter()
                    .zip(b)
                    .map(|(ai, bi)| (bi - dot(ai, z)).powi(2))
                    .sum::<f64>()
                    / (2.0 * m);
                ls + lambda * z.iter().map(|v| (v.abs() + theta).ln()).sum::<f64>()
            }
        })
    }

    /// One element of the Clarke subdifferential from the chain rule, with
    /// `Sign(0) = 0`.
    pub fn subgradient(&self, z: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        self.check(z)?;
        let m = self.measurements() as f64;
        let mut g = vec![0.0; z.len()];
        match self {
            RobustProblem::MatrixRecovery { n, r, a, y } => {
                let (n, r) = (*n, *r);
                // S = Σ sᵢ Aᵢ, gradient (Sᵀ + S) U / m
                let mut s = vec![0.0; n * n];
                for (ai, yi) in a.iter().zip(y) {
                    let si = sign0(Self::sense(n, r, ai, z) - yi);
                    if si != 0.0 {
                        axpy(&mut s, si, ai);
                    }
                }
                for p in 0..n {
                    for t in 0..r {
                        g[p * r + t] = (0..n)
                            .map(|q| (s[q * n + p] + s[p * n + q]) * z[q * r + t])
                            .sum::<f64>()
                            / m;
                    }
                }
            }
            RobustProblem::SignRetrieval { a, b } => {
                for (ai, bi) in a.iter().zip(b) {
                    let v = dot(ai, z);
                    axpy(&mut g, 2.0 * v * sign0(v * v - bi) / m, ai);
                }
            }
            RobustProblem::AmplitudeRetrieval { a, b } => {
                for (ai, bi) in a.iter().zip(b) {
                    let v = dot(ai, z);
                    axpy(&mut g, sign0(v.abs() - bi) * sign0(v) / m, ai);
                }
            }
            RobustProblem::BlindDeconv { a, c, b } => {
                let n1 = a[0].len();
                let (w, x) = z.split_at(n1);
                for ((ai, ci), bi) in a.iter().zip(c).zip(b) {
                    let (u, v) = (dot(ai, w), dot(ci, x));
                    let s = sign0(u * v - bi) / m;
                    axpy(&mut g[..n1], s * v, ai);
                    axpy(&mut g[n1..], s * u, ci);
                }
            }
            RobustProblem::LogSumLs {
                a,
                b,
                lambda,
                theta,
            } => {
                for (ai, bi) in a.iter().zip(b) {
                    axpy(&mut g, (dot(ai, z) - bi) / m, ai);
                }
                for (gj, zj) in g.iter_mut().zip(z) {
                    *gj += lambda * sign0(*zj) / (zj.abs() + theta);
                }
            }
        }
        Ok(g)
    }
}

impl RobustInstance {
    /// Distance to the planted signal modulo the symmetry of the problem:
    /// `±x` for retrieval, orthogonal `U ↦ UR` for matrix recovery, and
    /// `(w, x) ↦ (tw, x/t)` for blind deconvolution (both pairs rescaled to
    /// equal block norms, then compared up to a common sign).
    pub fn orbit_distance(&self, z: &[f64]) -> f64 {
        let p = &self.planted;
        let plain = |q: &[f64]| {
            q.iter()
                .zip(z)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let flip = |q: &[f64]| {
            q.iter()
                .zip(z)
                .map(|(a, b)| (a + b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        match &self.problem {
            RobustProblem::SignRetrieval { .. } | RobustProblem::AmplitudeRetrieval { .. } => {
                plain(p).min(flip(p))
            }
            RobustProblem::LogSumLs { .. } => plain(p),
            RobustProblem::MatrixRecovery { n, r, .. } => {
                let u = DMatrix::from_row_slice(*n, *r, z);
                let us = DMatrix::from_row_slice(*n, *r, p);
                let svd = (us.transpose() * &u).svd(true, true);
                let (Some(lu), Some(vt)) = (svd.u, svd.v_t) else {
                    return f64::NAN;
                };
                // argmin_R ‖U − U*R‖ over orthogonal R
                (u - us * (lu * vt)).norm()
            }
            RobustProblem::BlindDeconv { a, .. } => {
                let n1 = a[0].len();
                let balance = |v: &[f64]| -> Vec<f64> {
                    let (w, x) = v.split_at(n1);
                    let (nw, nx) = (norm(w), norm(x));
                    if nw == 0.0 || nx == 0.0 {
                        return v.to_vec();
                    }
                    let t = (nx / nw).sqrt();
                    w.iter()
                        .map(|e| e * t)
                        .chain(x.iter().map(|e| e / t))
                        .collect()
                };
                let (zb, pb) = (balance(z), balance(p));
                let d = |s: f64| {
                    zb.iter()
                        .zip(&pb)
                        .map(|(a, b)| (a - s * b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                d(1.0).min(d(-1.0))
            }
        }
    }
}

impl SubgradOracle for RobustInstance {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.problem
            .objective(x)
            .expect("dimension checked by the solver")
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.problem
            .subgradient(x)
            .expect("dimension checked by the solver")
    }
}

/// Instance parameters. For matrix recovery `n` is the side length and `r`
/// the rank; for blind deconvolution both blocks have length `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustSpec {
    pub kind: RobustKind,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub outlier_frac: f64,
    pub outlier_scale: f64,
    pub lambda: f64,
    pub theta: f64,
    pub seed: u64,
}

impl RobustSpec {
    pub fn new(kind: RobustKind, n: usize, m: usize, outlier_frac: f64, seed: u64) -> Self {
        RobustSpec {
            kind,
            n,
            m,
            r: 1,
            outlier_frac,
            outlier_scale: 10.0,
            lambda: 0.01,
            theta: 1.0,
            seed,
        }
    }
}

/// Gaussian measurement vectors with entries `N(0, 1/n)`, a standard
/// Gaussian planted signal, and exactly `round(frac·m)` outliers whose
/// values are shifted by `outlier_scale · N(0, 1)`.
pub fn gen_robust_instance(spec: &RobustSpec) -> Result<RobustInstance, ExperimentError> {
    let RobustSpec { kind, n, m, r, .. } = *spec;
    if n == 0 || m == 0 || r == 0 {
        return Err(ExperimentError::Config(
            "n, m and r must be positive".into(),
        ));
    }
    if !(0.0..=0.5).contains(&spec.outlier_frac) {
        return Err(ExperimentError::Config(
            "outlier_frac must lie in [0, 0.5]".into(),
        ));
    }
    let retrieval = matches!(
        kind,
        RobustKind::SignRetrieval | RobustKind::AmplitudeRetrieval
    );
    if retrieval && m < 4 * n {
        return Err(ExperimentError::Config(format!(
            "retrieval needs m ≥ 4n, got m = {m}, n = {n}"
        )));
    }
    let mut rg = rng::stream(spec.seed, 0);
    let mut gauss = |len: usize, scale: f64| -> Vec<f64> {
        (0..len)
            .map(|_| {
                let s: f64 = StandardNormal.sample(&mut rg);
                scale * s
            })
            .collect::<Vec<f64>>()
    };
    let vecs = |g: &mut dyn FnMut(usize, f64) -> Vec<f64>, len: usize| -> Vec<Vec<f64>> {
        (0..m).map(|_| g(len, 1.0 / (len as f64).sqrt())).collect()
    };
    let (problem, planted) = match kind {
        RobustKind::MatrixRecovery => {
            let u = gauss(n * r, 1.0);
            let a = vecs(&mut gauss, n * n);
            let y = a
                .iter()
                .map(|ai| RobustProblem::sense(n, r, ai, &u))
                .collect();
            (RobustProblem::MatrixRecovery { n, r, a, y }, u)
        }
        RobustKind::SignRetrieval | RobustKind::AmplitudeRetrieval => {
            let x = gauss(n, 1.0);
            let a = vecs(&mut gauss, n);
            if kind == RobustKind::SignRetrieval {
                let b = a.iter().map(|ai| dot(ai, &x).powi(2)).collect();
                (RobustProblem::SignRetrieval { a, b }, x)
            } else {
                let b = a.iter().map(|ai| dot(ai, &x).abs()).collect();
                (RobustProblem::AmplitudeRetrieval { a, b }, x)
            }
        }
        RobustKind::BlindDeconv => {
            let w = gauss(n, 1.0);
            let x = gauss(n, 1.0);
            let a = vecs(&mut gauss, n);
            let c = vecs(&mut gauss, n);
            let b = a
                .iter()
                .zip(&c)
                .map(|(ai, ci)| dot(ai, &w) * dot(ci, &x))
                .collect();
            (
                RobustProblem::BlindDeconv { a, c, b },
                w.into_iter().chain(x).collect(),
            )
        }
        RobustKind::LogSumLs => {
            let x = gauss(n, 1.0);
            let a = vecs(&mut gauss, n);
            let b = a.iter().map(|ai| dot(ai, &x)).collect();
            let problem = RobustProblem::LogSumLs {
                a,
                b,
                lambda: spec.lambda,
                theta: spec.theta,
            };
            (problem, x)
        }
    };
    let k = (spec.outlier_frac * m as f64).round() as usize;
    let mut idx: Vec<usize> = (0..m).collect();
    let mut ro = rng::stream(spec.seed, 1);
    idx.shuffle(&mut ro);
    let mut outliers = vec![false; m];
    let mut problem = problem;
    {
        let values = match &mut problem {
            RobustProblem::MatrixRecovery { y, .. } => y,
            RobustProblem::SignRetrieval { b, .. }
            | RobustProblem::AmplitudeRetrieval { b, .. }
            | RobustProblem::BlindDeconv { b, .. }
            | RobustProblem::LogSumLs { b, .. } => b,
        };
        for &i in &idx[..k] {
            outliers[i] = true;
            let s: f64 = StandardNormal.sample(&mut ro);
            values[i] += spec.outlier_scale * s;
        }
    }
    Ok(RobustInstance {
        problem,
        planted,
        outliers,
        seed: spec.seed,
    })
}

/// `robust_subgrad_oracle(inst, z)` as a free function.
pub fn robust_subgrad_oracle(
    inst: &RobustInstance,
    z: &[f64],
) -> Result<Vec<f64>, ExperimentError> {
    inst.problem.subgradient(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(p: &RobustProblem, z: &[f64], d: &[f64]) -> f64 {
        let h = 1e-7;
        let zp: Vec<f64> = z.iter().zip(d).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(d).map(|(a, b)| a - h * b).collect();
        (p.objective(&zp).unwrap() - p.objective(&zm).unwrap()) / (2.0 * h)
    }

    #[test]
    fn sign_retrieval_scalar() {
        let p = RobustProblem::SignRetrieval {
            a: vec![vec![1.0]],
            b: vec![1.0],
        };
        assert_eq!(p.subgradient(&[2.0]).unwrap(), vec![4.0]);
        assert!((fd(&p, &[2.0], &[1.0]) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn blind_deconv_scalar() {
        let p = RobustProblem::BlindDeconv {
            a: vec![vec![1.0]],
            c: vec![vec![1.0]],
            b: vec![0.0],
        };
        assert_eq!(p.subgradient(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_residual_gives_zero() {
        let inst = gen_robust_instance(&RobustSpec::new(RobustKind::MatrixRecovery, 3, 20, 0.0, 4))
            .unwrap();
        let g = inst.problem.subgradient(&inst.planted).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(inst.orbit_distance(&inst.planted) < 1e-12);
        let neg: Vec<f64> = inst.planted.iter().map(|v| -v).collect();
        assert!(inst.orbit_distance(&neg) < 1e-12);
    }

    #[test]
    fn oracle_matches_finite_differences() {
        for kind in [
            RobustKind::MatrixRecovery,
            RobustKind::SignRetrieval,
            RobustKind::AmplitudeRetrieval,
            RobustKind::BlindDeconv,
            RobustKind::LogSumLs,
        ] {
            let inst = gen_robust_instance(&RobustSpec::new(kind, 3, 16, 0.1, 9)).unwrap();
            let mut r = rng::stream(9, 7);
            for _ in 0..10 {
                let z: Vec<f64> = (0..inst.problem.dim())
                    .map(|_| StandardNormal.sample(&mut r))
                    .collect();
                let d: Vec<f64> = (0..z.len())
                    .map(|_| StandardNormal.sample(&mut r))
                    .collect();
                let g = inst.problem.subgradient(&z).unwrap();
                assert!(
                    (fd(&inst.problem, &z, &d) - dot(&g, &d)).abs() < 1e-5,
                    "{kind:?}"
                );
            }
        }
    }

    #[test]
    fn outlier_count_and_dimension_errors() {
        let inst = gen_robust_instance(&RobustSpec::new(RobustKind::SignRetrieval, 10, 80, 0.1, 1))
            .unwrap();
        assert_eq!(inst.outliers.iter().filter(|&&o| o).count(), 8);
        assert!(inst.problem.subgradient(&[0.0; 3]).is_err());
        assert!(
            gen_robust_instance(&RobustSpec::new(RobustKind::SignRetrieval, 10, 20, 0.0, 1))
                .is_err()
        );
    }

    #[test]
    fn blind_deconv_orbit_ignores_scaling() {
        let inst =
            gen_robust_instance(&RobustSpec::new(RobustKind::BlindDeconv, 3, 12, 0.0, 2)).unwrap();
        let (w, x) = inst.planted.split_at(3);
        let z: Vec<f64> = w
            .iter()
            .map(|v| 2.5 * v)
            .chain(x.iter().map(|v| v / 2.5))
            .collect();
        assert!(inst.orbit_distance(&z) < 1e-12);
    }
}
