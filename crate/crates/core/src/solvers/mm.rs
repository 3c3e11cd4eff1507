use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SolverError, SolverTrace, Termination};
use crate::lspar::{dot, flatten, max_affine, LsparDataset, Weights};
use crate::stationarity::{lspar_d_stationarity_check, LsparCertificate, LSPAR_TOL};

/// Minimizer of `(1/2N)‖y − Xw‖² + (c/2)‖w − anchor‖²` over `w`, where `N`
/// is the number of rows of `X`. With no rows the anchor is returned.
pub fn ridge_ls_solve(xs: &[Vec<f64>], y: &[f64], c: f64, anchor: &[f64]) -> Vec<f64> {
    let n = anchor.len();
    if xs.is_empty() {
        return anchor.to_vec();
    }
    let m = xs.len() as f64;
    let mut a = DMatrix::<f64>::identity(n, n) * c;
    let mut b = DVector::from_column_slice(anchor) * c;
    for (x, yi) in xs.iter().zip(y) {
        for i in 0..n {
            b[i] += yi * x[i] / m;
            for j in 0..n {
                a[(i, j)] += x[i] * x[j] / m;
            }
        }
    }
    let sol = a
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&b))
        .unwrap_or_else(|| a.lu().solve(&b).expect("c > 0 makes the system definite"));
    sol.iter().copied().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmParams {
    /// Initial activity tolerance; `None` means `0.1·mean|y|`.
    pub eps0: Option<f64>,
    pub c0: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub eta: f64,
    pub shrink: f64,
    pub max_outer: usize,
    pub selection_cap: usize,
    /// Accepted steps shorter than this trigger the stationarity test.
    pub step_tol: f64,
    pub cert_tol: f64,
}

impl Default for MmParams {
    fn default() -> Self {
        MmParams {
            eps0: None,
            c0: 1.0,
            c_min: 1e-6,
            c_max: 1e8,
            eta: 1e-4,
            shrink: 0.5,
            max_outer: 500,
            selection_cap: 256,
            step_tol: 1e-6,
            cert_tol: LSPAR_TOL,
        }
    }
}

/// One outer iteration, enough to re-verify the acceptance test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmStep {
    pub outer: usize,
    pub eps: f64,
    pub c: f64,
    pub candidates: usize,
    pub f_before: f64,
    pub f_candidate: f64,
    pub step_sq: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmResult {
    pub w: Weights,
    pub trace: SolverTrace,
    pub certificate: LsparCertificate,
    pub steps: Vec<MmStep>,
    pub eta: f64,
}

impl MmResult {
    pub fn certified(&self) -> bool {
        self.trace.termination == Termination::Certified
    }
}

/// Per sample, the `ε`-active pieces sorted by margin deficit `g_s − w_iᵀx_s`.
fn eps_active(data: &LsparDataset, w: &Weights, eps: f64) -> Vec<Vec<(usize, f64)>> {
    data.xs
        .iter()
        .map(|x| {
            let g = max_affine(w, x).0;
            let mut act: Vec<(usize, f64)> = w
                .iter()
                .enumerate()
                .map(|(i, wi)| (i, g - dot(wi, x)))
                .filter(|&(_, d)| d <= eps)
                .collect();
            act.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            act
        })
        .collect()
}

/// Up to `cap` selections, cheapest total deficit first.
fn enumerate_selections(active: &[Vec<(usize, f64)>], cap: usize) -> Vec<Vec<usize>> {
    let amb: Vec<usize> = (0..active.len()).filter(|&s| active[s].len() > 1).collect();
    let base: Vec<usize> = active.iter().map(|a| a[0].0).collect();
    let cost = |ch: &[usize]| -> f64 { amb.iter().zip(ch).map(|(&s, &c)| active[s][c].1).sum() };
    let key = |v: f64| Reverse(v.to_bits());
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = vec![0usize; amb.len()];
    heap.push((key(0.0), start.clone()));
    seen.insert(start);
    let mut out = Vec::new();
    while let Some((_, ch)) = heap.pop() {
        let mut sel = base.clone();
        for (&s, &c) in amb.iter().zip(&ch) {
            sel[s] = active[s][c].0;
        }
        out.push(sel);
        if out.len() >= cap {
            break;
        }
        for p in 0..ch.len() {
            if ch[p] + 1 < active[amb[p]].len() {
                let mut next = ch.clone();
                next[p] += 1;
                if seen.insert(next.clone()) {
                    heap.push((key(cost(&next)), next));
                }
            }
        }
    }
    out
}

/// Minimizer of the surrogate for a fixed selection, one ridge solve per piece.
fn surrogate_step(data: &LsparDataset, w: &Weights, sel: &[usize], c: f64) -> Weights {
    let nn = data.len() as f64;
    (0..w.len())
        .map(|i| {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = sel
                .iter()
                .zip(data.xs.iter().zip(&data.ys))
                .filter(|(&s, _)| s == i)
                .map(|(_, (x, y))| (x.clone(), *y))
                .unzip();
            if xs.is_empty() {
                return w[i].clone();
            }
            ridge_ls_solve(&xs, &ys, c * nn / xs.len() as f64, &w[i])
        })
        .collect()
}

fn dist_sq(a: &Weights, b: &Weights) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Non-monotone MM for `f(W) = 1/(2N) Σ (y_s − max_i w_iᵀx_s)²`.
///
/// Each outer step minimizes the selection surrogate plus `(c/2)‖W − Wᵏ‖²`
/// over the cheapest `ε`-active selections and keeps the candidate with the
/// smallest true objective if it decreases `f` by `η‖Ŵ − Wᵏ‖²`. Otherwise
/// the exact d-stationarity test runs; failing it shrinks `ε` and raises `c`.
pub fn mm_lspar(
    data: &LsparDataset,
    w0: &Weights,
    params: &MmParams,
    seed: Option<u64>,
) -> Result<MmResult, SolverError> {
    let k = w0.len();
    let n = data.dim();
    if data.is_empty() || k == 0 || w0.iter().any(|w| w.len() != n) {
        return Err(SolverError::InvalidParameter(
            "weights do not match the dataset".into(),
        ));
    }
    if k * n > 16 {
        return Err(SolverError::InvalidParameter(format!(
            "k·n = {} exceeds 16",
            k * n
        )));
    }
    if !(params.shrink > 0.0 && params.shrink < 1.0 && params.c0 > 0.0 && params.eta > 0.0) {
        return Err(SolverError::InvalidParameter(format!("{params:?}")));
    }
    let start = Instant::now();
    let mean_abs_y = data.ys.iter().map(|y| y.abs()).sum::<f64>() / data.len() as f64;
    let mut eps = params.eps0.unwrap_or(0.1 * mean_abs_y);
    let mut c = params.c0;
    let mut w = w0.clone();
    let mut f = data.objective(&w);
    let mut trace = SolverTrace {
        iterates: vec![(0, flatten(&w))],
        objective: vec![f],
        best: vec![f],
        steps: Vec::new(),
        dist_ref: Vec::new(),
        wall_ms: vec![0.0],
        termination: Termination::MaxIter,
        seed,
        final_x: flatten(&w),
        best_x: flatten(&w),
    };
    let mut steps = Vec::new();
    for outer in 0..params.max_outer {
        let active = eps_active(data, &w, eps);
        let sels = enumerate_selections(&active, params.selection_cap.max(1));
        let (cand, fc) = sels
            .iter()
            .map(|sel| {
                let wn = surrogate_step(data, &w, sel, c);
                let fv = data.objective(&wn);
                (wn, fv)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one selection");
        let step_sq = dist_sq(&cand, &w);
        let accepted = step_sq > 0.0 && f - fc >= params.eta * step_sq;
        steps.push(MmStep {
            outer,
            eps,
            c,
            candidates: sels.len(),
            f_before: f,
            f_candidate: fc,
            step_sq,
            accepted,
        });
        let mut run_check = !accepted;
        if accepted {
            w = cand;
            f = fc;
            let it = trace.objective.len();
            trace.objective.push(f);
            trace.best.push(f.min(*trace.best.last().unwrap()));
            trace.steps.push(step_sq.sqrt());
            trace.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
            trace.iterates.push((it, flatten(&w)));
            c = (c * params.shrink).max(params.c_min);
            run_check = step_sq.sqrt() <= params.step_tol;
        }
        if run_check {
            let cert = lspar_d_stationarity_check(data, &w, params.cert_tol)?;
            if cert.stationary {
                trace.termination = Termination::Certified;
                return Ok(finish(w, trace, cert, steps, params.eta));
            }
            if !accepted {
                eps *= params.shrink;
                c = (c / params.shrink).min(params.c_max);
            }
        }
    }
    let cert = lspar_d_stationarity_check(data, &w, params.cert_tol)?;
    Ok(finish(w, trace, cert, steps, params.eta))
}

fn finish(
    w: Weights,
    mut trace: SolverTrace,
    certificate: LsparCertificate,
    steps: Vec<MmStep>,
    eta: f64,
) -> MmResult {
    trace.final_x = flatten(&w);
    trace.best_x = trace.final_x.clone();
    MmResult {
        w,
        trace,
        certificate,
        steps,
        eta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lspar::{gen_lspar_data, planted_model};
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ridge_limits() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = ridge_ls_solve(&x, &[1.0, 1.0], 1e-9, &[0.0, 0.0]);
        assert!((w[0] - 1.0).abs() < 1e-6 && (w[1] - 1.0).abs() < 1e-6);
        let z = vec![vec![0.0, 0.0]; 3];
        assert_eq!(
            ridge_ls_solve(&z, &[4.0, 5.0, 6.0], 1.0, &[0.3, -2.0]),
            vec![0.3, -2.0]
        );
    }

    #[test]
    fn ridge_matches_grid_minimizer() {
        let d = gen_lspar_data(2, 0.3, 42);
        let anchor = [0.2, -0.4];
        let c = 0.5;
        let w = ridge_ls_solve(&d.xs, &d.ys, c, &anchor);
        let obj = |v: &[f64]| {
            d.xs.iter()
                .zip(&d.ys)
                .map(|(x, y)| (y - dot(v, x)).powi(2))
                .sum::<f64>()
                / 4.0
                + 0.5 * c * ((v[0] - anchor[0]).powi(2) + (v[1] - anchor[1]).powi(2))
        };
        let mut best = (f64::INFINITY, [0.0; 2]);
        let h = 2e-5;
        for i in -500..=500 {
            for j in -500..=500 {
                let v = [w[0] + i as f64 * h, w[1] + j as f64 * h];
                let o = obj(&v);
                if o < best.0 {
                    best = (o, v);
                }
            }
        }
        assert!((best.1[0] - w[0]).abs() <= 1e-4 && (best.1[1] - w[1]).abs() <= 1e-4);
    }

    #[test]
    fn planted_start_is_certified_immediately() {
        let d = gen_lspar_data(10, 0.0, 42);
        let r = mm_lspar(&d, &planted_model(), &MmParams::default(), None).unwrap();
        assert!(r.certified() && r.certificate.stationary);
        assert_eq!(r.trace.iterations(), 0);
    }

    #[test]
    fn single_piece_reduces_to_least_squares() {
        let d = gen_lspar_data(20, 0.1, 3);
        let r = mm_lspar(&d, &vec![vec![0.0, 0.0]], &MmParams::default(), None).unwrap();
        assert!(r.steps.iter().all(|s| s.candidates == 1));
        assert!(r.certified());
        let fixed = ridge_ls_solve(&d.xs, &d.ys, 1e-6, &r.w[0]);
        assert!((fixed[0] - r.w[0][0]).abs() < 1e-5 && (fixed[1] - r.w[0][1]).abs() < 1e-5);
    }

    #[test]
    fn accepted_steps_decrease_sufficiently() {
        let d = gen_lspar_data(30, 0.1, 5);
        let mut r = rng::stream(5, 1);
        let w0: Weights = (0..4)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let res = mm_lspar(&d, &w0, &MmParams::default(), Some(5)).unwrap();
        for s in res.steps.iter().filter(|s| s.accepted) {
            assert!(s.f_before - s.f_candidate >= res.eta * s.step_sq);
        }
        if res.certified() {
            assert!(
                lspar_d_stationarity_check(&d, &res.w, LSPAR_TOL)
                    .unwrap()
                    .stationary
            );
        }
        assert!(res.trace.final_objective() <= d.objective(&w0));
    }

    #[test]
    fn selection_order_is_by_deficit() {
        let active = vec![
            vec![(0, 0.0), (1, 0.2)],
            vec![(1, 0.0), (0, 0.1)],
            vec![(2, 0.0)],
        ];
        let s = enumerate_selections(&active, 10);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], vec![0, 1, 2]);
        assert_eq!(s[1], vec![0, 0, 2]);
        assert_eq!(s[2], vec![1, 1, 2]);
        assert_eq!(s[3], vec![1, 0, 2]);
    }
}
