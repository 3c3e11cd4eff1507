//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min cᵀx` subject to `Ax ≤ b` with `x` free. Free variables are
//! split as `x = u − v`; rows with negative right-hand side get an
//! artificial column for phase one. Problem sizes here are desk scale
//! (tens of variables, a few hundred rows), so the tableau is kept dense.

use super::{GeomError, HPolyhedron};

/// Pivot tolerance.
pub const PIVOT_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { point: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { point, value } => Some((point, *value)),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

/// Minimizes `objectiveᵀx` over the polyhedron.
pub fn lp_solve(objective: &[f64], constraints: &HPolyhedron) -> Result<LpOutcome, GeomError> {
    let n = constraints.dim();
    if objective.len() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: objective.len(),
        });
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(constraints.halfspaces.len());
    for h in &constraints.halfspaces {
        if h.normal.len() != n {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                found: h.normal.len(),
            });
        }
        let scale = h.normal.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale <= f64::MIN_POSITIVE {
            if h.offset < -PIVOT_TOL {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        rows.push((
            h.normal.iter().map(|a| a / scale).collect(),
            h.offset / scale,
        ));
    }
    let outcome = Simplex::new(objective, &rows).solve()?;
    if let LpOutcome::Optimal { point, .. } = &outcome {
        // Clean-up guard: the reported optimum has to satisfy the scaled rows.
        let worst = rows
            .iter()
            .map(|(a, b)| dot(a, point) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 1e-7 {
            return Err(GeomError::Numerical(format!(
                "simplex optimum violates a constraint by {worst:e}"
            )));
        }
    }
    Ok(outcome)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Simplex {
    n: usize,
    /// Tableau rows, each of length `cols + 1`; last entry is the rhs.
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    art_start: usize,
    cost: Vec<f64>,
}

impl Simplex {
    fn new(objective: &[f64], rows: &[(Vec<f64>, f64)]) -> Self {
        let n = objective.len();
        let m = rows.len();
        let n_struct = 2 * n;
        let n_slack = m;
        let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
        let cols = n_struct + n_slack + n_art;
        let art_start = n_struct + n_slack;
        let mut tab = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut next_art = art_start;
        for (i, (a, b)) in rows.iter().enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            let row = &mut tab[i];
            for j in 0..n {
                row[j] = sign * a[j];
                row[n + j] = -sign * a[j];
            }
            row[n_struct + i] = sign;
            row[cols] = sign * b;
            if sign < 0.0 {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = n_struct + i;
            }
        }
        let mut cost = vec![0.0; cols];
        for j in 0..n {
            cost[j] = objective[j];
            cost[n + j] = -objective[j];
        }
        Simplex {
            n,
            tab,
            basis,
            cols,
            art_start,
            cost,
        }
    }

    fn solve(mut self) -> Result<LpOutcome, GeomError> {
        if self.art_start < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            for c in phase1.iter_mut().skip(self.art_start) {
                *c = 1.0;
            }
            let (status, value) = self.run(&phase1, self.cols)?;
            debug_assert!(status, "phase one is always bounded");
            if value > PIVOT_TOL * (1.0 + self.tab.len() as f64) {
                return Ok(LpOutcome::Infeasible);
            }
            self.drive_out_artificials();
        }
        let cost = self.cost.clone();
        let (bounded, value) = self.run(&cost, self.art_start)?;
        if !bounded {
            return Ok(LpOutcome::Unbounded);
        }
        let mut vals = vec![0.0; self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            vals[b] = self.tab[i][self.cols];
        }
        let point: Vec<f64> = (0..self.n).map(|j| vals[j] - vals[self.n + j]).collect();
        Ok(LpOutcome::Optimal { point, value })
    }

    /// Runs primal simplex on `cost` restricted to columns `< allowed`.
    /// Returns (bounded, objective value).
    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<(bool, f64), GeomError> {
        let m = self.tab.len();
        let rhs = self.cols;
        for _ in 0..MAX_PIVOTS {
            // reduced costs: c_j - c_Bᵀ column_j
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for i in 0..m {
                    let cb = cost[self.basis[i]];
                    if cb != 0.0 {
                        rc -= cb * self.tab[i][j];
                    }
                }
                if rc < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                let value = (0..m).map(|i| cost[self.basis[i]] * self.tab[i][rhs]).sum();
                return Ok((true, value));
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.tab[i][j];
                if a > PIVOT_TOL {
                    let ratio = self.tab[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((i, _)) = leave else {
                return Ok((false, f64::NEG_INFINITY));
            };
            self.pivot(i, j);
        }
        Err(GeomError::Numerical("simplex pivot limit reached".into()))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.tab[r][c];
        for k in 0..width {
            self.tab[r][k] /= p;
        }
        let pivot_row = self.tab[r].clone();
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for k in 0..width {
                    row[k] -= f * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn drive_out_artificials(&mut self) {
        let mut i = 0;
        while i < self.tab.len() {
            if self.basis[i] >= self.art_start {
                let col = (0..self.art_start).find(|&j| self.tab[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // redundant row
                        self.tab.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}
