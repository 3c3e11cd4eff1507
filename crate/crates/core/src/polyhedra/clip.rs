//! Vertex enumeration of bounded polyhedra by successive halfspace clipping
//! (double description restricted to polytopes).
//!
//! Every vertex carries the set of constraints tight at it; two vertices are
//! adjacent when their common tight set has rank `dim − 1` and no third
//! vertex is tight on a superset of it.

use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub(crate) struct ClipPolytope {
    dim: usize,
    normals: Vec<Vec<f64>>,
    verts: Vec<(Vec<f64>, BTreeSet<usize>)>,
    scale: f64,
}

impl ClipPolytope {
    pub(crate) fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut normals = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut up = vec![0.0; dim];
            up[i] = 1.0;
            let mut down = vec![0.0; dim];
            down[i] = -1.0;
            normals.push(up);
            normals.push(down);
        }
        let mut verts = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            let mut p = vec![0.0; dim];
            let mut tight = BTreeSet::new();
            for i in 0..dim {
                if mask & (1 << i) != 0 {
                    p[i] = hi[i];
                    tight.insert(2 * i);
                } else {
                    p[i] = lo[i];
                    tight.insert(2 * i + 1);
                }
            }
            verts.push((p, tight));
        }
        let scale = lo.iter().chain(hi).fold(1.0f64, |m, v| m.max(v.abs()));
        let mut out = ClipPolytope {
            dim,
            normals,
            verts,
            scale,
        };
        out.merge_duplicates();
        out
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub(crate) fn vertices(&self) -> Vec<Vec<f64>> {
        self.verts.iter().map(|(p, _)| p.clone()).collect()
    }

    /// Intersects with `{z : normalᵀz ≤ offset}`.
    pub(crate) fn clip(&mut self, normal: &[f64], offset: f64) {
        if self.verts.is_empty() {
            return;
        }
        let norm = normal.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= 1e-300 {
            if offset < -1e-12 {
                self.verts.clear();
            }
            return;
        }
        let a: Vec<f64> = normal.iter().map(|v| v / norm).collect();
        let b = offset / norm;
        let tol = 1e-10 * (1.0 + self.scale.max(b.abs()));
        let idx = self.normals.len();
        self.normals.push(a.clone());

        let vals: Vec<f64> = self.verts.iter().map(|(p, _)| dot(&a, p) - b).collect();
        if vals.iter().all(|&v| v <= tol) {
            for (k, (_, t)) in self.verts.iter_mut().enumerate() {
                if vals[k].abs() <= tol {
                    t.insert(idx);
                }
            }
            return;
        }
        if vals.iter().all(|&v| v > tol) {
            self.verts.clear();
            return;
        }

        let mut next: Vec<(Vec<f64>, BTreeSet<usize>)> = Vec::new();
        for (k, (p, t)) in self.verts.iter().enumerate() {
            if vals[k] <= tol {
                let mut t = t.clone();
                if vals[k].abs() <= tol {
                    t.insert(idx);
                }
                next.push((p.clone(), t));
            }
        }
        for (u, vu) in vals.iter().enumerate() {
            if *vu >= -tol {
                continue;
            }
            for (w, vw) in vals.iter().enumerate() {
                if *vw <= tol {
                    continue;
                }
                if !self.adjacent(u, w) {
                    continue;
                }
                let lambda = vu / (vu - vw);
                let pu = &self.verts[u].0;
                let pw = &self.verts[w].0;
                let p: Vec<f64> = pu
                    .iter()
                    .zip(pw)
                    .map(|(x, y)| x + lambda * (y - x))
                    .collect();
                let mut t: BTreeSet<usize> = self.verts[u]
                    .1
                    .intersection(&self.verts[w].1)
                    .copied()
                    .collect();
                t.insert(idx);
                next.push((p, t));
            }
        }
        self.verts = next;
        self.merge_duplicates();
    }

    fn adjacent(&self, u: usize, w: usize) -> bool {
        let common: BTreeSet<usize> = self.verts[u]
            .1
            .intersection(&self.verts[w].1)
            .copied()
            .collect();
        if self.dim >= 1 && rank(common.iter().map(|&i| &self.normals[i]), self.dim) < self.dim - 1
        {
            return false;
        }
        !self
            .verts
            .iter()
            .enumerate()
            .any(|(z, (_, t))| z != u && z != w && common.is_subset(t))
    }

    fn merge_duplicates(&mut self) {
        let tol = 1e-9 * (1.0 + self.scale);
        let mut merged: Vec<(Vec<f64>, BTreeSet<usize>)> = Vec::with_capacity(self.verts.len());
        for (p, t) in self.verts.drain(..) {
            if let Some(existing) = merged
                .iter_mut()
                .find(|(q, _)| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol))
            {
                existing.1.extend(t);
            } else {
                merged.push((p, t));
            }
        }
        self.verts = merged;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerical rank of a set of row vectors by Gaussian elimination.
pub(crate) fn rank<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.cloned().collect();
    let mut r = 0;
    for c in 0..dim {
        let Some(p) = (r..m.len()).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        let pivot = m[r].clone();
        for row in m.iter_mut().skip(r + 1) {
            let f = row[c] / pivot[c];
            for k in c..dim {
                row[k] -= f * pivot[k];
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}
