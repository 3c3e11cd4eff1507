use serde::{Deserialize, Serialize};

use super::{dot, Ball, GeomError, HPolyhedron, Halfspace};

/// Closed convex sets with cheap membership and projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConvexSetSpec {
    Whole(usize),
    Polyhedron(HPolyhedron),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball(Ball),
}

pub const DYKSTRA_MAX_ITER: usize = 10_000;

impl ConvexSetSpec {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSetSpec::Whole(n) => *n,
            ConvexSetSpec::Polyhedron(h) => h.dim,
            ConvexSetSpec::Box { lo, .. } => lo.len(),
            ConvexSetSpec::Ball(b) => b.center.len(),
        }
    }

    pub fn unit_ball(dim: usize) -> Self {
        ConvexSetSpec::Ball(Ball {
            center: vec![0.0; dim],
            radius: 1.0,
        })
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        match self {
            ConvexSetSpec::Whole(_) => true,
            ConvexSetSpec::Polyhedron(h) => h.contains(z, tol),
            ConvexSetSpec::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            ConvexSetSpec::Ball(b) => b.contains(z, tol),
        }
    }

    /// Halfspace description (`None` for balls).
    pub fn halfspaces(&self) -> Option<Vec<Halfspace>> {
        match self {
            ConvexSetSpec::Whole(_) => Some(Vec::new()),
            ConvexSetSpec::Polyhedron(h) => Some(h.halfspaces.clone()),
            ConvexSetSpec::Box { lo, hi } => Some(HPolyhedron::box_bounds(lo, hi).halfspaces),
            ConvexSetSpec::Ball(_) => None,
        }
    }

    /// Euclidean projection. Polyhedra use Dykstra's alternating projections
    /// onto their halfspaces.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>, GeomError> {
        match self {
            ConvexSetSpec::Whole(_) => Ok(z.to_vec()),
            ConvexSetSpec::Box { lo, hi } => Ok(z
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect()),
            ConvexSetSpec::Ball(b) => Ok(b.project(z)),
            ConvexSetSpec::Polyhedron(h) => dykstra(&h.halfspaces, z),
        }
    }
}

fn project_halfspace(h: &Halfspace, z: &[f64]) -> Vec<f64> {
    let viol = h.violation(z);
    let nn = dot(&h.normal, &h.normal);
    if viol <= 0.0 || nn == 0.0 {
        return z.to_vec();
    }
    z.iter()
        .zip(&h.normal)
        .map(|(v, a)| v - viol / nn * a)
        .collect()
}

fn dykstra(hs: &[Halfspace], z: &[f64]) -> Result<Vec<f64>, GeomError> {
    if hs.iter().all(|h| h.violation(z) <= 0.0) {
        return Ok(z.to_vec());
    }
    let n = z.len();
    let mut x = z.to_vec();
    let mut incr = vec![vec![0.0; n]; hs.len()];
    for _ in 0..DYKSTRA_MAX_ITER {
        let prev = x.clone();
        for (h, p) in hs.iter().zip(incr.iter_mut()) {
            let y: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let nx = project_halfspace(h, &y);
            for k in 0..n {
                p[k] = y[k] - nx[k];
            }
            x = nx;
        }
        let moved = x
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let worst = hs.iter().map(|h| h.violation(&x)).fold(0.0f64, f64::max);
        if moved <= 1e-13 && worst <= 1e-10 {
            // finish with an exact pass so the iterate is feasible to 1e-9
            for h in hs {
                x = project_halfspace(h, &x);
            }
            if hs.iter().all(|h| h.violation(&x) <= 1e-9) {
                return Ok(x);
            }
        }
    }
    Err(GeomError::Numerical(format!(
        "projection did not converge within {DYKSTRA_MAX_ITER} sweeps"
    )))
}
