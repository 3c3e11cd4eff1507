//! Wolfe's minimum-norm-point algorithm for the convex hull of a finite set.

use nalgebra::{DMatrix, DVector};

/// Point of minimum Euclidean norm in `conv(points)`.
///
/// Panics if `points` is empty.
pub fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    assert!(!points.is_empty(), "min_norm_point on an empty set");
    let dim = points[0].len();
    let scale = points
        .iter()
        .map(|p| sq(p))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let tol = 1e-12 * scale;

    let start = (0..points.len())
        .min_by(|&a, &b| sq(&points[a]).total_cmp(&sq(&points[b])))
        .unwrap();
    let mut set = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();

    for _ in 0..(50 * points.len() + 50) {
        let (j, pj) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dot(p, &x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if sq(&x) - pj <= tol || set.contains(&j) {
            return x;
        }
        set.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min_norm(points, &set);
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                x = combine(points, &set, &lambda, dim);
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 {
                    let denom = l - a;
                    if denom > 0.0 {
                        theta = theta.min(l / denom);
                    }
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let mut k = 0;
            while k < set.len() {
                if lambda[k] <= 1e-14 {
                    set.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            for l in lambda.iter_mut() {
                *l /= total;
            }
            x = combine(points, &set, &lambda, dim);
            if set.len() == 1 {
                break;
            }
        }
    }
    x
}

fn affine_min_norm(points: &[Vec<f64>], set: &[usize]) -> Vec<f64> {
    let k = set.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = dot(&points[set[a]], &points[set[b]]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .unwrap_or_else(|_| DVector::from_element(k + 1, 1.0 / k as f64));
    (0..k).map(|i| sol[i]).collect()
}

fn combine(points: &[Vec<f64>], set: &[usize], lambda: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (&i, l) in set.iter().zip(lambda) {
        for (xk, pk) in x.iter_mut().zip(&points[i]) {
            *xk += l * pk;
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_crossing_origin() {
        let p = min_norm_point(&[vec![-1.0, 1.0], vec![1.0, 1.0]]);
        assert!(p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn origin_inside_triangle() {
        let p = min_norm_point(&[vec![-1.0, -1.0], vec![2.0, -1.0], vec![0.0, 2.0]]);
        assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn nearest_vertex() {
        let p = min_norm_point(&[vec![1.0, 1.0], vec![2.0, 3.0], vec![3.0, 1.0]]);
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }
}
