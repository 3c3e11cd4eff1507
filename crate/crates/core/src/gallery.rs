//! Worked examples with their expected subdifferentials, directional
//! derivatives and stationarity classes.

use serde::Serialize;

use crate::expr::{ae_gradient, eval, parse_expr, Expr};
use crate::polyhedra::{set_distance, SetUnion, VPolytope};
use crate::stationarity::{classify, classify_sampled, DEFAULT_TOL};
use crate::subdiff::{
    clarke, clarke_dir_deriv, convex_catalog_subdiff, dir_deriv, fd_dir_deriv, frechet, gradient_sampling, limiting,
    CatalogId, DerivExactness, FdSchedule, SamplingParams, SubdiffError, SubdiffSet,
};

/// Endpoint tolerance for exact sets.
pub const EXACT_TOL: f64 = 1e-9;
/// Hausdorff tolerance for sampled sets.
pub const SAMPLED_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GalleryOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub note: Option<&'static str>,
}

impl GalleryOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const RELU_NOTE: &str = "f°(0;1) = 0, not > 0 as sometimes stated: the left piece is constant, \
so the Clarke set at 0 is [−1, 0]. f°(0;1) = 0 > −1 = f'(0;1) still shows the function is not regular.";

pub const XSQSIN_NOTE: &str = "The left branch is f(x) = x, so f'(0;−1) = −1 while f'(0;1) = 1. \
Either way 0 is Clarke stationary without being d-stationary.";

struct Item {
    id: &'static str,
    title: &'static str,
    note: Option<&'static str>,
    checks: Vec<Check>,
}

impl Item {
    fn new(id: &'static str, title: &'static str) -> Self {
        Item {
            id,
            title,
            note: None,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, result: Result<(bool, String), SubdiffError>) {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn done(self) -> GalleryOutcome {
        GalleryOutcome {
            id: self.id,
            title: self.title,
            checks: self.checks,
            note: self.note,
        }
    }
}

fn ex(text: &str) -> Expr {
    parse_expr(text).expect("gallery expressions are well formed")
}

fn interval(lo: f64, hi: f64) -> SetUnion {
    SetUnion::single(VPolytope::interval(lo, hi))
}

fn points(pts: &[f64]) -> SetUnion {
    SetUnion::points(1, &pts.iter().map(|&p| vec![p]).collect::<Vec<_>>())
}

fn same_set(got: Result<SubdiffSet, SubdiffError>, want: &SetUnion, tol: f64) -> Result<(bool, String), SubdiffError> {
    let got = got?;
    if want.is_empty() || got.is_empty() {
        return Ok((want.is_empty() == got.is_empty(), got.summary()));
    }
    let d = set_distance(&got.set, want)?;
    Ok((d <= tol, format!("{} (distance {d:.2e})", got.summary())))
}

fn is_empty(got: Result<SubdiffSet, SubdiffError>) -> Result<(bool, String), SubdiffError> {
    let got = got?;
    Ok((got.is_empty(), got.summary()))
}

fn value_is(v: Result<f64, SubdiffError>, want: f64) -> Result<(bool, String), SubdiffError> {
    let v = v?;
    Ok(((v - want).abs() <= EXACT_TOL, format!("{v}")))
}

fn classes(e: &Expr, x: f64, want: (bool, bool, bool)) -> Result<(bool, String), SubdiffError> {
    let r = classify(e, &[x], DEFAULT_TOL)?;
    let got = (r.is_d, r.is_l, r.is_c);
    Ok((got == want, format!("d={} l={} C={}", r.is_d, r.is_l, r.is_c)))
}

pub const F1: &str = "(max (scale -1 (abs (var 0))) (affine (1) -1))";
pub const F2: &str = "(max (affine (-1) -1) (min (affine (-1) 0) (const 0)))";
pub const RELU_LOSS: &str = "(scale 0.5 (sq (sum (max (var 0) (const 0)) (const -1))))";

fn neg_abs() -> GalleryOutcome {
    let mut it = Item::new("neg-abs", "−|x| at 0");
    let e = ex("(scale -1 (abs (var 0)))");
    it.check("Fréchet = ∅", is_empty(frechet(&e, &[0.0])));
    it.check("limiting = {−1, 1}", same_set(limiting(&e, &[0.0]), &points(&[-1.0, 1.0]), EXACT_TOL));
    it.check("Clarke = [−1, 1]", same_set(clarke(&e, &[0.0]), &interval(-1.0, 1.0), EXACT_TOL));
    it.done()
}

fn abs_regular() -> GalleryOutcome {
    let mut it = Item::new("abs", "|x| at 0 (all subdifferentials coincide)");
    let e = ex("(abs (var 0))");
    let want = interval(-1.0, 1.0);
    it.check("Fréchet = [−1, 1]", same_set(frechet(&e, &[0.0]), &want, EXACT_TOL));
    it.check("limiting = [−1, 1]", same_set(limiting(&e, &[0.0]), &want, EXACT_TOL));
    it.check("Clarke = [−1, 1]", same_set(clarke(&e, &[0.0]), &want, EXACT_TOL));
    it.done()
}

fn f1_at_zero() -> GalleryOutcome {
    let mut it = Item::new("f1-0", "max{−|x|, x−1} at 0: C-stationary only");
    let e = ex(F1);
    it.check("Clarke = [−1, 1]", same_set(clarke(&e, &[0.0]), &interval(-1.0, 1.0), EXACT_TOL));
    it.check("limiting = {−1, 1}", same_set(limiting(&e, &[0.0]), &points(&[-1.0, 1.0]), EXACT_TOL));
    it.check("classes (d, l, C) = (no, no, yes)", classes(&e, 0.0, (false, false, true)));
    it.check(
        "witness d = 1 with f'(0;1) = −1",
        classify(&e, &[0.0], DEFAULT_TOL).map(|r| match r.witness {
            Some(w) => (w.direction == vec![1.0] && (w.dir_deriv + 1.0).abs() <= EXACT_TOL, format!("{w:?}")),
            None => (false, "no witness".into()),
        }),
    );
    it.done()
}

fn f1_at_half() -> GalleryOutcome {
    let mut it = Item::new("f1-half", "max{−|x|, x−1} at 1/2: d-stationary");
    it.check("classes (d, l, C) = (yes, yes, yes)", classes(&ex(F1), 0.5, (true, true, true)));
    it.done()
}

fn f2_at_zero() -> GalleryOutcome {
    let mut it = Item::new("f2-0", "max{−x−1, min{−x, 0}} at 0: l-stationary, not d-stationary");
    let e = ex(F2);
    it.check("Fréchet = ∅", is_empty(frechet(&e, &[0.0])));
    it.check("limiting = {−1, 0}", same_set(limiting(&e, &[0.0]), &points(&[-1.0, 0.0]), EXACT_TOL));
    it.check("classes (d, l, C) = (no, yes, yes)", classes(&e, 0.0, (false, true, true)));
    it.done()
}

fn f2_at_minus_one() -> GalleryOutcome {
    let mut it = Item::new("f2-minus1", "max{−x−1, min{−x, 0}} at −1: the d-stationary point");
    it.check("classes (d, l, C) = (yes, yes, yes)", classes(&ex(F2), -1.0, (true, true, true)));
    it.done()
}

fn sum_rule() -> GalleryOutcome {
    let mut it = Item::new("sum-rule", "max{x,0} + min{x,0} at 0: the sum rule is only an inclusion");
    let f = ex("(sum (max (var 0) (const 0)) (min (var 0) (const 0)))");
    it.check("Clarke(f₁ + f₂) = {1}", same_set(clarke(&f, &[0.0]), &points(&[1.0]), EXACT_TOL));
    let minkowski = (|| {
        let a = clarke(&ex("(max (var 0) (const 0))"), &[0.0])?;
        let b = clarke(&ex("(min (var 0) (const 0))"), &[0.0])?;
        let (Some(pa), Some(pb)) = (a.polytope(), b.polytope()) else {
            return Ok((false, "non-polytope Clarke set".into()));
        };
        let s = SetUnion::single(pa.minkowski(pb)?);
        let d = set_distance(&s, &interval(0.0, 2.0))?;
        Ok((d <= EXACT_TOL, format!("distance to [0, 2] {d:.2e}")))
    })();
    it.check("Clarke(f₁) ⊕ Clarke(f₂) = [0, 2]", minkowski);
    it.done()
}

fn l1_norm() -> GalleryOutcome {
    let mut it = Item::new("l1", "‖x‖₁ at (1, 0)");
    let want = (|| Ok(SetUnion::single(crate::polyhedra::conv_hull(&[vec![1.0, -1.0], vec![1.0, 1.0]], 2)?)))();
    let got = convex_catalog_subdiff(&CatalogId::L1Norm, &[1.0, 0.0]);
    it.check(
        "∂ = {1} × [−1, 1]",
        want.and_then(|w: SetUnion| same_set(got, &w, EXACT_TOL)),
    );
    let e = ex("(sum (abs (var 0)) (abs (var 1)))");
    it.check(
        "expression route agrees",
        (|| {
            let w = SetUnion::single(crate::polyhedra::conv_hull(&[vec![1.0, -1.0], vec![1.0, 1.0]], 2)?);
            same_set(clarke(&e, &[1.0, 0.0]), &w, EXACT_TOL)
        })(),
    );
    it.done()
}

fn l2_norm() -> GalleryOutcome {
    let mut it = Item::new("l2", "‖x‖₂ at 0: the unit ball");
    let got = convex_catalog_subdiff(&CatalogId::L2Norm, &[0.0, 0.0]);
    it.check(
        "support = 1 in every direction",
        got.and_then(|s| {
            let mut worst: f64 = 0.0;
            for k in 0..16 {
                let t = k as f64 * std::f64::consts::PI / 8.0;
                let v = s.set.support_value(&[t.cos(), t.sin()])?;
                worst = worst.max((v - 1.0).abs());
            }
            let inside = s.contains(&[0.6, 0.8], EXACT_TOL)? && !s.contains(&[0.6, 0.81], EXACT_TOL)?;
            Ok((worst <= EXACT_TOL && inside, format!("max support error {worst:.2e}")))
        }),
    );
    it.done()
}

fn xsqsin() -> GalleryOutcome {
    let mut it = Item::new("xsqsin", "x + x²sin(1/x) at 0: Clarke stationary, not d-stationary");
    it.note = Some(XSQSIN_NOTE);
    let e = ex("(builtin xsqsin (var 0))");
    let grad = |x: &[f64]| ae_gradient(&e, x).expect("one-dimensional");
    let params = SamplingParams::default();
    it.check(
        "sampled Clarke ≈ [0, 2]",
        gradient_sampling(grad, &[0.0], &params)
            .map_err(SubdiffError::from)
            .and_then(|s| {
                let d = set_distance(&s.set.set, &interval(0.0, 2.0))?;
                Ok((d <= SAMPLED_TOL, format!("{} (distance {d:.3})", s.set.summary())))
            }),
    );
    it.check(
        "sampled classification: C-stationary",
        classify_sampled(grad, &[0.0], &params, SAMPLED_TOL).map(|s| (s.is_c, format!("distance {:.3}", s.distance))),
    );
    it.check("f'(0;1) = 1", value_is(dir_deriv(&e, &[0.0], &[1.0]).map(|v| v.value), 1.0));
    it.check(
        "fd quotient along d = 1 converges to 1",
        Ok({
            let v = fd_dir_deriv(|x| eval(&e, x).unwrap(), &[0.0], &[1.0], &FdSchedule::default());
            (v.converged() && (v.value - 1.0).abs() <= 1e-6, format!("{}", v.value))
        }),
    );
    it.check(
        "exact engine: not d-stationary",
        crate::subdiff::min_dir_deriv_on_box(&e, &[0.0]).map(|(m, d)| (m < -DEFAULT_TOL, format!("min {m} along {d:?}"))),
    );
    it.done()
}

fn xsinlog() -> GalleryOutcome {
    let mut it = Item::new("xsinlog", "x·sin(log(1/x)) at 0: no directional derivative");
    let e = ex("(builtin xsinlog (var 0))");
    let v = fd_dir_deriv(|x| eval(&e, x).unwrap(), &[0.0], &[1.0], &FdSchedule::default());
    let (converged, amp) = match &v.exactness {
        DerivExactness::Sampled(info) => (info.converged, info.amplitude),
        DerivExactness::Exact => (true, 0.0),
    };
    it.check(
        "quotients do not converge",
        Ok((!converged, format!("converged = {converged}"))),
    );
    it.check("oscillation amplitude ≥ 1.8", Ok((amp >= 1.8, format!("{amp:.3}"))));
    it.check(
        "exact engine refuses",
        Ok(match dir_deriv(&e, &[0.0], &[1.0]) {
            Err(SubdiffError::NotDirectionallyDifferentiable) => (true, "not directionally differentiable".into()),
            other => (false, format!("{other:?}")),
        }),
    );
    it.done()
}

fn relu_loss() -> GalleryOutcome {
    let mut it = Item::new("relu-loss", "½(max{w,0} − 1)² at 0: not regular");
    it.note = Some(RELU_NOTE);
    let e = ex(RELU_LOSS);
    it.check("f'(0;1) = −1", value_is(dir_deriv(&e, &[0.0], &[1.0]).map(|v| v.value), -1.0));
    it.check("f°(0;1) = 0", value_is(clarke_dir_deriv(&e, &[0.0], &[1.0]).map(|v| v.value), 0.0));
    it.check(
        "f' ≠ f°",
        (|| {
            let a = dir_deriv(&e, &[0.0], &[1.0])?.value;
            let b = clarke_dir_deriv(&e, &[0.0], &[1.0])?.value;
            Ok(((a - b).abs() > EXACT_TOL, format!("{a} vs {b}")))
        })(),
    );
    it.done()
}

/// Runs every example in order.
pub fn run_gallery() -> Vec<GalleryOutcome> {
    vec![
        neg_abs(),
        abs_regular(),
        f1_at_zero(),
        f1_at_half(),
        f2_at_zero(),
        f2_at_minus_one(),
        sum_rule(),
        l1_norm(),
        l2_norm(),
        xsqsin(),
        xsinlog(),
        relu_loss(),
    ]
}

/// The PA expressions of the gallery with their evaluation points.
pub fn pa_items() -> Vec<(Expr, Vec<f64>)> {
    vec![
        (ex("(scale -1 (abs (var 0)))"), vec![0.0]),
        (ex("(abs (var 0))"), vec![0.0]),
        (ex(F1), vec![0.0]),
        (ex(F1), vec![0.5]),
        (ex(F2), vec![0.0]),
        (ex(F2), vec![-1.0]),
        (ex("(sum (max (var 0) (const 0)) (min (var 0) (const 0)))"), vec![0.0]),
        (ex("(sum (abs (var 0)) (abs (var 1)))"), vec![1.0, 0.0]),
        (ex("(sum (abs (var 0)) (abs (var 1)))"), vec![0.0, 0.0]),
    ]
}
