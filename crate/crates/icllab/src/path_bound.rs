//! Generalization bound along straight-line paths between a test point and
//! pretraining anchors, with grid audits.
//!
//! For a loss field that is L-Lipschitz on a neighborhood of the path
//! `gamma(t) = anchor + t (test - anchor)`, the path-restricted loss is
//! `l_gamma`-Lipschitz on [0,1] with `l_gamma = L ||test - anchor||`, and for
//! every degree n >= 1
//!
//! ```text
//! loss(test) <= A^n sup_E loss + (1 + A^n) l_gamma / (2 sqrt(n)),
//! ```
//!
//! where `A = 4 mes([0,1]) / mes(E)` and `E` is the positive-measure part of
//! the path covered by pretraining. Choosing `n = ceil(l_gamma^2)` makes the
//! trailing term at most `(1 + A^n) / 2`.

use std::sync::Arc;

use crate::approx::{IntervalSubset, UnitIntervalFunction, CHECK_TOL};
use crate::error::{Error, Result};

/// A prompt embedded as a real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPrompt {
    coords: Vec<f64>,
    label: String,
}

impl EmbeddedPrompt {
    pub fn new(coords: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("embedding must have dimension >= 1"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::non_finite("embedding coordinates must be finite"));
        }
        Ok(EmbeddedPrompt { coords, label: label.into() })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Straight line from a pretraining anchor (t=0) to a test point (t=1).
#[derive(Debug, Clone)]
pub struct StraightPath {
    anchor: EmbeddedPrompt,
    test: EmbeddedPrompt,
}

impl StraightPath {
    pub fn new(anchor: EmbeddedPrompt, test: EmbeddedPrompt) -> Result<Self> {
        if anchor.dim() != test.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: anchor {} vs test {}",
                anchor.dim(),
                test.dim()
            )));
        }
        Ok(StraightPath { anchor, test })
    }

    pub fn anchor(&self) -> &EmbeddedPrompt {
        &self.anchor
    }

    pub fn test(&self) -> &EmbeddedPrompt {
        &self.test
    }

    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.anchor
            .coords
            .iter()
            .zip(&self.test.coords)
            .map(|(a, z)| a + t * (z - a))
            .collect()
    }

    /// Euclidean length ||test - anchor||.
    pub fn length(&self) -> f64 {
        self.anchor
            .coords
            .iter()
            .zip(&self.test.coords)
            .map(|(a, z)| (z - a) * (z - a))
            .sum::<f64>()
            .sqrt()
    }
}

/// Nonnegative loss over embedded points with a declared Lipschitz constant
/// valid on a compact neighborhood of any audited path.
#[derive(Clone)]
pub struct LossField {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    path_lipschitz: f64,
}

impl LossField {
    pub fn new(
        path_lipschitz: f64,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !path_lipschitz.is_finite() || path_lipschitz < 0.0 {
            return Err(Error::invalid(format!(
                "path Lipschitz constant must be finite and nonnegative, got {path_lipschitz}"
            )));
        }
        Ok(LossField { eval: Arc::new(eval), path_lipschitz })
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    pub fn path_lipschitz(&self) -> f64 {
        self.path_lipschitz
    }
}

impl std::fmt::Debug for LossField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossField")
            .field("path_lipschitz", &self.path_lipschitz)
            .finish_non_exhaustive()
    }
}

/// Restrict the loss to the path: t -> loss(gamma(t)), declared constant
/// `path_lipschitz * ||test - anchor||`.
pub fn restrict_loss(loss: &LossField, path: &StraightPath) -> Result<UnitIntervalFunction> {
    let l_gamma = loss.path_lipschitz() * path.length();
    let loss = loss.clone();
    let path = path.clone();
    UnitIntervalFunction::new(l_gamma, move |t| loss.value(&path.point_at(t)))
}

/// Max adjacent-slope estimate of the Lipschitz constant on a uniform grid.
pub fn estimate_path_lipschitz(f: &UnitIntervalFunction, grid_m: usize) -> f64 {
    assert!(grid_m >= 2, "grid_m must be >= 2");
    let h = 1.0 / (grid_m - 1) as f64;
    let mut prev = f.value(0.0);
    let mut max = 0.0f64;
    for i in 1..grid_m {
        let cur = f.value(i as f64 * h);
        max = max.max((cur - prev).abs() / h);
        prev = cur;
    }
    max
}

/// `A^n sup_pre + (1 + A^n) l / (2 sqrt(n))`; overflow is reported as an
/// infinite (vacuous) bound, never a failure.
pub fn theorem1_bound(l_gamma: f64, a_gamma: f64, sup_pre: f64, n: usize) -> f64 {
    assert!(n >= 1, "n must be >= 1");
    assert!(a_gamma > 1.0, "A_gamma must exceed 1");
    assert!(l_gamma >= 0.0 && sup_pre >= 0.0);
    let a_n = pow_or_inf(a_gamma, n);
    a_n * sup_pre + (1.0 + a_n) * l_gamma / (2.0 * (n as f64).sqrt())
}

/// Powers computed through the log to avoid overflow traps; anything past
/// exp(700) is +inf and flagged vacuous by callers.
fn pow_or_inf(a: f64, n: usize) -> f64 {
    let log = (n as f64) * a.ln();
    if log > 700.0 {
        f64::INFINITY
    } else if n <= i32::MAX as usize {
        a.powi(n as i32)
    } else {
        log.exp()
    }
}

/// The degree choice n = max(1, ceil(l^2)) and the specialized bound
/// `A^n sup_pre + (1 + A^n)/2` (using l / sqrt(n) <= 1). Degenerate l = 0
/// maps to n = 1, where the bound is exactly A * sup_pre.
pub fn theorem1_bound_chosen(l_gamma: f64, a_gamma: f64, sup_pre: f64) -> (usize, f64) {
    assert!(a_gamma > 1.0, "A_gamma must exceed 1");
    assert!(l_gamma >= 0.0 && sup_pre >= 0.0);
    if l_gamma == 0.0 {
        return (1, theorem1_bound(0.0, a_gamma, sup_pre, 1));
    }
    let n = (l_gamma * l_gamma).ceil().max(1.0) as usize;
    let a_n = pow_or_inf(a_gamma, n);
    (n, a_n * sup_pre + (1.0 + a_n) / 2.0)
}

/// All quantities of the path bound along one audited path.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PathBoundReport {
    pub l_gamma: f64,
    pub a_gamma: f64,
    pub n_used: usize,
    pub sup_pre: f64,
    pub bound_any_n: f64,
    pub bound_chosen_n: f64,
    pub empirical_loss: f64,
    pub holds: bool,
    /// True when the bound overflowed to +inf.
    pub vacuous: bool,
}

/// Audit the bound: grid sup of the restricted loss over the cover parts,
/// both bound forms at the chosen degree, and the loss at t = 1.
pub fn audit_bound(
    loss: &LossField,
    path: &StraightPath,
    cover: &IntervalSubset,
    grid: usize,
) -> Result<PathBoundReport> {
    if cover.host() != (0.0, 1.0) {
        return Err(Error::domain("cover host must be the path interval [0,1]"));
    }
    if grid < 2 {
        return Err(Error::domain("grid must be >= 2"));
    }
    let restricted = restrict_loss(loss, path)?;
    let l_gamma = restricted.lipschitz();
    let a_gamma = 4.0 * cover.host_measure() / cover.measure();

    // Grid supremum over parts: uniform points plus part endpoints.
    let mut sup_pre = 0.0f64;
    for &(x, y) in cover.parts() {
        let pts = ((grid as f64 * (y - x)).ceil() as usize).max(2);
        for i in 0..pts {
            let t = x + (y - x) * i as f64 / (pts - 1) as f64;
            let v = restricted.value(t);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("loss must be finite and >= 0, got {v} at t={t}")));
            }
            sup_pre = sup_pre.max(v);
        }
    }

    let (n_used, bound_chosen_n) = theorem1_bound_chosen(l_gamma, a_gamma, sup_pre);
    let bound_any_n = theorem1_bound(l_gamma, a_gamma, sup_pre, n_used);
    let empirical_loss = restricted.value(1.0);
    let holds = empirical_loss <= bound_any_n + CHECK_TOL;
    Ok(PathBoundReport {
        l_gamma,
        a_gamma,
        n_used,
        sup_pre,
        bound_any_n,
        bound_chosen_n,
        empirical_loss,
        holds,
        vacuous: bound_any_n.is_infinite(),
    })
}

/// Audit every anchor and keep the report with the smallest chosen-n bound;
/// ties break toward smaller l_gamma, then anchor order.
pub fn best_anchor(
    loss: &LossField,
    test: &EmbeddedPrompt,
    anchors: &[(EmbeddedPrompt, IntervalSubset)],
    grid: usize,
) -> Result<PathBoundReport> {
    if anchors.is_empty() {
        return Err(Error::domain("need at least one anchor"));
    }
    let mut best: Option<PathBoundReport> = None;
    for (anchor, cover) in anchors {
        let path = StraightPath::new(anchor.clone(), test.clone())?;
        let report = audit_bound(loss, &path, cover, grid)?;
        best = Some(match best {
            None => report,
            Some(b) => {
                if report.bound_chosen_n < b.bound_chosen_n
                    || (report.bound_chosen_n == b.bound_chosen_n && report.l_gamma < b.l_gamma)
                {
                    report
                } else {
                    b
                }
            }
        });
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn unit_cover(lo: f64, hi: f64) -> IntervalSubset {
        IntervalSubset::new((0.0, 1.0), vec![(lo, hi)]).unwrap()
    }

    #[test]
    fn restrict_constant_and_linear_fields() {
        let constant = LossField::new(0.0, |_| 0.3).unwrap();
        let path = StraightPath::new(
            EmbeddedPrompt::new(vec![0.0, 0.0], "a").unwrap(),
            EmbeddedPrompt::new(vec![1.0, 0.0], "z").unwrap(),
        )
        .unwrap();
        let f = restrict_loss(&constant, &path).unwrap();
        assert_eq!(f.lipschitz(), 0.0);
        approx(f.value(0.33), 0.3, 1e-15);

        // L1-norm field along the first axis: f(t) = t, declared constant 1.
        let l1 = LossField::new(1.0, |v| v.iter().map(|x| x.abs()).sum()).unwrap();
        let f = restrict_loss(&l1, &path).unwrap();
        approx(f.lipschitz(), 1.0, 1e-15);
        approx(f.value(0.4), 0.4, 1e-15);
    }

    #[test]
    fn restrict_clipped_distance_field() {
        // loss(v) = min(1, 2 dist(v, anchor)) on a unit path: f(t) = min(1, 2t).
        let anchor = EmbeddedPrompt::new(vec![0.0], "a").unwrap();
        let test = EmbeddedPrompt::new(vec![1.0], "z").unwrap();
        let field = LossField::new(2.0, |v| (2.0 * v[0].abs()).min(1.0)).unwrap();
        let path = StraightPath::new(anchor, test).unwrap();
        let f = restrict_loss(&field, &path).unwrap();
        approx(f.lipschitz(), 2.0, 1e-15);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            approx(f.value(t), (2.0 * t).min(1.0), 1e-15);
        }
    }

    #[test]
    fn restrict_rejects_dimension_mismatch() {
        let a = EmbeddedPrompt::new(vec![0.0], "a").unwrap();
        let z = EmbeddedPrompt::new(vec![0.0, 1.0], "z").unwrap();
        assert!(StraightPath::new(a, z).is_err());
    }

    #[test]
    fn lipschitz_estimates() {
        let id = UnitIntervalFunction::new(1.0, |t| t).unwrap();
        approx(estimate_path_lipschitz(&id, 11), 1.0, 1e-12);
        let c = UnitIntervalFunction::constant(4.2);
        assert_eq!(estimate_path_lipschitz(&c, 11), 0.0);
        let kink = UnitIntervalFunction::new(2.0, |t| (2.0 * t).min(1.0)).unwrap();
        approx(estimate_path_lipschitz(&kink, 101), 2.0, 1e-9);
    }

    #[test]
    fn theorem1_bound_values() {
        approx(theorem1_bound(2.0, 8.0, 0.1, 4), 2458.1, 1e-9);
        approx(theorem1_bound(0.0, 8.0, 0.1, 1), 0.8, 1e-12);
        approx(theorem1_bound(2.0, 8.0, 0.0, 4), 2048.5, 1e-9);
    }

    #[test]
    fn theorem1_bound_overflow_is_vacuous() {
        let b = theorem1_bound(1.0, 10.0, 0.1, 400);
        assert!(b.is_infinite() && b > 0.0);
    }

    #[test]
    fn theorem1_chosen_values() {
        let (n, b) = theorem1_bound_chosen(2.0, 8.0, 0.1);
        assert_eq!(n, 4);
        approx(b, 2458.1, 1e-9);
        let (n, b) = theorem1_bound_chosen(0.0, 8.0, 0.1);
        assert_eq!(n, 1);
        approx(b, 0.8, 1e-12);
        let (n, b) = theorem1_bound_chosen(1.0, 4.0, 0.0);
        assert_eq!(n, 1);
        approx(b, 2.5, 1e-12);
    }

    #[test]
    fn chosen_matches_any_n_on_integer_squares() {
        // When l^2 is an integer, l / sqrt(ceil(l^2)) = 1 and the two forms agree.
        for &l in &[1.0f64, 2.0, 3.0] {
            let (n, chosen) = theorem1_bound_chosen(l, 6.0, 0.25);
            let any = theorem1_bound(l, 6.0, 0.25, n);
            approx(chosen, any, 1e-9 * chosen.abs().max(1.0));
        }
    }

    #[test]
    fn monotone_in_sup_and_l() {
        let b0 = theorem1_bound(1.0, 5.0, 0.1, 3);
        assert!(theorem1_bound(1.0, 5.0, 0.2, 3) >= b0);
        assert!(theorem1_bound(1.5, 5.0, 0.1, 3) >= b0);
    }

    #[test]
    fn audit_constant_field_holds() {
        let field = LossField::new(0.0, |_| 0.3).unwrap();
        let path = StraightPath::new(
            EmbeddedPrompt::new(vec![0.0], "a").unwrap(),
            EmbeddedPrompt::new(vec![2.0], "z").unwrap(),
        )
        .unwrap();
        let cover = unit_cover(0.2, 0.7);
        let r = audit_bound(&field, &path, &cover, 128).unwrap();
        assert_eq!(r.n_used, 1);
        approx(r.a_gamma, 8.0, 1e-12);
        approx(r.empirical_loss, 0.3, 1e-15);
        approx(r.bound_any_n, 8.0 * 0.3, 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn audit_linear_ramp_holds() {
        let field = LossField::new(1.0, |v: &[f64]| v[0].abs()).unwrap();
        let path = StraightPath::new(
            EmbeddedPrompt::new(vec![0.0], "a").unwrap(),
            EmbeddedPrompt::new(vec![1.0], "z").unwrap(),
        )
        .unwrap();
        let cover = unit_cover(0.0, 0.5);
        let r = audit_bound(&field, &path, &cover, 512).unwrap();
        assert!(r.holds, "{r:?}");
        approx(r.l_gamma, 1.0, 1e-12);
        approx(r.sup_pre, 0.5, 1e-9);
    }

    #[test]
    fn audit_rejects_bad_cover_host() {
        let field = LossField::new(0.0, |_| 0.0).unwrap();
        let path = StraightPath::new(
            EmbeddedPrompt::new(vec![0.0], "a").unwrap(),
            EmbeddedPrompt::new(vec![1.0], "z").unwrap(),
        )
        .unwrap();
        let cover = IntervalSubset::new((0.0, 2.0), vec![(0.0, 1.0)]).unwrap();
        assert!(audit_bound(&field, &path, &cover, 64).is_err());
    }

    #[test]
    fn best_anchor_prefers_full_cover() {
        let field = LossField::new(1.0, |v: &[f64]| v[0].abs()).unwrap();
        let test = EmbeddedPrompt::new(vec![1.0], "z").unwrap();
        let anchors = vec![
            (EmbeddedPrompt::new(vec![0.0], "half").unwrap(), unit_cover(0.0, 0.5)),
            (EmbeddedPrompt::new(vec![0.0], "full").unwrap(), IntervalSubset::full((0.0, 1.0)).unwrap()),
        ];
        let r = best_anchor(&field, &test, &anchors, 256).unwrap();
        approx(r.a_gamma, 4.0, 1e-12);
    }

    #[test]
    fn best_anchor_single_matches_audit() {
        let field = LossField::new(0.0, |_| 0.1).unwrap();
        let test = EmbeddedPrompt::new(vec![1.0], "z").unwrap();
        let anchor = EmbeddedPrompt::new(vec![0.0], "a").unwrap();
        let cover = unit_cover(0.1, 0.9);
        let via_best = best_anchor(&field, &test, &[(anchor.clone(), cover.clone())], 64).unwrap();
        let path = StraightPath::new(anchor, test).unwrap();
        let direct = audit_bound(&field, &path, &cover, 64).unwrap();
        assert_eq!(via_best.bound_chosen_n, direct.bound_chosen_n);
        assert_eq!(via_best.n_used, direct.n_used);
    }

    #[test]
    fn best_anchor_empty_rejected() {
        let field = LossField::new(0.0, |_| 0.0).unwrap();
        let test = EmbeddedPrompt::new(vec![1.0], "z").unwrap();
        assert!(best_anchor(&field, &test, &[], 64).is_err());
    }
}
