//! One-dimensional Bernstein operator, its Lipschitz error bound, and the
//! Remez amplification factor with grid-based verification.
//!
//! For `f: [0,1] -> R` the degree-n Bernstein polynomial is
//! `B_n f(t) = sum_k f(k/n) C(n,k) t^k (1-t)^(n-k)`. If `f` is L-Lipschitz,
//! `sup |B_n f - f| <= L / (2 sqrt(n))`. The Remez inequality bounds the sup
//! of a degree-n polynomial over an interval `J` by `(4 mes(J)/mes(E))^n`
//! times its sup over any positive-measure subset `E`.

use std::sync::Arc;
use std::sync::Mutex;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Absolute tolerance on all inequality checks; shields against pure
/// floating-point noise without masking real violations.
pub const CHECK_TOL: f64 = 1e-9;

/// A real function on [0,1] with a declared Lipschitz constant.
#[derive(Clone)]
pub struct UnitIntervalFunction {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
}

impl UnitIntervalFunction {
    pub fn new(
        lipschitz: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(Error::invalid(format!(
                "Lipschitz constant must be finite and nonnegative, got {lipschitz}"
            )));
        }
        Ok(UnitIntervalFunction { eval: Arc::new(eval), lipschitz })
    }

    pub fn constant(c: f64) -> Self {
        UnitIntervalFunction { eval: Arc::new(move |_| c), lipschitz: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl std::fmt::Debug for UnitIntervalFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitIntervalFunction")
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

/// Piecewise-linear function on [0,1] with an exactly known Lipschitz
/// constant (the max absolute knot-to-knot slope). The audit campaigns use
/// these so the declared constant is known, not estimated.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    /// Knots (t, value), sorted by t, spanning t=0 to t=1.
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("need at least two knots"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::invalid("knots must span [0,1]"));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid("knot abscissae must be strictly increasing"));
            }
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::non_finite("knot coordinates must be finite"));
        }
        Ok(PiecewiseLinear { knots })
    }

    /// Random function with `segments` linear pieces and values in
    /// `[lo, hi]`, rescaled so the exact Lipschitz constant equals `l`.
    pub fn random(rng: &mut impl rand::Rng, segments: usize, lo: f64, hi: f64, l: f64) -> Self {
        assert!(segments >= 1 && hi > lo && l >= 0.0);
        let mut knots = Vec::with_capacity(segments + 1);
        for i in 0..=segments {
            let t = i as f64 / segments as f64;
            let v = lo + (hi - lo) * rng.random::<f64>();
            knots.push((t, v));
        }
        let mut pl = PiecewiseLinear { knots };
        let cur = pl.exact_lipschitz();
        if cur > 0.0 && l > 0.0 {
            let mid = 0.5 * (lo + hi);
            let scale = l / cur;
            for (_, v) in pl.knots.iter_mut() {
                *v = mid + (*v - mid) * scale;
            }
        } else if l == 0.0 {
            let c = pl.knots[0].1;
            for (_, v) in pl.knots.iter_mut() {
                *v = c;
            }
        }
        pl
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let i = match self
            .knots
            .binary_search_by(|(x, _)| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.knots[i].1,
            Err(i) => i,
        };
        let (x0, y0) = self.knots[i - 1];
        let (x1, y1) = self.knots[i];
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    /// Minimum value (attained at a knot).
    pub fn min_value(&self) -> f64 {
        self.knots.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min)
    }

    /// Shift all values so the minimum lands at `floor`; the Lipschitz
    /// constant is untouched.
    pub fn shifted_to_min(mut self, floor: f64) -> Self {
        let offset = floor - self.min_value();
        for (_, v) in self.knots.iter_mut() {
            *v += offset;
        }
        self
    }

    /// Max absolute slope over all segments: the exact Lipschitz constant.
    pub fn exact_lipschitz(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn as_function(&self) -> UnitIntervalFunction {
        let pl = self.clone();
        UnitIntervalFunction {
            eval: Arc::new(move |t| pl.eval(t)),
            lipschitz: self.exact_lipschitz(),
        }
    }
}

/// A degree-n Bernstein polynomial stored through its node values f(k/n).
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinSurrogate {
    degree: usize,
    node_values: Vec<f64>,
}

impl BernsteinSurrogate {
    /// Build directly from node values (the coefficients in the Bernstein
    /// basis); useful for generating random polynomials of bounded degree.
    pub fn from_node_values(node_values: Vec<f64>) -> Result<Self> {
        if node_values.len() < 2 {
            return Err(Error::invalid("need degree >= 1, i.e. at least 2 node values"));
        }
        if node_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("node values must be finite"));
        }
        Ok(BernsteinSurrogate { degree: node_values.len() - 1, node_values })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }
}

/// Cached log-factorials; grown lazily, shared across calls.
fn log_factorial_table(n: usize) -> Vec<f64> {
    static TABLE: OnceLock<Mutex<Vec<f64>>> = OnceLock::new();
    let m = TABLE.get_or_init(|| Mutex::new(vec![0.0, 0.0]));
    let mut t = m.lock().unwrap();
    while t.len() <= n {
        let k = t.len();
        let last = *t.last().unwrap();
        t.push(last + (k as f64).ln());
    }
    t[..=n].to_vec()
}

/// Log-space Bernstein weights at t in (0,1), exponentiated after a max
/// shift and renormalized; direct C(n,k) overflows doubles near n = 1030.
fn bernstein_weights(n: usize, t: f64) -> Vec<f64> {
    let lf = log_factorial_table(n);
    let lt = t.ln();
    let l1t = (1.0 - t).ln();
    let mut logw = Vec::with_capacity(n + 1);
    let mut max = f64::NEG_INFINITY;
    for k in 0..=n {
        let lw = lf[n] - lf[k] - lf[n - k] + (k as f64) * lt + ((n - k) as f64) * l1t;
        if lw > max {
            max = lw;
        }
        logw.push(lw);
    }
    let mut sum = 0.0;
    let mut w: Vec<f64> = logw
        .into_iter()
        .map(|lw| {
            let v = (lw - max).exp();
            sum += v;
            v
        })
        .collect();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Sample `f` at the n+1 Bernstein nodes k/n.
pub fn bernstein_fit(f: &UnitIntervalFunction, n: usize) -> Result<BernsteinSurrogate> {
    if n < 1 {
        return Err(Error::domain("degree n must be >= 1"));
    }
    let mut node_values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let v = f.value(t);
        if !v.is_finite() {
            return Err(Error::non_finite(format!(
                "evaluator returned {v} at node k={k} (t={t})"
            )));
        }
        node_values.push(v);
    }
    Ok(BernsteinSurrogate { degree: n, node_values })
}

/// Evaluate the surrogate at t in [0,1].
pub fn bernstein_eval(s: &BernsteinSurrogate, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t={t} outside [0,1]")));
    }
    let n = s.degree;
    // Endpoint weights concentrate on a single node.
    if t == 0.0 {
        return Ok(s.node_values[0]);
    }
    if t == 1.0 {
        return Ok(s.node_values[n]);
    }
    let w = bernstein_weights(n, t);
    Ok(w.iter().zip(&s.node_values).map(|(w, v)| w * v).sum())
}

/// Lemma bound L / (2 sqrt(n)) on sup |B_n f - f| for L-Lipschitz f.
pub fn bernstein_error_bound(l: f64, n: usize) -> f64 {
    assert!(l >= 0.0 && n >= 1, "need L >= 0 and n >= 1");
    l / (2.0 * (n as f64).sqrt())
}

/// A host interval with a finite union of pairwise-disjoint closed
/// subintervals of positive total measure.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSubset {
    host: (f64, f64),
    parts: Vec<(f64, f64)>,
}

impl IntervalSubset {
    pub fn new(host: (f64, f64), mut parts: Vec<(f64, f64)>) -> Result<Self> {
        let (a, b) = host;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("host must satisfy a < b, got [{a}, {b}]")));
        }
        if parts.is_empty() {
            return Err(Error::invalid("parts must be nonempty"));
        }
        for &(x, y) in &parts {
            if !(x.is_finite() && y.is_finite() && x < y) {
                return Err(Error::invalid(format!("part [{x}, {y}] is not a proper interval")));
            }
            if x < a || y > b {
                return Err(Error::invalid(format!(
                    "part [{x}, {y}] escapes host [{a}, {b}]"
                )));
            }
        }
        parts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        for w in parts.windows(2) {
            // Overlap of measure zero (shared endpoint) is allowed.
            if w[1].0 < w[0].1 {
                return Err(Error::invalid(format!(
                    "parts [{}, {}] and [{}, {}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        let s = IntervalSubset { host, parts };
        if s.measure() <= 0.0 {
            return Err(Error::invalid("parts must have positive total measure"));
        }
        Ok(s)
    }

    /// The whole host as its own (full-measure) subset.
    pub fn full(host: (f64, f64)) -> Result<Self> {
        IntervalSubset::new(host, vec![host])
    }

    pub fn host(&self) -> (f64, f64) {
        self.host
    }

    pub fn parts(&self) -> &[(f64, f64)] {
        &self.parts
    }

    pub fn host_measure(&self) -> f64 {
        self.host.1 - self.host.0
    }

    /// Lebesgue measure of the union: sum of part lengths (endpoint overlap
    /// contributes nothing).
    pub fn measure(&self) -> f64 {
        self.parts.iter().map(|(x, y)| y - x).sum()
    }
}

/// The Remez amplification factor (4 mes(J) / mes(E))^n.
pub fn remez_factor(cover: &IntervalSubset, n: usize) -> f64 {
    let base = 4.0 * cover.host_measure() / cover.measure();
    base.powi(n as i32)
}

/// Grid audit of the Remez inequality for one polynomial.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RemezReport {
    pub sup_host: f64,
    pub sup_parts: f64,
    pub factor: f64,
    pub holds: bool,
}

/// Evaluate |p| on uniform grids (plus subinterval endpoints) over the host
/// and over the parts; check sup_J <= factor * sup_E + tol. The surrogate is
/// read as a polynomial on the host via the affine pullback onto [0,1].
pub fn verify_remez(
    s: &BernsteinSurrogate,
    cover: &IntervalSubset,
    grid_points: usize,
) -> Result<RemezReport> {
    if grid_points < 2 {
        return Err(Error::domain("grid_points must be >= 2"));
    }
    let (a, b) = cover.host();
    let len = b - a;
    let to_unit = |x: f64| ((x - a) / len).clamp(0.0, 1.0);

    let mut sup_host = 0.0f64;
    for i in 0..grid_points {
        let t = i as f64 / (grid_points - 1) as f64;
        sup_host = sup_host.max(bernstein_eval(s, t)?.abs());
    }

    let mut sup_parts = 0.0f64;
    for &(x, y) in cover.parts() {
        let frac = (y - x) / len;
        let pts = ((grid_points as f64 * frac).ceil() as usize).max(2);
        for i in 0..pts {
            let u = to_unit(x + (y - x) * i as f64 / (pts - 1) as f64);
            sup_parts = sup_parts.max(bernstein_eval(s, u)?.abs());
        }
    }

    let factor = remez_factor(cover, s.degree());
    let holds = sup_host <= factor * sup_parts + CHECK_TOL;
    Ok(RemezReport { sup_host, sup_parts, factor, holds })
}
