//! Multivariate machinery for the per-demonstration-varying-instruction
//! regime: tensor-product Bernstein operators, Chebyshev amplification
//! across concentric balls, the Markov-brothers gradient bound, and the
//! assembled non-vanishing total bound.
//!
//! With k = N d instruction dimensions, a degree-n-per-axis tensor Bernstein
//! surrogate has total degree nk and approximation error
//! `eps_n <= 2 G R sqrt(d) N / sqrt(n)`. Moving from the inner ball of
//! radius r to the outer ball of radius R amplifies a degree-nk polynomial
//! by at most `T_{nk}(R/r) <= (2R/r)^{nk} = exp(C1 k n)`, `C1 = log(2R/r)`.
//! The total bound `exp(C1 k n)(beta_N e^{-alpha N} + eps_n) + eps_n` cannot
//! be driven to zero by any choice of n: killing eps_n needs n of order N^2,
//! which explodes the amplification.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::latent_task::TaskModel;

/// Exact-mode ceiling: (n+1)^k nodes with k <= 3, n <= 16 stays below ~5k.
pub const EXACT_MAX_DIMS: usize = 3;
pub const EXACT_MAX_DEGREE: usize = 16;

/// Geometry of the extended instruction domain: concentric balls of radii
/// r < R around the all-correct instruction sequence, total dimension
/// k = N d, and the amplification constant C1 = log(2R/r).
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionGeometry {
    pub d: usize,
    pub n_demos: usize,
    pub k: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub center: Vec<f64>,
    pub c1: f64,
}

impl InstructionGeometry {
    /// Build from the per-demonstration dimension, the demonstration count,
    /// the radii, and the correct instruction i_star (repeated N times to
    /// form the center).
    pub fn new(d: usize, n_demos: usize, r_inner: f64, r_outer: f64, i_star: &[f64]) -> Result<Self> {
        if d == 0 || n_demos == 0 {
            return Err(Error::invalid("need d >= 1 and N >= 1"));
        }
        if i_star.len() != d {
            return Err(Error::invalid("i_star must have the per-demonstration dimension"));
        }
        if !(r_inner > 0.0 && r_outer > r_inner && r_outer.is_finite()) {
            return Err(Error::invalid("radii must satisfy 0 < r < R"));
        }
        let mut center = Vec::with_capacity(d * n_demos);
        for _ in 0..n_demos {
            center.extend_from_slice(i_star);
        }
        Ok(InstructionGeometry {
            d,
            n_demos,
            k: d * n_demos,
            r_inner,
            r_outer,
            center,
            c1: (2.0 * r_outer / r_inner).ln(),
        })
    }
}

/// Tensor-product Bernstein surrogate on [0,1]^k with the full (n+1)^k node
/// grid; exact mode only.
#[derive(Debug, Clone)]
pub struct TensorBernstein {
    pub dims: usize,
    pub degree: usize,
    /// Row-major grid over multi-indices (j_1, ..., j_k), axis k fastest.
    pub node_values: Vec<f64>,
}

/// Sample h on the full node grid. Refuses instances beyond the exact-mode
/// ceiling; those belong to the Monte-Carlo estimator.
pub fn tensor_bernstein_fit(
    h: &dyn Fn(&[f64]) -> f64,
    dims: usize,
    degree: usize,
) -> Result<TensorBernstein> {
    if dims == 0 || degree == 0 {
        return Err(Error::domain("need k >= 1 and n >= 1"));
    }
    if dims > EXACT_MAX_DIMS || degree > EXACT_MAX_DEGREE {
        return Err(Error::domain(format!(
            "exact mode is capped at k <= {EXACT_MAX_DIMS}, n <= {EXACT_MAX_DEGREE}; \
             use mc_bernstein_eval for larger instances"
        )));
    }
    let side = degree + 1;
    let total = side.pow(dims as u32);
    let mut node_values = Vec::with_capacity(total);
    let mut point = vec![0.0; dims];
    for flat in 0..total {
        let mut rem = flat;
        for ax in (0..dims).rev() {
            point[ax] = (rem % side) as f64 / degree as f64;
            rem /= side;
        }
        let v = h(&point);
        if !v.is_finite() {
            return Err(Error::non_finite(format!("h returned {v} at grid node {flat}")));
        }
        node_values.push(v);
    }
    Ok(TensorBernstein { dims, degree, node_values })
}

/// Per-axis Bernstein weights by the multiplicative recurrence; fine at the
/// exact-mode degrees.
fn axis_weights(n: usize, x: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(n + 1);
    // C(n,j) x^j (1-x)^(n-j) built by ratio updates from j = 0.
    let mut cur = (1.0 - x).powi(n as i32);
    if x == 1.0 {
        return (0..=n).map(|j| if j == n { 1.0 } else { 0.0 }).collect();
    }
    let ratio = x / (1.0 - x);
    for j in 0..=n {
        w.push(cur);
        if j < n {
            cur *= ratio * (n - j) as f64 / (j + 1) as f64;
        }
    }
    w
}

/// Evaluate the tensor surrogate at x in [0,1]^k.
pub fn multivar_bernstein_eval(t: &TensorBernstein, x: &[f64]) -> Result<f64> {
    if x.len() != t.dims {
        return Err(Error::domain("point dimension does not match the surrogate"));
    }
    if x.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::domain("point must lie in the unit cube"));
    }
    let side = t.degree + 1;
    let weights: Vec<Vec<f64>> = x.iter().map(|&c| axis_weights(t.degree, c)).collect();
    let mut acc = 0.0;
    for (flat, v) in t.node_values.iter().enumerate() {
        let mut rem = flat;
        let mut w = 1.0;
        for ax in (0..t.dims).rev() {
            w *= weights[ax][rem % side];
            rem /= side;
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Monte-Carlo estimate of the tensor Bernstein value: the surrogate at x
/// equals E[h(S/n)] with S_j ~ Binomial(n, x_j) independently per axis.
/// Returns the sample mean and its standard error.
pub fn mc_bernstein_eval(
    h: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    degree: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if degree == 0 {
        return Err(Error::domain("need n >= 1"));
    }
    if samples < 100 {
        return Err(Error::domain("need at least 100 samples"));
    }
    if x.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::domain("point must lie in the unit cube"));
    }
    let dists: Vec<Binomial> = x
        .iter()
        .map(|&c| Binomial::new(degree as u64, c).map_err(|e| Error::domain(e.to_string())))
        .collect::<Result<_>>()?;
    let mut point = vec![0.0; x.len()];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        for (p, dist) in point.iter_mut().zip(&dists) {
            *p = dist.sample(rng) as f64 / degree as f64;
        }
        let v = h(&point);
        sum += v;
        sumsq += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sumsq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

/// Bernstein approximation error `2 G R sqrt(d) N / sqrt(n)` on the outer
/// ball (the Lipschitz constant 4 R G sqrt(N) of the pullback composed with
/// the binomial variance sqrt(k / 4n), k = N d).
pub fn eps_n(g: f64, r_outer: f64, d: usize, n_demos: usize, n: usize) -> f64 {
    assert!(g >= 0.0 && r_outer > 0.0 && d >= 1 && n_demos >= 1 && n >= 1);
    2.0 * g * r_outer * (d as f64).sqrt() * n_demos as f64 / (n as f64).sqrt()
}

/// Chebyshev amplification over concentric balls: the relaxed form
/// `(2R/r)^{nk} = exp(C1 k n)` and the exact extremal value `T_{nk}(R/r)`.
/// The loose form dominates the exact one everywhere; both overflow to +inf
/// (vacuous) rather than trapping.
pub fn cheb_amp(n: usize, k: usize, r_outer: f64, r_inner: f64) -> Result<(f64, f64)> {
    if !(r_inner > 0.0 && r_outer >= r_inner) {
        return Err(Error::domain("need R >= r > 0"));
    }
    if n == 0 || k == 0 {
        return Err(Error::domain("need n >= 1 and k >= 1"));
    }
    let m = (n as u128) * (k as u128);
    let x = r_outer / r_inner;
    let log_loose = (m as f64) * (2.0 * x).ln();
    let loose = if log_loose > 700.0 { f64::INFINITY } else { (2.0 * x).powf(m as f64) };
    Ok((loose, chebyshev_t(m, x)))
}

/// T_m(x) for x >= 1: exact recurrence for small m, the cosh closed form
/// once the recurrence would be slow (values there are astronomical anyway).
fn chebyshev_t(m: u128, x: f64) -> f64 {
    debug_assert!(x >= 1.0);
    if m <= 10_000 {
        let mut prev = 1.0f64;
        if m == 0 {
            return prev;
        }
        let mut cur = x;
        for _ in 1..m {
            (prev, cur) = (cur, 2.0 * x * cur - prev);
            if cur.is_infinite() {
                return f64::INFINITY;
            }
        }
        cur
    } else {
        let log_growth = (m as f64) * x.acosh();
        if log_growth > 700.0 {
            f64::INFINITY
        } else {
            (log_growth).cosh()
        }
    }
}

/// Markov-brothers gradient bound `4 m^2 / w_T * supnorm` for a total-degree
/// m polynomial on a convex body of diameter w_T.
pub fn markov_grad_bound(total_degree: usize, diameter: f64, supnorm: f64) -> f64 {
    assert!(diameter > 0.0 && supnorm >= 0.0);
    let m = total_degree as f64;
    4.0 * m * m / diameter * supnorm
}

/// Everything the assembled bound produces at one (N, n) cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Format6BoundReport {
    pub n_demos: usize,
    pub k: usize,
    pub degree: usize,
    pub eps_n: f64,
    /// exp(C1 k n).
    pub amplification: f64,
    pub beta_n: f64,
    pub alpha: f64,
    /// exp(C1 k n) (beta_N e^{-alpha N} + eps_n) + eps_n.
    pub total_bound: f64,
    /// (2 n^2 k^2 / R) exp(C1 k n) (beta_N e^{-alpha N} + eps_n) + delta_n.
    pub grad_bound: f64,
    pub delta_n: f64,
}

/// Envelope constant beta(N) tied to the concrete Bayesian model on the
/// format-6 domain: (|T|-1) max over wrong tasks of the prior ratio times
/// the instruction ratio at the all-correct center (N identical slots)
/// times e^{2 G sqrt(N) r}. The query-input ratio is 1 under uniform inputs.
pub fn beta_n_from_model(
    model: &TaskModel,
    t_star: usize,
    i_star: &[f64],
    r_inner: f64,
    n_demos: usize,
) -> Result<f64> {
    if t_star >= model.num_tasks() {
        return Err(Error::domain("task index out of range"));
    }
    let ll_star = model.instr_loglik(i_star, t_star)?;
    let mut max_log_a = f64::NEG_INFINITY;
    for t in 0..model.num_tasks() {
        if t == t_star {
            continue;
        }
        let log_prior = (model.prior()[t] / model.prior()[t_star]).ln();
        let log_instr = n_demos as f64 * (model.instr_loglik(i_star, t)? - ll_star);
        max_log_a = max_log_a.max(log_prior + log_instr);
    }
    let g = model.score_bound();
    let log_total = max_log_a + 2.0 * g * (n_demos as f64).sqrt() * r_inner;
    let a_max_n = if log_total > 700.0 { f64::INFINITY } else { log_total.exp() };
    Ok((model.num_tasks() - 1) as f64 * a_max_n)
}

/// Assemble the total and gradient bounds for one degree choice. The C1
/// approximation defect delta_n is an input: only its existence is ever
/// asserted, never a value.
pub fn format6_total_bound(
    geom: &InstructionGeometry,
    alpha: f64,
    beta_n: f64,
    g: f64,
    n: usize,
    delta_n: f64,
) -> Result<Format6BoundReport> {
    if n == 0 {
        return Err(Error::domain("need n >= 1"));
    }
    if !(alpha > 0.0) || beta_n < 0.0 || g < 0.0 || delta_n < 0.0 {
        return Err(Error::domain("need alpha > 0, beta_N >= 0, G >= 0, delta_n >= 0"));
    }
    let eps = eps_n(g, geom.r_outer, geom.d, geom.n_demos, n);
    let log_amp = geom.c1 * geom.k as f64 * n as f64;
    let amplification = if log_amp > 700.0 { f64::INFINITY } else { log_amp.exp() };
    let decay = if alpha.is_infinite() { 0.0 } else { beta_n * (-alpha * geom.n_demos as f64).exp() };
    let inner = decay + eps;
    let total_bound = amplification * inner + eps;
    let m = n as f64 * geom.k as f64;
    let grad_bound = 2.0 * m * m / geom.r_outer * amplification.min(f64::MAX) * inner + delta_n;
    Ok(Format6BoundReport {
        n_demos: geom.n_demos,
        k: geom.k,
        degree: n,
        eps_n: eps,
        amplification,
        beta_n,
        alpha,
        total_bound,
        grad_bound,
        delta_n,
    })
}

/// One row of the non-vanishing scan: the best degree found for a given N.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScanRow {
    pub n_demos: usize,
    pub k: usize,
    pub best_degree: usize,
    pub min_total: f64,
    pub eps_at_best: f64,
    pub amplification_at_best: f64,
    pub beta_n: f64,
    /// The fixed-domain envelope beta e^{-alpha N} the varying-instruction
    /// bound is contrasted against.
    pub envelope_formats_1_5: f64,
}

/// Scan min-over-n of the total bound per N and check the non-vanishing
/// contract: no per-N minimum falls below the smallest-N minimum by more
/// than 1%.
pub fn non_vanishing_scan(
    geoms: &[InstructionGeometry],
    alpha: f64,
    beta_of_n: &dyn Fn(usize) -> f64,
    g: f64,
    degrees_of_n: &dyn Fn(usize) -> Vec<usize>,
    envelope_beta15: f64,
) -> Result<(Vec<ScanRow>, bool)> {
    if geoms.is_empty() {
        return Err(Error::domain("need at least one geometry"));
    }
    let mut rows = Vec::with_capacity(geoms.len());
    for geom in geoms {
        let beta_n = beta_of_n(geom.n_demos);
        let degrees = degrees_of_n(geom.n_demos);
        if degrees.is_empty() {
            return Err(Error::domain("degree grid must be nonempty"));
        }
        let mut best: Option<Format6BoundReport> = None;
        for &n in &degrees {
            let rep = format6_total_bound(geom, alpha, beta_n, g, n, 0.0)?;
            best = Some(match best {
                None => rep,
                Some(b) if rep.total_bound < b.total_bound => rep,
                Some(b) => b,
            });
        }
        let b = best.unwrap();
        rows.push(ScanRow {
            n_demos: geom.n_demos,
            k: geom.k,
            best_degree: b.degree,
            min_total: b.total_bound,
            eps_at_best: b.eps_n,
            amplification_at_best: b.amplification,
            beta_n,
            envelope_formats_1_5: envelope_beta15 * (-alpha * geom.n_demos as f64).exp(),
        });
    }
    let first = rows[0].min_total;
    let holds = rows.iter().all(|r| r.min_total >= 0.99 * first);
    Ok((rows, holds))
}

/// Gradient-bound corollary value for a caller-supplied C1 defect delta_n.
pub fn corollary6_grad_bound(
    geom: &InstructionGeometry,
    alpha: f64,
    beta_n: f64,
    g: f64,
    n: usize,
    delta_n: f64,
) -> Result<f64> {
    Ok(format6_total_bound(geom, alpha, beta_n, g, n, delta_n)?.grad_bound)
}
