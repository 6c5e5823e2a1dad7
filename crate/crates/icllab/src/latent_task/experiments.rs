//! Monte-Carlo decay and stability experiments over the latent-task model.

use crate::error::{Error, Result};
use crate::latent_task::model::TaskModel;
use crate::latent_task::posterior::{modal_output, posterior};
use crate::latent_task::prompt::{
    resample_instructions, sample_prompt, PromptFormat, PromptSpec, PromptVariant,
};
use crate::rng::Streams;

/// Envelope beta * exp(-alpha N), with the infinite-rate regime (eta = 0,
/// disjoint supports) collapsing to zero for N >= 1.
pub fn decay_envelope(alpha: f64, beta: f64, n: usize) -> f64 {
    if alpha.is_infinite() {
        if n == 0 {
            beta
        } else {
            0.0
        }
    } else {
        beta * (-alpha * n as f64).exp()
    }
}

/// Summary of one decay experiment across demonstration counts.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    pub format: PromptFormat,
    pub n_values: Vec<usize>,
    /// Median over trials of |p(y|z) - p(y|x_query, t_star)| at the modal y.
    pub median_gap: Vec<f64>,
    pub max_gap: Vec<f64>,
    /// Secondary statistic: median total-variation distance to the target
    /// predictive.
    pub median_tv: Vec<f64>,
    /// Theoretical rate: half the minimal pairwise KL from the target.
    pub alpha: f64,
    /// Envelope constant (|T| - 1) A_max at the centroid reference.
    pub beta: f64,
    /// Smallest N from which the envelope dominates the max statistic for
    /// all larger N in the list; None when never reached.
    pub n0: Option<usize>,
    /// Log-linear slope fitted to the median curve.
    pub fitted_slope: Option<f64>,
    pub trials: usize,
    /// Fewer than 30 trials is statistically underpowered.
    pub low_power: bool,
}

impl DecayCurve {
    pub fn envelope(&self, n: usize) -> f64 {
        decay_envelope(self.alpha, self.beta, n)
    }
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Least-squares slope of ln(y) against n over entries with y > 0.
fn log_linear_slope(ns: &[usize], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 1e-300)
        .map(|(&n, &y)| (n as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((m * sxy - sx * sy) / denom)
}

/// Run `trials` independent prompts per demonstration count and summarize
/// the predictive gap to the target task. Each (N, trial) cell draws from
/// its own counter-derived stream, so the aggregate is independent of
/// execution order.
pub fn decay_experiment(
    model: &TaskModel,
    format: PromptFormat,
    variant: PromptVariant,
    t_star: usize,
    n_values: &[usize],
    trials: usize,
    streams: &Streams,
) -> Result<DecayCurve> {
    if n_values.is_empty() || trials == 0 {
        return Err(Error::domain("need at least one N and one trial"));
    }
    if n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("N values must be strictly increasing"));
    }

    let alpha = model.alpha_rate(t_star);
    let beta = (model.num_tasks() - 1) as f64 * model.a_max(t_star, &model.centroid())?;

    let mut median_gap = Vec::with_capacity(n_values.len());
    let mut max_gap = Vec::with_capacity(n_values.len());
    let mut median_tv = Vec::with_capacity(n_values.len());

    for &n in n_values {
        let scope = streams.child(&format!("N{n}"));
        let mut gaps = Vec::with_capacity(trials);
        let mut tvs = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut rng = scope.rng(trial as u64);
            let prompt = sample_prompt(model, t_star, format, n, &mut rng, variant)?;
            let rep = posterior(model, &prompt)?;
            let y = modal_output(model, &prompt);
            let target_py = model.channel_loglik(prompt.query, y, t_star).exp();
            gaps.push((rep.predictive[y] - target_py).abs());
            let tv = 0.5
                * (0..model.num_outputs())
                    .map(|yy| {
                        (rep.predictive[yy] - model.channel_loglik(prompt.query, yy, t_star).exp()).abs()
                    })
                    .sum::<f64>();
            tvs.push(tv);
        }
        max_gap.push(gaps.iter().cloned().fold(0.0, f64::max));
        median_gap.push(median(&mut gaps));
        median_tv.push(median(&mut tvs));
    }

    // First N from which the envelope dominates every larger tested N.
    let mut n0 = None;
    for (i, &n) in n_values.iter().enumerate() {
        let dominated = (i..n_values.len())
            .all(|j| max_gap[j] <= decay_envelope(alpha, beta, n_values[j]) + crate::approx::CHECK_TOL);
        if dominated {
            n0 = Some(n);
            break;
        }
    }

    Ok(DecayCurve {
        format,
        n_values: n_values.to_vec(),
        fitted_slope: log_linear_slope(n_values, &median_gap),
        median_gap,
        max_gap,
        median_tv,
        alpha,
        beta,
        n0,
        trials,
        low_power: trials < 30,
    })
}

/// Expected-stability audit of a log-space perturbed predictor.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub eps_log: f64,
    pub n_demos: usize,
    pub trials: usize,
    /// Measured E |q_theta(z(I)) - q_theta(z(I'))| over instruction redraws.
    pub measured_gap: f64,
    pub measured_std_err: f64,
    /// Measured E |q_theta - q_star|.
    pub eps_n: f64,
    /// Demonstrations effect 2 beta exp(-alpha N).
    pub decay_term: f64,
    /// decay_term + 2 eps_n.
    pub total: f64,
    pub positivity_floor: f64,
    /// Set when the floor sits at or above an observed predictive value, so
    /// clamping distorts the predictor.
    pub clamp_warning: bool,
    pub holds: bool,
}

/// Deterministic bounded log-space perturbation of magnitude <= eps_log;
/// depends on the prompt, so instruction redraws move it adversarially.
fn log_perturbation(prompt: &PromptSpec, eps_log: f64) -> f64 {
    let mut s = 0.37 * prompt.query as f64;
    for (si, v) in prompt.instructions.iter().enumerate() {
        for (j, c) in v.iter().enumerate() {
            s += c * (1.0 + 0.1 * si as f64 + 0.01 * j as f64);
        }
    }
    eps_log * s.sin()
}

/// Build q_theta = clamp(exp(log q_star + u), delta, 1) and measure the
/// expected predictive gap across instruction redraws against the
/// decomposition 2 beta e^{-alpha N} + 2 eps_N.
pub fn expected_stability(
    model: &TaskModel,
    format: PromptFormat,
    n_demos: usize,
    trials: usize,
    eps_log: f64,
    delta: f64,
    streams: &Streams,
) -> Result<StabilityReport> {
    if eps_log < 0.0 {
        return Err(Error::domain("eps_log must be nonnegative"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("positivity floor delta must lie in (0, 1)"));
    }
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let t_star = 0;
    let alpha = model.alpha_rate(t_star);
    let beta = (model.num_tasks() - 1) as f64 * model.a_max(t_star, &model.centroid())?;

    let q_theta = |prompt: &PromptSpec, q_star: f64| -> f64 {
        (q_star.ln() + log_perturbation(prompt, eps_log)).exp().clamp(delta, 1.0)
    };

    let mut gaps = Vec::with_capacity(trials);
    let mut eps_acc = 0.0;
    let mut q_star_min = f64::INFINITY;
    for trial in 0..trials {
        let mut rng = streams.rng(trial as u64);
        let z = sample_prompt(model, t_star, format, n_demos, &mut rng, PromptVariant::Standard)?;
        let z_prime = resample_instructions(model, &z, &mut rng);
        let y = modal_output(model, &z);
        let q_star_z = posterior(model, &z)?.predictive[y];
        let q_star_zp = posterior(model, &z_prime)?.predictive[y];
        q_star_min = q_star_min.min(q_star_z).min(q_star_zp);
        let qa = q_theta(&z, q_star_z);
        let qb = q_theta(&z_prime, q_star_zp);
        gaps.push((qa - qb).abs());
        eps_acc += (qa - q_star_z).abs() + (qb - q_star_zp).abs();
    }

    let m = trials as f64;
    let measured_gap = gaps.iter().sum::<f64>() / m;
    let var = gaps.iter().map(|g| (g - measured_gap) * (g - measured_gap)).sum::<f64>()
        / (m - 1.0).max(1.0);
    let measured_std_err = (var / m).sqrt();
    let eps_n = eps_acc / (2.0 * m);
    let decay_term = 2.0 * decay_envelope(alpha, beta, n_demos);
    let total = decay_term + 2.0 * eps_n;
    let holds = measured_gap <= total + 3.0 * measured_std_err + crate::approx::CHECK_TOL;

    Ok(StabilityReport {
        eps_log,
        n_demos,
        trials,
        measured_gap,
        measured_std_err,
        eps_n,
        decay_term,
        total,
        positivity_floor: delta,
        clamp_warning: delta >= q_star_min,
        holds,
    })
}
