//! Exact posterior and predictive computation, the odds decomposition into
//! demonstration and non-demonstration ratios, and instruction-space
//! gradients with finite-difference cross-checks.

use crate::error::{Error, Result};
use crate::latent_task::log_sum_exp;
use crate::latent_task::model::{dist, TaskModel};
use crate::latent_task::prompt::PromptSpec;

/// Central finite-difference step for the gradient cross-check.
const FD_STEP: f64 = 1e-5;

/// Posterior, predictive, and the per-wrong-task odds factors.
///
/// `log_a[t]` is the non-demonstration ratio (prior, instruction, query
/// input) and `log_b[t]` the demonstration likelihood ratio, both against
/// the target task; the entries at the target itself are zero.
#[derive(Debug, Clone)]
pub struct PosteriorReport {
    pub target_task: usize,
    pub posterior: Vec<f64>,
    pub log_a: Vec<f64>,
    pub log_b: Vec<f64>,
    pub predictive: Vec<f64>,
}

impl PosteriorReport {
    /// Second code path: posterior rebuilt from {A_t B_t} through the
    /// normalization identity p(t*|z) = 1 / (1 + sum A_t B_t).
    pub fn reconstructed_posterior(&self) -> Vec<f64> {
        let t_star = self.target_task;
        let mut odds: Vec<f64> = Vec::with_capacity(self.log_a.len());
        odds.push(0.0);
        for t in 0..self.log_a.len() {
            if t != t_star {
                odds.push(self.log_a[t] + self.log_b[t]);
            }
        }
        let denom = log_sum_exp(&odds);
        (0..self.log_a.len())
            .map(|t| {
                if t == t_star {
                    (-denom).exp()
                } else {
                    (self.log_a[t] + self.log_b[t] - denom).exp()
                }
            })
            .collect()
    }

    /// Max absolute disagreement between the two posterior code paths.
    pub fn reconstruction_gap(&self) -> f64 {
        self.posterior
            .iter()
            .zip(self.reconstructed_posterior())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-task instruction log-likelihood under the prompt's format: a single
/// factor for formats 1-4 (zero for the pad sentinel), a product over the
/// n+1 slots for formats 5-6.
fn instr_loglik_total(model: &TaskModel, prompt: &PromptSpec, t: usize) -> Result<f64> {
    let mut acc = 0.0;
    for i in &prompt.instructions {
        acc += model.instr_loglik(i, t)?;
    }
    Ok(acc)
}

/// Exact posterior over tasks and the posterior predictive for the query.
pub fn posterior(model: &TaskModel, prompt: &PromptSpec) -> Result<PosteriorReport> {
    prompt.validate(model)?;
    let t_star = prompt.target_task;
    let tn = model.num_tasks();

    let mut instr_ll = Vec::with_capacity(tn);
    let mut demo_ll = Vec::with_capacity(tn);
    let mut ll = Vec::with_capacity(tn);
    for t in 0..tn {
        let i_ll = instr_loglik_total(model, prompt, t)?;
        let mut d_ll = 0.0;
        for &pair in &prompt.demos {
            d_ll += model.demo_loglik(pair, t)?;
        }
        instr_ll.push(i_ll);
        demo_ll.push(d_ll);
        // Query carries only its (task-independent) input probability.
        ll.push(model.prior()[t].ln() + i_ll + model.input_loglik() + d_ll);
    }

    let norm = log_sum_exp(&ll);
    if norm == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "degenerate evidence: every task assigns zero probability to the prompt",
        ));
    }
    let post: Vec<f64> = ll.iter().map(|l| (l - norm).exp()).collect();

    // Odds factors against the target; the query-input ratio is 1 under the
    // uniform input distribution, so it drops out of log_a.
    let mut log_a = vec![0.0; tn];
    let mut log_b = vec![0.0; tn];
    for t in 0..tn {
        if t == t_star {
            continue;
        }
        log_a[t] = (model.prior()[t] / model.prior()[t_star]).ln() + (instr_ll[t] - instr_ll[t_star]);
        let mut b = 0.0;
        for &pair in &prompt.demos {
            let lt = model.demo_loglik(pair, t)?;
            let ls = model.demo_loglik(pair, t_star)?;
            b += if lt == ls { 0.0 } else { lt - ls };
        }
        log_b[t] = b;
    }

    let mut predictive = vec![0.0; model.num_outputs()];
    for (t, p) in post.iter().enumerate() {
        for (y, pv) in predictive.iter_mut().enumerate() {
            *pv += p * model.channel_loglik(prompt.query, y, t).exp();
        }
    }

    Ok(PosteriorReport { target_task: t_star, posterior: post, log_a, log_b, predictive })
}

/// Instruction-space gradient of the posterior predictive at the target's
/// modal query output, with a central finite-difference cross-check.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    /// Gradient blocks flattened in slot order.
    pub grad_analytic: Vec<f64>,
    pub grad_fd: Vec<f64>,
    pub norm_analytic: f64,
    pub norm_fd: f64,
    pub rel_err: f64,
    /// Set when some instruction sits on or outside the domain boundary,
    /// where the finite-difference step is unreliable.
    pub boundary_warning: bool,
}

/// The query output with maximal probability under the target task (the
/// mapped output, since eta < 1/2).
pub fn modal_output(model: &TaskModel, prompt: &PromptSpec) -> usize {
    model.map(prompt.target_task, prompt.query)
}

/// Analytic instruction-space gradient of the predictive at the target's
/// modal output, assembled block-per-instruction-slot from the softmax
/// identity `grad p(t|z) = p(t|z) (score_t - sum_s p(s|z) score_s)` chained
/// through `grad p(y|z) = sum_t p(y|x_query,t) grad p(t|z)`.
pub fn instruction_gradient_analytic(model: &TaskModel, prompt: &PromptSpec) -> Result<Vec<f64>> {
    if prompt.instructions.is_empty() {
        return Err(Error::domain("prompt carries no instruction variables"));
    }
    let report = posterior(model, prompt)?;
    let y_sel = modal_output(model, prompt);
    let tn = model.num_tasks();
    let d = model.instr_dim();
    let slots = prompt.instructions.len();

    let chan: Vec<f64> = (0..tn)
        .map(|t| model.channel_loglik(prompt.query, y_sel, t).exp())
        .collect();

    let mut grad = vec![0.0; slots * d];
    for (s, i_s) in prompt.instructions.iter().enumerate() {
        let scores: Vec<Vec<f64>> = (0..tn).map(|t| model.instr_score(i_s, t)).collect();
        let mut mean_score = vec![0.0; d];
        for (t, sc) in scores.iter().enumerate() {
            for (m, g) in mean_score.iter_mut().zip(sc) {
                *m += report.posterior[t] * g;
            }
        }
        for t in 0..tn {
            let w = chan[t] * report.posterior[t];
            for j in 0..d {
                grad[s * d + j] += w * (scores[t][j] - mean_score[j]);
            }
        }
    }
    Ok(grad)
}

/// The analytic gradient plus a central finite-difference cross-check of
/// the direct posterior path.
pub fn instruction_gradient(model: &TaskModel, prompt: &PromptSpec) -> Result<SensitivityReport> {
    let grad = instruction_gradient_analytic(model, prompt)?;
    let y_sel = modal_output(model, prompt);
    let d = model.instr_dim();
    let slots = prompt.instructions.len();

    // Central finite differences (five-point stencil, O(h^4) truncation)
    // through the full posterior computation.
    let mut grad_fd = vec![0.0; slots * d];
    let mut perturbed = prompt.clone();
    for s in 0..slots {
        for j in 0..d {
            let orig = prompt.instructions[s][j];
            let mut eval = |x: f64| -> Result<f64> {
                perturbed.instructions[s][j] = x;
                Ok(posterior(model, &perturbed)?.predictive[y_sel])
            };
            let p1 = eval(orig + FD_STEP)?;
            let m1 = eval(orig - FD_STEP)?;
            let p2 = eval(orig + 2.0 * FD_STEP)?;
            let m2 = eval(orig - 2.0 * FD_STEP)?;
            perturbed.instructions[s][j] = orig;
            grad_fd[s * d + j] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * FD_STEP);
        }
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_analytic = norm(&grad);
    let norm_fd = norm(&grad_fd);
    let diff = grad
        .iter()
        .zip(&grad_fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = norm_analytic.max(norm_fd);
    let rel_err = if denom == 0.0 { 0.0 } else { diff / denom };

    let c = model.centroid();
    let boundary_warning = prompt
        .instructions
        .iter()
        .any(|i| dist(i, &c) >= model.instr_domain_radius() - 10.0 * FD_STEP);

    Ok(SensitivityReport {
        grad_analytic: grad,
        grad_fd,
        norm_analytic,
        norm_fd,
        rel_err,
        boundary_warning,
    })
}

/// Clip every instruction of a prompt into the interior of the domain ball;
/// used by audit campaigns that must evaluate sensitivity inside the compact
/// domain the score bound G is computed over.
pub fn clip_instructions_to_domain(model: &TaskModel, prompt: &PromptSpec, margin: f64) -> PromptSpec {
    let c = model.centroid();
    let r_max = (model.instr_domain_radius() - margin).max(0.0);
    let mut clipped = prompt.clone();
    for i in clipped.instructions.iter_mut() {
        let r = dist(i, &c);
        if r > r_max && r > 0.0 {
            let scale = r_max / r;
            for (x, cx) in i.iter_mut().zip(&c) {
                *x = cx + (*x - cx) * scale;
            }
        }
    }
    clipped
}
