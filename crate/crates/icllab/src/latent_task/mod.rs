//! Bayesian latent-task simulator: prompt formats 1-6, exact posterior and
//! predictive computation, decay-rate constants, instruction-sensitivity
//! gradients, and Monte-Carlo decay experiments.
//!
//! Data are generated from a finite latent task t with strictly positive
//! prior. Inputs are uniform on a finite alphabet, outputs pass through a
//! symmetric noise channel around the task mapping `f_t`, and instructions
//! are isotropic Gaussians with task-dependent means. The posterior over
//! tasks factorizes into a demonstration likelihood ratio `B_t` (decaying
//! exponentially at rate `alpha = min KL / 2`) and a non-demonstration ratio
//! `A_t` (uniformly bounded on the compact instruction domain), which drives
//! every decay statement audited here.

mod experiments;
mod model;
mod posterior;
mod prompt;

pub use experiments::{
    decay_experiment, expected_stability, DecayCurve, StabilityReport,
};
pub use model::TaskModel;
pub use posterior::{
    clip_instructions_to_domain, instruction_gradient, instruction_gradient_analytic,
    modal_output, posterior, PosteriorReport, SensitivityReport,
};
pub use prompt::{resample_instructions, sample_prompt, PromptFormat, PromptSpec, PromptVariant};

/// Numerically stable log(sum(exp(xs))) with a max shift.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
