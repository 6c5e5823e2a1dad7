//! Softmax-attention forward computation and padding-stability bounds.
//!
//! At a fixed query position with informative logits `x_i` and value vectors
//! `v_i`, adding `m` pad tokens moves the attention output by at most
//! `2 C_V Z_pad / (Z_orig + Z_pad) <= 2 C_V m e^{x_pad,max} / Z_orig`, where
//! `C_V` caps the value norms and `Z` are the softmax masses. Given a
//! tolerance `eps < 2 C_V` and a softmax gap `Delta` below the dominant
//! informative token, any `m <= (eps / (2 C_V - eps)) e^Delta` is admissible.

use crate::approx::CHECK_TOL;
use crate::error::{Error, Result};

/// One attention scene: informative tokens plus padding tokens.
///
/// Pad value vectors are arbitrary vectors with norm at most the cap (the
/// adversarial case the bound's algebra covers), not forced to zero.
#[derive(Debug, Clone)]
pub struct AttentionScene {
    pub info_logits: Vec<f64>,
    pub info_values: Vec<Vec<f64>>,
    pub pad_logits: Vec<f64>,
    pub pad_values: Vec<Vec<f64>>,
    /// C_V: max value-vector norm over informative and pad tokens.
    value_cap: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl AttentionScene {
    pub fn new(
        info_logits: Vec<f64>,
        info_values: Vec<Vec<f64>>,
        pad_logits: Vec<f64>,
        pad_values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if info_logits.is_empty() {
            return Err(Error::invalid("need at least one informative token"));
        }
        if info_logits.len() != info_values.len() || pad_logits.len() != pad_values.len() {
            return Err(Error::invalid("logit and value lists must match in length"));
        }
        let d = info_values[0].len();
        if d == 0 {
            return Err(Error::invalid("value vectors need dimension >= 1"));
        }
        for v in info_values.iter().chain(&pad_values) {
            if v.len() != d {
                return Err(Error::invalid("value vectors must share a dimension"));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::non_finite("value coordinates must be finite"));
            }
        }
        if info_logits.iter().chain(&pad_logits).any(|x| !x.is_finite()) {
            return Err(Error::non_finite("logits must be finite"));
        }
        let value_cap = info_values
            .iter()
            .chain(&pad_values)
            .map(|v| norm(v))
            .fold(0.0, f64::max);
        Ok(AttentionScene { info_logits, info_values, pad_logits, pad_values, value_cap })
    }

    pub fn value_cap(&self) -> f64 {
        self.value_cap
    }

    pub fn num_pads(&self) -> usize {
        self.pad_logits.len()
    }

    pub fn value_dim(&self) -> usize {
        self.info_values[0].len()
    }
}

/// Softmax-weighted mean of the value vectors, exponentials max-shifted.
pub fn attention_out(logits: &[f64], values: &[Vec<f64>]) -> Result<Vec<f64>> {
    if logits.is_empty() || logits.len() != values.len() {
        return Err(Error::invalid("logits and values must be nonempty and matched"));
    }
    let d = values[0].len();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; d];
    let mut z = 0.0;
    for (x, v) in logits.iter().zip(values) {
        if v.len() != d {
            return Err(Error::invalid("value vectors must share a dimension"));
        }
        let w = (x - max).exp();
        z += w;
        for (o, c) in out.iter_mut().zip(v) {
            *o += w * c;
        }
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Ok(out)
}

/// Outputs, gap, and both stability bounds for one scene.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PaddingReport {
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub gap_norm: f64,
    /// 2 C_V Z_pad / (Z_orig + Z_pad).
    pub bound_exact: f64,
    /// 2 C_V m e^{x_pad,max} / Z_orig.
    pub bound_loose: f64,
    /// Softmax gap between the dominant informative token and the strongest
    /// pad token; +inf when there are no pads.
    pub softmax_gap: f64,
    pub holds: bool,
}

/// Compute the unpadded and padded outputs and check the bound chain
/// `gap <= bound_exact <= bound_loose`.
pub fn padding_bounds(scene: &AttentionScene) -> Result<PaddingReport> {
    let y = attention_out(&scene.info_logits, &scene.info_values)?;
    let m = scene.num_pads();
    let c_v = scene.value_cap();

    if m == 0 {
        return Ok(PaddingReport {
            y_prime: y.clone(),
            y,
            gap_norm: 0.0,
            bound_exact: 0.0,
            bound_loose: 0.0,
            softmax_gap: f64::INFINITY,
            holds: true,
        });
    }

    let all_logits: Vec<f64> = scene.info_logits.iter().chain(&scene.pad_logits).cloned().collect();
    let all_values: Vec<Vec<f64>> =
        scene.info_values.iter().chain(&scene.pad_values).cloned().collect();
    let y_prime = attention_out(&all_logits, &all_values)?;

    let gap_norm = y
        .iter()
        .zip(&y_prime)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    // Shift all masses by the global max so the ratios stay finite.
    let shift = all_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_orig: f64 = scene.info_logits.iter().map(|x| (x - shift).exp()).sum();
    let z_pad: f64 = scene.pad_logits.iter().map(|x| (x - shift).exp()).sum();
    let pad_max = scene.pad_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let info_max = scene.info_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let bound_exact = 2.0 * c_v * z_pad / (z_orig + z_pad);
    let bound_loose = 2.0 * c_v * m as f64 * (pad_max - shift).exp() / z_orig;

    Ok(PaddingReport {
        y,
        y_prime,
        gap_norm,
        bound_exact,
        bound_loose,
        softmax_gap: info_max - pad_max,
        holds: gap_norm <= bound_exact + CHECK_TOL,
    })
}

/// Largest admissible pad count `floor((eps / (2 C_V - eps)) e^delta_gap)`
/// guaranteeing a gap of at most eps when every pad logit sits delta_gap
/// below the dominant informative token.
pub fn max_pads(eps: f64, c_v: f64, delta_gap: f64) -> Result<u64> {
    if !(c_v > 0.0) {
        return Err(Error::domain("value cap must be positive"));
    }
    if !(eps > 0.0 && eps < 2.0 * c_v) {
        return Err(Error::domain(format!(
            "tolerance must lie in (0, 2 C_V) = (0, {}), got {eps}",
            2.0 * c_v
        )));
    }
    let raw = eps / (2.0 * c_v - eps) * delta_gap.exp();
    if raw >= u64::MAX as f64 {
        return Ok(u64::MAX);
    }
    Ok(raw.floor() as u64)
}
