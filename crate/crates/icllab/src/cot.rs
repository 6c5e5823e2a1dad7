//! Multi-step error-propagation recursion and the composed generalization
//! bound, with rollout audits on synthetic update maps.
//!
//! A K-step chain propagates divergence between the model and oracle
//! rollouts as `Delta_{k+1} <= beta_k eps(z^(k)) + alpha_k Delta_k` with
//! `Delta_0 = 0`; iterating gives
//! `Delta_{K-1} <= sum_m (prod_{j>m} alpha_j) beta_m eps_m`, and the final
//! error obeys `eps(z^(K-1)) <= R_{K-1} + L*_{K-1} Delta_{K-1}`. The
//! generalization form substitutes `eps_m <= C_m e^{L_(m)^2} sup_m`.

use crate::approx::CHECK_TOL;
use crate::error::{Error, Result};

/// Per-step propagation constants and per-step generalization factors for a
/// K-step chain. `alpha`, `beta`, and `oracle_lipschitz` have K-1 entries
/// (transitions 0..K-2; `oracle_lipschitz[k]` bounds the oracle at step
/// k+1, and only the last entry enters the final bound). The generalization
/// lists `per_step_c`, `per_step_l`, `per_step_sup` also carry K-1 entries,
/// one per substituted step error.
#[derive(Debug, Clone, PartialEq)]
pub struct CoTChainSpec {
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub oracle_lipschitz: Vec<f64>,
    pub per_step_c: Vec<f64>,
    pub per_step_l: Vec<f64>,
    pub per_step_sup: Vec<f64>,
}

impl CoTChainSpec {
    /// Chain with propagation constants only; the generalization factors
    /// default to the neutral C=1, L=0, sup=0.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, oracle_lipschitz: Vec<f64>) -> Result<Self> {
        let k1 = alpha.len();
        let spec = CoTChainSpec {
            steps: k1 + 1,
            alpha,
            beta,
            oracle_lipschitz,
            per_step_c: vec![1.0; k1],
            per_step_l: vec![0.0; k1],
            per_step_sup: vec![0.0; k1],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_generalization(
        mut self,
        per_step_c: Vec<f64>,
        per_step_l: Vec<f64>,
        per_step_sup: Vec<f64>,
    ) -> Result<Self> {
        self.per_step_c = per_step_c;
        self.per_step_l = per_step_l;
        self.per_step_sup = per_step_sup;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let k1 = self
            .steps
            .checked_sub(1)
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::invalid("a chain needs K >= 2 steps"))?;
        for (name, list) in [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("oracle_lipschitz", &self.oracle_lipschitz),
            ("per_step_c", &self.per_step_c),
            ("per_step_l", &self.per_step_l),
            ("per_step_sup", &self.per_step_sup),
        ] {
            if list.len() != k1 {
                return Err(Error::invalid(format!(
                    "{name} must have K-1 = {k1} entries, got {}",
                    list.len()
                )));
            }
            if list.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(format!("{name} entries must be finite and >= 0")));
            }
        }
        if self.per_step_c.iter().any(|&c| c < 1.0) {
            return Err(Error::invalid("per_step_c entries must be >= 1"));
        }
        Ok(())
    }

    /// The oracle constant consumed by the final bound.
    pub fn final_oracle_lipschitz(&self) -> f64 {
        *self.oracle_lipschitz.last().expect("validated K >= 2")
    }
}

/// Iterated recursion value `sum_{m=0}^{K-2} (prod_{j=m+1}^{K-2} alpha_j)
/// beta_m eps_m`, the empty product being 1.
pub fn delta_recursion(spec: &CoTChainSpec, step_errors: &[f64]) -> Result<f64> {
    spec.validate()?;
    if step_errors.len() != spec.steps - 1 {
        return Err(Error::invalid(format!(
            "need K-1 = {} step errors, got {}",
            spec.steps - 1,
            step_errors.len()
        )));
    }
    if step_errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::invalid("step errors must be finite and >= 0"));
    }
    let k1 = spec.steps - 1;
    let mut total = 0.0;
    for m in 0..k1 {
        let tail: f64 = spec.alpha[m + 1..k1].iter().product();
        total += tail * spec.beta[m] * step_errors[m];
    }
    Ok(total)
}

/// Final-step bound `R_final + L*_{K-1} * delta_recursion`.
pub fn final_bound(spec: &CoTChainSpec, step_errors: &[f64], r_final: f64) -> Result<f64> {
    if !r_final.is_finite() || r_final < 0.0 {
        return Err(Error::invalid("R_final must be finite and >= 0"));
    }
    Ok(r_final + spec.final_oracle_lipschitz() * delta_recursion(spec, step_errors)?)
}

/// Generalization form: each step error replaced by its per-step bound
/// `C_m e^{L_(m)^2} sup_m`. Exponentials run through the log with the
/// vacuous-overflow convention (+inf, never a panic).
pub fn final_bound_gen(spec: &CoTChainSpec, r_final: f64) -> Result<f64> {
    spec.validate()?;
    if !r_final.is_finite() || r_final < 0.0 {
        return Err(Error::invalid("R_final must be finite and >= 0"));
    }
    let k1 = spec.steps - 1;
    let mut total = r_final;
    let l_star = spec.final_oracle_lipschitz();
    for m in 0..k1 {
        let tail: f64 = spec.alpha[m + 1..k1].iter().product();
        let log_amp = spec.per_step_l[m] * spec.per_step_l[m];
        let amp = if log_amp > 700.0 { f64::INFINITY } else { log_amp.exp() };
        total += l_star * tail * spec.beta[m] * spec.per_step_c[m] * amp * spec.per_step_sup[m];
    }
    Ok(total)
}

/// One model-vs-oracle rollout: states, divergences, and per-step errors.
#[derive(Debug, Clone)]
pub struct RolloutPair {
    pub model_states: Vec<Vec<f64>>,
    pub oracle_states: Vec<Vec<f64>>,
    /// Delta_k = ||z^(k) - z*^(k)||, Delta_0 = 0.
    pub deltas: Vec<f64>,
    /// eps(z^(k)) = |M(z^(k)) - M*(z^(k))| along the model rollout.
    pub step_errors: Vec<f64>,
    /// R_{K-1} = |M(z^(K-1)) - M*(z*^(K-1))|.
    pub r_final: f64,
    /// Final-step error |M(z^(K-1)) - M*(z^(K-1))| at the model state.
    pub empirical_error: f64,
}

/// Bound audit for one rollout.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoTBoundReport {
    pub r_final: f64,
    pub delta_bound: f64,
    pub final_bound: f64,
    pub final_bound_gen: f64,
    pub empirical_error: f64,
    pub holds: bool,
}

/// Run the model and oracle rollouts side by side for K steps from a shared
/// initial state. `update` appends an answer to a state; both predictors map
/// states to scalars.
pub fn rollout(
    update: &dyn Fn(&[f64], f64) -> Vec<f64>,
    model: &dyn Fn(&[f64]) -> f64,
    oracle: &dyn Fn(&[f64]) -> f64,
    z0: &[f64],
    steps: usize,
) -> Result<RolloutPair> {
    if steps < 2 {
        return Err(Error::domain("need K >= 2 steps"));
    }
    if z0.iter().any(|c| !c.is_finite()) {
        return Err(Error::non_finite("initial state must be finite"));
    }
    let mut model_states = vec![z0.to_vec()];
    let mut oracle_states = vec![z0.to_vec()];
    let mut deltas = vec![0.0];
    let mut step_errors = Vec::with_capacity(steps - 1);

    for k in 0..steps - 1 {
        let zm = &model_states[k];
        let zo = &oracle_states[k];
        let am = model(zm);
        let ao_at_model = oracle(zm);
        let ao = oracle(zo);
        if !(am.is_finite() && ao.is_finite() && ao_at_model.is_finite()) {
            return Err(Error::non_finite(format!("predictor output at step {k}")));
        }
        step_errors.push((am - ao_at_model).abs());
        let next_m = update(zm, am);
        let next_o = update(zo, ao);
        if next_m.iter().chain(&next_o).any(|c| !c.is_finite()) {
            return Err(Error::non_finite(format!("state after step {k}")));
        }
        if next_m.len() != next_o.len() {
            return Err(Error::invalid("update must preserve a common dimension"));
        }
        deltas.push(
            next_m
                .iter()
                .zip(&next_o)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        );
        model_states.push(next_m);
        oracle_states.push(next_o);
    }

    let zm_last = &model_states[steps - 1];
    let zo_last = &oracle_states[steps - 1];
    let r_final = (model(zm_last) - oracle(zo_last)).abs();
    let empirical_error = (model(zm_last) - oracle(zm_last)).abs();
    Ok(RolloutPair {
        model_states,
        oracle_states,
        deltas,
        step_errors,
        r_final,
        empirical_error,
    })
}

/// Audit one rollout against a chain spec with constructed constants.
pub fn audit_rollout(spec: &CoTChainSpec, pair: &RolloutPair) -> Result<CoTBoundReport> {
    let delta_bound = delta_recursion(spec, &pair.step_errors)?;
    let fb = final_bound(spec, &pair.step_errors, pair.r_final)?;
    let fbg = final_bound_gen(spec, pair.r_final)?;
    Ok(CoTBoundReport {
        r_final: pair.r_final,
        delta_bound,
        final_bound: fb,
        final_bound_gen: fbg,
        empirical_error: pair.empirical_error,
        holds: pair.empirical_error <= fb + CHECK_TOL,
    })
}

/// Empirical lower-bound estimates of the propagation constants of an update
/// map: `beta_hat` probes sensitivity to the appended answer, `alpha_hat`
/// probes sensitivity to the state with the oracle riding along. Probes run
/// along coordinate axes at the given radius; true sup constants can only be
/// larger.
pub fn estimate_step_constants(
    update: &dyn Fn(&[f64], f64) -> Vec<f64>,
    oracle: &dyn Fn(&[f64]) -> f64,
    sample_states: &[Vec<f64>],
    probe_radius: f64,
) -> Result<(f64, f64)> {
    if sample_states.is_empty() {
        return Err(Error::domain("need at least one sample state"));
    }
    if !(probe_radius > 0.0 && probe_radius.is_finite()) {
        return Err(Error::domain("probe radius must be positive"));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };

    let mut beta_hat = 0.0f64;
    let mut alpha_hat = 0.0f64;
    for z in sample_states {
        let a = oracle(z);
        let base_b = update(z, a);
        let bumped = update(z, a + probe_radius);
        beta_hat = beta_hat.max(norm(&diff(&bumped, &base_b)) / probe_radius);

        let base_a = update(z, oracle(z));
        for j in 0..z.len() {
            let mut zp = z.clone();
            zp[j] += probe_radius;
            let moved = update(&zp, oracle(&zp));
            alpha_hat = alpha_hat.max(norm(&diff(&moved, &base_a)) / probe_radius);
        }
    }
    Ok((alpha_hat, beta_hat))
}

/// Write the answer into a fixed trailing slot (zero until written); keeps
/// every rollout state in one metric space.
pub fn append_update(slot: usize) -> impl Fn(&[f64], f64) -> Vec<f64> {
    move |z: &[f64], a: f64| {
        let mut out = z.to_vec();
        out[slot] = a;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn recursion_hand_values() {
        // K=3, alpha=(1,1), beta=(1,1), eps=(0.1,0.2) -> 0.3.
        let spec = CoTChainSpec::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 2.0]).unwrap();
        approx(delta_recursion(&spec, &[0.1, 0.2]).unwrap(), 0.3, 1e-15);
        approx(delta_recursion(&spec, &[0.0, 0.0]).unwrap(), 0.0, 1e-15);
        // K=2 single-term recursion: empty product = 1.
        let spec2 = CoTChainSpec::new(vec![0.7], vec![2.0], vec![1.0]).unwrap();
        approx(delta_recursion(&spec2, &[0.1]).unwrap(), 0.2, 1e-15);
    }

    #[test]
    fn recursion_rejects_bad_input() {
        let spec = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert!(delta_recursion(&spec, &[0.1, 0.2]).is_err());
        assert!(delta_recursion(&spec, &[-0.1]).is_err());
        assert!(CoTChainSpec::new(vec![], vec![], vec![]).is_err());
        assert!(CoTChainSpec::new(vec![-1.0], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn final_bound_hand_values() {
        let spec = CoTChainSpec::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        approx(final_bound(&spec, &[0.1, 0.2], 0.05).unwrap(), 0.65, 1e-15);
        // Zero-Lipschitz oracle ignores rollout divergence.
        let spec0 = CoTChainSpec::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 0.0]).unwrap();
        approx(final_bound(&spec0, &[0.1, 0.2], 0.05).unwrap(), 0.05, 1e-15);
        // Perfect chain.
        approx(final_bound(&spec, &[0.0, 0.0], 0.0).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn final_bound_gen_values() {
        // K=2, C=1, L=0, sup=0.1, beta=1, L*=1, R=0 -> 0.1.
        let spec = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0])
            .unwrap()
            .with_generalization(vec![1.0], vec![0.0], vec![0.1])
            .unwrap();
        approx(final_bound_gen(&spec, 0.0).unwrap(), 0.1, 1e-15);

        // sup = 0 everywhere: bound collapses to R_final.
        let spec0 = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0]).unwrap();
        approx(final_bound_gen(&spec0, 0.3).unwrap(), 0.3, 1e-15);

        // L_(0)=2 vs L_(0)=1 at equal other inputs: ratio e^3.
        let hi = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0])
            .unwrap()
            .with_generalization(vec![1.0], vec![2.0], vec![0.1])
            .unwrap();
        let lo = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0])
            .unwrap()
            .with_generalization(vec![1.0], vec![1.0], vec![0.1])
            .unwrap();
        let ratio = final_bound_gen(&hi, 0.0).unwrap() / final_bound_gen(&lo, 0.0).unwrap();
        approx(ratio, 3.0f64.exp(), 1e-12);
    }

    #[test]
    fn final_bound_gen_overflow_vacuous() {
        let spec = CoTChainSpec::new(vec![1.0], vec![1.0], vec![1.0])
            .unwrap()
            .with_generalization(vec![1.0], vec![100.0], vec![0.1])
            .unwrap();
        assert!(final_bound_gen(&spec, 0.0).unwrap().is_infinite());
    }

    #[test]
    fn final_bound_gen_monotone() {
        let base = CoTChainSpec::new(vec![0.5, 1.2], vec![1.0, 0.8], vec![1.0, 1.5])
            .unwrap()
            .with_generalization(vec![1.5, 2.0], vec![0.5, 1.0], vec![0.2, 0.1])
            .unwrap();
        let b0 = final_bound_gen(&base, 0.1).unwrap();
        for (field, idx) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)] {
            let mut bumped = base.clone();
            match field {
                0 => bumped.per_step_c[idx] += 0.5,
                1 => bumped.per_step_l[idx] += 0.5,
                2 => bumped.per_step_sup[idx] += 0.5,
                _ => bumped.alpha[idx] += 0.5,
            }
            assert!(final_bound_gen(&bumped, 0.1).unwrap() >= b0);
        }
        let mut bumped = base.clone();
        bumped.beta[0] += 0.5;
        assert!(final_bound_gen(&bumped, 0.1).unwrap() >= b0);
    }

    #[test]
    fn rollout_identical_predictors() {
        let update = append_update(2);
        let m = |z: &[f64]| z[0] + z[1];
        let pair = rollout(&update, &m, &m, &[1.0, 2.0, 0.0, 0.0], 3).unwrap();
        assert!(pair.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(pair.r_final, 0.0);
        assert_eq!(pair.empirical_error, 0.0);
    }

    #[test]
    fn rollout_one_step_divergence_is_prediction_gap() {
        let update = append_update(1);
        let model = |z: &[f64]| z[0] * 2.0;
        let oracle = |z: &[f64]| z[0] * 2.0 + 0.3;
        let pair = rollout(&update, &model, &oracle, &[1.0, 0.0], 2).unwrap();
        approx(pair.deltas[1], 0.3, 1e-15);
        approx(pair.step_errors[0], 0.3, 1e-15);
    }

    #[test]
    fn rollout_affine_within_recursion_bound() {
        // Affine predictors and a slot-append update: beta = 1 and
        // alpha = 1 + L* are valid propagation constants by construction.
        let steps = 4;
        let w_star = [0.3, -0.2, 0.5, 0.1, -0.4];
        let w_model = [0.35, -0.2, 0.45, 0.15, -0.4];
        let oracle = move |z: &[f64]| z.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>() + 0.2;
        let model = move |z: &[f64]| z.iter().zip(&w_model).map(|(a, b)| a * b).sum::<f64>() - 0.1;
        let l_star = w_star.iter().map(|w| w * w).sum::<f64>().sqrt();
        // Answers land in slots 2, 3, 4 across the three transitions.
        let slot = std::cell::Cell::new(2usize);
        let update = |z: &[f64], a: f64| {
            let mut out = z.to_vec();
            out[slot.get()] = a;
            out
        };
        let mut model_states = vec![vec![1.0, -0.5, 0.0, 0.0, 0.0]];
        let mut oracle_states = model_states.clone();
        let mut deltas = vec![0.0];
        let mut step_errors = Vec::new();
        for k in 0..steps - 1 {
            slot.set(2 + k);
            let zm = model_states[k].clone();
            let zo = oracle_states[k].clone();
            step_errors.push((model(&zm) - oracle(&zm)).abs());
            let nm = update(&zm, model(&zm));
            let no = update(&zo, oracle(&zo));
            deltas.push(nm.iter().zip(&no).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
            model_states.push(nm);
            oracle_states.push(no);
        }
        let spec = CoTChainSpec::new(
            vec![1.0 + l_star; steps - 1],
            vec![1.0; steps - 1],
            vec![l_star; steps - 1],
        )
        .unwrap();
        let delta_bound = delta_recursion(&spec, &step_errors).unwrap();
        assert!(deltas[steps - 1] <= delta_bound + 1e-12);
        let zm_last = &model_states[steps - 1];
        let zo_last = &oracle_states[steps - 1];
        let r_final = (model(zm_last) - oracle(zo_last)).abs();
        let empirical = (model(zm_last) - oracle(zm_last)).abs();
        let fb = final_bound(&spec, &step_errors, r_final).unwrap();
        assert!(empirical <= fb + 1e-12, "{empirical} vs {fb}");
    }

    #[test]
    fn estimate_constants_on_append_update() {
        let update = append_update(2);
        let oracle = |z: &[f64]| z[0] - z[1];
        let states = vec![vec![0.5, 0.2, 0.0], vec![-1.0, 0.4, 0.0]];
        let (alpha_hat, beta_hat) = estimate_step_constants(&update, &oracle, &states, 1e-3).unwrap();
        // The appended answer moves one coordinate isometrically.
        approx(beta_hat, 1.0, 1e-9);
        // Identity prefix plus a 1-Lipschitz-per-axis oracle: at most sqrt(2).
        assert!(alpha_hat <= 2.0f64.sqrt() + 1e-9, "alpha_hat {alpha_hat}");
        assert!(alpha_hat >= 1.0);
    }

    #[test]
    fn estimate_constants_contraction() {
        let update = |z: &[f64], a: f64| {
            let mut out: Vec<f64> = z.iter().map(|c| 0.5 * c).collect();
            out[2] = a;
            out
        };
        let oracle = |_: &[f64]| 0.0;
        let states = vec![vec![1.0, 1.0, 0.0]];
        let (alpha_hat, _) = estimate_step_constants(&update, &oracle, &states, 1e-3).unwrap();
        approx(alpha_hat, 0.5, 1e-9);
    }

    #[test]
    fn estimate_constants_rejects_bad_input() {
        let update = append_update(1);
        let oracle = |_: &[f64]| 0.0;
        assert!(estimate_step_constants(&update, &oracle, &[], 1e-3).is_err());
        assert!(estimate_step_constants(&update, &oracle, &[vec![0.0, 0.0]], 0.0).is_err());
    }

    #[test]
    fn rollout_rejects_degenerate() {
        let update = append_update(1);
        let m = |z: &[f64]| z[0];
        assert!(rollout(&update, &m, &m, &[1.0, 0.0], 1).is_err());
        assert!(rollout(&update, &m, &m, &[f64::NAN, 0.0], 2).is_err());
    }
}
