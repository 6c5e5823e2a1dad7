//! The finite latent-task universe: priors, noisy input-output channels, and
//! Gaussian instruction families.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Finite latent-task model.
///
/// Inputs are uniform on the input alphabet. Outputs follow the task mapping
/// through a symmetric noise channel: `p(y | x, t) = 1 - eta` if
/// `y = f_t(x)`, else `eta / (|Y| - 1)`. Instructions are isotropic Gaussians
/// `N(mu_t, sigma^2 I)` on a `instr_dim`-dimensional space; densities are
/// only ever used in ratios, so the shared normalizer cancels. The compact
/// instruction domain is the ball of radius `instr_domain_radius` around the
/// mean centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    task_ids: Vec<String>,
    prior: Vec<f64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    mapping: Vec<Vec<usize>>,
    noise: f64,
    instr_dim: usize,
    instr_means: Vec<Vec<f64>>,
    instr_scale: f64,
    instr_domain_radius: f64,
}

impl TaskModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        task_ids: Vec<String>,
        prior: Vec<f64>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        mapping: Vec<Vec<usize>>,
        noise: f64,
        instr_means: Vec<Vec<f64>>,
        instr_scale: f64,
        instr_domain_radius: f64,
    ) -> Result<Self> {
        let t = task_ids.len();
        if t < 2 {
            return Err(Error::invalid("need at least two tasks"));
        }
        if prior.len() != t || mapping.len() != t || instr_means.len() != t {
            return Err(Error::invalid("per-task field lengths must match task count"));
        }
        if prior.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("prior must be strictly positive"));
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("prior must sum to 1, got {sum}")));
        }
        if inputs.is_empty() || outputs.len() < 2 {
            return Err(Error::invalid("need nonempty input alphabet and at least two outputs"));
        }
        for row in &mapping {
            if row.len() != inputs.len() {
                return Err(Error::invalid("mapping rows must cover the input alphabet"));
            }
            if row.iter().any(|&y| y >= outputs.len()) {
                return Err(Error::invalid("mapping target outside output alphabet"));
            }
        }
        // Identifiability: distinct tasks must induce distinct joints, which
        // for this channel family means the mappings differ somewhere.
        for i in 0..t {
            for j in (i + 1)..t {
                if mapping[i] == mapping[j] {
                    return Err(Error::invalid(format!(
                        "tasks {} and {} share a mapping; pairwise KL would vanish",
                        task_ids[i], task_ids[j]
                    )));
                }
            }
        }
        if !(0.0..0.5).contains(&noise) {
            return Err(Error::invalid(format!("noise must lie in [0, 0.5), got {noise}")));
        }
        let d = instr_means[0].len();
        if d == 0 || instr_means.iter().any(|m| m.len() != d) {
            return Err(Error::invalid("instruction means must share a dimension >= 1"));
        }
        if instr_means.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::non_finite("instruction means must be finite"));
        }
        if !(instr_scale > 0.0 && instr_scale.is_finite()) {
            return Err(Error::invalid("instruction scale must be positive"));
        }
        if !(instr_domain_radius > 0.0 && instr_domain_radius.is_finite()) {
            return Err(Error::invalid("instruction domain radius must be positive"));
        }
        Ok(TaskModel {
            task_ids,
            prior,
            inputs,
            outputs,
            mapping,
            noise,
            instr_dim: d,
            instr_means,
            instr_scale,
            instr_domain_radius,
        })
    }

    /// Two-task flip model on a binary alphabet: identity vs bit-flip, with
    /// instruction means at +/- sep/2 along the first axis.
    pub fn flip(noise: f64, instr_dim: usize, mean_sep: f64, instr_scale: f64, instr_radius: f64) -> Result<Self> {
        let mut mu_id = vec![0.0; instr_dim];
        let mut mu_flip = vec![0.0; instr_dim];
        mu_id[0] = mean_sep / 2.0;
        mu_flip[0] = -mean_sep / 2.0;
        TaskModel::new(
            vec!["id".into(), "flip".into()],
            vec![0.5, 0.5],
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0, 1], vec![1, 0]],
            noise,
            vec![mu_id, mu_flip],
            instr_scale,
            instr_radius,
        )
    }

    /// k-task cyclic-shift model on a k-symbol alphabet, uniform prior, with
    /// instruction means spread evenly (a circle for dim >= 2, a line else).
    pub fn cyclic(
        tasks: usize,
        noise: f64,
        instr_dim: usize,
        mean_radius: f64,
        instr_scale: f64,
        instr_radius: f64,
    ) -> Result<Self> {
        if tasks < 2 {
            return Err(Error::invalid("cyclic model needs at least two tasks"));
        }
        let ids: Vec<String> = (0..tasks).map(|t| format!("shift{t}")).collect();
        let symbols: Vec<String> = (0..tasks).map(|s| s.to_string()).collect();
        let mapping: Vec<Vec<usize>> =
            (0..tasks).map(|t| (0..tasks).map(|x| (x + t) % tasks).collect()).collect();
        let means: Vec<Vec<f64>> = (0..tasks)
            .map(|t| {
                let mut m = vec![0.0; instr_dim];
                if instr_dim >= 2 {
                    let ang = 2.0 * std::f64::consts::PI * t as f64 / tasks as f64;
                    m[0] = mean_radius * ang.cos();
                    m[1] = mean_radius * ang.sin();
                } else {
                    m[0] = mean_radius * (2.0 * t as f64 / (tasks - 1) as f64 - 1.0);
                }
                m
            })
            .collect();
        TaskModel::new(
            ids,
            vec![1.0 / tasks as f64; tasks],
            symbols.clone(),
            symbols,
            mapping,
            noise,
            means,
            instr_scale,
            instr_radius,
        )
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn instr_dim(&self) -> usize {
        self.instr_dim
    }

    pub fn instr_scale(&self) -> f64 {
        self.instr_scale
    }

    pub fn instr_domain_radius(&self) -> f64 {
        self.instr_domain_radius
    }

    pub fn instr_mean(&self, t: usize) -> &[f64] {
        &self.instr_means[t]
    }

    /// The task mapping output index for input x under task t.
    pub fn map(&self, t: usize, x: usize) -> usize {
        self.mapping[t][x]
    }

    /// Centroid of the instruction means: the center of the compact domain.
    pub fn centroid(&self) -> Vec<f64> {
        let t = self.num_tasks() as f64;
        let mut c = vec![0.0; self.instr_dim];
        for m in &self.instr_means {
            for (ci, mi) in c.iter_mut().zip(m) {
                *ci += mi / t;
            }
        }
        c
    }

    /// Score bound G = (R_dom + max_t ||mu_t - centroid||) / sigma^2: the sup
    /// of ||grad log p(i|t)|| over the instruction domain ball.
    pub fn score_bound(&self) -> f64 {
        let c = self.centroid();
        let max_off = self
            .instr_means
            .iter()
            .map(|m| dist(m, &c))
            .fold(0.0, f64::max);
        (self.instr_domain_radius + max_off) / (self.instr_scale * self.instr_scale)
    }

    /// Whether an instruction vector lies in the compact domain ball.
    pub fn in_domain(&self, i: &[f64]) -> bool {
        dist(i, &self.centroid()) <= self.instr_domain_radius
    }

    /// log p(y | x, t) through the symmetric noise channel.
    pub fn channel_loglik(&self, x: usize, y: usize, t: usize) -> f64 {
        if y == self.mapping[t][x] {
            (1.0 - self.noise).ln()
        } else {
            (self.noise / (self.num_outputs() - 1) as f64).ln()
        }
    }

    /// log p(x | t) for the uniform input distribution.
    pub fn input_loglik(&self) -> f64 {
        -(self.num_inputs() as f64).ln()
    }

    /// log[p(x|t) p(y|x,t)] for one demonstration pair. A zero-probability
    /// pair under eta = 0 comes back as -inf (impossible under the task).
    pub fn demo_loglik(&self, pair: (usize, usize), t: usize) -> Result<f64> {
        let (x, y) = pair;
        if x >= self.num_inputs() {
            return Err(Error::domain(format!("input symbol {x} outside alphabet")));
        }
        if y >= self.num_outputs() {
            return Err(Error::domain(format!("output symbol {y} outside alphabet")));
        }
        if t >= self.num_tasks() {
            return Err(Error::domain(format!("task index {t} out of range")));
        }
        Ok(self.input_loglik() + self.channel_loglik(x, y, t))
    }

    /// Gaussian instruction log-density, normalizer included (it is shared
    /// across tasks, so it cancels in every ratio).
    pub fn instr_loglik(&self, i: &[f64], t: usize) -> Result<f64> {
        if i.len() != self.instr_dim {
            return Err(Error::domain(format!(
                "instruction dim {} does not match model dim {}",
                i.len(),
                self.instr_dim
            )));
        }
        if i.iter().any(|c| !c.is_finite()) {
            return Err(Error::non_finite("instruction vector must be finite"));
        }
        let s2 = self.instr_scale * self.instr_scale;
        let sq: f64 = i
            .iter()
            .zip(&self.instr_means[t])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(-sq / (2.0 * s2) - 0.5 * self.instr_dim as f64 * (2.0 * std::f64::consts::PI * s2).ln())
    }

    /// Gaussian score grad_i log p(i|t) = -(i - mu_t) / sigma^2.
    pub fn instr_score(&self, i: &[f64], t: usize) -> Vec<f64> {
        let s2 = self.instr_scale * self.instr_scale;
        i.iter()
            .zip(&self.instr_means[t])
            .map(|(a, b)| -(a - b) / s2)
            .collect()
    }

    /// Exact KL(P_{x,y|t1} || P_{x,y|t2}) by brute-force summation over the
    /// finite joint. Disjoint support mass (eta = 0, mappings differ) gives
    /// +inf.
    pub fn kl_tasks(&self, t1: usize, t2: usize) -> f64 {
        assert!(t1 < self.num_tasks() && t2 < self.num_tasks());
        let mut kl = 0.0;
        for x in 0..self.num_inputs() {
            for y in 0..self.num_outputs() {
                let lp1 = self.input_loglik() + self.channel_loglik(x, y, t1);
                let p1 = lp1.exp();
                if p1 == 0.0 {
                    continue;
                }
                let lp2 = self.input_loglik() + self.channel_loglik(x, y, t2);
                kl += p1 * (lp1 - lp2);
            }
        }
        kl
    }

    /// Decay rate alpha = min over t != t_star of KL(P_{t_star} || P_t) / 2.
    /// Infinite KL propagates as +inf (super-exponential decay regime).
    pub fn alpha_rate(&self, t_star: usize) -> f64 {
        assert!(t_star < self.num_tasks());
        (0..self.num_tasks())
            .filter(|&t| t != t_star)
            .map(|t| self.kl_tasks(t_star, t))
            .fold(f64::INFINITY, f64::min)
            / 2.0
    }

    /// Uniform bound on the non-demonstration ratio A_t over the instruction
    /// domain: (max prior ratio) (max query-input ratio) (max reference
    /// instruction ratio) e^{2 G D}, with D the domain diameter seen from the
    /// reference instruction.
    pub fn a_max(&self, t_star: usize, reference_instruction: &[f64]) -> Result<f64> {
        if t_star >= self.num_tasks() {
            return Err(Error::domain("task index out of range"));
        }
        let ref_ll_star = self.instr_loglik(reference_instruction, t_star)?;
        let mut max_prior = 0.0f64;
        let mut max_instr = 0.0f64;
        for t in 0..self.num_tasks() {
            if t == t_star {
                continue;
            }
            max_prior = max_prior.max(self.prior[t] / self.prior[t_star]);
            max_instr = max_instr.max((self.instr_loglik(reference_instruction, t)? - ref_ll_star).exp());
        }
        // Uniform inputs make the query ratio identically 1.
        let max_query = 1.0;
        let g = self.score_bound();
        let d = self.instr_domain_radius + dist(reference_instruction, &self.centroid());
        Ok(max_prior * max_query * max_instr * (2.0 * g * d).exp())
    }

    /// Draw one demonstration under task t: uniform input, output through the
    /// noise channel.
    pub fn sample_demo(&self, t: usize, rng: &mut impl Rng) -> (usize, usize) {
        let x = rng.random_range(0..self.num_inputs());
        let y = self.sample_output(x, t, rng);
        (x, y)
    }

    /// Output channel draw for a given input and task.
    pub fn sample_output(&self, x: usize, t: usize, rng: &mut impl Rng) -> usize {
        let correct = self.mapping[t][x];
        if self.noise == 0.0 || rng.random::<f64>() >= self.noise {
            correct
        } else {
            // Uniform over the |Y| - 1 wrong outputs.
            let mut y = rng.random_range(0..self.num_outputs() - 1);
            if y >= correct {
                y += 1;
            }
            y
        }
    }

    /// Draw an instruction from the task-conditional Gaussian.
    pub fn sample_instruction(&self, t: usize, rng: &mut impl Rng) -> Vec<f64> {
        self.instr_means[t]
            .iter()
            .map(|m| m + self.instr_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    }

    /// Empirical mean log-likelihood ratio (1/N) sum log[p(demo|t)/p(demo|t_star)]
    /// over N fresh demonstrations drawn under t_star. Converges to
    /// -KL(P_{t_star} || P_t) by the strong law of large numbers.
    pub fn empirical_llr(&self, t: usize, t_star: usize, n: usize, rng: &mut impl Rng) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("need at least one demonstration"));
        }
        let mut acc = 0.0;
        for _ in 0..n {
            let pair = self.sample_demo(t_star, rng);
            let a = self.demo_loglik(pair, t)?;
            let b = self.demo_loglik(pair, t_star)?;
            acc += a - b;
        }
        Ok(acc / n as f64)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn flip_model_shape() {
        let m = TaskModel::flip(0.1, 1, 1.5, 1.0, 4.0).unwrap();
        assert_eq!(m.num_tasks(), 2);
        assert_eq!(m.centroid(), vec![0.0]);
        approx(m.score_bound(), 4.75, 1e-12);
    }

    #[test]
    fn rejects_duplicate_mappings_and_bad_noise() {
        assert!(TaskModel::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0, 1], vec![0, 1]],
            0.1,
            vec![vec![0.0], vec![1.0]],
            1.0,
            1.0,
        )
        .is_err());
        assert!(TaskModel::flip(0.7, 1, 1.0, 1.0, 1.0).is_err());
        assert!(TaskModel::flip(0.5, 1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn demo_loglik_values() {
        // Noiseless correct pair on a binary alphabet: log(0.5).
        let m = TaskModel::flip(0.0, 1, 1.0, 1.0, 2.0).unwrap();
        approx(m.demo_loglik((0, 0), 0).unwrap(), 0.5f64.ln(), 1e-15);
        // Noiseless incorrect pair: impossible under the task.
        assert_eq!(m.demo_loglik((0, 1), 0).unwrap(), f64::NEG_INFINITY);
        // eta = 0.1: log(0.5 * 0.9).
        let m = TaskModel::flip(0.1, 1, 1.0, 1.0, 2.0).unwrap();
        approx(m.demo_loglik((0, 0), 0).unwrap(), 0.45f64.ln(), 1e-15);
        // Symbols outside the alphabets are rejected.
        assert!(m.demo_loglik((2, 0), 0).is_err());
        assert!(m.demo_loglik((0, 2), 0).is_err());
    }

    #[test]
    fn instr_loglik_values() {
        let m = TaskModel::flip(0.1, 1, 0.0, 1.0, 2.0).unwrap();
        // At the mean with d=1, sigma=1: -0.5 log(2 pi).
        let at_mean = m.instr_loglik(&[0.0], 0).unwrap();
        approx(at_mean, -0.5 * (2.0 * std::f64::consts::PI).ln(), 1e-12);
        // Distance 1 from the mean adds -1/2.
        approx(m.instr_loglik(&[1.0], 0).unwrap(), at_mean - 0.5, 1e-12);
    }

    #[test]
    fn instr_score_bound_inside_domain() {
        let m = TaskModel::flip(0.1, 2, 1.5, 1.0, 3.0).unwrap();
        let g = m.score_bound();
        let mut rng = stream(3, "score", 0);
        for _ in 0..200 {
            // Random point inside the domain ball.
            let ang = rng.random::<f64>() * std::f64::consts::TAU;
            let r = rng.random::<f64>() * m.instr_domain_radius();
            let i = [r * ang.cos(), r * ang.sin()];
            for t in 0..2 {
                let s = m.instr_score(&i, t);
                let norm = (s[0] * s[0] + s[1] * s[1]).sqrt();
                assert!(norm <= g + 1e-12);
            }
        }
    }

    #[test]
    fn kl_flip_model_brute_force() {
        // 0.8 * ln 9 = 1.7578 nats for eta = 0.1.
        let m = TaskModel::flip(0.1, 1, 1.0, 1.0, 2.0).unwrap();
        approx(m.kl_tasks(0, 1), 0.8 * 9.0f64.ln(), 1e-12);
        assert_eq!(m.kl_tasks(0, 0), 0.0);
        approx(m.alpha_rate(0), 0.4 * 9.0f64.ln(), 1e-12);
        // Deterministic distinct mappings: disjoint support, infinite KL.
        let m0 = TaskModel::flip(0.0, 1, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(m0.kl_tasks(0, 1), f64::INFINITY);
        assert_eq!(m0.alpha_rate(0), f64::INFINITY);
    }

    #[test]
    fn alpha_rate_takes_min_pairwise_kl() {
        let m = TaskModel::cyclic(3, 0.2, 2, 1.0, 1.0, 3.0).unwrap();
        let k1 = m.kl_tasks(0, 1);
        let k2 = m.kl_tasks(0, 2);
        approx(m.alpha_rate(0), 0.5 * k1.min(k2), 1e-14);
    }

    #[test]
    fn a_max_unit_factors() {
        // Equal means: reference ratio 1, G = R/sigma^2; pick numbers so
        // 2 G D = 2 exactly, giving e^2.
        let m = TaskModel::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0, 1], vec![1, 0]],
            0.1,
            vec![vec![0.0], vec![0.0]],
            1.0,
            1.0,
        )
        .unwrap();
        // G = (1 + 0)/1 = 1, D = 1 from the centroid: A_max = e^2.
        approx(m.a_max(0, &[0.0]).unwrap(), 2.0f64.exp(), 1e-12);
    }

    #[test]
    fn empirical_llr_converges_to_minus_kl() {
        let m = TaskModel::flip(0.1, 1, 1.0, 1.0, 2.0).unwrap();
        let mut rng = stream(7, "llr", 0);
        let est = m.empirical_llr(1, 0, 100_000, &mut rng).unwrap();
        approx(est, -0.8 * 9.0f64.ln(), 0.02);
        // t = t_star: identically zero.
        let zero = m.empirical_llr(0, 0, 100, &mut rng).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn sample_output_respects_noise() {
        let m = TaskModel::flip(0.25, 1, 1.0, 1.0, 2.0).unwrap();
        let mut rng = stream(9, "chan", 0);
        let n = 200_000;
        let wrong = (0..n).filter(|_| m.sample_output(0, 0, &mut rng) != 0).count();
        let rate = wrong as f64 / n as f64;
        assert!((rate - 0.25).abs() < 0.01, "noise rate {rate}");
    }
}
