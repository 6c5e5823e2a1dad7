//! Python bindings over the bound-audit library: the Bernstein/Remez
//! primitives, the path bound, the latent-task simulator, CoT propagation,
//! attention padding, and the varying-instruction amplification formulas.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use icllab::approx;
use icllab::cot;
use icllab::format6;
use icllab::latent_task as lt;
use icllab::padding;
use icllab::path_bound;
use icllab::rng;

fn err(e: icllab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_variant(variant: &str, lambda: f64) -> PyResult<lt::PromptVariant> {
    match variant {
        "standard" => Ok(lt::PromptVariant::Standard),
        "absent" => Ok(lt::PromptVariant::Absent),
        "coupled" => Ok(lt::PromptVariant::Coupled { lambda }),
        other => Err(PyValueError::new_err(format!(
            "unknown variant `{other}` (standard|absent|coupled)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Bernstein operator and Remez verification
// ---------------------------------------------------------------------------

/// Degree-n Bernstein polynomial stored through its node values f(k/n).
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Bernstein {
    inner: approx::BernsteinSurrogate,
}

#[pymethods]
impl Bernstein {
    #[new]
    fn new(node_values: Vec<f64>) -> PyResult<Self> {
        Ok(Bernstein { inner: approx::BernsteinSurrogate::from_node_values(node_values).map_err(err)? })
    }

    /// Sample a callable at the n+1 nodes k/n.
    #[staticmethod]
    fn fit(py: Python<'_>, f: Py<PyAny>, n: usize) -> PyResult<Self> {
        if n < 1 {
            return Err(PyValueError::new_err("degree n must be >= 1"));
        }
        let mut nodes = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let v: f64 = f.call1(py, (t,))?.extract(py)?;
            if !v.is_finite() {
                return Err(PyValueError::new_err(format!("evaluator returned {v} at node k={k} (t={t})")));
            }
            nodes.push(v);
        }
        Ok(Bernstein { inner: approx::BernsteinSurrogate::from_node_values(nodes).map_err(err)? })
    }

    fn eval(&self, t: f64) -> PyResult<f64> {
        approx::bernstein_eval(&self.inner, t).map_err(err)
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn node_values(&self) -> Vec<f64> {
        self.inner.node_values().to_vec()
    }

    /// Grid audit of the Remez inequality over a host interval and a list
    /// of disjoint parts.
    fn verify_remez<'py>(
        &self,
        py: Python<'py>,
        host: (f64, f64),
        parts: Vec<(f64, f64)>,
        grid_points: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cover = approx::IntervalSubset::new(host, parts).map_err(err)?;
        let r = approx::verify_remez(&self.inner, &cover, grid_points).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("sup_host", r.sup_host)?;
        d.set_item("sup_parts", r.sup_parts)?;
        d.set_item("factor", r.factor)?;
        d.set_item("holds", r.holds)?;
        Ok(d)
    }
}

/// Lemma bound L / (2 sqrt(n)).
#[pyfunction]
fn bernstein_error_bound(l: f64, n: usize) -> PyResult<f64> {
    if l < 0.0 || n < 1 {
        return Err(PyValueError::new_err("need L >= 0 and n >= 1"));
    }
    Ok(approx::bernstein_error_bound(l, n))
}

/// The Remez amplification factor (4 mes(J) / mes(E))^n.
#[pyfunction]
fn remez_factor(host: (f64, f64), parts: Vec<(f64, f64)>, n: usize) -> PyResult<f64> {
    let cover = approx::IntervalSubset::new(host, parts).map_err(err)?;
    Ok(approx::remez_factor(&cover, n))
}

// ---------------------------------------------------------------------------
// Path bound
// ---------------------------------------------------------------------------

/// A^n sup_pre + (1 + A^n) l / (2 sqrt(n)); +inf means vacuous.
#[pyfunction]
fn theorem1_bound(l_gamma: f64, a_gamma: f64, sup_pre: f64, n: usize) -> PyResult<f64> {
    if !(a_gamma > 1.0) || l_gamma < 0.0 || sup_pre < 0.0 || n < 1 {
        return Err(PyValueError::new_err("need A > 1, l >= 0, sup >= 0, n >= 1"));
    }
    Ok(path_bound::theorem1_bound(l_gamma, a_gamma, sup_pre, n))
}

/// The degree choice n = max(1, ceil(l^2)) with its specialized bound.
#[pyfunction]
fn theorem1_bound_chosen(l_gamma: f64, a_gamma: f64, sup_pre: f64) -> PyResult<(usize, f64)> {
    if !(a_gamma > 1.0) || l_gamma < 0.0 || sup_pre < 0.0 {
        return Err(PyValueError::new_err("need A > 1, l >= 0, sup >= 0"));
    }
    Ok(path_bound::theorem1_bound_chosen(l_gamma, a_gamma, sup_pre))
}

// ---------------------------------------------------------------------------
// Latent-task simulator
// ---------------------------------------------------------------------------

/// One sampled ICL prompt.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Prompt {
    inner: lt::PromptSpec,
}

#[pymethods]
impl Prompt {
    #[getter]
    fn format(&self) -> u8 {
        self.inner.format.index()
    }

    #[getter]
    fn n_demos(&self) -> usize {
        self.inner.n_demos()
    }

    #[getter]
    fn instructions(&self) -> Vec<Vec<f64>> {
        self.inner.instructions.clone()
    }

    #[setter]
    fn set_instructions(&mut self, instructions: Vec<Vec<f64>>) {
        self.inner.instructions = instructions;
    }

    #[getter]
    fn demos(&self) -> Vec<(usize, usize)> {
        self.inner.demos.clone()
    }

    #[getter]
    fn query(&self) -> usize {
        self.inner.query
    }

    #[getter]
    fn target_task(&self) -> usize {
        self.inner.target_task
    }
}

/// Finite latent-task universe: priors, noisy channels, and Gaussian
/// instruction families.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct LatentTaskModel {
    inner: lt::TaskModel,
}

#[pymethods]
impl LatentTaskModel {
    /// Two-task flip model on a binary alphabet.
    #[staticmethod]
    #[pyo3(signature = (noise, instr_dim=1, mean_sep=1.5, instr_scale=1.0, instr_radius=4.0))]
    fn flip(noise: f64, instr_dim: usize, mean_sep: f64, instr_scale: f64, instr_radius: f64) -> PyResult<Self> {
        Ok(LatentTaskModel {
            inner: lt::TaskModel::flip(noise, instr_dim, mean_sep, instr_scale, instr_radius).map_err(err)?,
        })
    }

    /// k-task cyclic-shift model.
    #[staticmethod]
    #[pyo3(signature = (tasks, noise, instr_dim=2, mean_radius=1.5, instr_scale=1.0, instr_radius=4.0))]
    fn cyclic(
        tasks: usize,
        noise: f64,
        instr_dim: usize,
        mean_radius: f64,
        instr_scale: f64,
        instr_radius: f64,
    ) -> PyResult<Self> {
        Ok(LatentTaskModel {
            inner: lt::TaskModel::cyclic(tasks, noise, instr_dim, mean_radius, instr_scale, instr_radius)
                .map_err(err)?,
        })
    }

    #[getter]
    fn num_tasks(&self) -> usize {
        self.inner.num_tasks()
    }

    #[getter]
    fn score_bound(&self) -> f64 {
        self.inner.score_bound()
    }

    #[getter]
    fn centroid(&self) -> Vec<f64> {
        self.inner.centroid()
    }

    /// log[p(x|t) p(y|x,t)] for one demonstration pair.
    fn demo_loglik(&self, x: usize, y: usize, t: usize) -> PyResult<f64> {
        self.inner.demo_loglik((x, y), t).map_err(err)
    }

    /// Gaussian instruction log-density (shared normalizer included).
    fn instr_loglik(&self, i: Vec<f64>, t: usize) -> PyResult<f64> {
        self.inner.instr_loglik(&i, t).map_err(err)
    }

    /// Exact KL(P_{x,y|t1} || P_{x,y|t2}) over the finite joint.
    fn kl_tasks(&self, t1: usize, t2: usize) -> f64 {
        self.inner.kl_tasks(t1, t2)
    }

    /// Decay rate: half the minimal pairwise KL from the target.
    fn alpha_rate(&self, t_star: usize) -> f64 {
        self.inner.alpha_rate(t_star)
    }

    /// Uniform bound on the non-demonstration ratio over the domain ball.
    fn a_max(&self, t_star: usize, reference_instruction: Vec<f64>) -> PyResult<f64> {
        self.inner.a_max(t_star, &reference_instruction).map_err(err)
    }

    /// Mean empirical log-likelihood ratio over n fresh demonstrations.
    fn empirical_llr(&self, t: usize, t_star: usize, n: usize, seed: u64) -> PyResult<f64> {
        let mut r = rng::stream(seed, "py-llr", 0);
        self.inner.empirical_llr(t, t_star, n, &mut r).map_err(err)
    }

    /// Draw one prompt in the given format (1-6).
    #[pyo3(signature = (t_star, format, n, seed, variant="standard", lambda=0.5))]
    fn sample_prompt(
        &self,
        t_star: usize,
        format: u8,
        n: usize,
        seed: u64,
        variant: &str,
        lambda: f64,
    ) -> PyResult<Prompt> {
        let fmt = lt::PromptFormat::from_index(format).map_err(err)?;
        let v = parse_variant(variant, lambda)?;
        let mut r = rng::stream(seed, "py-prompt", 0);
        Ok(Prompt { inner: lt::sample_prompt(&self.inner, t_star, fmt, n, &mut r, v).map_err(err)? })
    }

    /// Exact posterior, predictive, and the odds decomposition.
    fn posterior<'py>(&self, py: Python<'py>, prompt: &Prompt) -> PyResult<Bound<'py, PyDict>> {
        let rep = lt::posterior(&self.inner, &prompt.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("posterior", rep.posterior.clone())?;
        d.set_item("log_a", rep.log_a.clone())?;
        d.set_item("log_b", rep.log_b.clone())?;
        d.set_item("predictive", rep.predictive.clone())?;
        d.set_item("reconstruction_gap", rep.reconstruction_gap())?;
        Ok(d)
    }

    /// Analytic instruction gradient with its finite-difference cross-check.
    fn instruction_gradient<'py>(&self, py: Python<'py>, prompt: &Prompt) -> PyResult<Bound<'py, PyDict>> {
        let s = lt::instruction_gradient(&self.inner, &prompt.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("grad_analytic", s.grad_analytic)?;
        d.set_item("grad_fd", s.grad_fd)?;
        d.set_item("norm_analytic", s.norm_analytic)?;
        d.set_item("norm_fd", s.norm_fd)?;
        d.set_item("rel_err", s.rel_err)?;
        d.set_item("boundary_warning", s.boundary_warning)?;
        Ok(d)
    }

    /// Monte-Carlo decay curve of the predictive gap to the target task.
    #[pyo3(signature = (format, t_star, n_list, trials, seed, variant="standard", lambda=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn decay_experiment<'py>(
        &self,
        py: Python<'py>,
        format: u8,
        t_star: usize,
        n_list: Vec<usize>,
        trials: usize,
        seed: u64,
        variant: &str,
        lambda: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let fmt = lt::PromptFormat::from_index(format).map_err(err)?;
        let v = parse_variant(variant, lambda)?;
        let streams = rng::Streams::new(seed, "py-decay");
        let c = lt::decay_experiment(&self.inner, fmt, v, t_star, &n_list, trials, &streams).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("n_values", c.n_values.clone())?;
        d.set_item("median_gap", c.median_gap.clone())?;
        d.set_item("max_gap", c.max_gap.clone())?;
        d.set_item("median_tv", c.median_tv.clone())?;
        d.set_item("alpha", c.alpha)?;
        d.set_item("beta", c.beta)?;
        d.set_item("n0", c.n0)?;
        d.set_item("fitted_slope", c.fitted_slope)?;
        d.set_item("envelope", c.n_values.iter().map(|&n| c.envelope(n)).collect::<Vec<f64>>())?;
        Ok(d)
    }

    /// Expected instruction stability of a log-space perturbed predictor.
    #[pyo3(signature = (format, n, trials, eps_log, delta, seed))]
    fn expected_stability<'py>(
        &self,
        py: Python<'py>,
        format: u8,
        n: usize,
        trials: usize,
        eps_log: f64,
        delta: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let fmt = lt::PromptFormat::from_index(format).map_err(err)?;
        let streams = rng::Streams::new(seed, "py-stability");
        let r = lt::expected_stability(&self.inner, fmt, n, trials, eps_log, delta, &streams).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("measured_gap", r.measured_gap)?;
        d.set_item("measured_std_err", r.measured_std_err)?;
        d.set_item("eps_n", r.eps_n)?;
        d.set_item("decay_term", r.decay_term)?;
        d.set_item("total", r.total)?;
        d.set_item("clamp_warning", r.clamp_warning)?;
        d.set_item("holds", r.holds)?;
        Ok(d)
    }
}

// ---------------------------------------------------------------------------
// CoT propagation
// ---------------------------------------------------------------------------

/// Iterated recursion sum over per-step errors.
#[pyfunction]
fn cot_delta_recursion(alpha: Vec<f64>, beta: Vec<f64>, step_errors: Vec<f64>) -> PyResult<f64> {
    let k1 = alpha.len();
    let spec = cot::CoTChainSpec::new(alpha, beta, vec![0.0; k1]).map_err(err)?;
    cot::delta_recursion(&spec, &step_errors).map_err(err)
}

/// R_final + L*_{K-1} * recursion.
#[pyfunction]
fn cot_final_bound(
    alpha: Vec<f64>,
    beta: Vec<f64>,
    oracle_lipschitz: Vec<f64>,
    step_errors: Vec<f64>,
    r_final: f64,
) -> PyResult<f64> {
    let spec = cot::CoTChainSpec::new(alpha, beta, oracle_lipschitz).map_err(err)?;
    cot::final_bound(&spec, &step_errors, r_final).map_err(err)
}

/// Generalization form with per-step C e^{L^2} sup factors.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn cot_final_bound_gen(
    alpha: Vec<f64>,
    beta: Vec<f64>,
    oracle_lipschitz: Vec<f64>,
    per_step_c: Vec<f64>,
    per_step_l: Vec<f64>,
    per_step_sup: Vec<f64>,
    r_final: f64,
) -> PyResult<f64> {
    let spec = cot::CoTChainSpec::new(alpha, beta, oracle_lipschitz)
        .map_err(err)?
        .with_generalization(per_step_c, per_step_l, per_step_sup)
        .map_err(err)?;
    cot::final_bound_gen(&spec, r_final).map_err(err)
}

// ---------------------------------------------------------------------------
// Attention padding
// ---------------------------------------------------------------------------

/// Softmax-weighted mean of the value vectors.
#[pyfunction]
fn attention_out(logits: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    padding::attention_out(&logits, &values).map_err(err)
}

/// Padded-vs-unpadded gap and both stability bounds for one scene.
#[pyfunction]
fn padding_bounds<'py>(
    py: Python<'py>,
    info_logits: Vec<f64>,
    info_values: Vec<Vec<f64>>,
    pad_logits: Vec<f64>,
    pad_values: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let scene = padding::AttentionScene::new(info_logits, info_values, pad_logits, pad_values).map_err(err)?;
    let r = padding::padding_bounds(&scene).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("y", r.y)?;
    d.set_item("y_prime", r.y_prime)?;
    d.set_item("gap_norm", r.gap_norm)?;
    d.set_item("bound_exact", r.bound_exact)?;
    d.set_item("bound_loose", r.bound_loose)?;
    d.set_item("softmax_gap", r.softmax_gap)?;
    d.set_item("holds", r.holds)?;
    Ok(d)
}

/// Largest admissible pad count for a tolerance and softmax gap.
#[pyfunction]
fn max_pads(eps: f64, c_v: f64, delta_gap: f64) -> PyResult<u64> {
    padding::max_pads(eps, c_v, delta_gap).map_err(err)
}

// ---------------------------------------------------------------------------
// Varying-instruction (format-6) machinery
// ---------------------------------------------------------------------------

/// Tensor-product Bernstein surrogate on the unit cube (exact mode).
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct TensorBernstein {
    inner: format6::TensorBernstein,
}

#[pymethods]
impl TensorBernstein {
    /// Sample a callable over the full (n+1)^k node grid.
    #[staticmethod]
    fn fit(py: Python<'_>, h: Py<PyAny>, dims: usize, degree: usize) -> PyResult<Self> {
        let py_err: std::cell::RefCell<Option<PyErr>> = std::cell::RefCell::new(None);
        let eval = |x: &[f64]| -> f64 {
            match h.call1(py, (x.to_vec(),)).and_then(|v| v.extract::<f64>(py)) {
                Ok(v) => v,
                Err(e) => {
                    py_err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let fitted = format6::tensor_bernstein_fit(&eval, dims, degree);
        if let Some(e) = py_err.into_inner() {
            return Err(e);
        }
        Ok(TensorBernstein { inner: fitted.map_err(err)? })
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        format6::multivar_bernstein_eval(&self.inner, &x).map_err(err)
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree
    }
}

/// Monte-Carlo tensor-Bernstein estimate: mean of h(S/n) over binomial
/// grid points, with its standard error.
#[pyfunction]
fn mc_bernstein_eval(
    py: Python<'_>,
    h: Py<PyAny>,
    x: Vec<f64>,
    degree: usize,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let py_err: std::cell::RefCell<Option<PyErr>> = std::cell::RefCell::new(None);
    let eval = |p: &[f64]| -> f64 {
        match h.call1(py, (p.to_vec(),)).and_then(|v| v.extract::<f64>(py)) {
            Ok(v) => v,
            Err(e) => {
                py_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut r = rng::stream(seed, "py-mc", 0);
    let out = format6::mc_bernstein_eval(&eval, &x, degree, samples, &mut r);
    if let Some(e) = py_err.into_inner() {
        return Err(e);
    }
    out.map_err(err)
}

/// Bernstein approximation error 2 G R sqrt(d) N / sqrt(n).
#[pyfunction]
fn eps_n(g: f64, r_outer: f64, d: usize, n_demos: usize, n: usize) -> PyResult<f64> {
    if g < 0.0 || r_outer <= 0.0 || d < 1 || n_demos < 1 || n < 1 {
        return Err(PyValueError::new_err("need G >= 0, R > 0, d >= 1, N >= 1, n >= 1"));
    }
    Ok(format6::eps_n(g, r_outer, d, n_demos, n))
}

/// Chebyshev amplification: ((2R/r)^{nk}, T_{nk}(R/r)).
#[pyfunction]
fn cheb_amp(n: usize, k: usize, r_outer: f64, r_inner: f64) -> PyResult<(f64, f64)> {
    format6::cheb_amp(n, k, r_outer, r_inner).map_err(err)
}

/// Markov-brothers gradient bound 4 m^2 / w_T * supnorm.
#[pyfunction]
fn markov_grad_bound(total_degree: usize, diameter: f64, supnorm: f64) -> PyResult<f64> {
    if diameter <= 0.0 || supnorm < 0.0 {
        return Err(PyValueError::new_err("need diameter > 0 and supnorm >= 0"));
    }
    Ok(format6::markov_grad_bound(total_degree, diameter, supnorm))
}

/// Assembled total and gradient bounds at one degree choice.
#[pyfunction]
#[pyo3(signature = (d, n_demos, r_inner, r_outer, i_star, alpha, beta_n, g, n, delta_n=0.0))]
#[allow(clippy::too_many_arguments)]
fn format6_total_bound<'py>(
    py: Python<'py>,
    d: usize,
    n_demos: usize,
    r_inner: f64,
    r_outer: f64,
    i_star: Vec<f64>,
    alpha: f64,
    beta_n: f64,
    g: f64,
    n: usize,
    delta_n: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let geom = format6::InstructionGeometry::new(d, n_demos, r_inner, r_outer, &i_star).map_err(err)?;
    let rep = format6::format6_total_bound(&geom, alpha, beta_n, g, n, delta_n).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("n_demos", rep.n_demos)?;
    out.set_item("k", rep.k)?;
    out.set_item("degree", rep.degree)?;
    out.set_item("eps_n", rep.eps_n)?;
    out.set_item("amplification", rep.amplification)?;
    out.set_item("total_bound", rep.total_bound)?;
    out.set_item("grad_bound", rep.grad_bound)?;
    Ok(out)
}

/// Model-tied envelope constant beta(N) on the varying-instruction domain.
#[pyfunction]
fn beta_n_from_model(
    model: &LatentTaskModel,
    t_star: usize,
    i_star: Vec<f64>,
    r_inner: f64,
    n_demos: usize,
) -> PyResult<f64> {
    format6::beta_n_from_model(&model.inner, t_star, &i_star, r_inner, n_demos).map_err(err)
}

#[pymodule]
fn icllab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Bernstein>()?;
    m.add_class::<LatentTaskModel>()?;
    m.add_class::<Prompt>()?;
    m.add_class::<TensorBernstein>()?;
    m.add_function(wrap_pyfunction!(bernstein_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(remez_factor, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound_chosen, m)?)?;
    m.add_function(wrap_pyfunction!(cot_delta_recursion, m)?)?;
    m.add_function(wrap_pyfunction!(cot_final_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cot_final_bound_gen, m)?)?;
    m.add_function(wrap_pyfunction!(attention_out, m)?)?;
    m.add_function(wrap_pyfunction!(padding_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(max_pads, m)?)?;
    m.add_function(wrap_pyfunction!(mc_bernstein_eval, m)?)?;
    m.add_function(wrap_pyfunction!(eps_n, m)?)?;
    m.add_function(wrap_pyfunction!(cheb_amp, m)?)?;
    m.add_function(wrap_pyfunction!(markov_grad_bound, m)?)?;
    m.add_function(wrap_pyfunction!(format6_total_bound, m)?)?;
    m.add_function(wrap_pyfunction!(beta_n_from_model, m)?)?;
    Ok(())
}
