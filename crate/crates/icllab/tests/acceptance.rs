//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! and pinning its tolerance in code.

use std::time::Instant;

use icllab::format6::{cheb_amp, markov_grad_bound, mc_bernstein_eval, multivar_bernstein_eval, tensor_bernstein_fit};
use icllab::harness::{run, ModelConfig, RunConfig, RunContext, Scenario, Subcommand};
use icllab::latent_task::TaskModel;
use icllab::rng::Streams;

fn ctx(dir: &std::path::Path) -> RunContext {
    RunContext {
        out_dir: dir.to_path_buf(),
        emit_json: true,
        golden_dir: None,
        regen_golden: false,
    }
}

fn run_default(sub: Subcommand, seed: u64, dir: &std::path::Path) -> icllab::harness::RunReport {
    let mut cfg = RunConfig::default_for(sub);
    cfg.seed = seed;
    cfg.seed_overridden = false;
    run(&cfg, &ctx(dir)).expect("campaign runs")
}

fn conclude(criterion: &str, start: Instant, limit_s: f64, ok: bool, detail: &str) {
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "ACCEPTANCE {criterion}: {} ({detail}; {elapsed:.2}s, limit {limit_s}s)",
        if ok && elapsed < limit_s { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion}: {detail}");
    assert!(elapsed < limit_s, "{criterion}: took {elapsed:.2}s, limit {limit_s}s");
}

#[test]
fn criterion_01_bernstein_error_law() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // 200 random piecewise-linear functions, exact L in [0.5, 10],
    // n in {4, 16, 64, 256}: 800/800 within L/(2 sqrt(n)); the quadratic
    // closed form holds to 1e-12.
    let rep = run_default(Subcommand::Bernstein, 42, tmp.path());
    conclude("1 bernstein-error-law", start, 10.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_02_remez_inequality() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // 500 random polynomials of degree <= 8, covers with measure >= 0.1,
    // 10^4-point grids.
    let rep = run_default(Subcommand::RemezVerify, 42, tmp.path());
    conclude("2 remez-inequality", start, 10.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_03_theorem1_soundness() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // 100 synthetic fields with constructed exact constants plus the
    // degenerate cases (l = 0, E = J, constant field).
    let rep = run_default(Subcommand::PathAudit, 42, tmp.path());
    conclude("3 theorem1-soundness", start, 5.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_04_posterior_decay() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Flip model at eta = 0.1: brute-forced KL 1.7578, alpha 0.8789.
    let model = ModelConfig::default().build().unwrap();
    let kl = model.kl_tasks(0, 1);
    let alpha = model.alpha_rate(0);
    let constants_ok = (kl - 1.7578).abs() < 1e-4 && (alpha - 0.8789).abs() < 1e-4;
    // Formats 1-5, N in {1,...,64}, 2000 trials: envelope from N0,
    // log-median slope <= -alpha, and incorrect-instruction formats 2/4
    // converge to the correct predictive.
    let rep = run_default(Subcommand::Decay, 42, tmp.path());
    conclude(
        "4 posterior-decay",
        start,
        60.0,
        constants_ok && rep.all_hold(),
        &format!("KL {kl:.4}, alpha {alpha:.4}; {}", one_line(&rep)),
    );
}

#[test]
fn criterion_05_gradient_identity() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Analytic vs central finite differences, rel err <= 1e-6 on 100 random
    // interior prompts per format (runner block 1).
    let rep = run_default(Subcommand::Sensitivity, 42, tmp.path());
    let identity_ok = rep
        .checks
        .iter()
        .filter(|c| c.name.starts_with("gradient_identity_format"))
        .all(|c| c.holds);
    let count = rep.checks.iter().filter(|c| c.name.starts_with("gradient_identity_format")).count();
    conclude(
        "5 gradient-identity",
        start,
        30.0,
        identity_ok && count == 6,
        &format!("{count} formats checked"),
    );
}

#[test]
fn criterion_06_gradient_decay() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Formats 1-5: median gradient at N=64 <= 0.1x its N=1 value, and every
    // sample respects the 4G(|T|-1)A_max e^(-alpha N) envelope from N0 on.
    let rep = run_default(Subcommand::Sensitivity, 42, tmp.path());
    let decay_ok = rep
        .checks
        .iter()
        .filter(|c| c.name.starts_with("gradient_decay_format") || c.name.starts_with("gradient_envelope_format"))
        .all(|c| c.holds);
    let count = rep
        .checks
        .iter()
        .filter(|c| c.name.starts_with("gradient_decay_format"))
        .count();
    conclude("6 gradient-decay", start, 60.0, decay_ok && count == 5, &format!("{count} formats"));
}

#[test]
fn criterion_07_format6_contrast() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // (i) The non-vanishing scan over N in {4,...,256} with n up to N^3
    // (capped) never drops below its N=4 minimum while the fixed-domain
    // envelope decays below 1e-6.
    let scan = run_default(Subcommand::Format6Bound, 42, tmp.path());
    // (ii) Under the lambda = 0.5 instruction-coupled channel, the median
    // gradient norm at N=64 stays >= 0.5x its N=4 value.
    let sens = run_default(Subcommand::Sensitivity, 42, tmp.path());
    let persistence = sens
        .checks
        .iter()
        .find(|c| c.name == "format6_coupled_persistence")
        .expect("contrast block present");
    conclude(
        "7 format6-contrast",
        start,
        120.0,
        scan.all_hold() && persistence.holds,
        &format!("scan: {}; {}", one_line(&scan), persistence.detail),
    );
}

#[test]
fn criterion_08_expected_stability() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // eps_log in {0, 0.05, 0.1}, delta = 0.05: measured expected gap within
    // 2 beta e^(-alpha N) + 2 eps_N + 3 standard errors at every N.
    let rep = run_default(Subcommand::Stability, 42, tmp.path());
    conclude("8 expected-stability", start, 60.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_09_padding_lemma() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // 1000 random scenes: gap <= exact <= loose; regeneration at
    // m = max_pads(0.1, C_V, Delta) keeps the gap under 0.1; the hand case
    // reproduces 6/(e^5+3) ~ 0.03963 within 1e-6.
    let rep = run_default(Subcommand::PaddingAudit, 42, tmp.path());
    conclude("9 padding-lemma", start, 10.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_10_cot_recursion() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Hand case: delta bound 0.3 and final bound 0.65 exactly; 50 synthetic
    // rollouts hold 50/50; the bound is monotone under randomized upward
    // perturbations.
    let rep = run_default(Subcommand::CotAudit, 42, tmp.path());
    conclude("10 cot-recursion", start, 10.0, rep.all_hold(), &one_line(&rep));
}

#[test]
fn criterion_11_multivariate_bernstein() {
    let start = Instant::now();

    // Multilinear exactness at k = 2 for every axis degree up to 8.
    let f = |x: &[f64]| 1.5 * x[0] - 0.7 * x[1] + 2.0 * x[0] * x[1] - 0.1;
    let mut multilinear_dev = 0.0f64;
    for n in 1..=8usize {
        let t = tensor_bernstein_fit(&f, 2, n).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let p = [i as f64 / 10.0, j as f64 / 10.0];
                multilinear_dev = multilinear_dev.max((multivar_bernstein_eval(&t, &p).unwrap() - f(&p)).abs());
            }
        }
    }

    // Monte-Carlo estimator: exact value inside the 3-standard-error band in
    // at least 99% of 200 repetitions.
    let h = |x: &[f64]| x[0] * x[1] + 0.3 * x[0];
    let exact = {
        let t = tensor_bernstein_fit(&h, 2, 8).unwrap();
        multivar_bernstein_eval(&t, &[0.3, 0.7]).unwrap()
    };
    let streams = Streams::new(42, "acceptance-mc");
    let mut inside = 0usize;
    for rep in 0..200u64 {
        let mut rng = streams.rng(rep);
        let (est, se) = mc_bernstein_eval(&h, &[0.3, 0.7], 8, 4000, &mut rng).unwrap();
        if (est - exact).abs() <= 3.0 * se {
            inside += 1;
        }
    }

    // Chebyshev amplification: exact T_2(2) = 7 against the loose 16.
    let (loose, exact_t) = cheb_amp(1, 2, 2.0, 1.0).unwrap();

    // Markov bound on random degree-<=6 tensor polynomials over the unit
    // square (diameter sqrt(2)), gradient probed by finite differences.
    let mut markov_ok = true;
    let mut rng = Streams::new(42, "acceptance-markov").rng(0);
    use rand::Rng;
    for _ in 0..10 {
        let deg = 1 + rng.random_range(0..3usize);
        let nodes: Vec<f64> = (0..(deg + 1) * (deg + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = icllab::format6::TensorBernstein { dims: 2, degree: deg, node_values: nodes };
        let grid = 30usize;
        let fd = 1e-6;
        let mut sup = 0.0f64;
        let mut grad_max = 0.0f64;
        for i in 0..=grid {
            for j in 0..=grid {
                let x = [i as f64 / grid as f64, j as f64 / grid as f64];
                sup = sup.max(multivar_bernstein_eval(&t, &x).unwrap().abs());
                let mut g2 = 0.0;
                for ax in 0..2 {
                    let mut up = x;
                    let mut dn = x;
                    up[ax] = (x[ax] + fd).min(1.0);
                    dn[ax] = (x[ax] - fd).max(0.0);
                    let dv = (multivar_bernstein_eval(&t, &up).unwrap()
                        - multivar_bernstein_eval(&t, &dn).unwrap())
                        / (up[ax] - dn[ax]);
                    g2 += dv * dv;
                }
                grad_max = grad_max.max(g2.sqrt());
            }
        }
        markov_ok &= grad_max <= markov_grad_bound(2 * deg, 2.0f64.sqrt(), sup) + 1e-6;
    }

    let ok = multilinear_dev <= 1e-12
        && inside >= 198
        && (loose - 16.0).abs() < 1e-9
        && (exact_t - 7.0).abs() < 1e-9
        && markov_ok;
    conclude(
        "11 multivariate-bernstein",
        start,
        30.0,
        ok,
        &format!(
            "multilinear dev {multilinear_dev:.2e}, MC inside band {inside}/200, T_2(2) = {exact_t}, loose {loose}"
        ),
    );
}

#[test]
fn criterion_12_reproducibility() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Byte-identical CSV and JSON under a repeated seed for every
    // subcommand; a changed seed moves at least one Monte-Carlo digest.
    let mut all_identical = true;
    let mut seed_sensitive = false;
    for sub in Subcommand::all_runnable() {
        let cfg = small_scenario(sub, 42);
        let a = run(&cfg, &ctx(&tmp.path().join(format!("{}-a", sub.name())))).unwrap();
        let b = run(&cfg, &ctx(&tmp.path().join(format!("{}-b", sub.name())))).unwrap();
        let digests = |r: &icllab::harness::RunReport| {
            let mut d: Vec<(String, String)> = r
                .files
                .iter()
                .map(|f| {
                    let name = std::path::Path::new(&f.path).file_name().unwrap();
                    (name.to_string_lossy().to_string(), f.digest.clone())
                })
                .collect();
            d.sort();
            d
        };
        if digests(&a) != digests(&b) {
            all_identical = false;
            println!("  {} differs between identical reruns", sub.name());
        }
        let reseeded = small_scenario(sub, 43);
        let c = run(&reseeded, &ctx(&tmp.path().join(format!("{}-c", sub.name())))).unwrap();
        let moved = digests(&a)
            .iter()
            .zip(digests(&c).iter())
            .any(|((na, da), (nc, dc))| na == nc && da != dc);
        seed_sensitive |= moved;
    }
    conclude(
        "12 reproducibility",
        start,
        120.0,
        all_identical && seed_sensitive,
        "reruns byte-identical; reseeding moves Monte-Carlo digests",
    );
}

fn one_line(rep: &icllab::harness::RunReport) -> String {
    let held = rep.checks.iter().filter(|c| c.holds).count();
    format!("{held}/{} checks hold", rep.checks.len())
}

/// Reduced campaigns for the reproducibility matrix (it exercises the
/// determinism contract, not the statistics).
fn small_scenario(sub: Subcommand, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default_for(sub);
    cfg.seed = seed;
    cfg.seed_overridden = false;
    cfg.scenario = match cfg.scenario {
        Scenario::Bernstein { n_values, l_min, l_max, .. } => {
            Scenario::Bernstein { functions: 8, n_values, grid: 64, l_min, l_max }
        }
        Scenario::RemezVerify { max_degree, min_measure, .. } => {
            Scenario::RemezVerify { polynomials: 12, max_degree, min_measure, grid: 400 }
        }
        Scenario::PathAudit { dim, .. } => Scenario::PathAudit { fields: 10, dim, grid: 256 },
        Scenario::Decay { model, variant, lambda, .. } => Scenario::Decay {
            model,
            formats: vec![2, 3],
            variant,
            lambda,
            n_list: vec![1, 4, 16],
            trials: 40,
        },
        Scenario::Sensitivity { model, lambda, .. } => Scenario::Sensitivity {
            model,
            formats: vec![1],
            n_list: vec![1, 4, 64],
            trials: 30,
            fd_prompts: 4,
            fd_demos: 2,
            contrast_trials: 30,
            lambda,
        },
        Scenario::Stability { model, format, delta, .. } => Scenario::Stability {
            model,
            format,
            n_list: vec![1, 8],
            trials: 40,
            eps_log_list: vec![0.0, 0.1],
            delta,
        },
        Scenario::CotAudit { .. } => Scenario::CotAudit { scenarios: 8, max_steps: 4 },
        Scenario::PaddingAudit { max_dim, max_pad_count, eps, .. } => {
            Scenario::PaddingAudit { scenes: 25, max_dim, max_pad_count, eps }
        }
        Scenario::Format6Bound { model, n_demos_list, r_inner, r_outer, .. } => {
            Scenario::Format6Bound { model, n_demos_list, r_inner, r_outer, degree_cap: 4096 }
        }
        Scenario::Report => Scenario::Report,
    };
    cfg
}
