#!/usr/bin/env python3
"""Smoke test for the icllab_py extension module.

Builds the cdylib if needed, loads it, and checks a handful of hand-computable
values from each subsystem. Run from the repository root:

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    so = ROOT / "target" / "release" / "libicllab_py.so"
    if not so.exists():
        print("building icllab-py (release, extension-module) ...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "icllab-py", "--features", "extension-module"],
            cwd=ROOT,
            check=True,
        )
    stage = Path(tempfile.mkdtemp(prefix="icllab_py_"))
    shutil.copy(so, stage / "icllab_py.so")
    sys.path.insert(0, str(stage))
    import icllab_py

    return icllab_py


CHECKS = []


def check(name, ok, detail=""):
    CHECKS.append((name, ok))
    print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")


def main():
    lab = load_module()

    # Bernstein operator: affine exactness, quadratic closed form, error law.
    b = lab.Bernstein.fit(lambda t: t, 5)
    check("bernstein affine", abs(b.eval(0.2) - 0.2) < 1e-12)
    sq = lab.Bernstein.fit(lambda t: t * t, 2)
    check("bernstein quadratic", abs(sq.eval(0.5) - 0.375) < 1e-12)
    check("bernstein error bound", lab.bernstein_error_bound(1.0, 4) == 0.25)

    # Remez factor and the grid audit of the identity polynomial.
    check("remez factor", lab.remez_factor((0.0, 1.0), [(0.0, 0.5)], 1) == 8.0)
    rep = lab.Bernstein([0.0, 1.0]).verify_remez((0.0, 1.0), [(0.0, 0.5)], 1001)
    check(
        "remez verify",
        rep["holds"] and abs(rep["sup_host"] - 1.0) < 1e-12 and abs(rep["sup_parts"] - 0.5) < 1e-12,
    )

    # Path bound arithmetic.
    check("theorem1 bound", abs(lab.theorem1_bound(2.0, 8.0, 0.1, 4) - 2458.1) < 1e-9)
    n, bound = lab.theorem1_bound_chosen(1.0, 4.0, 0.0)
    check("theorem1 chosen", n == 1 and abs(bound - 2.5) < 1e-12)

    # Latent-task model: brute-force KL, decay rate, posterior decay.
    model = lab.LatentTaskModel.flip(0.1)
    check("flip KL", abs(model.kl_tasks(0, 1) - 0.8 * math.log(9.0)) < 1e-12)
    check("alpha rate", abs(model.alpha_rate(0) - 0.4 * math.log(9.0)) < 1e-12)
    curve = model.decay_experiment(3, 0, [1, 4, 16, 64], 200, seed=1)
    check(
        "posterior decay",
        curve["n0"] == 1 and curve["median_gap"][-1] < 1e-10 and curve["fitted_slope"] < -curve["alpha"],
        f"slope {curve['fitted_slope']:.3f} vs -alpha {-curve['alpha']:.3f}",
    )

    # Posterior normalization and the odds-reconstruction identity.
    prompt = model.sample_prompt(0, 5, 4, seed=7)
    post = model.posterior(prompt)
    check(
        "posterior normalized",
        abs(sum(post["posterior"]) - 1.0) < 1e-12 and post["reconstruction_gap"] < 1e-10,
    )

    # Analytic gradient against finite differences, on a mixed-posterior
    # model where gradients sit far above the differencing roundoff floor.
    fd_model = lab.LatentTaskModel.flip(0.3, mean_sep=0.6, instr_radius=2.0)
    fd_prompt = fd_model.sample_prompt(0, 5, 2, seed=11)
    grad = fd_model.instruction_gradient(fd_prompt)
    check("gradient identity", grad["rel_err"] <= 1e-6, f"rel err {grad['rel_err']:.2e}")

    # CoT hand case: delta 0.3, final bound 0.65.
    delta = lab.cot_delta_recursion([1.0, 1.0], [1.0, 1.0], [0.1, 0.2])
    fb = lab.cot_final_bound([1.0, 1.0], [1.0, 1.0], [2.0, 2.0], [0.1, 0.2], 0.05)
    check("cot recursion", abs(delta - 0.3) < 1e-12 and abs(fb - 0.65) < 1e-12)

    # Attention padding: hand case and admissible pad count.
    pad = lab.padding_bounds([5.0], [[1.0]], [0.0, 0.0, 0.0], [[1.0], [-1.0], [1.0]])
    check(
        "padding hand case",
        pad["holds"] and abs(pad["bound_exact"] - 6.0 / (math.exp(5.0) + 3.0)) < 1e-12,
    )
    check("max pads", lab.max_pads(0.1, 1.0, 5.0) == 7)

    # Varying-instruction machinery.
    check("eps_n", lab.eps_n(1.0, 1.0, 1, 4, 64) == 1.0)
    loose, exact = lab.cheb_amp(1, 2, 2.0, 1.0)
    check("cheb amp", abs(loose - 16.0) < 1e-9 and abs(exact - 7.0) < 1e-12)
    check("markov bound", lab.markov_grad_bound(2, 2.0, 1.0) == 8.0)
    t = lab.TensorBernstein.fit(lambda x: x[0] * x[0], 2, 2)
    check("tensor quadratic", abs(t.eval([0.5, 0.3]) - 0.375) < 1e-12)
    est, se = lab.mc_bernstein_eval(lambda x: x[0] * x[1], [0.5, 0.5], 8, 20000, seed=3)
    t2 = lab.TensorBernstein.fit(lambda x: x[0] * x[1], 2, 8)
    check("mc estimator", abs(est - t2.eval([0.5, 0.5])) <= 3 * se, f"est {est:.4f} +- {se:.4f}")
    rep6 = lab.format6_total_bound(1, 2, 0.5, 1.0, [0.0], 0.5, 3.0, 1.0, 1)
    expect = 16.0 * (3.0 * math.exp(-1.0) + 4.0) + 4.0
    check("format6 total bound", abs(rep6["total_bound"] - expect) < 1e-9)

    failed = [n for n, ok in CHECKS if not ok]
    print(f"\n{len(CHECKS) - len(failed)}/{len(CHECKS)} smoke checks passed")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
