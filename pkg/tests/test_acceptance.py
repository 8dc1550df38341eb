"""Acceptance criteria, each run at its stated tolerance.

Every criterion records one ``CRITERION k ... PASS|FAIL`` line, printed in the
terminal summary.  Criteria that need a certified Gaussian design at
``n=24, p=32`` report FAIL and xfail when the bounded seed search finds none;
a certified partial-orthonormal design of the same size is then run as a
separately labelled supplementary line.
"""
import json
from math import log, sqrt

import numpy as np
import pytest
import sympy as sp

from concentra.bounds import (
    bg_schedule,
    cleanup_inequality_sides,
    derive_sharp_constants,
    example_bound_sweep,
    general_small_ball_radius,
    l1_small_ball_radius,
    laplace_sweep,
    noise_event_membership,
    sg_schedule,
)
from concentra.cli import main
from concentra.dantzig import dantzig_select, failure_mass, lambda_p
from concentra.harness import (
    CertificationError,
    ExperimentConfig,
    find_certified_design,
    run_concentration_experiment,
    run_dantzig_experiment,
)
from concentra.posterior import (
    ball_mass,
    enumerate_posterior,
    posterior_mean,
    verify_determinant_bounds,
    verify_reconstruction_terms,
    verify_ridge_projection_gap,
)
from concentra.priors import PriorSpec, small_ball_lb_bg, small_ball_lb_sg, tail_mass_nonsparse_bg
from concentra.problem import (
    ProblemInstance,
    generate_design,
    gram_l1_linf_norm,
    synthesize_observation,
)
from concentra.rip import certify_rip
from conftest import record_acceptance
from oracles import (
    ball_mass_by_grid,
    bg_small_ball_stratified,
    binomial_upper_tail,
    posterior_by_quadrature,
    sg_small_ball_stratified,
    soft_threshold,
)

GAUSSIAN_SEARCH = 5000
DESK = dict(n=24, p=32, S=1, sigma=0.5)


def _line(k, ok, text):
    record_acceptance(f"CRITERION {k:>2} {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture(scope="module")
def gaussian_design():
    """Bounded search for a certified Gaussian design; ``None`` with the reason if absent."""
    try:
        inst, cert, tried = find_certified_design(
            ExperimentConfig(ensemble="gaussian", seed_search_limit=GAUSSIAN_SEARCH, **DESK))
        return inst, cert, f"seed {inst.seed}"
    except CertificationError as err:
        return None, None, str(err)


@pytest.fixture(scope="module")
def orthonormal_design():
    inst, cert, _ = find_certified_design(ExperimentConfig(ensemble="partial_orthonormal", **DESK))
    return inst, cert


def _gaussian_or_xfail(k, gaussian_design):
    inst, cert, why = gaussian_design
    if inst is None:
        _line(k, False, f"gaussian design: {why}; see decisions ledger")
        pytest.xfail(f"no certified gaussian design at n=24, p=32: {why}")
    return inst, cert


class TestCriterion1Dantzig:
    def _check(self, inst, cert, label):
        cfg = ExperimentConfig(trials=2000, alpha=1.0, **DESK)
        s = run_dantzig_experiment(cfg, inst, cert)["summary"]
        ok = s["certified"] and s["frequency"] <= s["failure_mass"] + 3 * s["std_error"]
        _line(1, ok, f"{label}: failure frequency {s['frequency']:.4f} over 2000 trials, "
                     f"bound {s['failure_mass']:.4f} + 3 SE {s['std_error']:.4f}")
        assert ok

    def test_gaussian(self, gaussian_design):
        self._check(*_gaussian_or_xfail(1, gaussian_design), "gaussian")

    def test_supplementary_orthonormal(self, orthonormal_design):
        self._check(*orthonormal_design, "supplementary partial_orthonormal")


class TestCriterion2SoftThreshold:
    def test_identity_design(self):
        p, sigma, alpha = 16, 0.7, 1.0
        X = np.sqrt(p) * np.eye(p)
        rng = np.random.default_rng(2)
        t = lambda_p(p, alpha) * sigma
        worst = 0.0
        for _ in range(100):
            y = rng.normal(0, 3, p)
            got = dantzig_select(X, y, sigma, alpha).beta_tilde
            want = soft_threshold(y, t)
            worst = max(worst, float(np.abs(got - want).max()))
        ok = worst <= 1e-6
        _line(2, ok, f"identity design, 100 draws, max deviation {worst:.2e} <= 1e-6")
        assert ok


class TestCriterion3PosteriorOracle:
    def test_quadrature_and_grid(self):
        worst_rel, worst_z, ok = 0.0, 0.0, True
        for p in (2, 3):
            X = generate_design(5, p, "gaussian", 30 + p)
            beta0 = np.zeros(p)
            beta0[0] = 1.0
            inst = ProblemInstance(1, X, beta0, 0.8)
            y = synthesize_observation(inst, 5).y
            V = 1.2
            mix = enumerate_posterior(inst, y, V)
            w, means, mean = posterior_by_quadrature(X, y, 0.8, V)
            order = np.argsort(mix.supports[:, 0])
            for got, want in ((mix.weights[order], w), (mix.mus[order, 0], means),
                              (posterior_mean(mix), mean)):
                rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-300)
                worst_rel = max(worst_rel, float(rel[np.abs(want) > 1e-12].max(initial=0.0)))
            for radius in (0.3, 0.7, 1.5):
                est, se = ball_mass(mix, beta0, radius, trials=100_000, seed=p, index=int(10 * radius))
                exact = ball_mass_by_grid(X, y, 0.8, V, beta0, radius)
                z = abs(est - exact) / max(se, 1e-12)
                worst_z = max(worst_z, z if abs(est - exact) > 1e-12 else 0.0)
                ok &= abs(est - exact) <= 3 * se + 1e-12
        ok &= worst_rel <= 1e-6
        _line(3, ok, f"p in {{2,3}}: max relative error {worst_rel:.2e} (<= 1e-6), "
                     f"max mass deviation {worst_z:.2f} SE (<= 3)")
        assert ok


def _certified_small(rng, start):
    for seed in range(start, start + 2000):
        p = int(rng.integers(8, 13))
        S = int(rng.integers(1, 3))
        X = generate_design(80, p, "gaussian", seed)
        beta0 = np.zeros(p)
        beta0[rng.choice(p, S, replace=False)] = rng.uniform(-1, 1, S)
        inst = ProblemInstance(S, X, beta0, 0.5, seed=seed)
        cert = certify_rip(inst.Xtilde, S)
        if cert.satisfied:
            return inst, cert, seed
    raise AssertionError("no certified small instance")


class TestCriterion4InequalitySuite:
    def test_suite(self):
        rng = np.random.default_rng(4)
        failures, seed = [], 0
        for i in range(20):
            inst, cert, seed = _certified_small(rng, seed + 1)
            e = synthesize_observation(inst, 0, i).e
            for V in (0.5, 1.0):
                reps = [verify_determinant_bounds(inst, V, cert),
                        verify_ridge_projection_gap(inst, V, cert),
                        verify_reconstruction_terms(inst, V, cert, e, 1.0)]
                failures += [(inst.seed, V, r.name) for r in reps if not r.passed]

        # noise event on the last instance, 10^4 draws
        alpha, draws = 1.0, 10_000
        ens = np.random.default_rng(44).standard_normal((draws, inst.n)) * inst.sigma
        hits = np.array([noise_event_membership(inst.Xtilde, e, inst.sigma, alpha) for e in ens])
        freq = hits.mean()
        se = sqrt(freq * (1 - freq) / draws)
        floor = 1 - failure_mass(inst.p, alpha) - 3 * se
        event_ok = freq >= floor

        # cleanup inequality on a grid above its threshold
        d, t = cert.delta_k, cert.theta
        A = derive_sharp_constants(d, t, inst.sigma, alpha)[0]
        tau0 = A * sqrt((1 + alpha) * inst.S * log(inst.p) / inst.n)
        lhs, rhs = cleanup_inequality_sides(tau0 * np.linspace(1.0, 10.0, 91), d, t, inst.sigma,
                                            alpha, inst.S, inst.n, inst.p)
        cleanup_ok = bool(np.all(lhs - rhs <= 1e-12 * np.abs(rhs)))

        ok = not failures and event_ok and cleanup_ok
        _line(4, ok, f"20 certified instances x V in {{0.5,1}}: {len(failures)} inequality failures; "
                     f"noise event frequency {freq:.4f} >= {floor:.4f}; cleanup grid "
                     f"{'holds' if cleanup_ok else 'fails'}")
        assert ok, failures


class TestCriterion5Concentration:
    def _check(self, inst, cert, label):
        cfg = ExperimentConfig(trials=500, V=1.0, tau=1.0, alpha=6.0, **DESK)
        res = run_concentration_experiment(cfg, inst, cert)
        s = res["summary"]
        if s["bound_vacuous"]:
            ok = True
            text = f"vacuous at alpha=6, frontier {[r['alpha'] for r in res['frontier']][:3]}"
        else:
            ok = s["mc_mean_complement"] <= s["bound_total"] + 3 * s["mc_std_error"]
            text = (f"MC complement mass {s['mc_mean_complement']:.3e} (SE {s['mc_std_error']:.1e}) "
                    f"<= bound {s['bound_total']:.4f} at alpha=6; non-vacuous from alpha="
                    f"{s['smallest_nonvacuous_alpha']}")
        _line(5, ok, f"{label}: {text}")
        assert ok

    def test_gaussian(self, gaussian_design):
        self._check(*_gaussian_or_xfail(5, gaussian_design), "gaussian")

    def test_supplementary_orthonormal(self, orthonormal_design):
        self._check(*orthonormal_design, "supplementary partial_orthonormal")


class TestCriterion6SharpBound:
    def _check(self, inst, cert, label):
        cfg = ExperimentConfig(trials=500, V=2.0, alpha=6.0, **DESK)
        s = run_concentration_experiment(cfg, inst, cert)["summary"]
        ok = s["sharp_fraction"] >= s["sharp_required_fraction"] - 3 * s["sharp_fraction_se"]
        _line(6, ok, f"{label}: lower bound held on {s['sharp_held_draws']}/{s['sharp_applicable_draws']} "
                     f"applicable draws, fraction {s['sharp_fraction']:.4f} >= "
                     f"{s['sharp_required_fraction']:.4f} - 3 SE")
        assert ok

    def test_gaussian(self, gaussian_design):
        self._check(*_gaussian_or_xfail(6, gaussian_design), "gaussian")

    def test_supplementary_orthonormal(self, orthonormal_design):
        self._check(*orthonormal_design, "supplementary partial_orthonormal")


class TestCriterion7SmallBall:
    def test_grid(self):
        rng = np.random.default_rng(7)
        bad = []
        for case in range(24):
            p = int(rng.integers(2, 9))
            V = float(rng.choice([0.5, 1.0, 2.0]))
            C1 = float(rng.uniform(0.2, 1.5))
            beta0 = np.zeros(p)
            if case % 2 == 0:
                S = int(rng.integers(1, min(3, p) + 1))
                beta0[rng.choice(p, S, replace=False)] = rng.uniform(-1, 1, S)
                lb = small_ball_lb_sg(PriorSpec.sparsity_gaussian(p, S, V), beta0, C1, 1.0)
                est, se = sg_small_ball_stratified(p, S, V, beta0, C1, 20_000, rng)
            else:
                K = int(rng.integers(1, min(2, p - 1) + 1))
                beta0[rng.choice(p, K, replace=False)] = rng.uniform(-1, 1, K)
                lb = small_ball_lb_bg(PriorSpec.bernoulli_gaussian(p, K / p, V), beta0, C1, K, 1.0)
                est, se = bg_small_ball_stratified(p, K / p, V, beta0, C1, 5_000, rng)
            if lb > est + 3 * se:
                bad.append(case)
        tails = 0
        for p in range(2, 31):
            for K in range(1, p):
                for S in range(K, p + 1):
                    tails += binomial_upper_tail(p, K / p, S) > (
                        tail_mass_nonsparse_bg(K / p, p, K, S) * (1 + 1e-12) + 1e-300)
        ok = not bad and tails == 0
        _line(7, ok, f"24 grid cases, {len(bad)} lower bounds above MC + 3 SE; "
                     f"{tails} binomial tails above the Chernoff bound for p <= 30")
        assert ok


class TestCriterion8Sweeps:
    def test_sweeps(self):
        out = []
        ok = True
        for name, sched in (("sg", sg_schedule(np.logspace(2, 8, 25))),
                            ("bg", bg_schedule(np.logspace(4, 16, 25)))):
            rows, summary = example_bound_sweep(name, sched)
            knee = summary["knee"]
            totals = np.array([r["total"] for r in rows])
            this = knee is not None and bool(np.all(np.diff(totals[knee:]) <= 0)) and totals[-1] < totals[knee]
            ok &= this
            out.append(f"{name} knee n={rows[knee]['n'] if knee is not None else None:.3g} "
                       f"final total {totals[-1]:.2e}")
        lap = laplace_sweep(sg_schedule(np.logspace(2, 8, 25)))
        lap_ok = all(r["vacuous"] for r in lap)
        ok &= lap_ok
        _line(8, ok, "; ".join(out) + f"; laplace vacuous on {sum(r['vacuous'] for r in lap)}/{len(lap)} rows")
        assert ok


class TestCriterion9GeneralRadius:
    def test_radius_ordering(self):
        worst, count = -np.inf, 0
        for ens in ("gaussian", "rademacher", "partial_orthonormal"):
            for seed in range(5):
                for n, p in ((24, 32), (40, 64), (80, 100)):
                    X = generate_design(n, p, ens, seed)
                    G = gram_l1_linf_norm(X)
                    for sigma in (0.5, 1.0):
                        for tau in (0.5, 1.0, 2.0):
                            nu = 1 + tau
                            kappa = sigma * sqrt(n) * sqrt(2 * nu * log(p))
                            diff = l1_small_ball_radius(tau, p, sigma, n) - general_small_ball_radius(
                                nu, kappa, G, sigma, p)
                            worst = max(worst, diff)
                            count += 1
        sym = sp.simplify(4 * sp.sqrt(2) * sp.sqrt(2) - 8) == 0
        ok = worst <= 1e-12 and sym
        _line(9, ok, f"{count} instance settings, max C_tau - C_nu,kappa = {worst:.3e} (<= 0); "
                     f"4 sqrt2 sqrt2 = 8 {'symbolic' if sym else 'fails'}")
        assert ok


class TestCriterion10Reproducibility:
    def test_byte_identical(self, tmp_path):
        cfg = dict(ensemble="partial_orthonormal", trials=40, mc_samples=1000,
                   sweep={"example": "bg", "ns": [1e4, 1e6, 1e8]}, **DESK)
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        files = {"concentrate": ["concentrate.csv", "concentrate_frontier.csv"],
                 "sweep": ["sweep.csv"], "dantzig": ["dantzig_trials.csv"]}
        same = []
        for cmd, names in files.items():
            extra = ["--experiment"] if cmd == "dantzig" else []
            for run in ("a", "b"):
                assert main([cmd, *extra, "--config", str(tmp_path / "cfg.json"), "--seed", "11",
                             "--format", "csv", "--threads", "2" if run == "b" else "1",
                             "--out", str(tmp_path / run)]) == 0
            for name in names:
                same.append((tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes())
        ok = all(same)
        _line(10, ok, f"{sum(same)}/{len(same)} CSV outputs byte-identical across reruns")
        assert ok
