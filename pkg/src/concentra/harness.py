"""End-to-end experiments: Monte Carlo checks of the bounds, power calculations, sweeps."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from math import log, sqrt
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import (
    ConcentrationParams,
    SharpBoundParams,
    bg_schedule,
    concentration_bound,
    example_bound_sweep,
    l1_small_ball_radius,
    laplace_sweep,
    sg_schedule,
    sharp_mass_lower_bound,
)
from .dantzig import dantzig_select, estimation_radius, failure_mass
from .posterior import ball_mass, enumerate_posterior
from .priors import (
    PriorSpec,
    laplace_smallball_diagnostic,
    small_ball_lb_bg_log,
    small_ball_lb_sg_log,
    tail_mass_nonsparse_bg_log,
)
from .problem import ProblemInstance, generate_design, normalized_design, synthesize_observation
from .rip import DEFAULT_CAP, certify_rip

__all__ = [
    "CertificationError",
    "InfeasibleError",
    "ExperimentConfig",
    "RADIUS_MODES",
    "build_truth",
    "find_certified_design",
    "prior_mass_terms",
    "run_dantzig_experiment",
    "run_concentration_experiment",
    "vacuity_frontier",
    "PowerQuery",
    "InstanceFamily",
    "power_calculation",
    "confirm_power",
    "asymptotic_sweep",
]

RADIUS_MODES = ("concentration", "sharp", "custom")
SOLVER_SLACK = 1e-6


class CertificationError(RuntimeError):
    """No design passing ``delta_{2S} + theta_{S,2S} < 1`` was found within the seed budget."""


class InfeasibleError(ValueError):
    """No grid point satisfies the power-calculation constraints."""


def _reject_unknown(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    """Parameters of one experiment, loadable from a JSON document.

    Unknown keys are rejected.  ``prior`` is a prior JSON object; when absent
    the sparsity-Gaussian prior with sparsity ``S`` and slab scale ``V`` is used.
    ``power`` and ``sweep`` hold the settings of those subcommands.
    """

    n: int = 24
    p: int = 32
    S: int = 1
    sigma: float = 0.5
    R: float = 0.0
    ensemble: str = "gaussian"
    design_seed: int = 0
    seed_search_limit: int = 1000
    signal: float = 1.0
    beta0: Optional[list] = None
    V: float = 1.0
    prior: Optional[dict] = None
    alpha: float = 6.0
    tau: float = 1.0
    u: float = 1.0
    v: float = float("inf")
    kappa: Optional[float] = None
    nu: Optional[float] = None
    trials: int = 500
    ball_radius_mode: str = "concentration"
    radius: Optional[float] = None
    mc_samples: int = 4000
    alpha_grid: Optional[list] = None
    cap: int = DEFAULT_CAP
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    power: Optional[dict] = None
    sweep: Optional[dict] = None

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if self.ball_radius_mode not in RADIUS_MODES:
            raise ValueError(f"ball_radius_mode must be one of {RADIUS_MODES}")
        if self.ball_radius_mode == "custom" and self.radius is None:
            raise ValueError("ball_radius_mode 'custom' needs radius")
        if int(self.threads) < 1:
            raise ValueError("threads must be at least 1")
        if isinstance(self.v, str):
            self.v = float(self.v)
        self.prior_spec  # validates the prior

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        _reject_unknown(d, names, "config")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        d = asdict(self)
        if np.isinf(d["v"]):
            d["v"] = "inf"
        return d

    @property
    def prior_spec(self):
        if self.prior is None:
            return PriorSpec.sparsity_gaussian(self.p, self.S, self.V)
        d = dict(self.prior)
        d.setdefault("p", self.p)
        return PriorSpec.from_dict(d)


def build_truth(p, S, signal=1.0, beta0=None):
    """``beta0`` if given, else ``signal`` on the first ``S`` coordinates."""
    if beta0 is not None:
        return np.asarray(beta0, dtype=float)
    b = np.zeros(p)
    b[:S] = signal
    return b


def find_certified_design(cfg, n=None):
    """Search design seeds from ``cfg.design_seed`` until ``delta + theta < 1``.

    Returns
    -------
    inst : ProblemInstance
    cert : RipCertificate
    tried : int
        Number of seeds examined.

    Raises
    ------
    CertificationError
        When ``cfg.seed_search_limit`` seeds all fail.
    """
    n = cfg.n if n is None else int(n)
    beta0 = build_truth(cfg.p, cfg.S, cfg.signal, cfg.beta0)
    best = np.inf
    for i in range(int(cfg.seed_search_limit)):
        seed = int(cfg.design_seed) + i
        X = generate_design(n, cfg.p, cfg.ensemble, seed)
        cert = certify_rip(normalized_design(X), cfg.S, cap=cfg.cap)
        best = min(best, cert.delta_k + cert.theta)
        if cert.satisfied:
            inst = ProblemInstance(cfg.S, X, beta0, cfg.sigma, cfg.R, seed=seed,
                                   ensemble=cfg.ensemble)
            return inst, cert, i + 1
    raise CertificationError(
        f"no certified {cfg.ensemble} design with n={n}, p={cfg.p}, S={cfg.S} among "
        f"{cfg.seed_search_limit} seeds from {cfg.design_seed}; smallest delta + theta was {best:.4f}"
    )


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _binomial_se(freq, m):
    return sqrt(max(freq * (1 - freq), 0.0) / m)


def run_dantzig_experiment(cfg, inst=None, cert=None):
    """Empirical frequency of ``||beta_hat - beta0||_2 > epsilon`` over ``cfg.trials`` noise draws.

    Returns a dict with per-trial ``rows`` and a ``summary`` comparing the
    frequency against ``1 / (p^alpha sqrt(pi log p))``.  Errors within
    ``SOLVER_SLACK (1 + ||beta0||)`` of the radius are not counted, so that
    noiseless runs with ``eps = 0`` are not failed by LP round-off.
    """
    if inst is None:
        inst, cert, _ = find_certified_design(cfg)
    eps = estimation_radius(inst.S, inst.R, inst.n, inst.p, cfg.alpha,
                            cert.delta_k, cert.theta, inst.sigma)
    slack = SOLVER_SLACK * (1 + float(np.linalg.norm(inst.beta0)))

    def trial(t):
        obs = synthesize_observation(inst, cfg.seed, t)
        sol = dantzig_select(inst.X, obs.y, inst.sigma, cfg.alpha)
        err = float(np.linalg.norm(sol.beta_hat - inst.beta0))
        return {"trial": t, "error": err, "failure": err > eps + slack}

    rows = _map(trial, range(cfg.trials), cfg.threads)
    fails = sum(r["failure"] for r in rows)
    freq = fails / cfg.trials
    se = _binomial_se(freq, cfg.trials)
    theory = failure_mass(inst.p, cfg.alpha)
    summary = {
        "n": inst.n, "p": inst.p, "s": inst.S, "sigma": inst.sigma, "alpha": cfg.alpha,
        "design_seed": inst.seed, "delta": cert.delta_k, "theta": cert.theta,
        "certified": cert.satisfied, "epsilon": eps, "trials": cfg.trials,
        "failures": fails, "frequency": freq, "std_error": se,
        "failure_mass": theory, "within_bound": bool(freq <= theory + 3 * se),
        "max_error": max(r["error"] for r in rows),
    }
    return {"rows": rows, "summary": summary}


def prior_mass_terms(prior, beta0, C1, S, C_sup=None):
    """Log small-ball mass and log non-compressible mass for a prior.

    Returns ``(log_smallball, log_tail, exact)``.  For the Laplace prior the
    small-ball value is the volume upper estimate, so ``exact`` is False and a
    bound built from it is only a lower bound on the true bound.
    """
    beta0 = np.asarray(beta0, dtype=float)
    C_sup = float(np.abs(beta0).max()) if C_sup is None else C_sup
    if prior.kind == "sparsity_s_gaussian":
        return small_ball_lb_sg_log(prior, beta0, C1, C_sup), -np.inf, True
    if prior.kind == "bernoulli_gaussian":
        K = int(round(prior.p * prior.phi))
        nnz = int(np.count_nonzero(beta0))
        if abs(prior.p * prior.phi - K) > 1e-9 or K < 1:
            raise ValueError("the Bernoulli-Gaussian bounds need p * phi to be a positive integer")
        if K != nnz:
            raise ValueError(f"p * phi = {K} must equal the number of nonzeros of beta0 ({nnz})")
        log_sb = small_ball_lb_bg_log(prior, beta0, C1, K, C_sup)
        return log_sb, tail_mass_nonsparse_bg_log(prior.phi, prior.p, K, max(S, K)), True
    return min(0.0, laplace_smallball_diagnostic(prior.lam, prior.p, 1, C1)), -np.inf, False


def _bound_at(inst, cert, prior, alpha, tau):
    params = ConcentrationParams(alpha=alpha, tau=tau, S=inst.S, n=inst.n, p=inst.p,
                                 sigma=inst.sigma, delta=cert.delta_k, theta=cert.theta,
                                 R=inst.R, delta_is_lower_bound=not cert.exact)
    log_sb, log_tail, _ = prior_mass_terms(prior, inst.beta0, params.small_ball_radius, inst.S)
    return concentration_bound(params, log_smallball=log_sb, log_nonsparse_tail=log_tail)


def vacuity_frontier(inst, cert, prior, tau, alphas):
    """Bound totals over a grid of ``alpha``; rows with ``alpha <= 1 + tau`` are skipped."""
    rows = []
    for a in alphas:
        if not a > 1 + tau:
            continue
        rep = _bound_at(inst, cert, prior, float(a), tau)
        rows.append({"alpha": float(a), "epsilon": rep.epsilon, "total": rep.total,
                     "log_total": rep.log_total, "vacuous": rep.vacuous})
    return rows


def run_concentration_experiment(cfg, inst=None, cert=None):
    """Measure ``E Pi(||beta - beta0|| >= r | y)`` with the exact posterior.

    For every trial the posterior mixture is enumerated, the complement mass
    of the ball of radius ``r`` is estimated, and the sharp per-draw lower
    bound on the mass of the ball of radius ``2 eps_sharp`` is compared
    against a direct measurement of that mass.

    The radius is ``2 eps`` (``ball_radius_mode="concentration"``), the sharp
    bound's ``2 eps`` (``"sharp"``) or ``cfg.radius``.

    Returns
    -------
    dict
        ``rows`` (one per trial), ``frontier`` (bound totals over
        ``cfg.alpha_grid``) and ``summary``.
    """
    prior = cfg.prior_spec
    if prior.kind != "sparsity_s_gaussian":
        raise ValueError("the exact posterior is available only for the sparsity-Gaussian prior")
    if inst is None:
        inst, cert, _ = find_certified_design(cfg)
    V = prior.V
    eps = estimation_radius(inst.S, inst.R, inst.n, inst.p, cfg.alpha,
                            cert.delta_k, cert.theta, inst.sigma)
    C_sup = float(np.abs(inst.beta0).max())
    sharp = SharpBoundParams(S=inst.S, V=V, sigma=inst.sigma, n=inst.n, p=inst.p,
                             alpha=cfg.alpha, delta=cert.delta_k, theta=cert.theta, C_sup=C_sup)
    bound = _bound_at(inst, cert, prior, cfg.alpha, cfg.tau) if cfg.alpha > 1 + cfg.tau else None

    def trial(t):
        obs = synthesize_observation(inst, cfg.seed, t)
        mix = enumerate_posterior(inst, obs.y, V, cap=cfg.cap)
        sb = sharp_mass_lower_bound(sharp, obs.y)
        radius = {"concentration": 2 * eps, "sharp": 2 * sb.epsilon,
                  "custom": cfg.radius}[cfg.ball_radius_mode]
        inside, se = ball_mass(mix, inst.beta0, radius, cfg.mc_samples, seed=cfg.seed, index=(t, 0))
        sharp_inside, sharp_se = ball_mass(mix, inst.beta0, 2 * sb.epsilon, cfg.mc_samples,
                                           seed=cfg.seed, index=(t, 1))
        return {
            "trial": t, "radius": radius, "complement_mass": max(0.0, 1.0 - inside), "mc_std_error": se,
            "sharp_epsilon": sb.epsilon, "sharp_lower_bound": sb.mass_lower_bound,
            "sharp_applicable": sb.applicable, "sharp_ball_mass": sharp_inside,
            "sharp_std_error": sharp_se,
            "sharp_holds": bool(sb.mass_lower_bound <= sharp_inside + 3 * sharp_se),
        }

    rows = _map(trial, range(cfg.trials), cfg.threads)
    comp = np.array([r["complement_mass"] for r in rows])
    mean = float(comp.mean())
    se = float(comp.std(ddof=1) / sqrt(comp.size)) if comp.size > 1 else float(rows[0]["mc_std_error"])
    applicable = [r for r in rows if r["sharp_applicable"]]
    held = sum(r["sharp_holds"] for r in applicable)
    frac = held / len(applicable) if applicable else 1.0
    frac_se = _binomial_se(frac, len(applicable)) if applicable else 0.0
    fm = failure_mass(inst.p, cfg.alpha)
    alphas = cfg.alpha_grid if cfg.alpha_grid is not None else list(np.arange(2.5, 12.01, 0.5))
    frontier = vacuity_frontier(inst, cert, prior, cfg.tau, alphas)
    nonvacuous = [r["alpha"] for r in frontier if not r["vacuous"]]
    summary = {
        "n": inst.n, "p": inst.p, "s": inst.S, "sigma": inst.sigma, "v": V,
        "alpha": cfg.alpha, "tau": cfg.tau, "design_seed": inst.seed,
        "delta": cert.delta_k, "theta": cert.theta, "epsilon": eps,
        "radius_mode": cfg.ball_radius_mode, "trials": cfg.trials,
        "mc_mean_complement": mean, "mc_std_error": se,
        "bound_total": None if bound is None else bound.total,
        "bound_vacuous": None if bound is None else bound.vacuous,
        "bound_holds": None if bound is None else bool(mean <= bound.total + 3 * se),
        "smallest_nonvacuous_alpha": min(nonvacuous) if nonvacuous else None,
        "sharp_applicable_draws": len(applicable), "sharp_held_draws": held,
        "sharp_fraction": frac, "sharp_fraction_se": frac_se,
        "sharp_required_fraction": 1 - fm,
        "sharp_holds": bool(frac >= 1 - fm - 3 * frac_se),
    }
    return {"rows": rows, "frontier": frontier, "summary": summary}


# ---------------------------------------------------------------------------
# power calculation


@dataclass
class PowerQuery:
    """Targets and search grids of a power calculation.

    The guarantee sought is ``pr(Pi(B_r(beta0)^c | y) > rho) < xi`` with
    ``r = 2 eps``; by Markov's inequality it suffices that the bound total
    divided by ``rho`` is below ``xi``.  The cost ``Q(r, n)`` defaults to
    ``w_r r + w_n n``; any callable that is nondecreasing in both arguments
    may be supplied instead.
    """

    xi: float
    rho: float
    ns: Sequence[int]
    alphas: Sequence[float]
    taus: Sequence[float]
    cost_weights: tuple = (1.0, 0.0)
    cost: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.xi < 1 or not 0 < self.rho < 1:
            raise ValueError("xi and rho must lie in (0, 1)")
        if not len(self.ns) or not len(self.alphas) or not len(self.taus):
            raise ValueError("search grids must be nonempty")
        if min(self.cost_weights) < 0 or max(self.cost_weights) <= 0:
            raise ValueError("cost weights must be nonnegative and not both zero")

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, {"xi", "rho", "ns", "alphas", "taus", "cost_weights"}, "power")
        d = dict(d)
        if "cost_weights" in d:
            d["cost_weights"] = tuple(d["cost_weights"])
        return cls(**d)

    def Q(self, r, n):
        if self.cost is not None:
            return float(self.cost(r, n))
        return self.cost_weights[0] * r + self.cost_weights[1] * n


@dataclass
class InstanceFamily:
    """Designs indexed by ``n`` with fixed ``p``, ``S``, ``sigma`` and truth.

    Each ``n`` is certified by searching design seeds as in
    :func:`find_certified_design`.
    """

    p: int
    S: int
    sigma: float
    signal: float = 1.0
    ensemble: str = "gaussian"
    design_seed: int = 0
    seed_search_limit: int = 200
    cap: int = DEFAULT_CAP

    def config(self, n):
        return ExperimentConfig(n=int(n), p=self.p, S=self.S, sigma=self.sigma,
                                signal=self.signal, ensemble=self.ensemble,
                                design_seed=self.design_seed,
                                seed_search_limit=self.seed_search_limit, cap=self.cap)


def _check_cost_monotone(query, points):
    rs = sorted({r for r, _ in points})
    ns = sorted({n for _, n in points})
    grid = np.array([[query.Q(r, n) for n in ns] for r in rs])
    if np.any(np.diff(grid, axis=0) < 0) or np.any(np.diff(grid, axis=1) < 0):
        raise ValueError("the cost Q must be nondecreasing in r and in n on the search grid")


def power_calculation(query, prior, family):
    """Smallest-cost ``(n, alpha, tau)`` meeting the significance and concentration targets.

    A grid point is feasible when ``total / rho < xi`` and
    ``1 / (rho p^tau sqrt(pi log p)) < xi``.  Among feasible points the one
    minimizing ``Q(2 eps, n)`` is returned, ties broken by the grid order.

    Returns
    -------
    n_star, alpha_star, tau_star, r_star : number
    certificate : dict
        Bound report, design seed and the resulting guarantee: with
        probability above ``1 - xi - 1/(p^alpha sqrt(pi log p))`` the posterior
        puts more than ``1 - rho`` on the ball of radius ``4 eps`` around the
        Dantzig estimate.

    Raises
    ------
    InfeasibleError
        Naming the constraint that no grid point could satisfy.
    """
    p = family.p
    floor_ok = [t for t in query.taus if 1 / (query.rho * p**t * sqrt(np.pi * log(p))) < query.xi]
    if not floor_ok:
        raise InfeasibleError(
            "no feasible (n, alpha, tau): the side constraint 1/(rho p^tau sqrt(pi log p)) < xi "
            "fails for every tau on the grid")
    candidates, points = [], []
    for n in query.ns:
        try:
            inst, cert, _ = find_certified_design(family.config(n))
        except Exception:
            continue
        for a in query.alphas:
            for t in floor_ok:
                if not a > 1 + t:
                    continue
                rep = _bound_at(inst, cert, prior, float(a), float(t))
                r = 2 * rep.epsilon
                points.append((r, int(n)))
                if rep.log_total - log(query.rho) < log(query.xi):
                    candidates.append((query.Q(r, int(n)), int(n), float(a), float(t), r, rep, inst))
    if not points:
        raise InfeasibleError("no feasible (n, alpha, tau): no certified design on the n grid "
                              "or no alpha above 1 + tau")
    _check_cost_monotone(query, points)
    if not candidates:
        raise InfeasibleError("no feasible (n, alpha, tau): the bound total divided by rho "
                              "stays above xi on the whole grid")
    best = min(candidates, key=lambda c: c[0])
    _, n, a, t, r, rep, inst = best
    cert = {
        "design_seed": inst.seed, "bound": rep.to_dict(), "cost": best[0],
        "xi": query.xi, "rho": query.rho,
        "guarantee": {
            "radius_around_estimate": 2 * r,
            "mass_at_least": 1 - query.rho,
            "probability_at_least": 1 - query.xi - failure_mass(p, a),
        },
    }
    return n, a, t, r, cert


def confirm_power(query, prior, family, n, r, trials=200, seed=0, mc_samples=2000, threads=1):
    """Monte Carlo frequency of ``Pi(B_r(beta0)^c | y) > rho`` at a chosen ``n``.

    Returns ``(frequency, std_error)``.
    """
    if prior.kind != "sparsity_s_gaussian":
        raise ValueError("confirmation needs the sparsity-Gaussian prior")
    inst, _, _ = find_certified_design(family.config(n))

    def trial(t):
        obs = synthesize_observation(inst, seed, t)
        mix = enumerate_posterior(inst, obs.y, prior.V)
        inside, _ = ball_mass(mix, inst.beta0, r, mc_samples, seed=seed, index=t)
        return 1.0 - inside > query.rho

    hits = _map(trial, range(trials), threads)
    freq = sum(hits) / trials
    return freq, _binomial_se(freq, trials)


# ---------------------------------------------------------------------------
# sweeps




def asymptotic_sweep(example, ns=None, schedule=None, p_factor=2.0, growth=0.4, sigma=1.0,
                     V=1.0, C_sup=1.0, q=1.0):
    """Bound totals along a growth schedule.

    ``example`` is ``"sg"``, ``"bg"`` or ``"laplace"`` (a Laplace prior with
    ``lam = 1`` swept along the sparsity-Gaussian schedule).

    Returns
    -------
    rows : list of dict
    summary : dict
    """
    if schedule is None:
        if ns is None:
            raise ValueError("give ns or a schedule")
        maker = bg_schedule if example == "bg" else sg_schedule
        schedule = maker(ns, p_factor=p_factor, sigma=sigma, V=V, C_sup=C_sup, growth=growth)
    if example == "laplace":
        rows = laplace_sweep(schedule)
        return rows, {"all_vacuous": all(r["vacuous"] for r in rows)}
    return example_bound_sweep(example, schedule, q=q)
