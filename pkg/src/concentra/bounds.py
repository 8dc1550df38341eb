"""Finite-sample upper bounds on posterior mass outside a ball around the truth.

Every bound is assembled from log-scale terms so that totals far above 1
(vacuous) or far below machine epsilon are represented faithfully.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb, exp, log, pi, sqrt

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .dantzig import estimation_radius, failure_mass
from .priors import (
    laplace_smallball_diagnostic,
    small_ball_bg_closed_form_log,
    small_ball_sg_closed_form_log,
    tail_mass_nonsparse_bg_log,
)
from .rip import DEFAULT_CAP, EnumerationCapError

__all__ = [
    "l1_small_ball_radius",
    "ConcentrationParams",
    "BoundReport",
    "concentration_bound",
    "sparsity_gaussian_bound",
    "general_small_ball_radius",
    "correlation_event_failure_bound",
    "general_concentration_bound",
    "noise_event_membership",
    "SharpBoundParams",
    "SharpBoundResult",
    "derive_sharp_constants",
    "sharp_epsilon",
    "sharp_mass_lower_bound",
    "cleanup_inequality_sides",
    "ConsistencyVerdict",
    "consistency_check",
    "sg_schedule",
    "bg_schedule",
    "example_bound_sweep",
    "laplace_sweep",
]


def _log_failure_mass(p, a):
    return -a * log(p) - 0.5 * log(pi * log(p))


def _safe_exp(x):
    return float(np.exp(min(x, 709.0))) if x < 709.0 else float("inf")


def l1_small_ball_radius(tau, p, sigma, n):
    """``(1/3) sqrt(2 sigma^2 (1 + tau) log p / n)``, the ``l1`` radius of the prior small ball."""
    if p < 2:
        raise ValueError("need p >= 2")
    if n < 1:
        raise ValueError("need n >= 1")
    return sqrt(2 * sigma**2 * (1 + tau) * log(p) / n) / 3


@dataclass(frozen=True)
class ConcentrationParams:
    """Inputs of the four-term bound.

    Requires ``0 < 1 + tau < alpha`` and ``delta + theta < 1``.
    ``delta_is_lower_bound`` marks constants that came from random search
    rather than enumeration, which voids the guarantee.
    """

    alpha: float
    tau: float
    S: int
    n: int
    p: int
    sigma: float
    delta: float
    theta: float
    R: float = 0.0
    delta_is_lower_bound: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 1 + self.tau < self.alpha:
            raise ValueError(f"need 1 + tau < alpha, got tau={self.tau}, alpha={self.alpha}")
        if not self.delta + self.theta < 1:
            raise ValueError("delta + theta must be below 1")
        if self.p < 2:
            raise ValueError("need p >= 2")

    @property
    def epsilon(self):
        return estimation_radius(self.S, self.R, self.n, self.p, self.alpha,
                                 self.delta, self.theta, self.sigma)

    @property
    def small_ball_radius(self):
        return l1_small_ball_radius(self.tau, self.p, self.sigma, self.n)


@dataclass
class BoundReport:
    """Four-term bound on the expected posterior mass outside ``B_{2 eps}(beta0)``.

    ``log_terms`` holds the natural logs of the four terms (``-inf`` for an
    exactly zero term).  ``vacuous`` is ``total >= 1``; totals are not clipped.
    """

    epsilon: float
    term_fixed: float
    term_sparse: float
    term_concentration: float
    term_matrix: float
    total: float
    vacuous: bool
    log_terms: tuple = ()
    inputs_echo: dict = field(default_factory=dict)

    @property
    def log_total(self):
        return float(logsumexp(self.log_terms))

    def to_dict(self):
        d = asdict(self)
        d["log_terms"] = list(self.log_terms)
        return d


def _report(epsilon, log_terms, inputs):
    terms = [_safe_exp(t) for t in log_terms]
    log_total = float(logsumexp(log_terms))
    total = float(sum(terms))
    return BoundReport(
        epsilon=epsilon, term_fixed=terms[0], term_sparse=terms[1],
        term_concentration=terms[2], term_matrix=terms[3], total=total,
        vacuous=bool(log_total >= 0.0), log_terms=tuple(float(t) for t in log_terms),
        inputs_echo=inputs,
    )


def concentration_bound(params, smallball=None, nonsparse_tail=0.0, *, log_smallball=None,
                        log_nonsparse_tail=None):
    """Bound on ``E Pi(||beta - beta0||_2 > 2 eps | y)`` for an arbitrary prior.

    Terms, with ``m = Pi(B^{l1}_{C_tau}(beta0))`` the prior small-ball mass and
    ``t`` the prior mass of non-compressible vectors outside the ball::

        1 / (p^alpha sqrt(pi log p))
        p^(1+tau) t / m
        p^(1+tau) / (p^alpha sqrt(pi log p) m)
        1 / (p^tau sqrt(pi log p))

    Either probability may be passed on the log scale instead.
    """
    if log_smallball is None:
        if smallball is None or not smallball > 0:
            raise ValueError("small-ball mass must be positive; the prior puts no mass near beta0")
        if smallball > 1:
            raise ValueError("small-ball mass cannot exceed 1")
        log_smallball = log(smallball)
    elif not np.isfinite(log_smallball):
        raise ValueError("small-ball mass must be positive")
    if log_nonsparse_tail is None:
        if not 0 <= nonsparse_tail <= 1:
            raise ValueError("nonsparse_tail must lie in [0, 1]")
        log_nonsparse_tail = log(nonsparse_tail) if nonsparse_tail > 0 else -np.inf
    a, tau, p = params.alpha, params.tau, params.p
    lp = log(p)
    log_terms = (
        _log_failure_mass(p, a),
        (1 + tau) * lp + log_nonsparse_tail - log_smallball,
        (1 + tau) * lp + _log_failure_mass(p, a) - log_smallball,
        _log_failure_mass(p, tau),
    )
    inputs = asdict(params)
    inputs.update(log_smallball=float(log_smallball),
                  log_nonsparse_tail=float(log_nonsparse_tail),
                  small_ball_radius=params.small_ball_radius)
    return _report(params.epsilon, log_terms, inputs)


def sparsity_gaussian_bound(p, alpha, smallball):
    """The ``tau = 1`` form ``(2 + p^2 / m) / (p^alpha sqrt(pi log p))`` used for the
    sparsity-Gaussian prior, whose non-compressible mass is zero.

    It replaces the last term ``1 / (p sqrt(pi log p))`` of the four-term bound
    by ``1 / (p^alpha sqrt(pi log p))``, so it is smaller than the four-term
    total by exactly the difference of those two quantities.
    """
    return (2 + p**2 / smallball) * failure_mass(p, alpha)


def general_small_ball_radius(nu, kappa, gram_norm, sigma, p):
    """Radius ``C_{nu,kappa}`` of the prior ball in the general bound::

        sqrt(2 G sigma^2 nu log p) / (kappa + sqrt(kappa^2 + 2 G sigma^2 nu log p))
            * sqrt(2 sigma^2 nu log p / G)

    with ``G = ||X^T X||`` in the relevant operator norm.
    """
    if not gram_norm > 0:
        raise ValueError("gram_norm must be positive")
    q = 2 * gram_norm * sigma**2 * nu * log(p)
    if q == 0:
        return 0.0
    if np.isinf(kappa):
        return 0.0
    return sqrt(q) / (kappa + sqrt(kappa**2 + q)) * sqrt(2 * sigma**2 * nu * log(p) / gram_norm)


def correlation_event_failure_bound(kappa, sigma, n, p):
    """Union bound ``min(1, 2 p Phibar(kappa / (sigma sqrt n)))`` on
    ``P(||X^T e||_inf > kappa)`` when every column has squared norm ``n``."""
    if sigma == 0:
        return 0.0
    z = kappa / (sigma * sqrt(n))
    return float(min(1.0, exp(log(2 * p) + log_ndtr(-z))))


def general_concentration_bound(u, v, kappa, nu, alpha, inst, cert, smallball_u,
                                nonsparse_tail, prob_Ac):
    """Four-term bound with free ``(u, v, kappa, nu)``.

    Only ``(u, v) = (1, inf)`` is supported.  Terms::

        1 / (p^alpha sqrt(pi log p))
        p^nu t / m
        p^nu / (p^alpha sqrt(pi log p) m)
        P(||X^T e||_v > kappa)

    where ``m`` is the prior mass of the ``l_u`` ball of radius
    :func:`general_small_ball_radius`.
    """
    if (u, v) != (1, np.inf):
        raise ValueError(f"only (u, v) = (1, inf) is supported, got ({u}, {v})")
    if not 0 < nu < alpha:
        raise ValueError("need 0 < nu < alpha")
    if not smallball_u > 0:
        raise ValueError("small-ball mass must be positive")
    from .problem import gram_l1_linf_norm

    p = inst.p
    gram = gram_l1_linf_norm(inst.X)
    radius = general_small_ball_radius(nu, kappa, gram, inst.sigma, p)
    lp = log(p)
    log_tail = log(nonsparse_tail) if nonsparse_tail > 0 else -np.inf
    log_terms = (
        _log_failure_mass(p, alpha),
        nu * lp + log_tail - log(smallball_u),
        nu * lp + _log_failure_mass(p, alpha) - log(smallball_u),
        log(prob_Ac) if prob_Ac > 0 else -np.inf,
    )
    eps = estimation_radius(inst.S, inst.R, inst.n, p, alpha, cert.delta_k, cert.theta, inst.sigma)
    inputs = {"u": u, "v": "inf", "kappa": kappa, "nu": nu, "alpha": alpha,
              "gram_norm": gram, "small_ball_radius": radius}
    return _report(eps, log_terms, inputs)


def noise_event_membership(Xtilde, e, sigma, alpha, S_max=None, exhaustive=False,
                           cap=DEFAULT_CAP):
    """Whether ``||Xt_g^T e||^2 <= 4 sigma^2 (1 + alpha) |g| log p`` for every support ``g``.

    The left side is a sum over the columns of ``g`` and the right side is
    linear in ``|g|``, so the condition holds for all supports exactly when it
    holds for every single column.  ``exhaustive=True`` enumerates supports
    up to ``S_max`` instead and is kept as an independent check.
    """
    Xtilde = np.asarray(Xtilde, dtype=float)
    p = Xtilde.shape[1]
    corr_sq = (Xtilde.T @ np.asarray(e, dtype=float)) ** 2
    level = 4 * sigma**2 * (1 + alpha) * log(p)
    if not exhaustive:
        return bool(np.all(corr_sq <= level))
    S_max = p if S_max is None else min(int(S_max), p)
    total = sum(comb(p, k) for k in range(1, S_max + 1))
    if total > cap:
        raise EnumerationCapError(f"{total} supports exceeds the cap {cap}")
    for k in range(1, S_max + 1):
        sup = np.array(list(combinations(range(p), k)), dtype=np.intp)
        if np.any(corr_sq[sup].sum(axis=1) > level * k):
            return False
    return True


# ---------------------------------------------------------------------------
# sharp bound for the sparsity-Gaussian prior


def derive_sharp_constants(delta, theta, sigma, alpha):
    """Constants of the sharp sparsity-Gaussian bound.

    Returns
    -------
    A : float
        ``8 sqrt(2) sigma / (1 - delta - theta)``, the scale of the supports kept
        in the numerator.
    C2 : float
        ``(1 - delta + theta) A / sigma + 2``.
    C3 : float
        ``A``.  This coefficient carries a factor ``sigma``.
    eta : float
        Defined by ``(A^2 k / 2 - 4 sigma^2 / (1 - delta)) (1 + alpha) = 2 sigma^2 (1 + eta)``
        with ``k = 1 - delta - theta^2 / (1 - delta)``.
    """
    if not delta + theta < 1:
        raise ValueError("delta + theta must be below 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    gap = 1 - delta - theta
    A = 8 * sqrt(2) * sigma / gap
    C2 = (1 - delta + theta) * A / sigma + 2
    C3 = A
    k = 1 - delta - theta**2 / (1 - delta)
    eta = (A**2 * k / 2 - 4 * sigma**2 / (1 - delta)) * (1 + alpha) / (2 * sigma**2) - 1
    return A, C2, C3, eta


@dataclass(frozen=True)
class SharpBoundParams:
    """Inputs of the sharp sparsity-Gaussian bound; ``C_sup`` bounds ``||beta0||_inf``."""

    S: int
    V: float
    sigma: float
    n: int
    p: int
    alpha: float
    delta: float
    theta: float
    C_sup: float

    def __post_init__(self):
        if not self.delta < 29 / 31:
            raise ValueError("the sharp bound is stated for delta < 29/31")
        if not self.delta + self.theta < 1:
            raise ValueError("delta + theta must be below 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def constants(self):
        return derive_sharp_constants(self.delta, self.theta, self.sigma, self.alpha)

    @property
    def C2(self):
        return self.constants[1]

    @property
    def C3(self):
        return self.constants[2]

    @property
    def eta(self):
        return self.constants[3]


@dataclass(frozen=True)
class SharpBoundResult:
    epsilon: float
    mass_lower_bound: float
    applicable: bool
    log_denominator_excess: float


def sharp_epsilon(params):
    """``[C sigma^2 sqrt(S)/n + (C2 sigma V^2 + C3 sigma^2/n) r] / ((1-delta) V^2 + sigma^2/n)``
    with ``r = sqrt((1 + alpha) S log p / n)`` and ``C = C_sup``."""
    P = params
    _, C2, C3, _ = P.constants
    r = sqrt((1 + P.alpha) * P.S * log(P.p) / P.n)
    num = P.C_sup * P.sigma**2 * sqrt(P.S) / P.n + (C2 * P.sigma * P.V**2 + C3 * P.sigma**2 / P.n) * r
    return num / ((1 - P.delta) * P.V**2 + P.sigma**2 / P.n)


def sharp_mass_lower_bound(params, y):
    """Lower bound on ``Pi(B_{2 eps}(beta0) | y)`` under the sparsity-Gaussian prior.

    ``(1 - exp(-k eps^2 / 4)) / (1 + D)`` with ``k = n(1-delta)/sigma^2 + 1/V^2`` and
    ``D = (e^2 (n(1+delta)V^2 + sigma^2) / (n(1-delta)V^2 + sigma^2))^(S/2)
    exp(||y||^2 / (2 (n(1-delta)V^2 + sigma^2))) S^(-S) p^(-eta S)``.

    ``applicable`` is ``k eps^2 >= S / 2``; when false the bound is still
    returned but carries no guarantee.  Because ``eps`` is at least
    ``A sqrt((1 + alpha) S log p / n)`` the condition holds for every valid
    input; the flag is kept as a runtime check.
    """
    P = params
    _, _, _, eta = P.constants
    if not eta > 0:
        raise ValueError(f"eta = {eta:.6g} is not positive; the sharp bound does not apply")
    y = np.asarray(y, dtype=float)
    eps = sharp_epsilon(P)
    k = P.n * (1 - P.delta) / P.sigma**2 + 1 / P.V**2
    applicable = bool(k * eps**2 >= P.S / 2)
    hi = P.n * (1 + P.delta) * P.V**2 + P.sigma**2
    lo = P.n * (1 - P.delta) * P.V**2 + P.sigma**2
    log_D = ((P.S / 2) * (2 + log(hi / lo)) + (y @ y) / (2 * lo)
             - P.S * log(P.S) - eta * P.S * log(P.p))
    log_num = np.log(-np.expm1(-k * eps**2 / 4))
    log_bound = log_num - np.logaddexp(0.0, log_D)
    return SharpBoundResult(float(eps), float(np.exp(log_bound)), applicable, float(log_D))


def cleanup_inequality_sides(t, delta, theta, sigma, alpha, S, n, p):
    """Both sides of the quadratic cleanup inequality at ``t``::

        lhs = -n k t^2 + 4 sqrt(2) sigma (1-delta+theta)/(1-delta) sqrt((1+alpha) S n log p) t
        rhs = -(n/2) k t^2

    with ``k = 1 - delta - theta^2/(1-delta)``.  ``lhs <= rhs`` exactly when
    ``t >= A sqrt((1 + alpha) S log p / n)``.
    """
    k = 1 - delta - theta**2 / (1 - delta)
    t = np.asarray(t, dtype=float)
    lin = 4 * sqrt(2) * sigma * (1 - delta + theta) / (1 - delta) * sqrt((1 + alpha) * S * n * log(p))
    return -n * k * t**2 + lin * t, -(n / 2) * k * t**2


# ---------------------------------------------------------------------------
# asymptotics


@dataclass(frozen=True)
class ConsistencyVerdict:
    """Per-index status of the three growth conditions and the overall verdict.

    ``holds_from`` is the first index from which every later index satisfies
    all conditions (``None`` if the last index fails).
    """

    per_index: np.ndarray
    holds_from: int
    consistent: bool


def consistency_check(alpha_n, eta_n, phi_n, q):
    """Evaluate ``alpha >= 1 + q``, ``alpha - 2 eta - 2 >= q`` and
    ``2 phi - alpha - 2 eta - 2 >= q`` along a schedule.

    ``phi_n`` may be ``inf`` for priors without non-compressible mass.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    a = np.asarray(alpha_n, dtype=float)
    e = np.asarray(eta_n, dtype=float)
    f = np.asarray(phi_n, dtype=float)
    a, e, f = np.broadcast_arrays(a, e, f)
    with np.errstate(invalid="ignore"):
        ok = (a >= 1 + q) & (a - 2 * e - 2 >= q) & (2 * f - a - 2 * e - 2 >= q)
    if ok.size == 0 or not ok[-1]:
        return ConsistencyVerdict(ok, None, False)
    bad = np.flatnonzero(~ok)
    start = int(bad[-1] + 1) if bad.size else 0
    return ConsistencyVerdict(ok, start, True)


def sg_schedule(ns, p_factor=2.0, sigma=1.0, V=1.0, C_sup=1.0, delta=0.0, theta=0.0,
                growth=0.4):
    """Rows with ``S log p ~ n^growth`` and ``alpha = S log p`` for the sparsity-Gaussian prior."""
    rows = []
    for n in ns:
        p = int(np.ceil(p_factor * n))
        S = max(1, int(round(n**growth / log(p))))
        rows.append({"n": int(n), "p": p, "s": S, "k": S, "alpha": S * log(p), "tau": 1.0,
                     "sigma": sigma, "v": V, "c_sup": C_sup, "delta": delta, "theta": theta})
    return rows


def bg_schedule(ns, p_factor=2.0, sigma=1.0, V=1.0, C_sup=1.0, delta=0.0, theta=0.0,
                growth=0.4):
    """Rows with ``S = K log^2 p ~ n^growth`` and ``alpha = K log p`` for the
    Bernoulli-Gaussian prior with ``phi = K / p``."""
    rows = []
    for n in ns:
        p = int(np.ceil(p_factor * n))
        L = log(p)
        K = max(1, int(np.floor(n**growth / L**2)))
        S = min(p, int(np.ceil(K * L**2)))
        rows.append({"n": int(n), "p": p, "s": S, "k": K, "alpha": K * L, "tau": 1.0,
                     "sigma": sigma, "v": V, "c_sup": C_sup, "delta": delta, "theta": theta})
    return rows


def _row_bound(example, row):
    n, p, S, K = row["n"], row["p"], row["s"], row["k"]
    a, tau, sigma, V, C = row["alpha"], row["tau"], row["sigma"], row["v"], row["c_sup"]
    C1 = l1_small_ball_radius(tau, p, sigma, n)
    if example == "sg":
        log_sb = small_ball_sg_closed_form_log(S, p, n, sigma, V, C, C1=C1)
        log_tail = -np.inf
    elif example == "bg":
        log_sb = small_ball_bg_closed_form_log(K, p, n, sigma, V, C, C1=C1)
        log_tail = tail_mass_nonsparse_bg_log(K / p, p, K, S)
    else:
        raise ValueError(f"unknown example {example!r}; use 'sg' or 'bg'")
    return log_sb, log_tail


def _sweep_row(row, log_sb, log_tail):
    applicable = 1 + row["tau"] < row["alpha"]
    params = ConcentrationParams(
        alpha=row["alpha"] if applicable else 1 + row["tau"] + 1e-9, tau=row["tau"],
        S=row["s"], n=row["n"], p=row["p"], sigma=row["sigma"],
        delta=row["delta"], theta=row["theta"])
    rep = concentration_bound(params, log_smallball=log_sb, log_nonsparse_tail=log_tail)
    lt = rep.log_terms
    return {
        "n": row["n"], "p": row["p"], "s": row["s"], "alpha": row["alpha"],
        "epsilon": estimation_radius(row["s"], 0.0, row["n"], row["p"], row["alpha"],
                                     row["delta"], row["theta"], row["sigma"]),
        "term1": rep.term_fixed, "term2": rep.term_sparse,
        "term3": rep.term_concentration, "term4": rep.term_matrix,
        "total": rep.total, "vacuous": rep.vacuous, "log_total": rep.log_total,
        "log_term1": lt[0], "log_term2": lt[1], "log_term3": lt[2], "log_term4": lt[3],
        "applicable": applicable,
    }


def example_bound_sweep(example, schedule, q=1.0):
    """Evaluate the four-term bound along a schedule of problem sizes.

    Parameters
    ----------
    example : {"sg", "bg"}
        Sparsity-Gaussian or Bernoulli-Gaussian prior, with the closed-form
        small-ball and tail relaxations.
    schedule : list of dict
        Rows as produced by :func:`sg_schedule` or :func:`bg_schedule`.
    q : float
        Margin for :func:`consistency_check`.

    Returns
    -------
    rows : list of dict
        One row per schedule entry with ``n, p, s, alpha, epsilon, term1..term4,
        total, vacuous`` and log-scale companions.  Rows with
        ``alpha <= 1 + tau`` are marked ``applicable = False``.
    summary : dict
        ``knee`` (first index after which the total stays below 1 and
        nonincreasing), decay slope of ``log total`` against ``log n`` past the
        knee, and the consistency verdict with ``tau = alpha / 2`` exponents.
    """
    rows, etas, phis, alphas = [], [], [], []
    for row in schedule:
        log_sb, log_tail = _row_bound(example, row)
        rows.append(_sweep_row(row, log_sb, log_tail))
        half = dict(row, tau=row["alpha"] / 2)
        sb_half, tail_half = _row_bound(example, half)
        lp = log(row["p"])
        etas.append(-sb_half / lp)
        phis.append(-tail_half / lp)
        alphas.append(row["alpha"])
    return rows, _summarize(rows, alphas, etas, phis, q)


def _summarize(rows, alphas, etas, phis, q):
    logt = np.array([r["log_total"] for r in rows])
    ok = np.array([r["applicable"] for r in rows])
    knee = None
    for i in range(len(rows)):
        tail = logt[i:]
        if ok[i:].all() and np.all(tail < 0) and np.all(np.diff(tail) <= 1e-12):
            knee = i
            break
    slope = None
    if knee is not None and len({r["n"] for r in rows[knee:]}) >= 2:
        ln = np.log([r["n"] for r in rows[knee:]])
        slope = float(np.polyfit(ln, logt[knee:], 1)[0])
    verdict = consistency_check(alphas, etas, phis, q)
    return {"knee": knee, "log_total_slope": slope,
            "consistent": verdict.consistent, "consistent_from": verdict.holds_from,
            "eta_n": [float(x) for x in etas], "phi_n": [float(x) for x in phis]}


def laplace_sweep(schedule, lam=1.0):
    """Four-term bound for a Laplace prior along a schedule.

    The small-ball mass is replaced by its volume upper estimate and the
    non-compressible term by 0, so each reported total is a lower bound on
    the true total; a vacuous row is therefore genuinely vacuous.
    """
    rows = []
    for row in schedule:
        C1 = l1_small_ball_radius(row["tau"], row["p"], row["sigma"], row["n"])
        log_sb = min(0.0, laplace_smallball_diagnostic(lam, row["p"], row["n"], C1))
        rows.append(_sweep_row(row, log_sb, -np.inf))
    return rows
