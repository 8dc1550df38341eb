"""Spike-and-slab and Laplace priors, sampling, and small-ball probability bounds.

All analytic bounds are evaluated on the log scale; the ``*_log`` variants
return that value directly so that sweeps at very large ``p`` never touch a
denormal float.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import exp, lgamma, log, pi, sqrt
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py

from ._random import make_rng

__all__ = [
    "PRIOR_KINDS",
    "PriorSpec",
    "SmallBallEstimate",
    "sample_prior",
    "log_comb",
    "small_ball_lb_sg",
    "small_ball_lb_sg_log",
    "small_ball_sg_relaxed_log",
    "small_ball_sg_closed_form_log",
    "sg_eta0",
    "sg_eta1",
    "small_ball_lb_bg",
    "small_ball_lb_bg_log",
    "small_ball_bg_closed_form_log",
    "tail_mass_nonsparse_bg",
    "tail_mass_nonsparse_bg_log",
    "laplace_smallball_diagnostic",
    "mc_small_ball",
]

PRIOR_KINDS = ("sparsity_s_gaussian", "bernoulli_gaussian", "laplace")

_REQUIRED = {
    "sparsity_s_gaussian": ("S", "V"),
    "bernoulli_gaussian": ("phi", "V"),
    "laplace": ("lam",),
}


@dataclass(frozen=True)
class PriorSpec:
    """A prior on ``R^p``.

    ``sparsity_s_gaussian`` draws a uniform support of size ``S`` and
    ``N(0, V^2)`` values on it.  ``bernoulli_gaussian`` includes each
    coordinate independently with probability ``phi`` and draws ``N(0, V^2)``
    values on the included ones.  ``laplace`` draws i.i.d. coordinates with
    density ``(lam / 2) exp(-lam |b|)``.
    """

    kind: str
    p: int
    S: Optional[int] = None
    V: Optional[float] = None
    phi: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}; choose from {PRIOR_KINDS}")
        if int(self.p) < 1:
            raise ValueError("p must be positive")
        required = _REQUIRED[self.kind]
        for name in ("S", "V", "phi", "lam"):
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{self.kind} prior needs {name}")
            if name not in required and value is not None:
                raise ValueError(f"{name} is not a parameter of the {self.kind} prior")
        if self.S is not None and not 1 <= self.S <= self.p:
            raise ValueError(f"S must lie in [1, p], got {self.S}")
        if self.V is not None and not self.V > 0:
            raise ValueError("V must be positive")
        if self.phi is not None and not 0 < self.phi < 1:
            raise ValueError("phi must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")

    @classmethod
    def sparsity_gaussian(cls, p, S, V):
        return cls("sparsity_s_gaussian", int(p), S=int(S), V=float(V))

    @classmethod
    def bernoulli_gaussian(cls, p, phi, V):
        return cls("bernoulli_gaussian", int(p), phi=float(phi), V=float(V))

    @classmethod
    def laplace(cls, p, lam):
        return cls("laplace", int(p), lam=float(lam))

    def to_dict(self):
        return {"kind": self.kind, "s": self.S, "v": self.V, "phi": self.phi,
                "lambda": self.lam, "p": self.p}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"kind", "s", "v", "phi", "lambda", "p"}
        if unknown:
            raise ValueError(f"unknown prior keys {sorted(unknown)}")
        return cls(kind=d["kind"], p=int(d["p"]),
                   S=None if d.get("s") is None else int(d["s"]),
                   V=d.get("v"), phi=d.get("phi"), lam=d.get("lambda"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SmallBallEstimate:
    """Prior mass of an ``l_u`` ball: an analytic lower bound beside a Monte Carlo estimate."""

    analytic_lower_bound: float
    mc_estimate: float
    mc_std_error: float
    radius: float
    norm_index: float

    @property
    def consistent(self):
        return self.analytic_lower_bound <= self.mc_estimate + 3 * self.mc_std_error


def _require(spec, kind):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} prior, got {spec.kind}")


def sample_prior(spec, seed, size=None, index=0):
    """Draw from ``spec``.

    Returns one vector of length ``p`` when ``size`` is None, otherwise an
    array of shape ``(size, p)``.  Supports are drawn before slab values.
    ``index`` selects an independent stream for the same seed.
    """
    rng = make_rng(seed, "prior", index)
    m = 1 if size is None else int(size)
    p = spec.p
    if spec.kind == "sparsity_s_gaussian":
        keys = rng.random((m, p))
        support = np.argsort(keys, axis=1)[:, : spec.S]
        mask = np.zeros((m, p), dtype=bool)
        np.put_along_axis(mask, support, True, axis=1)
        out = np.where(mask, spec.V * rng.standard_normal((m, p)), 0.0)
    elif spec.kind == "bernoulli_gaussian":
        mask = rng.random((m, p)) < spec.phi
        out = np.where(mask, spec.V * rng.standard_normal((m, p)), 0.0)
    else:
        out = rng.laplace(0.0, 1.0 / spec.lam, size=(m, p))
    return out[0] if size is None else out


def log_comb(n, k):
    """``log C(n, k)`` via log-gamma."""
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _check_truth(beta0, C_sup, max_nonzeros, what):
    beta0 = np.asarray(beta0, dtype=float).ravel()
    if np.abs(beta0).max(initial=0.0) > C_sup:
        raise ValueError(f"||beta0||_inf = {np.abs(beta0).max():.6g} exceeds C_sup = {C_sup}")
    if np.count_nonzero(beta0) > max_nonzeros:
        raise ValueError(f"beta0 has more than {what} nonzeros")
    return beta0


def _slab_ball_log(d, sq_norm, C1, V):
    """Log lower bound on the ``N(0, V^2 I_d)`` mass of the ``l1`` ball of radius
    ``C1`` around a point with squared norm ``sq_norm``.

    By Jensen's inequality the mass is at least the ball volume times the
    density at the ball's mean squared norm, which is at most
    ``sq_norm + C1^2``.
    """
    d = np.asarray(d, dtype=float)
    return (-(d / 2) * log(2 * pi * V * V) - (sq_norm + C1 * C1) / (2 * V * V)
            + d * log(2 * C1) - gammaln(1 + d))


def small_ball_lb_sg_log(spec, beta0, C1, C_sup):
    """Log of the sparsity-Gaussian prior mass bound for ``B^{l1}_{C1}(beta0)``.

    ``-log C(p,S) - (S/2) log(2 pi V^2) - (||beta0||^2 + C1^2) / (2 V^2)
    + S log(2 C1) - log Gamma(1 + S)``.
    """
    _require(spec, "sparsity_s_gaussian")
    if not C1 > 0:
        raise ValueError("C1 must be positive")
    beta0 = _check_truth(beta0, C_sup, spec.S, "S")
    S, V = spec.S, spec.V
    return float(-log_comb(spec.p, S) + _slab_ball_log(S, beta0 @ beta0, C1, V))


def small_ball_lb_sg(spec, beta0, C1, C_sup):
    """Lower bound on the sparsity-Gaussian prior mass of ``B^{l1}_{C1}(beta0)``.

    Requires ``||beta0||_0 <= S`` and ``||beta0||_inf <= C_sup``.
    """
    return exp(small_ball_lb_sg_log(spec, beta0, C1, C_sup))


def small_ball_sg_relaxed_log(spec, beta0, C1):
    """Looser form ``exp(-(||beta0||^2 + C1^2) / 2V^2) (2 pi e^2 V^2)^{-S/2} (2 C1 / p)^S``.

    Uses ``C(p, S) S! <= p^S``; always below :func:`small_ball_lb_sg_log`.
    """
    _require(spec, "sparsity_s_gaussian")
    beta0 = np.asarray(beta0, dtype=float)
    S, V, p = spec.S, spec.V, spec.p
    return float(-(beta0 @ beta0 + C1 * C1) / (2 * V * V)
                 - (S / 2) * log(2 * pi * (exp(1) * V) ** 2) + S * log(2 * C1 / p))


def sg_eta0(C1, V):
    """``exp(-C1^2 / 2V^2)``."""
    return exp(-C1 * C1 / (2 * V * V))


def sg_eta1(sigma, V, C_sup):
    """Per-coordinate constant ``2 sigma exp(-C_sup^2 / 2V^2) / (3 sqrt(pi) e V)``.

    Obtained by substituting ``C1 = (2 sigma / 3) sqrt(log p / n)`` and
    ``||beta0||^2 <= S C_sup^2`` into :func:`small_ball_sg_relaxed_log`.
    """
    return 2 * sigma * exp(-C_sup * C_sup / (2 * V * V)) / (3 * sqrt(pi) * exp(1) * V)


def small_ball_sg_closed_form_log(S, p, n, sigma, V, C_sup, C1=None):
    """``log(eta0 eta1^S (sqrt(log p / n) / p)^S)`` for the radius
    ``C1 = (2 sigma / 3) sqrt(log p / n)`` (the default)."""
    if C1 is None:
        C1 = (2 * sigma / 3) * sqrt(log(p) / n)
    return (-C1 * C1 / (2 * V * V) + S * log(sg_eta1(sigma, V, C_sup))
            + S * (0.5 * log(log(p) / n) - log(p)))


def small_ball_lb_bg_log(spec, beta0, C1, K, C_sup):
    """Log lower bound on the Bernoulli-Gaussian prior mass of ``B^{l1}_{C1}(beta0)``.

    Sums over supports containing the ``K`` true coordinates and ``k`` extra
    ones, each contributing the slab ball bound of :func:`_slab_ball_log`::

        sum_k C(p-K, k) phi^(K+k) (1-phi)^(p-K-k) slab_ball(K + k)
    """
    _require(spec, "bernoulli_gaussian")
    if not C1 > 0:
        raise ValueError("C1 must be positive")
    beta0 = _check_truth(beta0, C_sup, K, "K")
    if np.count_nonzero(beta0) != K:
        raise ValueError(f"beta0 has {np.count_nonzero(beta0)} nonzeros, expected K={K}")
    p, phi, V = spec.p, spec.phi, spec.V
    k = np.arange(p - K + 1)
    terms = (gammaln(p - K + 1) - gammaln(k + 1) - gammaln(p - K - k + 1)
             + (K + k) * log(phi) + xlog1py(p - K - k, -phi)
             + _slab_ball_log(K + k, beta0 @ beta0, C1, V))
    return float(logsumexp(terms))


def small_ball_lb_bg(spec, beta0, C1, K, C_sup):
    """Lower bound on the Bernoulli-Gaussian prior mass of ``B^{l1}_{C1}(beta0)``."""
    return exp(small_ball_lb_bg_log(spec, beta0, C1, K, C_sup))


def small_ball_bg_closed_form_log(K, p, n, sigma, V, C_sup, C1=None):
    """Product-form relaxation of :func:`small_ball_lb_bg_log` at ``phi = K / p``.

    ``eta0 (exp(-C_sup^2/2V^2) c)^K (1 - phi + phi c)^(p - K)`` with
    ``c = 2 C1 / (p sqrt(2 pi V^2))``, using ``(K + k)! <= K^K p^k``.
    """
    if C1 is None:
        C1 = (2 * sigma / 3) * sqrt(log(p) / n)
    phi = K / p
    c = 2 * C1 / (p * sqrt(2 * pi * V * V))
    return (-C1 * C1 / (2 * V * V) + K * (-C_sup * C_sup / (2 * V * V) + log(c))
            + (p - K) * np.log1p(-phi + phi * c))


def tail_mass_nonsparse_bg_log(phi, p, K, S):
    """Log of the Chernoff bound ``(K/S)^S ((p-K)/(p-S))^(p-S)`` on ``P(sum gamma >= S)``."""
    if S < K:
        raise ValueError(f"need S >= K (got S={S}, K={K}); the bound exceeds 1 otherwise")
    if S > p:
        raise ValueError("S cannot exceed p")
    if abs(p * phi - K) > 1e-9 * max(1, K):
        raise ValueError(f"need p * phi = K, got p * phi = {p * phi}")
    out = S * log(K / S) if K > 0 else (0.0 if S == 0 else -np.inf)
    if S < p:
        out += (p - S) * log((p - K) / (p - S))
    return float(out)


def tail_mass_nonsparse_bg(phi, p, K, S):
    """Chernoff upper bound on the Bernoulli-Gaussian prior mass of ``sum gamma >= S``."""
    return exp(tail_mass_nonsparse_bg_log(phi, p, K, S))


def laplace_smallball_diagnostic(lam, p, n, radius=None):
    """Log of the volume estimate ``(lam/2)^p (2 r)^p / p!`` for a Laplace prior.

    The prior density is at most ``(lam/2)^p``, so this is an upper bound on
    the mass of the ``l1`` ball of radius ``r`` around any point.  The default
    radius is ``sqrt(log p / n)``.
    """
    if p < 1:
        raise ValueError("p must be positive")
    if radius is None:
        radius = sqrt(log(max(p, 2)) / n)
    return p * log(lam * radius) - lgamma(p + 1)


def mc_small_ball(spec, beta0, radius, u=1, trials=100_000, seed=0, C_sup=None,
                  batch=200_000):
    """Monte Carlo prior mass of ``B^{l_u}_radius(beta0)``.

    The analytic bound is filled in for spike-and-slab priors with ``u = 1``
    (``C_sup`` defaults to ``||beta0||_inf``) and is ``nan`` otherwise.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    beta0 = np.asarray(beta0, dtype=float)
    hits = 0
    if np.isinf(radius):
        hits = trials
    else:
        for chunk, start in enumerate(range(0, trials, batch)):
            draws = sample_prior(spec, seed, size=min(batch, trials - start), index=chunk)
            dist = np.linalg.norm(draws - beta0, ord=u, axis=1)
            hits += int(np.count_nonzero(dist <= radius))
    est = hits / trials
    se = sqrt(est * (1 - est) / trials)
    analytic = float("nan")
    if u == 1 and 0 < radius < np.inf and spec.kind != "laplace":
        cs = float(np.abs(beta0).max(initial=0.0)) if C_sup is None else C_sup
        if spec.kind == "sparsity_s_gaussian" and np.count_nonzero(beta0) <= spec.S:
            analytic = small_ball_lb_sg(spec, beta0, radius, cs)
        elif spec.kind == "bernoulli_gaussian":
            analytic = small_ball_lb_bg(spec, beta0, radius, int(np.count_nonzero(beta0)), cs)
    return SmallBallEstimate(analytic, est, se, float(radius), float(u))

