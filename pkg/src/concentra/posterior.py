"""Exact posterior under the sparsity-Gaussian prior by enumerating supports.

Given a support ``g`` of size ``S`` the posterior is Gaussian with precision
``A_g = X_g^T X_g / sigma^2 + I / V^2``, mean ``mu_g = A_g^{-1} X_g^T y / sigma^2``
and covariance ``Sigma_g^2`` where ``Sigma_g = A_g^{-1/2}``.  The weight of
``g`` is proportional to ``det(Sigma_g) exp(mu_g^T A_g mu_g / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb, log, pi, sqrt

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._random import make_rng
from .priors import log_comb
from .rip import DEFAULT_CAP, EnumerationCapError

__all__ = [
    "MixtureComponent",
    "PosteriorMixture",
    "InequalityReport",
    "SpikeSlabPosterior",
    "enumerate_posterior",
    "ball_mass",
    "posterior_mean",
    "save_mixture",
    "load_mixture",
    "all_supports",
    "verify_determinant_bounds",
    "verify_ridge_projection_gap",
    "verify_reconstruction_terms",
]

# components lighter than this are not sampled by ball_mass
MIN_SAMPLED_WEIGHT = 1e-12
_BATCH = 8192


@dataclass(frozen=True)
class MixtureComponent:
    """One support of the posterior mixture."""

    gamma: tuple
    log_weight: float
    mu: np.ndarray
    sigma_matrix: np.ndarray


@dataclass
class PosteriorMixture:
    """All ``C(p, S)`` Gaussian components of the exact posterior.

    Attributes
    ----------
    supports : ndarray of shape (m, S)
        Sorted column indices of every support.
    log_weights : ndarray of shape (m,)
        Normalized log posterior weights.
    mus : ndarray of shape (m, S)
    sigmas : ndarray of shape (m, S, S)
        Symmetric square roots of the component covariances.
    log_evidence : float
        Log marginal density of ``y``.
    p : int
    V, noise_sigma : float
        Slab scale and noise level used to build the mixture.
    """

    supports: np.ndarray
    log_weights: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray
    log_evidence: float
    p: int
    V: float
    noise_sigma: float
    log_dets: np.ndarray = field(default=None, repr=False)

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def S(self):
        return self.supports.shape[1]

    def __len__(self):
        return self.supports.shape[0]

    @property
    def components(self):
        return [
            MixtureComponent(tuple(int(i) for i in g), float(lw), mu, sig)
            for g, lw, mu, sig in zip(self.supports, self.log_weights, self.mus, self.sigmas)
        ]

    def top_supports(self, k=5):
        order = np.argsort(-self.log_weights, kind="stable")[:k]
        return [(self.supports[i].tolist(), float(np.exp(self.log_weights[i]))) for i in order]

    def summary(self, k=5):
        top = self.top_supports(k)
        return {
            "log_evidence": self.log_evidence,
            "top_k_supports": [s for s, _ in top],
            "weights": [w for _, w in top],
            "mean": posterior_mean(self).tolist(),
        }


def all_supports(p, k):
    """Every size-``k`` subset of ``range(p)`` as an ``(C(p, k), k)`` index array."""
    return np.array(list(combinations(range(p), k)), dtype=np.intp).reshape(-1, k)


def _components(G, c, supports, sigma, V):
    """Batched per-support posterior quantities.

    Returns ``mus``, ``sigmas``, ``log_det_sigma`` and the quadratic term
    ``b^T A^{-1} b`` with ``b = c[g] / sigma^2``.
    """
    k = supports.shape[1]
    A = G[supports[:, :, None], supports[:, None, :]] / sigma**2 + np.eye(k) / V**2
    w, U = np.linalg.eigh(A)
    b = c[supports] / sigma**2
    Ub = np.einsum("mji,mj->mi", U, b)
    mus = np.einsum("mij,mj->mi", U, Ub / w)
    sigmas = np.einsum("mij,mj,mkj->mik", U, w**-0.5, U)
    log_det = -0.5 * np.log(w).sum(axis=1)
    quad = (Ub**2 / w).sum(axis=1)
    return mus, sigmas, log_det, quad


def enumerate_posterior(inst, y, V, cap=DEFAULT_CAP):
    """Exact posterior of ``beta`` under the sparsity-Gaussian prior with slab scale ``V``.

    Parameters
    ----------
    inst : ProblemInstance
        Supplies ``X``, ``S`` and ``sigma`` (which must be positive).
    y : ndarray of shape (n,)
    V : float
    cap : int
        Largest number of supports to enumerate.

    Returns
    -------
    PosteriorMixture
    """
    return _enumerate(inst.X, np.asarray(y, dtype=float), inst.S, inst.sigma, V, cap)


def _enumerate(X, y, S, sigma, V, cap=DEFAULT_CAP):
    n, p = X.shape
    if not sigma > 0:
        raise ValueError("the exact posterior needs sigma > 0")
    if not V > 0:
        raise ValueError("V must be positive")
    count = comb(p, S)
    if count > cap:
        raise EnumerationCapError(f"C({p},{S}) = {count} supports exceeds the cap {cap}")
    supports = all_supports(p, S)
    G = X.T @ X
    c = X.T @ y
    parts = [_components(G, c, supports[i:i + _BATCH], sigma, V)
             for i in range(0, count, _BATCH)]
    mus, sigmas, log_det, quad = (np.concatenate(z) for z in zip(*parts))
    lw = log_det + 0.5 * quad
    lse = logsumexp(lw)
    log_evidence = (-(y @ y) / (2 * sigma**2) - 0.5 * n * log(2 * pi * sigma**2)
                    - S * log(V) + lse - log_comb(p, S))
    return PosteriorMixture(
        supports=supports, log_weights=lw - lse, mus=mus, sigmas=sigmas,
        log_evidence=float(log_evidence), p=p, V=float(V), noise_sigma=float(sigma),
        log_dets=log_det,
    )


def posterior_mean(mix):
    """Mixture mean embedded in ``R^p``."""
    out = np.zeros(mix.p)
    np.add.at(out, mix.supports, mix.weights[:, None] * mix.mus)
    return out


def ball_mass(mix, center, radius, trials=10_000, seed=0, index=0):
    """Posterior mass of the open ball ``||beta - center||_2 < radius``.

    Stratified Monte Carlo: component ``g`` receives ``max(1, round(trials w_g))``
    draws when ``w_g > 1e-12``.  Unsampled components contribute their total
    weight to the standard error.

    Returns
    -------
    estimate, std_error : float
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return 0.0, 0.0
    if np.isinf(radius):
        return 1.0, 0.0
    center = np.asarray(center, dtype=float)
    w = mix.weights
    keep = np.flatnonzero(w > MIN_SAMPLED_WEIGHT)
    skipped = float(w.sum() - w[keep].sum())
    m = np.maximum(1, np.rint(trials * w[keep]).astype(np.int64))
    rng = make_rng(seed, "ball-mass", index)
    rep = np.repeat(np.arange(keep.size), m)
    comp = keep[rep]
    z = rng.standard_normal((rep.size, mix.S))
    draws = mix.mus[comp] + np.einsum("tij,tj->ti", mix.sigmas[comp], z)
    on = center[mix.supports[comp]]
    off = center @ center - (center[mix.supports[keep]] ** 2).sum(axis=1)
    d2 = ((draws - on) ** 2).sum(axis=1) + off[rep]
    frac = np.bincount(rep, weights=(d2 < radius**2).astype(float), minlength=keep.size) / m
    est = float(w[keep] @ frac)
    var = float((w[keep] ** 2 * frac * (1 - frac) / m).sum())
    return est, sqrt(var) + skipped


def save_mixture(mix, path):
    """Write the mixture to an ``.npz`` archive."""
    np.savez(path, supports=mix.supports, log_weights=mix.log_weights, mus=mix.mus,
             sigmas=mix.sigmas, meta=np.array([mix.log_evidence, mix.p, mix.V, mix.noise_sigma]))


def load_mixture(path):
    with np.load(path) as f:
        log_evidence, p, V, sigma = f["meta"]
        return PosteriorMixture(f["supports"], f["log_weights"], f["mus"], f["sigmas"],
                                float(log_evidence), int(p), float(V), float(sigma))


class SpikeSlabPosterior(RegressorMixin, BaseEstimator):
    """Exact spike-and-slab posterior with exactly ``S`` active coefficients.

    Parameters
    ----------
    S : int
        Support size of the prior.
    V : float
        Slab standard deviation.
    sigma : float
        Known noise standard deviation.
    cap : int
        Largest number of supports to enumerate.

    Attributes
    ----------
    mixture_ : PosteriorMixture
    coef_ : ndarray of shape (n_features,)
        Posterior mean.
    log_evidence_ : float
    """

    def __init__(self, S=1, V=1.0, sigma=1.0, cap=DEFAULT_CAP):
        self.S = S
        self.V = V
        self.sigma = sigma
        self.cap = cap

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if not 1 <= self.S <= X.shape[1]:
            raise ValueError(f"S must lie in [1, n_features], got {self.S}")
        self.mixture_ = _enumerate(X, y, int(self.S), self.sigma, self.V, self.cap)
        self.coef_ = posterior_mean(self.mixture_)
        self.log_evidence_ = self.mixture_.log_evidence
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def ball_mass(self, center, radius, trials=10_000, seed=0):
        check_is_fitted(self, "mixture_")
        return ball_mass(self.mixture_, center, radius, trials, seed)


# ---------------------------------------------------------------------------
# deterministic inequalities behind the sharp concentration bound


@dataclass
class InequalityReport:
    """Outcome of checking one inequality over every qualifying support.

    ``worst_margin`` is the smallest ``bound - value`` seen (negative means a
    violation) and ``worst_support`` the support where it occurred.
    """

    name: str
    passed: bool
    checked: int
    worst_margin: float
    worst_support: tuple = ()
    skipped: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "checked": self.checked,
                "worst_margin": self.worst_margin, "worst_support": list(self.worst_support),
                "skipped": self.skipped, "details": self.details}


class _Tracker:
    def __init__(self, rtol):
        self.rtol = rtol
        self.checked = 0
        self.worst = np.inf
        self.where = ()
        self.ok = True

    def update(self, supports, value, bound):
        value, bound = np.broadcast_arrays(np.asarray(value, dtype=float),
                                           np.asarray(bound, dtype=float))
        margin = bound - value
        tol = self.rtol * np.maximum(1.0, np.maximum(np.abs(bound), np.abs(value)))
        self.checked += value.size
        if value.size == 0:
            return
        i = int(np.argmin(margin))
        if margin[i] < self.worst:
            self.worst = float(margin[i])
            self.where = tuple(int(j) for j in supports[i])
        if np.any(margin < -tol):
            self.ok = False

    def report(self, name, **details):
        return InequalityReport(name, self.ok, self.checked, self.worst, self.where, details=details)


def _supports_up_to(p, kmax, must_contain=None):
    for k in range(1, min(kmax, p) + 1):
        sup = all_supports(p, k)
        if must_contain is not None and len(must_contain):
            mask = np.isin(sup, must_contain).sum(axis=1) == len(must_contain)
            sup = sup[mask]
        if sup.size:
            yield k, sup


def _check_count(p, kmax, cap):
    total = sum(comb(p, k) for k in range(1, min(kmax, p) + 1))
    if total > cap:
        raise EnumerationCapError(f"{total} supports of size <= {kmax} exceeds the cap {cap}")


def verify_determinant_bounds(inst, V, cert, rtol=1e-9, cap=DEFAULT_CAP, large_supports=True):
    """Check the determinant bracket for ``det(Sigma_g)`` on every support of size ``<= 2S``.

    For ``|g| <= 2S``::

        (n(1+delta)/sigma^2 + 1/V^2)^(-|g|/2) <= det(Sigma_g) <= (n(1-delta)/sigma^2 + 1/V^2)^(-|g|/2)

    With ``large_supports`` the companion claim
    ``det(Sigma_g) <= (n(1-delta)/sigma^2 + 1/V^2)^(-S)`` for ``|g| > 2S`` is
    checked as well and reported under ``details["large_supports"]``; it does
    not enter ``passed`` because it can fail when ``V > 1``.
    """
    X, S, sigma, n, p = inst.X, inst.S, inst.sigma, inst.n, inst.p
    delta = cert.delta_k
    _check_count(p, 2 * S, cap)
    G = X.T @ X
    lo_rate = n * (1 + delta) / sigma**2 + 1 / V**2
    hi_rate = n * (1 - delta) / sigma**2 + 1 / V**2
    lower, upper = _Tracker(rtol), _Tracker(rtol)
    for k, sup in _supports_up_to(p, 2 * S):
        ev = np.linalg.eigvalsh(G[sup[:, :, None], sup[:, None, :]])
        log_det = -0.5 * np.log(ev / sigma**2 + 1 / V**2).sum(axis=1)
        lower.update(sup, -(k / 2) * log(lo_rate), log_det)
        upper.update(sup, log_det, -(k / 2) * log(hi_rate))
    details = {"lower_worst_margin": lower.worst, "upper_worst_margin": upper.worst}
    if large_supports and 2 * S < p:
        big = _Tracker(rtol)
        total = sum(comb(p, k) for k in range(2 * S + 1, p + 1))
        if total <= cap:
            for k in range(2 * S + 1, p + 1):
                sup = all_supports(p, k)
                ev = np.clip(np.linalg.eigvalsh(G[sup[:, :, None], sup[:, None, :]]), 0, None)
                log_det = -0.5 * np.log(ev / sigma**2 + 1 / V**2).sum(axis=1)
                big.update(sup, log_det, -S * log(hi_rate))
            details["large_supports"] = {"passed": big.ok, "checked": big.checked,
                                         "worst_margin": big.worst,
                                         "worst_support": list(big.where)}
    rep = InequalityReport("determinant_bounds", lower.ok and upper.ok,
                      lower.checked, min(lower.worst, upper.worst),
                      lower.where if lower.worst <= upper.worst else upper.where,
                      details=details)
    return rep


def verify_ridge_projection_gap(inst, V, cert, rtol=1e-9, cap=DEFAULT_CAP):
    """Check the ridge-versus-projection operator gaps on supports ``g`` containing
    the true support with ``|g| <= 2S``::

        ||P_g - X_g (X_g^T X_g + c I)^{-1} X_g^T||_2 <= sigma^2 / (n(1-delta)V^2 + sigma^2)
        ||I - (X_g^T X_g + c I)^{-1} X_g^T X_g||_2   <= sigma^2 / (n(1-delta)V^2 + sigma^2)

    where ``c = sigma^2 / V^2``.  Both operators are formed explicitly.
    """
    X, S, sigma, n, p = inst.X, inst.S, inst.sigma, inst.n, inst.p
    _check_count(p, 2 * S, cap)
    bound = sigma**2 / (n * (1 - cert.delta_k) * V**2 + sigma**2)
    c = sigma**2 / V**2
    outer, inner = _Tracker(rtol), _Tracker(rtol)
    for k, sup in _supports_up_to(p, 2 * S, must_contain=inst.support):
        Xg = X[:, sup].transpose(1, 0, 2)  # (m, n, k)
        Gg = np.einsum("mik,mil->mkl", Xg, Xg)
        ridge_inv = np.linalg.inv(Gg + c * np.eye(k))
        proj = Xg @ np.linalg.pinv(Gg) @ Xg.transpose(0, 2, 1)
        ridge = Xg @ ridge_inv @ Xg.transpose(0, 2, 1)
        outer.update(sup, np.linalg.norm(proj - ridge, ord=2, axis=(1, 2)), bound)
        inner.update(sup, np.linalg.norm(np.eye(k) - ridge_inv @ Gg, ord=2, axis=(1, 2)), bound)
    return InequalityReport("ridge_projection_gap", outer.ok and inner.ok, outer.checked,
                       min(outer.worst, inner.worst),
                       outer.where if outer.worst <= inner.worst else inner.where,
                       details={"bound": bound, "outer_worst_margin": outer.worst,
                                "inner_worst_margin": inner.worst})


def verify_reconstruction_terms(inst, V, cert, e, alpha, rtol=1e-9, cap=DEFAULT_CAP,
                                noise_ok=None):
    """Check the signal and signal-noise cross terms on every ``g'`` with ``|g'| <= 2S``.

    For any support ``g`` containing the true support ``g0`` one has
    ``P_g X beta0 = X beta0``, so both quantities depend on ``g'`` alone::

        -||(I - P_g') X beta0||^2 <= -n (1 - delta - theta^2/(1-delta)) ||beta0_{g0 \\ g'}||^2
        |(X beta0)^T (I - P_g') e| <= 2 sigma (1-delta+theta)/(1-delta)
                                       * sqrt((1+alpha) max(|g0 \\ g'|, |g'|) n log p) ||beta0_{g0 \\ g'}||

    The second inequality assumes the noise event holds for ``e``; when it does
    not (``noise_ok`` false, computed if None) that part is reported as skipped.
    ``V`` is accepted for a uniform signature and does not enter either inequality.
    Also checks ``delta + theta^2 / (1 - delta) < 1``.
    """
    from .bounds import noise_event_membership

    X, S, sigma, n, p = inst.X, inst.S, inst.sigma, inst.n, inst.p
    delta, theta = cert.delta_k, cert.theta
    _check_count(p, 2 * S, cap)
    e = np.asarray(e, dtype=float)
    if noise_ok is None:
        noise_ok = noise_event_membership(inst.Xtilde, e, sigma, alpha)
    kappa = 1 - delta - theta**2 / (1 - delta)
    signal = X @ inst.beta0
    G = X.T @ X
    cs = X.T @ signal
    ce = X.T @ e
    true_mask = inst.beta0 != 0
    norm_term, noise_term = _Tracker(rtol), _Tracker(rtol)
    for k, sup in _supports_up_to(p, 2 * S):
        Gg = G[sup[:, :, None], sup[:, None, :]]
        a = np.linalg.solve(Gg, cs[sup][..., None])[..., 0]
        resid_sq = signal @ signal - np.einsum("mi,mi->m", cs[sup], a)
        inside = np.zeros((sup.shape[0], p), dtype=bool)
        np.put_along_axis(inside, sup, True, axis=1)
        missing = true_mask & ~inside
        miss_norm = np.sqrt(((inst.beta0 * missing) ** 2).sum(axis=1))
        norm_term.update(sup, -resid_sq, -n * kappa * miss_norm**2)
        if noise_ok:
            cross = np.abs(signal @ e - np.einsum("mi,mi->m", a, ce[sup]))
            width = np.maximum(missing.sum(axis=1), k)
            bound = (2 * sigma * (1 - delta + theta) / (1 - delta)
                     * np.sqrt((1 + alpha) * width * n * log(p)) * miss_norm)
            noise_term.update(sup, cross, bound)
    internal = bool(delta + theta**2 / (1 - delta) < 1)
    passed = norm_term.ok and internal and (noise_term.ok if noise_ok else True)
    return InequalityReport(
        "reconstruction_terms", passed, norm_term.checked,
        min(norm_term.worst, noise_term.worst),
        norm_term.where if norm_term.worst <= noise_term.worst else noise_term.where,
        skipped=not noise_ok,
        details={"signal_worst_margin": norm_term.worst,
                 "noise_worst_margin": noise_term.worst if noise_ok else None,
                 "noise_event": bool(noise_ok),
                 "delta_plus_theta_sq_ratio": delta + theta**2 / (1 - delta),
                 "internal_claim": internal},
    )
