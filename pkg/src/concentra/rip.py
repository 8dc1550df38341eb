"""Restricted isometry and restricted orthogonality constants by enumeration.

Both constants are maxima over column subsets, so they are computed exactly by
visiting every support of the requested size.  Supports are processed in
batches of stacked Gram submatrices.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from math import comb

import numpy as np

from ._random import make_rng

__all__ = [
    "EnumerationCapError",
    "RipCertificate",
    "delta_exhaustive",
    "theta_exhaustive",
    "certify_rip",
    "delta_lower_bound_random",
    "theta_lower_bound_random",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 10**6
_BATCH = 4096


class EnumerationCapError(ValueError):
    """Raised when exhaustive enumeration would visit more supports than allowed."""


@dataclass(frozen=True)
class RipCertificate:
    """Restricted isometry of order ``k`` and orthogonality of order ``(k1, k2)``.

    ``satisfied`` records whether ``delta_k + theta < 1`` with ``k = 2S``,
    ``k1 = S`` and ``k2 = 2S``.  When ``method`` is ``randomized_lower_bound``
    the constants are only lower bounds and the verdict is not a proof.
    """

    k: int
    delta_k: float
    k1: int
    k2: int
    theta: float
    method: str
    satisfied: bool

    @property
    def exact(self):
        return self.method == "exhaustive"

    def to_dict(self):
        d = asdict(self)
        d.update(delta=self.delta_k, a4=self.satisfied)
        return d


def _combination_batches(pool, k, batch=_BATCH):
    it = combinations(pool, k)
    while True:
        chunk = list(next(it, None) for _ in range(batch))
        chunk = [c for c in chunk if c is not None]
        if not chunk:
            return
        yield np.array(chunk, dtype=np.intp).reshape(len(chunk), k)
        if len(chunk) < batch:
            return


def _isometry_deviation(G, idx):
    sub = G[idx[:, :, None], idx[:, None, :]]
    ev = np.linalg.eigvalsh(sub)
    return np.maximum(ev[:, -1] - 1.0, 1.0 - ev[:, 0])


def delta_exhaustive(Xtilde, k, cap=DEFAULT_CAP):
    """Exact restricted isometry constant of order ``k``.

    The maximum over all size-``k`` supports ``T`` of the spectral deviation of
    ``Xtilde_T^T Xtilde_T`` from the identity.  Orders above ``p`` are clamped
    to ``p``.
    """
    Xtilde = np.asarray(Xtilde, dtype=float)
    p = Xtilde.shape[1]
    if k < 1:
        raise ValueError("k must be at least 1")
    k = min(int(k), p)
    count = comb(p, k)
    if count > cap:
        raise EnumerationCapError(
            f"C({p},{k}) = {count} supports exceeds the cap {cap}; "
            "use delta_lower_bound_random for a certified lower bound"
        )
    G = Xtilde.T @ Xtilde
    best = 0.0
    for idx in _combination_batches(range(p), k):
        best = max(best, float(_isometry_deviation(G, idx).max()))
    return max(best, 0.0)


def _theta_size_pairs(p, k1, k2):
    if k1 + k2 <= p:
        return [(k1, k2)]
    # every admissible pair extends to one with |T| + |T'| = p
    return [(a, p - a) for a in range(max(1, p - k2), min(k1, p - 1) + 1)]


def _theta_pair_count(p, k1, k2):
    return sum(comb(p, a) * comb(p - a, b) for a, b in _theta_size_pairs(p, k1, k2))


def theta_exhaustive(Xtilde, k1, k2, cap=DEFAULT_CAP):
    """Exact restricted orthogonality constant of order ``(k1, k2)``.

    The largest singular value of ``Xtilde_T^T Xtilde_T'`` over disjoint
    supports with ``|T| <= k1``, ``|T'| <= k2`` and ``|T| + |T'| <= p``.
    The top singular value only grows when columns are added, so only maximal
    size pairs are visited.
    """
    Xtilde = np.asarray(Xtilde, dtype=float)
    p = Xtilde.shape[1]
    k1, k2 = int(k1), int(k2)
    if k1 < 1 or k2 < 1:
        raise ValueError("orders must be at least 1")
    count = _theta_pair_count(p, k1, k2)
    if count > cap:
        raise EnumerationCapError(
            f"{count} disjoint support pairs exceeds the cap {cap}"
        )
    G = Xtilde.T @ Xtilde
    best = 0.0
    everything = np.arange(p)
    for a, b in _theta_size_pairs(p, k1, k2):
        rest_combos = np.array(list(combinations(range(p - a), b)), dtype=np.intp).reshape(-1, b)
        for T_batch in _combination_batches(range(p), a, batch=max(1, _BATCH // max(1, len(rest_combos)))):
            for T in T_batch:
                rest = np.setdiff1d(everything, T, assume_unique=True)
                Tp = rest[rest_combos]
                cross = G[T[None, :, None], Tp[:, None, :]]
                s = np.linalg.norm(cross, ord=2, axis=(1, 2)) if a > 1 and b > 1 else np.sqrt(
                    (cross**2).sum(axis=(1, 2)))
                best = max(best, float(s.max()))
    return best


def certify_rip(Xtilde, S, cap=DEFAULT_CAP, fallback_trials=None, seed=0):
    """Compute ``delta_{2S}`` and ``theta_{S,2S}`` and check ``delta + theta < 1``.

    If enumeration exceeds ``cap`` an :class:`EnumerationCapError` propagates,
    unless ``fallback_trials`` is given, in which case randomized lower bounds
    are reported with ``method="randomized_lower_bound"``.
    """
    S = int(S)
    if S < 1:
        raise ValueError("S must be at least 1")
    try:
        delta = delta_exhaustive(Xtilde, 2 * S, cap=cap)
        theta = theta_exhaustive(Xtilde, S, 2 * S, cap=cap)
        method = "exhaustive"
    except EnumerationCapError:
        if fallback_trials is None:
            raise
        delta = delta_lower_bound_random(Xtilde, 2 * S, fallback_trials, seed)
        theta = theta_lower_bound_random(Xtilde, S, 2 * S, fallback_trials, seed)
        method = "randomized_lower_bound"
    return RipCertificate(
        k=2 * S, delta_k=delta, k1=S, k2=2 * S, theta=theta,
        method=method, satisfied=bool(delta + theta < 1.0),
    )


def _random_supports(rng, p, k, trials):
    return np.argsort(rng.random((trials, p)), axis=1)[:, :k]


def delta_lower_bound_random(Xtilde, k, trials, seed=0):
    """Largest isometry deviation over ``trials`` uniformly drawn supports.

    When ``trials`` covers every support the enumeration is run instead, so
    the value coincides with :func:`delta_exhaustive`.
    """
    Xtilde = np.asarray(Xtilde, dtype=float)
    p = Xtilde.shape[1]
    k = min(int(k), p)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if trials >= comb(p, k):
        return delta_exhaustive(Xtilde, k, cap=trials)
    rng = make_rng(seed, "rip-delta")
    G = Xtilde.T @ Xtilde
    best = 0.0
    for start in range(0, trials, _BATCH):
        idx = _random_supports(rng, p, k, min(_BATCH, trials - start))
        best = max(best, float(_isometry_deviation(G, idx).max()))
    return max(best, 0.0)


def theta_lower_bound_random(Xtilde, k1, k2, trials, seed=0):
    """Largest cross-block singular value over ``trials`` random disjoint pairs."""
    Xtilde = np.asarray(Xtilde, dtype=float)
    p = Xtilde.shape[1]
    a, b = _theta_size_pairs(p, int(k1), int(k2))[0]
    rng = make_rng(seed, "rip-theta")
    G = Xtilde.T @ Xtilde
    best = 0.0
    for start in range(0, trials, _BATCH):
        perm = _random_supports(rng, p, a + b, min(_BATCH, trials - start))
        T, Tp = perm[:, :a], perm[:, a:]
        cross = G[T[:, :, None], Tp[:, None, :]]
        best = max(best, float(np.linalg.norm(cross, ord=2, axis=(1, 2)).max()))
    return best
