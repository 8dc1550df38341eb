"""Regression problem instances, design generation and basic norms."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._random import make_rng

__all__ = [
    "ProblemInstance",
    "Observation",
    "generate_design",
    "normalized_design",
    "synthesize_observation",
    "best_s_term_error",
    "lp_norm",
    "gram_l1_linf_norm",
    "ENSEMBLES",
]

ENSEMBLES = ("gaussian", "rademacher", "partial_orthonormal")

# relative tolerance on squared column norms
COLUMN_NORM_TOL = 1e-9


def _check_column_norms(X):
    n = X.shape[0]
    col_sq = np.einsum("ij,ij->j", X, X)
    bad = np.nonzero(np.abs(col_sq - n) > COLUMN_NORM_TOL * n)[0]
    if bad.size:
        raise ValueError(
            f"columns {bad.tolist()[:5]} violate the unit-normalization "
            f"||X_i||^2 = n (got {col_sq[bad[0]]:.6g}, n={n})"
        )


@dataclass(frozen=True)
class ProblemInstance:
    """One sparse regression problem ``y = X beta0 + e`` with known noise level.

    Parameters
    ----------
    S : int
        Sparsity budget.
    X : ndarray of shape (n, p)
        Design matrix; every column must have squared norm ``n``.
    beta0 : ndarray of shape (p,)
        True coefficients, within ``R`` of an ``S``-sparse vector in l1.
    sigma : float
        Noise standard deviation.
    R : float
        Compressibility slack.
    seed, ensemble : optional
        Provenance of a generated design, carried through serialization.
    """

    S: int
    X: np.ndarray
    beta0: np.ndarray
    sigma: float
    R: float = 0.0
    seed: Optional[int] = None
    ensemble: Optional[str] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        beta0 = np.array(self.beta0, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = X.shape
        if beta0.shape != (p,):
            raise ValueError(f"beta0 must have length p={p}, got {beta0.shape}")
        if n < 1:
            raise ValueError("need at least one sample")
        if not 1 <= int(self.S) <= p:
            raise ValueError(f"S must lie in [1, p={p}], got {self.S}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if self.R < 0:
            raise ValueError("R must be nonnegative")
        _check_column_norms(X)
        tail = best_s_term_error(beta0, int(self.S))
        if tail > self.R + 1e-12 * max(1.0, np.abs(beta0).sum()):
            raise ValueError(
                f"beta0 is not (S, R)-compressible: best {self.S}-term error "
                f"{tail:.6g} exceeds R={self.R}"
            )
        X.setflags(write=False)
        beta0.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "R", float(self.R))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def Xtilde(self):
        return normalized_design(self.X)

    @property
    def support(self):
        return np.flatnonzero(self.beta0)

    def to_dict(self):
        return {
            "s": self.S,
            "n": self.n,
            "p": self.p,
            "sigma": self.sigma,
            "r": self.R,
            "seed": self.seed,
            "ensemble": self.ensemble,
            "beta0": self.beta0.tolist(),
            "x": self.X.ravel(order="C").tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        n, p = int(d["n"]), int(d["p"])
        X = np.asarray(d["x"], dtype=float)
        if X.size != n * p:
            raise ValueError(f"x has {X.size} entries, expected n*p = {n * p}")
        return cls(
            S=int(d["s"]),
            X=X.reshape(n, p),
            beta0=np.asarray(d["beta0"], dtype=float),
            sigma=float(d["sigma"]),
            R=float(d.get("r", 0.0)),
            seed=d.get("seed"),
            ensemble=d.get("ensemble"),
        )

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, source):
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Observation:
    """A response vector together with the realized noise that produced it."""

    y: np.ndarray
    e: np.ndarray
    seed: Optional[int] = None

    def to_dict(self):
        return {"y": np.asarray(self.y).tolist(), "e": np.asarray(self.e).tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(y=np.asarray(d["y"], dtype=float), e=np.asarray(d["e"], dtype=float), seed=d.get("seed"))

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def generate_design(n, p, ensemble="gaussian", seed=0):
    """Draw an ``n x p`` design and rescale every column to norm ``sqrt(n)``.

    ``partial_orthonormal`` keeps ``n`` rows of a Haar-random orthogonal
    ``p x p`` matrix and therefore needs ``n <= p``.
    """
    n, p = int(n), int(p)
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    rng = make_rng(seed, "design")
    if ensemble == "gaussian":
        X = rng.standard_normal((n, p))
    elif ensemble == "rademacher":
        X = rng.choice(np.array([-1.0, 1.0]), size=(n, p))
    elif ensemble == "partial_orthonormal":
        if n > p:
            raise ValueError(f"partial_orthonormal needs n <= p, got n={n}, p={p}")
        Q, Rm = np.linalg.qr(rng.standard_normal((p, p)))
        Q = Q * np.sign(np.diag(Rm))
        X = Q[:n, :]
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}; choose from {ENSEMBLES}")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise ValueError("drew a zero column; use another seed")
    return X * (np.sqrt(n) / norms)


def normalized_design(X):
    """Return ``X / sqrt(n)``, whose columns have unit norm when ||X_i||^2 = n."""
    X = np.asarray(X, dtype=float)
    return X / np.sqrt(X.shape[0])


def synthesize_observation(inst, seed, trial=0):
    """Draw ``e ~ N(0, sigma^2 I)`` and return ``y = X beta0 + e``."""
    rng = make_rng(seed, "noise", trial)
    e = inst.sigma * rng.standard_normal(inst.n)
    y = inst.X @ inst.beta0 + e
    return Observation(y=y, e=e, seed=int(seed) if not isinstance(seed, np.random.Generator) else None)


def best_s_term_error(beta, S):
    """l1 distance from ``beta`` to the nearest vector with at most ``S`` nonzeros."""
    mags = np.sort(np.abs(np.asarray(beta, dtype=float).ravel()))
    S = int(S)
    if S < 0:
        raise ValueError("S must be nonnegative")
    if S >= mags.size:
        return 0.0
    return float(mags[: mags.size - S].sum())


def lp_norm(beta, u):
    """l_u norm for ``u >= 1`` (``u = np.inf`` gives the max norm)."""
    if not u >= 1:
        raise ValueError(f"l_u is a norm only for u >= 1, got {u}")
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size == 0:
        return 0.0
    return float(np.linalg.norm(beta, ord=u))


def gram_l1_linf_norm(X):
    """Operator norm of ``X^T X`` from l1 to l_inf, i.e. its largest absolute entry."""
    X = np.asarray(X, dtype=float)
    return float(np.abs(X.T @ X).max())
