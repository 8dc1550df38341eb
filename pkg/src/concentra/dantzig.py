"""The Dantzig selector and its high-probability error radius."""
from __future__ import annotations

from dataclasses import dataclass
from math import log, pi, sqrt

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .lp import solve_lp

__all__ = [
    "DantzigSolution",
    "DantzigSelector",
    "dantzig_select",
    "lambda_p",
    "failure_mass",
    "estimation_radius",
    "exceeds_radius",
]

# smallest constraint level, so sigma = 0 becomes an equality up to this slack
EQUALITY_TOL = 1e-10


def lambda_p(p, alpha):
    """Universal threshold ``sqrt(2 (1 + alpha) log p)``."""
    if p < 2:
        raise ValueError("need p >= 2 so that log p > 0")
    return sqrt(2.0 * (1.0 + alpha) * log(p))


def failure_mass(p, alpha):
    """``1 / (p^alpha sqrt(pi log p))``, the probability allowance of the noise event."""
    if p < 2:
        raise ValueError("need p >= 2 so that log p > 0")
    return float(np.exp(-alpha * log(p) - 0.5 * log(pi * log(p))))


@dataclass(frozen=True)
class DantzigSolution:
    """Solution of the Dantzig program in normalized and original coordinates.

    Attributes
    ----------
    beta_tilde : ndarray
        Minimizer for the normalized design ``X / sqrt(n)``.
    beta_hat : ndarray
        ``beta_tilde / sqrt(n)``, the estimate for the original design.
    lambda_p, alpha : float
    objective : float
        ``||beta_tilde||_1``.
    feasibility_slack : float
        Constraint level minus ``||Xt^T (y - Xt beta_tilde)||_inf``; nonnegative
        up to solver tolerance.
    duality_gap : float
    """

    beta_tilde: np.ndarray
    beta_hat: np.ndarray
    lambda_p: float
    alpha: float
    objective: float
    feasibility_slack: float
    duality_gap: float

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "objective": self.objective,
            "slack": self.feasibility_slack,
            "lambda_p": self.lambda_p,
        }


def dantzig_select(X, y, sigma, alpha, tolerance=1e-9):
    """Solve ``min ||b||_1`` subject to ``||Xt^T (y - Xt b)||_inf <= lambda_p sigma``.

    ``Xt = X / sqrt(n)``.  The program is written with ``b = u - v`` for
    nonnegative ``u, v`` and two inequality rows per coordinate.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    y : ndarray of shape (n,)
    sigma : float
        Noise level, ``>= 0``.
    alpha : float
        Confidence exponent, ``> 0``.

    Returns
    -------
    DantzigSolution
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lam = lambda_p(p, alpha)
    Xt = X / np.sqrt(n)
    G = Xt.T @ Xt
    b = Xt.T @ y
    t = max(lam * sigma, EQUALITY_TOL)
    A_ub = np.block([[G, -G], [-G, G]])
    b_ub = np.concatenate([b + t, t - b])
    res = solve_lp(np.ones(2 * p), A_ub, b_ub, tolerance=tolerance)
    beta_tilde = res.x[:p] - res.x[p:]
    slack = t - float(np.abs(b - G @ beta_tilde).max())
    return DantzigSolution(
        beta_tilde=beta_tilde,
        beta_hat=beta_tilde / np.sqrt(n),
        lambda_p=lam,
        alpha=float(alpha),
        objective=float(np.abs(beta_tilde).sum()),
        feasibility_slack=slack,
        duality_gap=res.duality_gap,
    )


def estimation_radius(S, R, n, p, alpha, delta, theta, sigma):
    """Radius ``eps`` such that the Dantzig estimate is within ``eps`` of ``beta0``
    with probability at least ``1 - failure_mass(p, alpha)``.

    ``eps = 8 sigma / (1 - delta - theta) * sqrt((1 + alpha) S log p / n)
    + 2 (1 - delta + theta) / (1 - delta - theta) * R / sqrt(S)``.
    """
    if delta + theta >= 1:
        raise ValueError(
            f"delta + theta = {delta + theta:.6g} >= 1; the restricted isometry "
            "condition fails and the radius is undefined"
        )
    if S < 1:
        raise ValueError("S must be at least 1")
    if p < 2:
        raise ValueError("need p >= 2")
    gap = 1.0 - delta - theta
    noise = 8.0 * sigma / gap * sqrt((1.0 + alpha) * S * log(p) / n)
    approx = 2.0 * (1.0 - delta + theta) / gap * R / sqrt(S)
    return noise + approx


def exceeds_radius(beta_hat, beta0, epsilon):
    """Critical region of the Dantzig test: ``||beta_hat - beta0||_2 > epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    diff = np.asarray(beta_hat, dtype=float) - np.asarray(beta0, dtype=float)
    return bool(np.linalg.norm(diff) > epsilon)


class DantzigSelector(RegressorMixin, BaseEstimator):
    """Dantzig selector with known noise level.

    Parameters
    ----------
    sigma : float, default=1.0
        Noise standard deviation.
    alpha : float, default=1.0
        Sets the constraint level ``sigma * sqrt(2 (1 + alpha) log p)``.
    tolerance : float, default=1e-9
        LP feasibility tolerance.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Estimate in the scale of the supplied design.
    coef_normalized_ : ndarray of shape (n_features,)
        Minimizer for the column-normalized design.
    lambda_p_, objective_, feasibility_slack_ : float
    """

    def __init__(self, sigma=1.0, alpha=1.0, tolerance=1e-9):
        self.sigma = sigma
        self.alpha = alpha
        self.tolerance = tolerance

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] < 2:
            raise ValueError("DantzigSelector needs at least two features")
        sol = dantzig_select(X, y, self.sigma, self.alpha, self.tolerance)
        self.coef_ = sol.beta_hat
        self.coef_normalized_ = sol.beta_tilde
        self.lambda_p_ = sol.lambda_p
        self.objective_ = sol.objective
        self.feasibility_slack_ = sol.feasibility_slack
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_
