"""Bradley-Terry baseline: linear utilities from L2-regularised logistic
regression on feature differences.

Each pairwise label is treated as two data points, (phi(a)-phi(b), y) and
(phi(b)-phi(a), 1-y), and the weights minimise cross-entropy plus
(lambda/2)*||w||^2 by damped Newton iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .domain import Candidate, CandidatePool, ConvergenceError, TrainingSet

DEFAULT_REG_LAMBDA = 1.0
DEFAULT_GRAD_TOL = 1e-6
DEFAULT_MAX_ITERS = 100


@dataclass(frozen=True)
class BtModel:
    """Trained linear preference weights."""

    weights: np.ndarray
    reg_lambda: float
    trained_on: int

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


class LogisticFit(NamedTuple):
    weights: np.ndarray
    grad_norm: float
    losses: list[float]


def _loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> float:
    z = X @ w
    ce = float(np.sum(y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)))
    return ce + 0.5 * lam * float(w @ w)


def _grad(X: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> np.ndarray:
    return X.T @ (expit(X @ w) - y) + lam * w


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = DEFAULT_GRAD_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> LogisticFit:
    """Newton iteration with backtracking; the regulariser keeps the Hessian
    positive definite so each step solves by Cholesky."""
    d = X.shape[1]
    w = np.zeros(d)
    losses = [_loss(X, y, w, lam)]
    g = _grad(X, y, w, lam)
    for _ in range(max_iters):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return LogisticFit(w, gnorm, losses)
        p = expit(X @ w)
        H = (X.T * (p * (1.0 - p))) @ X + lam * np.eye(d)
        step = np.linalg.solve(H, g)
        # Backtrack until the convex loss actually decreases.
        t = 1.0
        base = losses[-1]
        while t >= 1e-10:
            cand = w - t * step
            cand_loss = _loss(X, y, cand, lam)
            if cand_loss <= base - 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        else:
            break  # no productive step length left; report current gradient
        w = cand
        losses.append(cand_loss)
        g = _grad(X, y, w, lam)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return LogisticFit(w, gnorm, losses)
    raise ConvergenceError("logistic regression did not converge", gnorm)


def _doubled_design(D: TrainingSet, pool: CandidatePool) -> tuple[np.ndarray, np.ndarray]:
    feats = pool.feature_matrix()
    a, b, y = D.to_arrays()
    diff = feats[a] - feats[b]
    X = np.concatenate([diff, -diff], axis=0)
    labels = np.concatenate([y, 1 - y]).astype(np.float64)
    return X, labels


def bt_train(
    D: TrainingSet,
    pool: CandidatePool,
    reg_lambda: float = DEFAULT_REG_LAMBDA,
    tol: float = DEFAULT_GRAD_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> BtModel:
    """Fit weights on the doubled-difference design; empty data returns the
    regulariser's minimiser, exactly zero weights."""
    if reg_lambda <= 0:
        raise ValueError("reg_lambda must be positive")
    if len(D) == 0:
        return BtModel(np.zeros(pool.feature_dim), reg_lambda, 0)
    X, y = _doubled_design(D, pool)
    fit = fit_logistic(X, y, reg_lambda, tol=tol, max_iters=max_iters)
    return BtModel(fit.weights, reg_lambda, len(D))


def bt_utilities(model: BtModel, pool: CandidatePool) -> np.ndarray:
    """f_a = w . phi(a) for every candidate, in id order."""
    feats = pool.feature_matrix()
    if feats.shape[1] != model.weights.shape[0]:
        raise ValueError(
            f"model has {model.weights.shape[0]} weights but pool features have dimension {feats.shape[1]}"
        )
    return feats @ model.weights


def bt_pair_prob(model: BtModel, a: Candidate, b: Candidate) -> float:
    """p(a beats b) = sigma(f_a - f_b); complements sum to exactly 1."""
    if a.features.shape != b.features.shape or a.features.shape[0] != model.weights.shape[0]:
        raise ValueError("candidate feature dimensions do not match the model")
    z = float(model.weights @ (a.features - b.features))
    q = float(expit(abs(z)))  # in [0.5, 1], so 1 - q is exact
    return q if z >= 0 else 1.0 - q
