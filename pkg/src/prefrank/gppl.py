"""Gaussian-process preference learner.

Utilities f over a candidate pool get a GP prior with mean mu (prior
predictions from a pretrained scorer, or zero) and covariance K. Each pairwise
label contributes a probit likelihood factor Phi(f_winner - f_loser). The
posterior is approximated as N(f_hat, C) by expectation propagation on the
pairwise projections z_k = f_winner(k) - f_loser(k); EP is accurate enough on
this likelihood that tiny pools match brute-force numerical integration to a
few parts in ten thousand.

Pools beyond a size threshold (or any pool when inducing_count is set) use an
inducing-point approximation: the same EP runs in the M-dimensional inducing
space and the returned covariance is a low-rank factor plus a diagonal
remainder.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.special import log_ndtr, ndtr
from sklearn.cluster import kmeans_plusplus

from .domain import (
    CandidatePool,
    ConvergenceError,
    PriorPredictions,
    TrainingSet,
    ValidationError,
)
from .kernels import KernelConfig, chol_psd, cross_gram, gram

DENSE_LIMIT = 2000
DEFAULT_INDUCING = 100

_VAR_FLOOR = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GpplModel:
    """Hyperparameters for one fit; immutable so runs can share it."""

    kernel: KernelConfig = KernelConfig()
    prior_mean: Optional[PriorPredictions] = None
    inducing_count: Optional[int] = None
    convergence_tol: float = 1e-8
    max_iters: int = 300
    seed: int = 0
    damping: float = 0.7

    def __post_init__(self) -> None:
        if self.inducing_count is not None and self.inducing_count < 1:
            raise ValidationError("inducing_count must be at least 1 when set")
        if not (0 < self.damping <= 1):
            raise ValidationError("damping must lie in (0, 1]")
        if self.convergence_tol <= 0 or self.max_iters < 1:
            raise ValidationError("convergence_tol must be positive and max_iters at least 1")


@dataclass(frozen=True)
class GpPosterior:
    """Gaussian posterior over candidate utilities.

    Exactly one covariance representation is set: dense C, or a low-rank
    factor F with diagonal remainder so that C = F F^T + diag(resid_diag).
    """

    f_hat: np.ndarray
    C: Optional[np.ndarray] = None
    factor: Optional[np.ndarray] = None
    resid_diag: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if (self.C is None) == (self.factor is None):
            raise ValidationError("set exactly one of C and factor")
        if self.factor is not None and self.resid_diag is None:
            raise ValidationError("low-rank form needs resid_diag")

    @property
    def size(self) -> int:
        return self.f_hat.shape[0]

    def covariance(self) -> np.ndarray:
        """Materialised dense covariance; O(n^2) memory in low-rank form."""
        if self.C is not None:
            return self.C
        C = self.factor @ self.factor.T
        C[np.diag_indices_from(C)] += self.resid_diag
        return C

    def variance(self) -> np.ndarray:
        if self.C is not None:
            return np.maximum(np.diag(self.C), 0.0)
        return np.maximum(np.sum(self.factor * self.factor, axis=1) + self.resid_diag, 0.0)

    def pair_variance(self, a_id: int, b_id: int) -> float:
        """var(f_a - f_b) = C_aa + C_bb - 2 C_ab, clamped at 0."""
        if a_id == b_id:
            return 0.0
        if self.C is not None:
            v = self.C[a_id, a_id] + self.C[b_id, b_id] - 2.0 * self.C[a_id, b_id]
        else:
            diff = self.factor[a_id] - self.factor[b_id]
            v = float(diff @ diff) + self.resid_diag[a_id] + self.resid_diag[b_id]
        return max(float(v), 0.0)

    def pair_variances_vs(self, b_id: int) -> np.ndarray:
        """var(f_a - f_b) for every a at once; entry b is exactly 0."""
        if self.C is not None:
            d = np.diag(self.C)
            v = d + d[b_id] - 2.0 * self.C[:, b_id]
        else:
            diff = self.factor - self.factor[b_id]
            v = np.sum(diff * diff, axis=1) + self.resid_diag + self.resid_diag[b_id]
        v = np.maximum(v, 0.0)
        v[b_id] = 0.0
        return v

    def pair_variance_matrix(self, ids: np.ndarray) -> np.ndarray:
        """var(f_a - f_b) for all a, b in ids; zero diagonal, clamped at 0."""
        ids = np.asarray(ids)
        if self.C is not None:
            sub = self.C[np.ix_(ids, ids)]
            d = np.diag(sub)
            v = d[:, None] + d[None, :] - 2.0 * sub
        else:
            F = self.factor[ids]
            t = np.sum(F * F, axis=1) + self.resid_diag[ids]
            v = t[:, None] + t[None, :] - 2.0 * (F @ F.T)
        v = np.maximum(v, 0.0)
        v[np.diag_indices_from(v)] = 0.0
        return v

    @cached_property
    def _sampling_chol(self) -> np.ndarray:
        C = np.array(self.C, copy=True)
        return chol_psd(C, max_jitter=1e-4 * max(1.0, float(np.max(np.diag(C)))))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One joint draw f ~ N(f_hat, C)."""
        if self.C is not None:
            return self.f_hat + self._sampling_chol @ rng.standard_normal(self.size)
        w = rng.standard_normal(self.factor.shape[1])
        e = rng.standard_normal(self.size)
        return self.f_hat + self.factor @ w + np.sqrt(self.resid_diag) * e


class PairStatistics(NamedTuple):
    """Posterior summary of one ordered pair: delta = f_hat_a - f_hat_b, its
    posterior variance, and z = delta / sqrt(variance) (0 when variance is 0)."""

    delta: float
    variance: float
    z: float


def gppl_pair_stats(post: GpPosterior, a_id: int, b_id: int) -> PairStatistics:
    if a_id == b_id:
        return PairStatistics(0.0, 0.0, 0.0)
    delta = float(post.f_hat[a_id] - post.f_hat[b_id])
    v = post.pair_variance(a_id, b_id)
    z = delta / np.sqrt(v) if v > 0.0 else 0.0
    return PairStatistics(delta, v, z)


def gppl_pair_prob(post: GpPosterior, a_id: int, b_id: int) -> float:
    """p(a beats b) = Phi(delta / sqrt(1 + v)); complements sum to exactly 1."""
    if a_id == b_id:
        return 0.5
    delta = float(post.f_hat[a_id] - post.f_hat[b_id])
    v = post.pair_variance(a_id, b_id)
    q = float(ndtr(abs(delta) / np.sqrt(1.0 + v)))  # in [0.5, 1], so 1 - q is exact
    return q if delta >= 0 else 1.0 - q


def _standardise(x: np.ndarray) -> np.ndarray:
    sd = float(np.std(x))
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - float(np.mean(x))) / sd


def combine_sum(prior: PriorPredictions, posterior: Union[GpPosterior, np.ndarray]) -> np.ndarray:
    """Equal-weight average of the z-scored prior and posterior utilities.

    Constant vectors standardise to zero, so a flat prior leaves the
    posterior ranking untouched (and vice versa).
    """
    post_vec = posterior.f_hat if isinstance(posterior, GpPosterior) else np.asarray(posterior, dtype=np.float64)
    if len(prior) != post_vec.shape[0]:
        raise ValidationError("prior and posterior lengths differ")
    return 0.5 * _standardise(prior.mu) + 0.5 * _standardise(post_vec)


# ---------------------------------------------------------------------------
# Expectation propagation on pair projections


class _EpResult(NamedTuple):
    w: np.ndarray        # K G^T w gives the posterior mean shift
    s: np.ndarray        # sqrt of site precisions
    L_B: np.ndarray      # Cholesky of B = I + S A S
    iterations: int


def _probit_tilted_moments(mc: np.ndarray, vc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of N(z; mc, vc) * Phi(z), normalised."""
    denom = np.sqrt(1.0 + vc)
    zstar = mc / denom
    u = np.exp(-0.5 * zstar * zstar - _LOG_SQRT_2PI - log_ndtr(zstar))
    mhat = mc + vc * u / denom
    vhat = vc - vc * vc * u * (zstar + u) / (1.0 + vc)
    return mhat, np.maximum(vhat, _VAR_FLOOR)


def _ep_pair_sites(
    A: np.ndarray,
    m0: np.ndarray,
    tol: float,
    max_iters: int,
    damping: float,
) -> _EpResult:
    """Run EP for sites Phi(z_k) under prior z ~ N(m0, A).

    Natural site parameters (tau, nu) are updated in parallel sweeps with
    damping; B = I + S A S keeps every solve well conditioned.
    """
    m = A.shape[0]
    tau = np.zeros(m)
    nu = np.zeros(m)
    eye = np.eye(m)

    def posterior(tau: np.ndarray, nu: np.ndarray):
        s = np.sqrt(tau)
        B = eye + (s[:, None] * A) * s[None, :]
        L = np.linalg.cholesky(B)
        w = nu - s * np.linalg.solve(L.T, np.linalg.solve(L, s * (m0 + A @ nu)))
        mean = m0 + A @ w
        R = np.linalg.solve(L, s[:, None] * A)
        var = np.maximum(np.diag(A) - np.sum(R * R, axis=0), _VAR_FLOOR)
        return s, L, w, mean, var

    change = np.inf
    for it in range(1, max_iters + 1):
        _, _, _, mean, var = posterior(tau, nu)
        tau_cav = 1.0 / var - tau
        nu_cav = mean / var - nu
        ok = tau_cav > 1e-12
        safe_tau = np.maximum(tau_cav, 1e-12)
        mc = np.where(ok, nu_cav / safe_tau, 0.0)
        vc = np.where(ok, 1.0 / safe_tau, 1.0)
        mhat, vhat = _probit_tilted_moments(mc, vc)
        tau_new = np.maximum(1.0 / vhat - tau_cav, 0.0)
        nu_new = mhat / vhat - nu_cav
        dtau = np.where(ok, tau_new - tau, 0.0)
        dnu = np.where(ok, nu_new - nu, 0.0)
        tau = tau + damping * dtau
        nu = nu + damping * dnu
        change = max(float(np.max(np.abs(damping * dtau))), float(np.max(np.abs(damping * dnu))))
        if change < tol:
            s, L, w, _, _ = posterior(tau, nu)
            return _EpResult(w, s, L, it)
    raise ConvergenceError("expectation propagation did not converge", change)


# ---------------------------------------------------------------------------
# Fitting


def _winners_losers(D: TrainingSet, n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b, y = D.to_arrays()
    if a.size and (a.min() < 0 or b.min() < 0 or a.max() >= n or b.max() >= n):
        raise ValidationError("training record references a candidate outside the pool")
    win = np.where(y == 1, a, b)
    los = np.where(y == 1, b, a)
    return win, los


def _prior_vector(model: GpplModel, n: int) -> np.ndarray:
    if model.prior_mean is None:
        return np.zeros(n)
    if len(model.prior_mean) != n:
        raise ValidationError(f"prior mean has length {len(model.prior_mean)}, pool has {n} candidates")
    return np.asarray(model.prior_mean.mu, dtype=np.float64)


def _fit_dense(model: GpplModel, X: np.ndarray, mu: np.ndarray, D: TrainingSet) -> GpPosterior:
    cfg = model.kernel.resolved(X)
    K = gram(X, cfg)
    if len(D) == 0:
        return GpPosterior(f_hat=mu.copy(), C=K)
    win, los = _winners_losers(D, X.shape[0])
    KGt = K[:, win] - K[:, los]                 # n x m
    A = KGt[win] - KGt[los]                     # m x m, symmetric
    A = 0.5 * (A + A.T)
    m0 = mu[win] - mu[los]
    ep = _ep_pair_sites(A, m0, model.convergence_tol, model.max_iters, model.damping)
    f_hat = mu + KGt @ ep.w
    R = np.linalg.solve(ep.L_B, ep.s[:, None] * KGt.T)
    C = K - R.T @ R
    C = 0.5 * (C + C.T)
    return GpPosterior(f_hat=f_hat, C=C)


def _fit_sparse(model: GpplModel, X: np.ndarray, mu: np.ndarray, D: TrainingSet, m_inducing: int) -> GpPosterior:
    cfg = model.kernel.resolved(X)
    n = X.shape[0]
    Z, _ = kmeans_plusplus(X, n_clusters=m_inducing, random_state=model.seed)
    Kmm = gram(Z, cfg)
    Knm = cross_gram(X, Z, cfg)
    Lm = chol_psd(Kmm, max_jitter=1e-4 * cfg.signal_variance)
    P = np.linalg.solve(Lm.T, np.linalg.solve(Lm, Knm.T)).T      # n x M
    q_diag = np.sum(Knm * P, axis=1)
    resid = np.maximum(cfg.signal_variance + cfg.jitter - q_diag, 0.0)

    if len(D) == 0:
        return GpPosterior(f_hat=mu.copy(), factor=P @ chol_psd(Kmm, 1e-4 * cfg.signal_variance), resid_diag=resid)

    win, los = _winners_losers(D, n)
    Geff = P[win] - P[los]                                       # m x M
    KGt = Kmm @ Geff.T                                           # M x m
    A = Geff @ KGt
    A = 0.5 * (A + A.T)
    m0 = mu[win] - mu[los]
    ep = _ep_pair_sites(A, m0, model.convergence_tol, model.max_iters, model.damping)
    f_hat = mu + P @ (KGt @ ep.w)
    R = np.linalg.solve(ep.L_B, (KGt * ep.s[None, :]).T)         # m x M
    S_post = Kmm - R.T @ R
    S_post = 0.5 * (S_post + S_post.T)
    F = P @ chol_psd(S_post, max_jitter=1e-4 * cfg.signal_variance)
    return GpPosterior(f_hat=f_hat, factor=F, resid_diag=resid)


def gppl_fit(model: GpplModel, pool: CandidatePool, D: TrainingSet) -> GpPosterior:
    """Approximate posterior N(f_hat, C) over all candidate utilities.

    With no labels the prior comes back untouched: f_hat = mu and C is the
    kernel Gram matrix. Refitting with the same data and seed is
    deterministic.
    """
    X = pool.feature_matrix()
    n = X.shape[0]
    mu = _prior_vector(model, n)
    if model.inducing_count is not None:
        if model.inducing_count > n:
            raise ValidationError(f"inducing_count {model.inducing_count} exceeds pool size {n}")
        if model.inducing_count < n:
            return _fit_sparse(model, X, mu, D, model.inducing_count)
        return _fit_dense(model, X, mu, D)
    if n > DENSE_LIMIT:
        return _fit_sparse(model, X, mu, D, min(DEFAULT_INDUCING, n))
    return _fit_dense(model, X, mu, D)
