"""Covariance functions over candidate feature vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from .domain import ValidationError

MATERN52 = "matern52"
SQUARED_EXPONENTIAL = "squared-exponential"
_FAMILIES = (MATERN52, SQUARED_EXPONENTIAL)

# At most this many rows feed the median-distance heuristic; sampled by a
# deterministic stride so the length scale never depends on an RNG.
_MEDIAN_SAMPLE_CAP = 1024


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family plus scale hyperparameters.

    length_scale may be a scalar or a per-dimension vector; None means
    "choose by the median pairwise-distance heuristic when first used".
    """

    family: str = MATERN52
    length_scale: Union[float, np.ndarray, None] = None
    signal_variance: float = 1.0
    jitter: Optional[float] = None

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}; choose from {_FAMILIES}")
        if self.signal_variance <= 0:
            raise ValidationError("signal_variance must be positive")
        if self.jitter is None:
            object.__setattr__(self, "jitter", 1e-8 * self.signal_variance)
        if not (0 < self.jitter <= 1e-4 * self.signal_variance):
            raise ValidationError("jitter must be positive and at most 1e-4 * signal_variance")
        if self.length_scale is not None:
            ls = np.atleast_1d(np.asarray(self.length_scale, dtype=np.float64))
            if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
                raise ValidationError("length_scale entries must be positive and finite")

    def resolved(self, X: np.ndarray) -> "KernelConfig":
        """Pin an unset length scale to the median heuristic for X."""
        if self.length_scale is not None:
            return self
        return KernelConfig(self.family, median_length_scale(X), self.signal_variance, self.jitter)


def median_length_scale(X: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 for degenerate inputs."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > _MEDIAN_SAMPLE_CAP:
        stride = int(np.ceil(n / _MEDIAN_SAMPLE_CAP))
        X = X[::stride]
    d = cdist(X, X)
    vals = d[np.triu_indices_from(d, k=1)]
    if vals.size == 0:
        return 1.0
    med = float(np.median(vals))
    return med if med > 0 else 1.0


def _scaled(X: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    ls = cfg.length_scale
    if ls is None:
        raise ValidationError("length_scale unresolved; call cfg.resolved(X) first")
    return np.asarray(X, dtype=np.float64) / np.asarray(ls, dtype=np.float64)


def cross_gram(X1: np.ndarray, X2: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """k(x1, x2) without jitter for all row pairs."""
    r = cdist(_scaled(X1, cfg), _scaled(X2, cfg))
    if cfg.family == SQUARED_EXPONENTIAL:
        return cfg.signal_variance * np.exp(-0.5 * r * r)
    s = np.sqrt(5.0) * r
    return cfg.signal_variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


def gram(X: np.ndarray, cfg: KernelConfig, with_jitter: bool = True) -> np.ndarray:
    """Symmetric Gram matrix; jitter on the diagonal keeps Cholesky viable."""
    K = cross_gram(X, X, cfg)
    K = 0.5 * (K + K.T)
    if with_jitter:
        K[np.diag_indices_from(K)] += cfg.jitter
    return K


def chol_psd(A: np.ndarray, max_jitter: float) -> np.ndarray:
    """Cholesky with escalating diagonal jitter; raises past max_jitter."""
    attempt = 0.0
    for _ in range(8):
        try:
            return np.linalg.cholesky(A if attempt == 0.0 else A + attempt * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            attempt = max(attempt * 10.0, 1e-12 * max(1.0, float(np.trace(A)) / A.shape[0]))
            if attempt > max_jitter:
                break
    raise ValidationError("matrix is not positive definite even after jitter escalation")
