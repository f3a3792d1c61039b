"""Synthetic candidate pools with smooth latent utilities.

Lets the full pipeline run with zero external data: features are drawn
uniformly, the gold utility is a random mixture of radial bumps over those
features (smooth, so a kernel model can learn it), and prior predictions
with any target correlation to gold can be manufactured for warm-start
experiments.
"""

from dataclasses import dataclass

import numpy as np

from .domain import (
    CandidatePool,
    GoldScores,
    PriorPredictions,
    ValidationError,
    normalize_scores,
)

__all__ = ["SyntheticConfig", "make_pool", "make_prior"]


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for one synthetic pool."""

    n: int = 200
    d: int = 20
    seed: int = 0
    centers: int = 10
    noise: float = 0.0
    topic_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError("a pool needs at least 2 candidates")
        if self.d < 1:
            raise ValidationError("feature dimension must be at least 1")
        if self.centers < 1:
            raise ValidationError("the utility surface needs at least 1 bump")
        if self.noise < 0:
            raise ValidationError("noise must be non-negative")


def make_pool(cfg: SyntheticConfig) -> tuple[CandidatePool, GoldScores]:
    """Draw a pool and its gold utilities.

    Features are uniform on [-1, 1]^d. The latent utility is a weighted sum
    of Gaussian bumps placed at random centers, with bandwidth matched to
    the typical pairwise distance so the surface varies smoothly across the
    pool, plus optional observation noise. Gold comes back normalised to
    [0, 10]. Same config, same pool.
    """
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.d))
    centers = rng.uniform(-1.0, 1.0, size=(cfg.centers, cfg.d))
    weights = rng.normal(size=cfg.centers)

    # Expected squared distance between two uniform points is 2d/3.
    bandwidth = np.sqrt(2.0 * cfg.d / 3.0)
    sq = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    latent = np.exp(-sq / (2.0 * bandwidth**2)) @ weights
    if cfg.noise > 0:
        latent = latent + cfg.noise * rng.normal(size=cfg.n)

    texts = [f"synthetic candidate {i}" for i in range(cfg.n)]
    pool = CandidatePool.from_arrays(cfg.topic_id, X, texts=texts)
    return pool, normalize_scores(latent)


def make_prior(gold: GoldScores, rho: float, seed: int = 0) -> PriorPredictions:
    """Manufacture prior predictions whose sample correlation with gold is
    exactly rho (up to floating point).

    Works by mixing the standardised gold vector with standardised noise
    that has been made exactly orthogonal to it, then mapping the result to
    a mean-5, spread-2 scale. Correlation is affine-invariant, so the
    rescaling leaves rho intact.
    """
    if not -1.0 <= rho <= 1.0:
        raise ValidationError("rho must lie in [-1, 1]")
    g = np.asarray(gold.scores, dtype=np.float64)
    n = g.shape[0]
    if g.std() == 0.0:
        raise ValidationError("gold scores are constant; correlation is undefined")
    if abs(rho) < 1.0 and n < 3:
        raise ValidationError("need at least 3 candidates to hit a correlation below 1")

    g_std = (g - g.mean()) / g.std()
    if abs(rho) == 1.0:
        mixed = np.sign(rho) * g_std
    else:
        rng = np.random.default_rng(seed)
        eps = rng.normal(size=n)
        eps = eps - eps.mean()
        eps = eps - (eps @ g_std) / (g_std @ g_std) * g_std
        norm = np.linalg.norm(eps)
        if norm < 1e-12:
            raise ValidationError("degenerate noise draw; choose another seed")
        eps = eps / (norm / np.sqrt(n))
        mixed = rho * g_std + np.sqrt(1.0 - rho * rho) * eps

    return PriorPredictions(5.0 + 2.0 * mixed, origin="synthetic")
