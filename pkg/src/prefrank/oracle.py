"""Simulated noisy preference oracle.

Labels are drawn from a logistic model over gold-score differences: the
oracle prefers a over b with probability sigma((g_a - g_b) / t), where the
temperature t controls the noise level. Presentation order is randomised per
draw, which costs one RNG call but removes any ordering artefact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .domain import GoldScores, PreferenceRecord, ValidationError

PairSampler = Callable[[np.random.Generator], tuple[int, int]]


@dataclass(frozen=True)
class OracleConfig:
    """Noise temperature and the seed of the oracle's RNG stream."""

    t: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.t > 0):
            raise ValidationError("oracle temperature t must be positive")


def oracle_prob(g_a: float, g_b: float, t: float) -> float:
    """P(oracle prefers a) = sigma((g_a - g_b) / t); complements sum to 1."""
    if not (t > 0):
        raise ValidationError("oracle temperature t must be positive")
    q = float(expit(abs(g_a - g_b) / t))  # in [0.5, 1], so 1 - q is exact
    return q if g_a >= g_b else 1.0 - q


def oracle_label(
    pair: tuple[int, int],
    gold: GoldScores,
    cfg: OracleConfig,
    rng: np.random.Generator,
    iteration: int = 0,
) -> PreferenceRecord:
    """One Bernoulli-drawn label for the pair; order of presentation is
    itself randomised so neither slot is privileged."""
    a_id, b_id = int(pair[0]), int(pair[1])
    first, second = (a_id, b_id) if rng.random() < 0.5 else (b_id, a_id)
    p_first = oracle_prob(float(gold.scores[first]), float(gold.scores[second]), cfg.t)
    first_wins = rng.random() < p_first
    label = int(first_wins) if first == a_id else int(not first_wins)
    return PreferenceRecord(a_id, b_id, label, source="simulated", iteration=iteration)


class OracleAccuracy(NamedTuple):
    """Monte-Carlo agreement estimate and its analytic counterpart."""

    mc: float
    analytic: float


def oracle_accuracy(
    gold: GoldScores,
    t: float,
    pair_sampler: PairSampler,
    n_draws: int,
    rng: Optional[np.random.Generator] = None,
) -> OracleAccuracy:
    """Fraction of labels agreeing with the gold ordering under a pair
    distribution; ties in gold credit 0.5. The analytic column averages
    E[max(p, 1-p)] over the same sampled pairs."""
    if n_draws < 1:
        raise ValidationError("n_draws must be at least 1")
    gen = rng if rng is not None else np.random.default_rng(0)
    agree = 0.0
    analytic = 0.0
    g = gold.scores
    for _ in range(n_draws):
        a, b = pair_sampler(gen)
        p = oracle_prob(float(g[a]), float(g[b]), t)
        analytic += max(p, 1.0 - p)
        label = 1 if gen.random() < p else 0
        if g[a] == g[b]:
            agree += 0.5
        elif (g[a] > g[b]) == (label == 1):
            agree += 1.0
    return OracleAccuracy(agree / n_draws, analytic / n_draws)


def uniform_pair_sampler(n: int) -> PairSampler:
    """Uniform distribution over unordered distinct pairs of 0..n-1."""
    if n < 2:
        raise ValidationError("need at least 2 candidates to sample pairs")

    def sample(rng: np.random.Generator) -> tuple[int, int]:
        a, b = rng.choice(n, size=2, replace=False)
        return int(a), int(b)

    return sample
