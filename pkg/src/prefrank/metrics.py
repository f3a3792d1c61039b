"""Ranking-quality metrics.

Predicted scores only ever matter through the order they induce; ties are
broken by candidate id so every metric is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .domain import GoldScores, ValidationError

Scores = Union[np.ndarray, GoldScores]


@dataclass(frozen=True)
class RankingEvaluation:
    """One pool's evaluation snapshot."""

    accuracy: float
    ndcg_at_k: float
    k: int
    pearson_r: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.ndcg_at_k <= 1.0):
            raise ValidationError("accuracy and ndcg must lie in [0, 1]")
        if not (-1.0 - 1e-12 <= self.pearson_r <= 1.0 + 1e-12):
            raise ValidationError("pearson_r must lie in [-1, 1]")
        if self.k < 1:
            raise ValidationError("k must be at least 1")


def _as_vector(scores: Scores) -> np.ndarray:
    if isinstance(scores, GoldScores):
        return scores.scores
    return np.asarray(scores, dtype=np.float64)


def ranking_order(predicted: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, ties by lower id first."""
    predicted = np.asarray(predicted, dtype=np.float64)
    return np.lexsort((np.arange(predicted.shape[0]), -predicted))


def top1_accuracy(predicted: Scores, gold: Scores) -> float:
    """1.0 iff the predicted argmax is the gold argmax (ties to lowest id)."""
    p = _as_vector(predicted)
    g = _as_vector(gold)
    if p.shape != g.shape:
        raise ValidationError("predicted and gold lengths differ")
    return 1.0 if int(np.argmax(p)) == int(np.argmax(g)) else 0.0


def _dcg(relevance_in_rank_order: np.ndarray) -> float:
    positions = np.arange(1, relevance_in_rank_order.shape[0] + 1)
    return float(np.sum(relevance_in_rank_order / np.log2(positions + 1)))


def ndcg_at_k(predicted: Scores, relevance: Scores, k: int) -> float:
    """Discounted cumulative gain of the predicted top-k over the ideal,
    with linear gains rel/log2(position + 1). All-zero relevance scores 1:
    every ranking is trivially ideal."""
    p = _as_vector(predicted)
    rel = _as_vector(relevance)
    n = p.shape[0]
    if rel.shape[0] != n:
        raise ValidationError("predicted and relevance lengths differ")
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in 1..{n}, got {k}")
    if np.any(rel < 0):
        raise ValidationError("relevance entries must be nonnegative")
    order = ranking_order(p)
    dcg = _dcg(rel[order[:k]])
    ideal = _dcg(np.sort(rel)[::-1][:k])
    if ideal == 0.0:
        return 1.0
    return dcg / ideal


def ndcg_at_percent(predicted: Scores, relevance: Scores, pct: float) -> float:
    """ndcg_at_k with k = ceil(pct/100 * n)."""
    if not 0 < pct <= 100:
        raise ValidationError("pct must lie in (0, 100]")
    n = _as_vector(predicted).shape[0]
    k = math.ceil(pct / 100.0 * n)
    return ndcg_at_k(predicted, relevance, k)


def pearson_r(x: Scores, y: Scores) -> float:
    """Product-moment correlation; either input constant gives 0."""
    xv = _as_vector(x)
    yv = _as_vector(y)
    if xv.shape != yv.shape:
        raise ValidationError("inputs to pearson_r must have equal length")
    if xv.shape[0] < 2:
        raise ValidationError("pearson_r needs at least 2 points")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    denom = float(np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.sum(dx * dy) / denom, -1.0, 1.0))


def evaluate_ranking(predicted: Scores, gold: Scores, k: int) -> RankingEvaluation:
    """Bundle the three headline metrics for one pool."""
    g = _as_vector(gold)
    return RankingEvaluation(
        accuracy=top1_accuracy(predicted, g),
        ndcg_at_k=ndcg_at_k(predicted, g, k),
        k=k,
        pearson_r=pearson_r(predicted, g),
    )
