"""Core value types shared by every other module.

Candidates, pools, preference records, gold scores and prior predictions are
immutable after construction; numpy buffers are frozen so instances can be
shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


class ConvergenceError(RuntimeError):
    """An iterative optimiser ran out of iterations.

    Carries the final residual so callers can report how far off it stopped:
    gradient norm for convex training, parameter-change norm for EP sweeps.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr = arr.copy() if arr.base is not None or arr.flags.writeable else arr
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Candidate:
    """One pool member: dense integer id, optional text, fixed-width features."""

    id: int
    features: np.ndarray
    text: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _frozen_array(self.features))


@dataclass(frozen=True)
class CandidatePool:
    """All candidates for one topic. Ids are dense 0..n-1 so model vectors
    and covariance matrices index by id directly."""

    topic_id: str
    candidates: tuple[Candidate, ...]
    feature_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @classmethod
    def from_arrays(
        cls,
        topic_id: str,
        features: np.ndarray,
        texts: Optional[Sequence[Optional[str]]] = None,
    ) -> "CandidatePool":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValidationError("features must be a 2-d array (n, d)")
        n, d = features.shape
        cands = tuple(
            Candidate(i, features[i], texts[i] if texts is not None else None)
            for i in range(n)
        )
        return cls(topic_id=topic_id, candidates=cands, feature_dim=d)

    @property
    def size(self) -> int:
        return len(self.candidates)

    def feature_matrix(self) -> np.ndarray:
        """(n, d) feature matrix in id order."""
        return np.stack([c.features for c in self.candidates])

    def texts(self) -> list[Optional[str]]:
        return [c.text for c in self.candidates]


@dataclass(frozen=True)
class PreferenceRecord:
    """One pairwise judgement: label 1 means candidate a beat candidate b."""

    a_id: int
    b_id: int
    label: int
    source: str = "simulated"
    iteration: int = 0

    def __post_init__(self) -> None:
        if self.a_id == self.b_id:
            raise ValidationError("preference pair must involve two distinct candidates")
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        if self.source not in ("simulated", "human"):
            raise ValidationError(f"unknown label source {self.source!r}")


@dataclass(frozen=True)
class TrainingSet:
    """Accumulated pairwise labels, in acquisition order."""

    records: tuple[PreferenceRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def extended(self, new_records: Iterable[PreferenceRecord]) -> "TrainingSet":
        return TrainingSet(self.records + tuple(new_records))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(a_ids, b_ids, labels) as integer arrays, empty-safe."""
        if not self.records:
            z = np.zeros(0, dtype=np.int64)
            return z, z.copy(), z.copy()
        a = np.array([r.a_id for r in self.records], dtype=np.int64)
        b = np.array([r.b_id for r in self.records], dtype=np.int64)
        y = np.array([r.label for r in self.records], dtype=np.int64)
        return a, b, y


@dataclass(frozen=True)
class GoldScores:
    """Ground-truth utilities; when normalised they span [0, 10]."""

    scores: np.ndarray
    normalised: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", _frozen_array(self.scores))

    def __len__(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class PriorPredictions:
    """Per-candidate utility estimates from a pretrained scorer."""

    mu: np.ndarray
    origin: str = "unknown"

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", _frozen_array(self.mu))

    def __len__(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


def normalize_scores(raw) -> GoldScores:
    """Min-max map a raw score vector onto [0, 10], preserving rank order.

    A constant vector maps to 5.0 everywhere so degenerate pools still run.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("scores must be a nonempty 1-d vector")
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr))
        raise ValidationError(f"non-finite score at index {bad[0]}")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return GoldScores(np.full(arr.shape, 5.0), normalised=True)
    return GoldScores(10.0 * (arr - lo) / (hi - lo), normalised=True)


def validate_pool(pool: CandidatePool) -> list[ValidationIssue]:
    """Report every invariant violation; an empty report means the pool is valid."""
    issues: list[ValidationIssue] = []
    n = pool.size
    if n < 2:
        issues.append(ValidationIssue("too-few-candidates", f"pool has {n} candidates, need at least 2"))
    seen: dict[int, int] = {}
    for pos, cand in enumerate(pool.candidates):
        if cand.id in seen:
            issues.append(
                ValidationIssue("duplicate-id", f"id {cand.id} appears at positions {seen[cand.id]} and {pos}")
            )
        else:
            seen[cand.id] = pos
        if cand.features.shape != (pool.feature_dim,):
            issues.append(
                ValidationIssue(
                    "dimension-mismatch",
                    f"candidate {cand.id} has {cand.features.shape[0]} features, pool declares {pool.feature_dim}",
                )
            )
        if not np.all(np.isfinite(cand.features)):
            issues.append(ValidationIssue("non-finite-features", f"candidate {cand.id} has non-finite feature values"))
    expected = set(range(n))
    has_duplicates = any(i.code == "duplicate-id" for i in issues)
    if set(seen) != expected and not has_duplicates:
        missing = sorted(expected - set(seen))
        issues.append(ValidationIssue("non-dense-ids", f"ids are not dense 0..{n - 1}; missing {missing[:10]}"))
    if pool.feature_dim <= 0:
        issues.append(ValidationIssue("bad-dimension", f"feature_dim must be positive, got {pool.feature_dim}"))
    return issues
