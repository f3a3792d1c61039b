"""Pair-selection strategies for the interactive loop.

Six strategies choose which candidate pair to show the labeller next:

- random: uniform over unordered distinct pairs.
- unc:    the two candidates whose single-item label is most uncertain under
          the linear baseline.
- unpa:   the pair whose predicted label probability is closest to 0.5.
- eig:    the pair whose label carries the most expected information about
          the utilities (BALD-style closed form).
- imp:    the current best candidate against the challenger with the highest
          expected improvement over it.
- tp:     a Thompson draw picks the anchor, then the most informative pair
          containing it.

Symmetric strategies return pairs as (low id, high id); anchored strategies
(imp, tp) return (anchor, challenger). All scores depend on the posterior only
through per-pair delta and variance, so low-rank covariances score large pools
without materialising an n x n matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, ndtr
from scipy.stats import norm

from .bt import BtModel, bt_utilities
from .domain import CandidatePool, TrainingSet, ValidationError
from .gppl import GpPosterior, PairStatistics, gppl_pair_stats  # noqa: F401  (re-exported)

STRATEGIES = ("random", "unc", "unpa", "eig", "imp", "tp")

# Above this many candidates, all-pairs strategies score a uniform subsample.
DEFAULT_CANDIDATE_CAP = 1000

_KAPPA2 = np.pi * np.log(2.0) / 2.0
_LN2 = np.log(2.0)


@dataclass(frozen=True)
class AcquisitionScore:
    """One scored pair, tagged with the strategy that produced it."""

    pair: tuple[int, int]
    value: float
    strategy: str

    def __post_init__(self) -> None:
        if self.pair[0] == self.pair[1]:
            raise ValidationError("acquisition pair must be distinct")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class AcquisitionState:
    """Everything a strategy may read when choosing pairs."""

    pool: CandidatePool
    D: TrainingSet = TrainingSet()
    bt: Optional[BtModel] = None
    posterior: Optional[GpPosterior] = None


# ---------------------------------------------------------------------------
# Closed-form scores


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Entropy of a Bernoulli(p) in nats, safe at p = 0 and p = 1."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-15, 1.0 - 1e-15)
    return -(p * np.log(p) + (1.0 - p) * np.log1p(-p))


def eig_value(delta, v) -> np.ndarray:
    """Expected information gain of a pairwise label, in nats.

    First term: entropy of the marginal label probability Phi(delta/sqrt(1+v)).
    Second term: the squared-exponential approximation of the expected
    conditional entropy with kappa^2 = pi ln2 / 2, which is native to base-2
    entropies, so it is scaled by ln 2 here. Clamped at 0: a self-pair
    (delta = 0, v = 0) scores exactly 0.
    """
    delta = np.asarray(delta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    marginal = binary_entropy(ndtr(delta / np.sqrt(1.0 + v)))
    conditional = _LN2 * np.sqrt(_KAPPA2 / (v + _KAPPA2)) * np.exp(-(delta * delta) / (2.0 * (v + _KAPPA2)))
    return np.maximum(marginal - conditional, 0.0)


def improvement_value(delta, v) -> np.ndarray:
    """Expected improvement E[max(0, f_a - f_anchor)] = sqrt(v)(z Phi(z) + N(z;0,1))."""
    delta = np.asarray(delta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sd = np.sqrt(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(v > 0.0, delta / np.where(v > 0.0, sd, 1.0), 0.0)
    return np.maximum(sd * (z * ndtr(z) + norm.pdf(z)), 0.0)


# ---------------------------------------------------------------------------
# Shared helpers


def _check_pool_size(n: int) -> None:
    if n < 2:
        raise ValidationError("need at least 2 candidates to form a pair")


def _candidate_subset(n: int, cap: Optional[int], rng: Optional[np.random.Generator]) -> np.ndarray:
    if cap is None or n <= cap:
        return np.arange(n)
    gen = rng if rng is not None else np.random.default_rng(0)
    return np.sort(gen.choice(n, size=cap, replace=False))


def _best_pairs_from_matrix(
    score: np.ndarray, ids: np.ndarray, count: int, minimise: bool
) -> list[tuple[int, int]]:
    """Top pairs from a symmetric score matrix over ids, ties lexicographic."""
    m = score.shape[0]
    iu = np.triu_indices(m, k=1)
    vals = score[iu]
    if minimise:
        vals = -vals
    # stable sort on (-value) keeps row-major i.e. lexicographic order on ties
    order = np.argsort(-vals, kind="stable")[:count]
    return [(int(ids[iu[0][k]]), int(ids[iu[1][k]])) for k in order]


def _pair_scores(post: GpPosterior, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = post.f_hat[ids]
    delta = f[:, None] - f[None, :]
    v = post.pair_variance_matrix(ids)
    return delta, v


# ---------------------------------------------------------------------------
# Single-pair strategies


def acq_random(pool: CandidatePool, D: TrainingSet, rng: np.random.Generator) -> tuple[int, int]:
    """Uniformly random unordered pair of distinct candidates."""
    _check_pool_size(pool.size)
    a, b = rng.choice(pool.size, size=2, replace=False)
    return (int(min(a, b)), int(max(a, b)))


def acq_unc(bt: BtModel, pool: CandidatePool) -> tuple[int, int]:
    """The two candidates with the largest single-item uncertainty
    u(a) = min(p(a), 1 - p(a)), p(a) = sigma(f_a); ties go to lower ids."""
    _check_pool_size(pool.size)
    f = bt_utilities(bt, pool)
    u = expit(-np.abs(f))
    order = np.lexsort((np.arange(pool.size), -u))
    a, b = int(order[0]), int(order[1])
    return (min(a, b), max(a, b))


def acq_unpa(
    post: GpPosterior,
    rng: Optional[np.random.Generator] = None,
    candidate_cap: Optional[int] = DEFAULT_CANDIDATE_CAP,
) -> tuple[int, int]:
    """The pair with predicted label probability closest to 0.5.

    |Phi(delta/sqrt(1+v)) - 0.5| is minimised exactly where |delta|/sqrt(1+v)
    is, so the probit is never evaluated.
    """
    _check_pool_size(post.size)
    ids = _candidate_subset(post.size, candidate_cap, rng)
    delta, v = _pair_scores(post, ids)
    score = np.abs(delta) / np.sqrt(1.0 + v)
    np.fill_diagonal(score, np.inf)
    return _best_pairs_from_matrix(score, ids, 1, minimise=True)[0]


def acq_eig(
    post: GpPosterior,
    rng: Optional[np.random.Generator] = None,
    candidate_cap: Optional[int] = DEFAULT_CANDIDATE_CAP,
) -> tuple[int, int]:
    """The pair whose label maximises the expected information gain."""
    _check_pool_size(post.size)
    ids = _candidate_subset(post.size, candidate_cap, rng)
    delta, v = _pair_scores(post, ids)
    score = eig_value(delta, v)
    np.fill_diagonal(score, -np.inf)
    return _best_pairs_from_matrix(score, ids, 1, minimise=False)[0]


def _imp_challengers(post: GpPosterior, anchor: int) -> np.ndarray:
    """Expected improvement of every candidate over the anchor."""
    delta = post.f_hat - post.f_hat[anchor]
    v = post.pair_variances_vs(anchor)
    imp = improvement_value(delta, v)
    imp[anchor] = -np.inf
    return imp


def _argmax_lowest_id(values: np.ndarray) -> int:
    return int(np.argmax(values))  # np.argmax takes the first (lowest id) maximum


def acq_imp(post: GpPosterior) -> tuple[int, int]:
    """Pit the incumbent (highest posterior mean) against the challenger with
    the greatest expected improvement over it."""
    _check_pool_size(post.size)
    incumbent = _argmax_lowest_id(post.f_hat)
    imp = _imp_challengers(post, incumbent)
    return (incumbent, _argmax_lowest_id(imp))


def _eig_vs_anchor(post: GpPosterior, anchor: int) -> np.ndarray:
    delta = post.f_hat - post.f_hat[anchor]
    v = post.pair_variances_vs(anchor)
    return eig_value(delta, v)


def acq_tp(post: GpPosterior, rng: np.random.Generator) -> tuple[int, int]:
    """Thompson draw picks the anchor; the most informative pair containing
    it is queried."""
    _check_pool_size(post.size)
    draw = post.sample(rng)
    anchor = _argmax_lowest_id(draw)
    scores = _eig_vs_anchor(post, anchor)
    scores[anchor] = -np.inf
    return (anchor, _argmax_lowest_id(scores))


# ---------------------------------------------------------------------------
# Batch selection


def _all_pairs(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def _batch_random(pool: CandidatePool, D: TrainingSet, rng: np.random.Generator, k: int) -> list[tuple[int, int]]:
    total = pool.size * (pool.size - 1) // 2
    if k >= total:
        pairs = _all_pairs(pool.size)
        return [pairs[i] for i in rng.permutation(total)]
    chosen: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    while len(chosen) < k:
        pair = acq_random(pool, D, rng)
        if pair not in seen:
            seen.add(pair)
            chosen.append(pair)
    return chosen


def _batch_unc(bt: BtModel, pool: CandidatePool, k: int) -> list[tuple[int, int]]:
    """Pairs ranked by u(a) + u(b); the top pairs always live among the
    k + 1 most uncertain candidates."""
    f = bt_utilities(bt, pool)
    u = expit(-np.abs(f))
    order = np.lexsort((np.arange(pool.size), -u))
    top = np.sort(order[: min(pool.size, max(k + 1, 2))])
    scored = sorted(
        ((a, b) for i, a in enumerate(top) for b in top[i + 1 :]),
        key=lambda p: (-(u[p[0]] + u[p[1]]), p[0], p[1]),
    )
    return [(int(a), int(b)) for a, b in scored[:k]]


def _batch_anchored(
    post: GpPosterior,
    k: int,
    strategy: str,
    rng: Optional[np.random.Generator],
) -> list[tuple[int, int]]:
    """Repeatedly apply the anchored pair rule, excluding pairs already taken.

    imp: anchors walk down the posterior-mean ranking as each one runs out of
    unchosen challengers. tp: every application redraws the anchor; an anchor
    with no challengers left triggers a redraw, with a lexicographic fallback
    once redraws stop producing pairs.
    """
    n = post.size
    total = n * (n - 1) // 2
    k = min(k, total)
    chosen: list[tuple[int, int]] = []
    taken: set[tuple[int, int]] = set()

    def unordered(p: tuple[int, int]) -> tuple[int, int]:
        return (min(p), max(p))

    if strategy == "imp":
        anchors = np.lexsort((np.arange(n), -post.f_hat))
        for anchor in anchors:
            if len(chosen) == k:
                break
            scores = _imp_challengers(post, int(anchor))
            for ch in np.lexsort((np.arange(n), -scores)):
                if len(chosen) == k:
                    break
                pair = (int(anchor), int(ch))
                if ch == anchor or unordered(pair) in taken:
                    continue
                taken.add(unordered(pair))
                chosen.append(pair)
        return chosen

    failures = 0
    while len(chosen) < k and failures < 64:
        draw = post.sample(rng)
        anchor = _argmax_lowest_id(draw)
        scores = _eig_vs_anchor(post, anchor)
        scores[anchor] = -np.inf
        placed = False
        for ch in np.lexsort((np.arange(n), -scores)):
            pair = (anchor, int(ch))
            if ch == anchor or unordered(pair) in taken:
                continue
            taken.add(unordered(pair))
            chosen.append(pair)
            placed = True
            break
        failures = 0 if placed else failures + 1
    for pair in _all_pairs(n):
        if len(chosen) == k:
            break
        if pair not in taken:
            taken.add(pair)
            chosen.append(pair)
    return chosen


def select_batch(
    strategy: str,
    state: AcquisitionState,
    batch_size: int,
    rng: np.random.Generator,
    candidate_cap: Optional[int] = DEFAULT_CANDIDATE_CAP,
) -> list[tuple[int, int]]:
    """Choose batch_size distinct pairs by the named strategy.

    Asking for more pairs than exist returns every distinct pair. The same
    state and RNG state always produce the same batch.
    """
    if batch_size < 1:
        raise ValidationError("batch_size must be at least 1")
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    n = state.pool.size
    _check_pool_size(n)
    k = min(batch_size, n * (n - 1) // 2)

    if strategy == "random":
        return _batch_random(state.pool, state.D, rng, k)
    if strategy == "unc":
        if state.bt is None:
            raise ValidationError("unc needs a trained linear baseline in state.bt")
        return _batch_unc(state.bt, state.pool, k)

    post = state.posterior
    if post is None:
        raise ValidationError(f"{strategy} needs a fitted posterior in state.posterior")
    if strategy in ("imp", "tp"):
        return _batch_anchored(post, k, strategy, rng)

    ids = _candidate_subset(n, candidate_cap, rng)
    delta, v = _pair_scores(post, ids)
    if strategy == "unpa":
        score = np.abs(delta) / np.sqrt(1.0 + v)
        np.fill_diagonal(score, np.inf)
        return _best_pairs_from_matrix(score, ids, k, minimise=True)
    score = eig_value(delta, v)
    np.fill_diagonal(score, -np.inf)
    return _best_pairs_from_matrix(score, ids, k, minimise=False)


def score_pair(strategy: str, state: AcquisitionState, pair: tuple[int, int]) -> AcquisitionScore:
    """Score one pair under a strategy's value function (random scores 0)."""
    a, b = pair
    if strategy == "random":
        value = 0.0
    elif strategy == "unc":
        f = bt_utilities(state.bt, state.pool)
        u = expit(-np.abs(f))
        value = float(u[a] + u[b])
    else:
        st = gppl_pair_stats(state.posterior, a, b)
        if strategy == "unpa":
            value = -abs(float(ndtr(st.delta / np.sqrt(1.0 + st.variance))) - 0.5)
        elif strategy == "eig":
            value = float(eig_value(st.delta, st.variance))
        elif strategy == "imp":
            value = float(improvement_value(st.delta, st.variance))
        elif strategy == "tp":
            value = float(eig_value(st.delta, st.variance))
        else:
            raise ValidationError(f"unknown strategy {strategy!r}")
    return AcquisitionScore((a, b), value, strategy)
