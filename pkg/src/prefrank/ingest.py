"""File loading and feature construction.

Pools, prior predictions and gold scores arrive as JSONL. Candidate summaries
are embedded as "bigram+" vectors: presence bits for the topic's most common
bigrams plus five summary-level statistics. Gold utilities for summaries come
from a combined n-gram recall score against a reference.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .domain import (
    CandidatePool,
    GoldScores,
    PriorPredictions,
    ValidationError,
    validate_pool,
)

# A sentence is a sequence of token strings; documents may be passed either as
# a list of sentences or as a flat token list (treated as a single sentence).
Sentence = Sequence[str]
TokenText = Union[Sentence, Sequence[Sentence]]

DEFAULT_STOP_LIST = frozenset(
    "a an the and or but of to in on at by for with from as is are was were be been it this that".split()
)


class ParseError(ValidationError):
    """A line of an input file could not be interpreted."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class BigramPlusConfig:
    """Controls bigram+ feature extraction."""

    vocab_size: int = 200
    length_norm: int = 100
    length_limit: int = 100
    stop_list: frozenset[str] = DEFAULT_STOP_LIST
    stem: bool = False

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise ValidationError("vocab_size must be positive")


@dataclass(frozen=True)
class GoldScorerConfig:
    """Weights for the combined recall gold score; recalls divide by them."""

    w1: float = 0.47
    w2: float = 0.22
    wsu4: float = 0.18
    skip_distance: int = 4
    stem: bool = False

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.wsu4) <= 0:
            raise ValidationError("all gold-score weights must be positive")


# ---------------------------------------------------------------------------
# JSONL loading


def _read_jsonl(path: Union[str, Path]) -> list[tuple[int, dict]]:
    """Parse a JSONL file into (1-based line number, record) pairs."""
    out: list[tuple[int, dict]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ParseError(lineno, "record must be a JSON object")
            out.append((lineno, rec))
    return out


def _parse_features(lineno: int, rec: dict) -> np.ndarray:
    feats = rec.get("features")
    if not isinstance(feats, list) or not feats:
        raise ParseError(lineno, "missing or empty 'features' array")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in feats):
        raise ParseError(lineno, "'features' must contain only numbers")
    arr = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError(lineno, "'features' contains a non-finite value")
    return arr


def load_pool(path: Union[str, Path], format: str = "jsonl", topic_id: Optional[str] = None) -> CandidatePool:
    """Load a candidate pool from JSONL, one candidate per line.

    Ids may be omitted entirely, in which case candidates are numbered densely
    in file order. When present they must be present on every line, unique,
    and dense 0..n-1; candidates are then ordered by id.
    """
    if format != "jsonl":
        raise ValidationError(f"unsupported pool format {format!r}")
    rows = _read_jsonl(path)
    if len(rows) < 2:
        raise ValidationError("pool must contain ≥ 2 candidates")

    parsed: list[tuple[int, Optional[int], np.ndarray, Optional[str]]] = []
    dim: Optional[int] = None
    for lineno, rec in rows:
        feats = _parse_features(lineno, rec)
        if dim is None:
            dim = feats.shape[0]
        elif feats.shape[0] != dim:
            raise ParseError(lineno, f"features of length {feats.shape[0]}, expected {dim}")
        cid = rec.get("id")
        if cid is not None and (isinstance(cid, bool) or not isinstance(cid, int)):
            raise ParseError(lineno, f"'id' must be an integer, got {cid!r}")
        text = rec.get("text")
        if text is not None and not isinstance(text, str):
            raise ParseError(lineno, "'text' must be a string when present")
        parsed.append((lineno, cid, feats, text))

    with_ids = [p for p in parsed if p[1] is not None]
    if with_ids and len(with_ids) != len(parsed):
        missing_line = next(p[0] for p in parsed if p[1] is None)
        raise ParseError(missing_line, "'id' present on some lines but missing here")
    n = len(parsed)
    if with_ids:
        ids = [p[1] for p in parsed]
        if len(set(ids)) != n or set(ids) != set(range(n)):
            raise ValidationError(f"ids must be unique and dense 0..{n - 1}, got {sorted(set(ids))[:10]}")
        parsed.sort(key=lambda p: p[1])
    feats = np.stack([p[2] for p in parsed])
    texts = [p[3] for p in parsed]
    name = topic_id if topic_id is not None else Path(path).stem
    pool = CandidatePool.from_arrays(name, feats, texts)
    issues = validate_pool(pool)
    if issues:
        raise ValidationError("; ".join(f"{i.code}: {i.message}" for i in issues))
    return pool


def save_pool(pool: CandidatePool, path: Union[str, Path]) -> None:
    """Write a pool as JSONL with canonical field order (id, features, text)."""
    with open(path, "w", encoding="utf-8") as fh:
        for cand in pool.candidates:
            rec: dict = {"id": cand.id, "features": [float(x) for x in cand.features]}
            if cand.text is not None:
                rec["text"] = cand.text
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def save_scores(scores, path: Union[str, Path]) -> None:
    """Write per-candidate scores as JSONL rows keyed by id, one per line.

    The inverse of load_gold / load_priors: ids run 0..n-1 in order.
    """
    values = np.asarray(scores, dtype=np.float64)
    if values.ndim != 1:
        raise ValidationError("scores must be a flat vector")
    if not np.all(np.isfinite(values)):
        raise ValidationError("scores must be finite")
    with open(path, "w", encoding="utf-8") as fh:
        for i, val in enumerate(values):
            fh.write(json.dumps({"id": i, "score": float(val)}) + "\n")


def _load_scores(path: Union[str, Path], pool: CandidatePool) -> np.ndarray:
    """Shared loader for id-keyed scalar files (priors and gold scores)."""
    rows = _read_jsonl(path)
    scores: dict[int, float] = {}
    for lineno, rec in rows:
        cid = rec.get("id")
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise ParseError(lineno, f"'id' must be an integer, got {cid!r}")
        val = rec.get("score")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ParseError(lineno, f"'score' must be a number, got {val!r}")
        if not np.isfinite(val):
            raise ParseError(lineno, f"non-finite score for id {cid}")
        if cid in scores:
            raise ParseError(lineno, f"duplicate score for id {cid}")
        scores[cid] = float(val)

    pool_ids = set(range(pool.size))
    missing = sorted(pool_ids - set(scores))
    if missing:
        raise ValidationError(f"missing scores for ids {missing[:10]}")
    unknown = sorted(set(scores) - pool_ids)
    if unknown:
        raise ValidationError(f"scores for unknown ids {unknown[:10]}")
    return np.array([scores[i] for i in range(pool.size)], dtype=np.float64)


def load_priors(path: Union[str, Path], pool: CandidatePool, origin: str = "file") -> PriorPredictions:
    """Load per-candidate prior utility estimates keyed by candidate id."""
    return PriorPredictions(_load_scores(path, pool), origin=origin)


def load_gold(path: Union[str, Path], pool: CandidatePool) -> GoldScores:
    """Load raw (unnormalised) gold utilities keyed by candidate id."""
    return GoldScores(_load_scores(path, pool), normalised=False)


# ---------------------------------------------------------------------------
# Token utilities


def light_stem(token: str) -> str:
    """Cheap suffix-stripping stand-in for a full stemmer (plural/ed/ing)."""
    for suffix, repl in (("sses", "ss"), ("ies", "i"), ("ing", ""), ("ed", "")):
        if token.endswith(suffix) and len(token) > len(suffix) + 2:
            return token[: len(token) - len(suffix)] + repl
    if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        return token[:-1]
    return token


def _as_sentences(text: TokenText) -> list[list[str]]:
    """Normalise either a flat token list or a list of sentences to the latter."""
    seq = list(text)
    if not seq:
        return []
    if isinstance(seq[0], str):
        if not all(isinstance(t, str) for t in seq):
            raise ValidationError("mixed tokens and sentences in one text")
        return [list(seq)]  # type: ignore[list-item]
    return [list(s) for s in seq]


def _filter_tokens(sentence: Sequence[str], cfg: BigramPlusConfig) -> list[str]:
    toks = [light_stem(t) for t in sentence] if cfg.stem else list(sentence)
    return [t for t in toks if t not in cfg.stop_list]


def _sentence_bigrams(tokens: Sequence[str]) -> list[tuple[str, str]]:
    return [(tokens[i], tokens[i + 1]) for i in range(len(tokens) - 1)]


def extract_bigram_plus(
    documents: Sequence[TokenText],
    summary: TokenText,
    cfg: BigramPlusConfig = BigramPlusConfig(),
) -> np.ndarray:
    """Embed a summary as presence bits over the topic's most common bigrams
    plus five summary statistics.

    Layout (with v = cfg.vocab_size): dims 0..v-1 are presence bits for the
    topic's v most frequent bigrams (count ties broken lexicographically);
    dim v = coverage ratio (fraction of vocabulary bigrams present); dim v+1 =
    redundancy ratio (fraction occurring more than once); dim v+2 = raw token
    length / length_norm; dim v+3 = sum over summary sentences that match a
    source sentence verbatim of 1/(1-based position in its source document);
    dim v+4 = 1 iff raw token length exceeds length_limit.

    Bigrams never cross sentence boundaries and are formed after stop-list
    filtering (and optional stemming). A summary passed as a flat token list
    counts as a single sentence.
    """
    doc_sentences = [_as_sentences(d) for d in documents]
    summary_sentences = _as_sentences(summary)

    vocab_counts: Counter = Counter()
    for doc in doc_sentences:
        for sent in doc:
            vocab_counts.update(_sentence_bigrams(_filter_tokens(sent, cfg)))
    if not vocab_counts:
        raise ValidationError("empty bigram vocabulary: all documents are empty after filtering")
    ranked = sorted(vocab_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    vocab = [bg for bg, _ in ranked[: cfg.vocab_size]]

    summary_counts: Counter = Counter()
    for sent in summary_sentences:
        summary_counts.update(_sentence_bigrams(_filter_tokens(sent, cfg)))

    vec = np.zeros(cfg.vocab_size + 5, dtype=np.float64)
    present = 0
    repeated = 0
    for i, bg in enumerate(vocab):
        c = summary_counts.get(bg, 0)
        if c >= 1:
            vec[i] = 1.0
            present += 1
        if c > 1:
            repeated += 1
    vec[cfg.vocab_size] = present / len(vocab)
    vec[cfg.vocab_size + 1] = repeated / len(vocab)

    raw_length = sum(len(s) for s in summary_sentences)
    vec[cfg.vocab_size + 2] = raw_length / cfg.length_norm

    position = 0.0
    for sent in summary_sentences:
        target = list(sent)
        for doc in doc_sentences:
            hit = next((k for k, src in enumerate(doc) if src == target), None)
            if hit is not None:
                position += 1.0 / (hit + 1)
                break
    vec[cfg.vocab_size + 3] = position

    vec[cfg.vocab_size + 4] = 1.0 if raw_length > cfg.length_limit else 0.0
    return vec


# ---------------------------------------------------------------------------
# Combined recall gold score


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _skip_bigram_counts(tokens: Sequence[str], max_gap: int) -> Counter:
    """Ordered token pairs at index distance 1..max_gap."""
    counts: Counter = Counter()
    for i in range(len(tokens)):
        for j in range(i + 1, min(i + max_gap, len(tokens) - 1) + 1):
            counts[(tokens[i], tokens[j])] += 1
    return counts


def _clipped_recall(cand: Counter, ref: Counter) -> float:
    total = sum(ref.values())
    if total == 0:
        return 0.0
    matched = sum(min(c, ref[g]) for g, c in cand.items() if g in ref)
    return matched / total


def combine_rcomb(r1: float, r2: float, rsu4: float, cfg: GoldScorerConfig = GoldScorerConfig()) -> float:
    """Weighted combination of the three recall terms; each divides its weight."""
    return r1 / cfg.w1 + r2 / cfg.w2 + rsu4 / cfg.wsu4


def gold_score_rcomb(
    candidate: Sequence[str],
    reference: Sequence[str],
    cfg: GoldScorerConfig = GoldScorerConfig(),
) -> float:
    """Combined n-gram recall of a candidate against a reference.

    Unigram and bigram recalls use clipped counts; the third term counts
    skip-bigrams (ordered pairs at distance up to skip_distance) together with
    unigrams. Each recall is divided by its weight and the terms are summed.
    """
    if not reference:
        raise ValidationError("reference must be nonempty")
    cand = [light_stem(t) for t in candidate] if cfg.stem else list(candidate)
    ref = [light_stem(t) for t in reference] if cfg.stem else list(reference)

    r1 = _clipped_recall(_ngram_counts(cand, 1), _ngram_counts(ref, 1))
    r2 = _clipped_recall(_ngram_counts(cand, 2), _ngram_counts(ref, 2))

    cand_su = _skip_bigram_counts(cand, cfg.skip_distance) + _ngram_counts(cand, 1)
    ref_su = _skip_bigram_counts(ref, cfg.skip_distance) + _ngram_counts(ref, 1)
    rsu4 = _clipped_recall(cand_su, ref_su)
    return combine_rcomb(r1, r2, rsu4, cfg)
