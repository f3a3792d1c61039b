"""End-to-end interactive ranking sessions against a simulated user.

One session is the full loop: fit the learner on the labels collected so
far, pick the next pairs with an acquisition strategy, ask the simulated
user, repeat until the interaction budget is spent. A metric row is
recorded before the first label (the prior-only state) and after every
batch. Grids sweep configurations over pools and repeats and summarise the
final metrics per configuration.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .acquisition import DEFAULT_CANDIDATE_CAP, STRATEGIES, AcquisitionState, select_batch
from .bt import DEFAULT_REG_LAMBDA, bt_train, bt_utilities
from .domain import (
    CandidatePool,
    ConvergenceError,
    GoldScores,
    PriorPredictions,
    TrainingSet,
    ValidationError,
    normalize_scores,
)
from .gppl import GpplModel, combine_sum, gppl_fit
from .kernels import KernelConfig
from .metrics import evaluate_ranking, ranking_order
from .oracle import OracleConfig, oracle_label

__all__ = [
    "STOCHASTIC_STRATEGIES",
    "WARM_START_MODES",
    "SessionConfig",
    "IterationMetrics",
    "LearnerState",
    "SessionResult",
    "PoolData",
    "SessionRun",
    "GridSummary",
    "GridResult",
    "ResultRow",
    "session_streams",
    "run_session",
    "run_grid",
    "flatten_bottom",
    "rows_from_runs",
    "export_results",
    "import_results",
]

STOCHASTIC_STRATEGIES = frozenset({"random", "tp"})
WARM_START_MODES = ("none", "sum", "prior")

_LEARNER_STRATEGIES = {
    "bt": frozenset({"random", "unc"}),
    "gppl": frozenset({"random", "unpa", "eig", "imp", "tp"}),
}

_SCHEMA = "prefrank-results"
_SCHEMA_VERSION = 1
_CSV_HEADER_COMMENT = f"# {_SCHEMA} v{_SCHEMA_VERSION}"
_COLUMNS = (
    "config_index",
    "learner",
    "strategy",
    "warm_start",
    "max_interactions",
    "batch_size",
    "seed",
    "t",
    "pool",
    "repeat",
    "iteration",
    "labels_seen",
    "ndcg_k",
    "accuracy",
    "ndcg",
    "pearson_r",
    "error",
)


@dataclass(frozen=True)
class SessionConfig:
    """Everything one session needs apart from the data itself."""

    learner: str
    strategy: str
    warm_start: str = "none"
    max_interactions: int = 10
    batch_size: int = 1
    seed: int = 0
    oracle: OracleConfig = OracleConfig()
    reg_lambda: float = DEFAULT_REG_LAMBDA
    kernel: KernelConfig = KernelConfig()
    inducing_count: Optional[int] = None
    ndcg_k: int = 5
    candidate_cap: Optional[int] = DEFAULT_CANDIDATE_CAP

    def __post_init__(self) -> None:
        if self.learner not in _LEARNER_STRATEGIES:
            raise ValidationError(f"unknown learner {self.learner!r}; choose bt or gppl")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.strategy not in _LEARNER_STRATEGIES[self.learner]:
            allowed = ", ".join(sorted(_LEARNER_STRATEGIES[self.learner]))
            raise ValidationError(
                f"strategy {self.strategy!r} does not work with learner {self.learner!r}"
                f" (allowed: {allowed})"
            )
        if self.warm_start not in WARM_START_MODES:
            raise ValidationError(f"unknown warm_start {self.warm_start!r}")
        if self.warm_start == "prior" and self.learner != "gppl":
            raise ValidationError("warm_start = prior needs the gppl learner; use sum for bt")
        if self.max_interactions < 1:
            raise ValidationError("max_interactions must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.ndcg_k < 1:
            raise ValidationError("ndcg_k must be at least 1")


class IterationMetrics(NamedTuple):
    """One metric row: iteration 0 is the state before any label."""

    iteration: int
    labels_seen: int
    accuracy: float
    ndcg_at_k: float
    pearson_r: float


@dataclass(frozen=True, eq=False)
class SessionResult:
    """Outcome of one session; error set means the loop stopped early."""

    config: SessionConfig
    trace: tuple
    final_utilities: np.ndarray
    final_ranking: tuple
    records: TrainingSet
    error: Optional[str] = None

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.final_utilities, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "final_utilities", arr)

    @property
    def final_metrics(self) -> IterationMetrics:
        return self.trace[-1]


class PoolData(NamedTuple):
    """One pool with its gold scores and optional prior predictions."""

    pool: CandidatePool
    gold: GoldScores
    priors: Optional[PriorPredictions] = None


@dataclass(frozen=True, eq=False)
class SessionRun:
    """One grid cell execution; result is None when setup itself failed."""

    config_index: int
    config: SessionConfig
    pool: str
    repeat: int
    result: Optional[SessionResult]
    error: Optional[str]


@dataclass(frozen=True)
class GridSummary:
    """Mean/stdev of final metrics for one configuration across runs."""

    config_index: int
    learner: str
    strategy: str
    warm_start: str
    max_interactions: int
    runs: int
    failures: int
    accuracy_mean: float
    accuracy_std: float
    ndcg_mean: float
    ndcg_std: float
    pearson_mean: float
    pearson_std: float


@dataclass(frozen=True, eq=False)
class GridResult:
    runs: tuple
    summaries: tuple


def session_streams(seed: int) -> tuple:
    """Two independent generators derived from one seed.

    The first feeds the simulated user, the second the acquisition
    strategies. The service derives its streams the same way, which is what
    makes an HTTP session replayable against a harness run.
    """
    oracle_ss, acq_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(oracle_ss), np.random.default_rng(acq_ss)


def _zscores(x: np.ndarray) -> np.ndarray:
    std = x.std()
    if std == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def gp_prior_mean(priors: PriorPredictions, kernel: KernelConfig) -> PriorPredictions:
    """Prior predictions rescaled onto the latent utility scale.

    Standardising and multiplying by the kernel amplitude gives the prior
    the same weight as one kernel-width of latent variation, so labels can
    still override it.
    """
    scaled = _zscores(priors.mu) * np.sqrt(kernel.signal_variance)
    return PriorPredictions(scaled, origin=priors.origin)


class LearnerState:
    """Fitted-model state for one session.

    Owns whichever learner the config names, applies the warm-start policy,
    and keeps the evaluation utilities of the latest refit. Shared between
    the batch harness and the live service so both fit and rank the same
    way.
    """

    def __init__(
        self,
        cfg: SessionConfig,
        pool: CandidatePool,
        priors: Optional[PriorPredictions] = None,
    ):
        if cfg.warm_start != "none" and priors is None:
            raise ValidationError(f"warm_start = {cfg.warm_start} needs prior predictions")
        if priors is not None and len(priors) != pool.size:
            raise ValidationError(f"priors have {len(priors)} entries for {pool.size} candidates")
        self.cfg = cfg
        self.pool = pool
        self.priors = priors
        self.gp_model: Optional[GpplModel] = None
        if cfg.learner == "gppl":
            kernel = cfg.kernel.resolved(pool.feature_matrix())
            prior_mean = gp_prior_mean(priors, kernel) if cfg.warm_start == "prior" else None
            self.gp_model = GpplModel(
                kernel=kernel,
                prior_mean=prior_mean,
                inducing_count=cfg.inducing_count,
                seed=cfg.seed,
            )
        self.bt_model = None
        self.posterior = None
        self.utilities = np.zeros(pool.size)

    def refit(self, D: TrainingSet) -> np.ndarray:
        """Refit on D and return the new evaluation utilities."""
        if self.cfg.learner == "bt":
            self.bt_model = bt_train(D, self.pool, self.cfg.reg_lambda)
            u = bt_utilities(self.bt_model, self.pool)
        else:
            self.posterior = gppl_fit(self.gp_model, self.pool, D)
            u = self.posterior.f_hat
        if self.cfg.warm_start == "sum":
            u = combine_sum(self.priors, u)
        self.utilities = u
        return u

    def acquisition_state(self, D: TrainingSet) -> AcquisitionState:
        return AcquisitionState(self.pool, D, bt=self.bt_model, posterior=self.posterior)


def run_session(
    cfg: SessionConfig,
    pool: CandidatePool,
    gold: GoldScores,
    priors: Optional[PriorPredictions] = None,
) -> SessionResult:
    """Run one full interactive session.

    Records a metric row for the label-free state and one per batch. Fixed
    config and data give a bit-identical result. A model failure mid-loop
    stops the session and comes back in result.error with the trace up to
    that point preserved.
    """
    n = pool.size
    if len(gold) != n:
        raise ValidationError(f"gold has {len(gold)} scores for {n} candidates")
    state = LearnerState(cfg, pool, priors)

    gold_n = gold if gold.normalised else normalize_scores(gold.scores)
    oracle_rng, acq_rng = session_streams(cfg.seed)
    k = min(cfg.ndcg_k, n)

    D = TrainingSet()
    trace: list = []
    error: Optional[str] = None

    def record(iteration: int) -> None:
        ev = evaluate_ranking(state.utilities, gold_n.scores, k)
        trace.append(IterationMetrics(iteration, len(D), ev.accuracy, ev.ndcg_at_k, ev.pearson_r))

    iteration = 0
    try:
        state.refit(D)
        record(0)
        while len(D) < cfg.max_interactions:
            iteration += 1
            want = min(cfg.batch_size, cfg.max_interactions - len(D))
            pairs = select_batch(cfg.strategy, state.acquisition_state(D), want, acq_rng, cfg.candidate_cap)
            records = [oracle_label(p, gold_n, cfg.oracle, oracle_rng, iteration=iteration) for p in pairs]
            D = D.extended(records)
            state.refit(D)
            record(iteration)
    except (ConvergenceError, ValidationError) as exc:
        error = str(exc)

    ranking = tuple(int(i) for i in ranking_order(state.utilities))
    return SessionResult(cfg, tuple(trace), state.utilities, ranking, D, error)


def flatten_bottom(scores: GoldScores, fraction: float) -> np.ndarray:
    """Set the floor(fraction * n) lowest-ranked scores to 1.0.

    The remaining entries are untouched, so the ordering of everything
    above the cut is preserved. Ranking ties go to the lower id.
    """
    if not scores.normalised:
        raise ValidationError("flatten_bottom expects normalised scores")
    if not 0.0 <= fraction < 1.0:
        raise ValidationError("fraction must lie in [0, 1)")
    vals = scores.scores
    m = int(np.floor(fraction * len(vals)))
    out = vals.copy()
    if m > 0:
        order = np.lexsort((np.arange(len(vals)), vals))
        out[order[:m]] = 1.0
    return out


# ---------------------------------------------------------------------------
# Grids


def run_grid(
    configs: Sequence[SessionConfig],
    pools: Sequence[PoolData],
    repeats: int = 1,
    workers: int = 1,
) -> GridResult:
    """Run every configuration against every pool.

    Stochastic strategies (random, tp) run `repeats` times with consecutive
    derived seeds; deterministic ones once, since repeating them would
    reproduce the same session. Failed sessions are recorded in their run
    row rather than aborting the grid. Sessions are independent, so with
    workers > 1 they run on a thread pool; the result order is the same
    either way.
    """
    if not configs:
        raise ValidationError("grid needs at least one configuration")
    if not pools:
        raise ValidationError("grid needs at least one pool")
    if repeats < 1:
        raise ValidationError("repeats must be at least 1")
    if workers < 1:
        raise ValidationError("workers must be at least 1")

    jobs = []
    for ci, cfg in enumerate(configs):
        n_runs = repeats if cfg.strategy in STOCHASTIC_STRATEGIES else 1
        for data in pools:
            for rep in range(n_runs):
                jobs.append((ci, replace(cfg, seed=cfg.seed + rep), data, rep))

    def execute(job) -> SessionRun:
        ci, run_cfg, data, rep = job
        try:
            result = run_session(run_cfg, data.pool, data.gold, data.priors)
            return SessionRun(ci, run_cfg, data.pool.topic_id, rep, result, result.error)
        except ValidationError as exc:
            return SessionRun(ci, run_cfg, data.pool.topic_id, rep, None, str(exc))

    if workers == 1:
        runs = [execute(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            runs = list(pool_exec.map(execute, jobs))

    summaries = tuple(_summarise(ci, cfg, runs) for ci, cfg in enumerate(configs))
    return GridResult(tuple(runs), summaries)


def _summarise(ci: int, cfg: SessionConfig, runs: Sequence[SessionRun]) -> GridSummary:
    mine = [r for r in runs if r.config_index == ci]
    finals = [r.result.final_metrics for r in mine if r.error is None and r.result is not None]
    failures = len(mine) - len(finals)

    def stats(field: str) -> tuple:
        if not finals:
            return float("nan"), float("nan")
        vals = np.array([getattr(f, field) for f in finals])
        return float(vals.mean()), float(vals.std())

    acc = stats("accuracy")
    ndcg = stats("ndcg_at_k")
    r = stats("pearson_r")
    return GridSummary(
        ci,
        cfg.learner,
        cfg.strategy,
        cfg.warm_start,
        cfg.max_interactions,
        len(mine),
        failures,
        acc[0],
        acc[1],
        ndcg[0],
        ndcg[1],
        r[0],
        r[1],
    )


# ---------------------------------------------------------------------------
# Export


@dataclass(frozen=True)
class ResultRow:
    """One exported line: a single iteration of a single run."""

    config_index: int
    learner: str
    strategy: str
    warm_start: str
    max_interactions: int
    batch_size: int
    seed: int
    t: float
    pool: str
    repeat: int
    iteration: int
    labels_seen: int
    ndcg_k: int
    accuracy: Optional[float]
    ndcg: Optional[float]
    pearson_r: Optional[float]
    error: Optional[str]


def rows_from_runs(runs: Sequence[SessionRun]) -> list:
    """Flatten runs into one row per iteration.

    A run that failed before producing any trace contributes a single row
    with iteration -1 and empty metrics so the failure still shows up in
    the table.
    """
    rows = []
    for run in runs:
        cfg = run.config
        meta = dict(
            config_index=run.config_index,
            learner=cfg.learner,
            strategy=cfg.strategy,
            warm_start=cfg.warm_start,
            max_interactions=cfg.max_interactions,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            t=cfg.oracle.t,
            pool=run.pool,
            repeat=run.repeat,
            ndcg_k=cfg.ndcg_k,
            error=run.error,
        )
        if run.result is None or not run.result.trace:
            rows.append(ResultRow(iteration=-1, labels_seen=0, accuracy=None, ndcg=None, pearson_r=None, **meta))
            continue
        for m in run.result.trace:
            rows.append(
                ResultRow(
                    iteration=m.iteration,
                    labels_seen=m.labels_seen,
                    accuracy=m.accuracy,
                    ndcg=m.ndcg_at_k,
                    pearson_r=m.pearson_r,
                    **meta,
                )
            )
    return rows


def _normalise_runs(results: Union[GridResult, SessionResult, Sequence[SessionRun]]) -> Sequence[SessionRun]:
    if isinstance(results, GridResult):
        return results.runs
    if isinstance(results, SessionResult):
        return [SessionRun(0, results.config, "pool", 0, results, results.error)]
    return results


def export_results(results, path, format: str = "csv") -> None:
    """Write one row per (config, pool, repeat, iteration).

    The header carries the schema name and version. The same results always
    produce byte-identical files, and import_results reads them back into
    equal rows.
    """
    rows = rows_from_runs(_normalise_runs(results))
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(_CSV_HEADER_COMMENT + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_COLUMNS)
            for row in rows:
                writer.writerow([_csv_cell(getattr(row, col)) for col in _COLUMNS])
    elif format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": _SCHEMA, "version": _SCHEMA_VERSION}) + "\n")
            for row in rows:
                fh.write(json.dumps({col: getattr(row, col) for col in _COLUMNS}) + "\n")
    else:
        raise ValidationError(f"unknown export format {format!r}; choose csv or jsonl")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


_INT_COLUMNS = {"config_index", "max_interactions", "batch_size", "seed", "repeat", "iteration", "labels_seen", "ndcg_k"}
_FLOAT_COLUMNS = {"t"}
_OPTIONAL_FLOAT_COLUMNS = {"accuracy", "ndcg", "pearson_r"}


def import_results(path, format: str = "csv") -> list:
    """Read rows written by export_results; exact round trip."""
    path = Path(path)
    if format == "csv":
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != _CSV_HEADER_COMMENT:
                raise ValidationError(f"unrecognised results header {header!r}")
            reader = csv.DictReader(fh)
            return [_row_from_strings(rec) for rec in reader]
    if format == "jsonl":
        with path.open("r", encoding="utf-8") as fh:
            first = json.loads(fh.readline())
            if first.get("schema") != _SCHEMA or first.get("version") != _SCHEMA_VERSION:
                raise ValidationError(f"unrecognised results header {first!r}")
            return [_row_from_json(json.loads(line)) for line in fh if line.strip()]
    raise ValidationError(f"unknown export format {format!r}; choose csv or jsonl")


def _row_from_strings(rec: dict) -> ResultRow:
    kwargs = {}
    for col in _COLUMNS:
        raw = rec[col]
        if col in _INT_COLUMNS:
            kwargs[col] = int(raw)
        elif col in _FLOAT_COLUMNS:
            kwargs[col] = float(raw)
        elif col in _OPTIONAL_FLOAT_COLUMNS:
            kwargs[col] = float(raw) if raw != "" else None
        else:
            kwargs[col] = raw if col != "error" else (raw or None)
    return ResultRow(**kwargs)


def _row_from_json(rec: dict) -> ResultRow:
    return ResultRow(**{col: rec[col] for col in _COLUMNS})
