"""Experiment orchestration: seeded sweeps, aggregation, variance studies.

A sweep runs every grid point (method x gamma x lambda1 x lambda2 x m)
for a fixed number of repetitions, with per-run seeds derived as
``base_seed + repetition`` so results are independent yet reproducible.
Outputs are plain CSV with documented headers; re-running a spec
reproduces every byte.
"""

from __future__ import annotations

import csv
import traceback
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    GaussianShiftTask,
    LabeledDataset,
    apply_zscore,
    fit_zscore,
    load_csv,
    make_synthetic_asymmetric_labeled,
)
from .losses import conditional_entropy, risk_bound_gap
from .metrics import evaluate_model
from .splitter import ShiftConfig, split
from .training import TrainConfig, train

SYNTHETIC_ASYMMETRIC = "synthetic:asymmetric"
SYNTHETIC_GAUSSIAN = "synthetic:gaussian"

# lambda pairs that worked well on the standard preprocessed benchmarks
RECOMMENDED_LAMBDAS = {
    "adult": (1.0, 0.01),
    "arrhythmia": (0.01, 0.005),
    "communities": (0.005, 0.0001),
    "drug": (0.1, 0.1),
}

DEFAULT_BOUND_FACTOR = 5.0

# unit direction along which synthetic asymmetric shifts scale with gamma
_ASYM_SHIFT_DIRECTION = np.array([1.0, -1.0]) / np.sqrt(2.0)

RUN_COLUMNS = [
    "method",
    "gamma",
    "lambda1",
    "lambda2",
    "m",
    "rep",
    "seed",
    "status",
    "error_pct",
    "eodds",
    "acc_parity_pct",
    "error_group0_pct",
    "error_group1_pct",
]

_METRIC_FIELDS = [
    "error_pct",
    "eodds",
    "acc_parity_pct",
    "error_group0_pct",
    "error_group1_pct",
]

AGGREGATE_COLUMNS = (
    ["method", "gamma", "lambda1", "lambda2", "m", "repetitions", "ok_runs", "status"]
    + [f"{f}_mean" for f in _METRIC_FIELDS]
    + [f"{f}_std" for f in _METRIC_FIELDS]
)


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: str
    methods: tuple = ("ours",)
    gammas: tuple = (10.0,)
    lambda1s: tuple = (0.1,)
    lambda2s: tuple = (1.0,)
    ms: tuple = (50,)
    repetitions: int = 50
    base_seed: int = 0
    n_per_group: int = 300
    train: TrainConfig = field(default_factory=TrainConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for name in ("methods", "gammas", "lambda1s", "lambda2s", "ms"):
            if not getattr(self, name):
                raise ValueError(f"grid list {name} must be non-empty")

    def grid(self):
        for method in self.methods:
            for gamma in self.gammas:
                for lam1 in self.lambda1s:
                    for lam2 in self.lambda2s:
                        for m in self.ms:
                            yield method, float(gamma), float(lam1), float(lam2), int(m)


@dataclass(frozen=True)
class AggregateRow:
    method: str
    gamma: float
    lambda1: float
    lambda2: float
    m: int
    repetitions: int
    ok_runs: int
    status: str
    means: dict
    stds: dict

    @property
    def error_mean(self):
        return self.means["error_pct"]

    @property
    def eodds_mean(self):
        return self.means["eodds"]


def _normalize_pool(train: LabeledDataset, test: LabeledDataset):
    """Z-score both splits with statistics fit on the pooled rows."""
    pool = LabeledDataset(
        np.vstack([train.features, test.features]),
        np.concatenate([train.groups, test.groups]),
        np.concatenate([train.labels, test.labels]),
        train.feature_kinds,
    )
    stats = fit_zscore(pool)
    return apply_zscore(train, stats), apply_zscore(test, stats)


class _DataProvider:
    """Produces (source, target_pool, eval_set) triples per seeded run."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.pool = None
        if spec.dataset.startswith("synthetic:"):
            if spec.dataset not in (SYNTHETIC_ASYMMETRIC, SYNTHETIC_GAUSSIAN):
                raise ValueError(f"unknown synthetic dataset {spec.dataset!r}")
        else:
            self.pool = load_csv(spec.dataset)
            stats = fit_zscore(self.pool)
            self.pool = apply_zscore(self.pool, stats)

    def make(self, gamma, seed):
        spec = self.spec
        if spec.dataset == SYNTHETIC_ASYMMETRIC:
            shift_vector = gamma * _ASYM_SHIFT_DIRECTION
            source, test = make_synthetic_asymmetric_labeled(
                seed, spec.n_per_group, shift_vector
            )
            source, test = _normalize_pool(source, test)
            return source, test.without_labels(), test
        if spec.dataset == SYNTHETIC_GAUSSIAN:
            task = GaussianShiftTask(gamma=gamma)
            kids = np.random.SeedSequence(seed).spawn(2)
            source = task.sample_source(2 * spec.n_per_group, kids[0])
            test = task.sample_target(2 * spec.n_per_group, kids[1])
            source, test = _normalize_pool(source, test)
            return source, test.without_labels(), test
        cfg = replace(spec.shift, gamma=gamma, seed=seed)
        result = split(self.pool, cfg)
        source = self.pool.subset(result.train_idx)
        test = self.pool.subset(result.test_idx)
        return source, test.without_labels(), test


def _execute_run(provider, spec, point, rep):
    """One seeded training run; returns its CSV row and metrics (or None)."""
    method, gamma, lam1, lam2, m = point
    seed = spec.base_seed + rep
    cfg = replace(
        spec.train, method=method, lambda1=lam1, lambda2=lam2, m_cap=m, seed=seed
    )
    row = {
        "method": method,
        "gamma": gamma,
        "lambda1": lam1,
        "lambda2": lam2,
        "m": m,
        "rep": rep,
        "seed": seed,
    }
    try:
        source, target, eval_set = provider.make(gamma, seed)
        model = train(source, target, cfg)
        metrics = evaluate_model(model, eval_set)
    except Exception:
        row["status"] = "failed"
        for name in _METRIC_FIELDS:
            row[name] = ""
        row["_traceback"] = traceback.format_exc()
        return row, None
    row["status"] = "ok"
    for name in _METRIC_FIELDS:
        row[name] = getattr(metrics, name)
    return row, metrics


def _execute_run_task(args):
    spec, point, rep = args
    return _execute_run(_DataProvider(spec), spec, point, rep)


def run_experiment(spec: ExperimentSpec, workers: int = 1):
    """Execute the sweep; returns ``(run_rows, aggregate_rows)``.

    Runs are independent, so ``workers > 1`` fans them out over a bounded
    process pool; results are gathered in grid order either way, and a
    run that raises is recorded with status ``failed`` without stopping
    the sweep.
    """
    points = list(spec.grid())
    tasks = [(point, rep) for point in points for rep in range(spec.repetitions)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(_execute_run_task, [(spec, point, rep) for point, rep in tasks])
            )
    else:
        provider = _DataProvider(spec)
        outcomes = [_execute_run(provider, spec, point, rep) for point, rep in tasks]

    run_rows = [row for row, _ in outcomes]
    aggregates = []
    for i, (method, gamma, lam1, lam2, m) in enumerate(points):
        chunk = outcomes[i * spec.repetitions : (i + 1) * spec.repetitions]
        metrics_ok = [metrics for _, metrics in chunk if metrics is not None]
        aggregates.append(
            _aggregate(method, gamma, lam1, lam2, m, spec.repetitions, metrics_ok)
        )
    return run_rows, aggregates


def _aggregate(method, gamma, lam1, lam2, m, repetitions, metrics_ok) -> AggregateRow:
    means, stds = {}, {}
    for name in _METRIC_FIELDS:
        values = np.array([getattr(r, name) for r in metrics_ok], dtype=np.float64)
        means[name] = float(values.mean()) if len(values) else float("nan")
        # population std: a single repetition reports exactly 0 spread
        stds[name] = float(values.std()) if len(values) else float("nan")
    return AggregateRow(
        method=method,
        gamma=gamma,
        lambda1=lam1,
        lambda2=lam2,
        m=m,
        repetitions=repetitions,
        ok_runs=len(metrics_ok),
        status="complete" if len(metrics_ok) == repetitions else "partial",
        means=means,
        stds=stds,
    )


def _fmt(value):
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_run_csv(path, run_rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for row in run_rows:
            writer.writerow([_fmt(row[c]) for c in RUN_COLUMNS])


def write_aggregate_csv(path, aggregates):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for agg in aggregates:
            row = [
                agg.method,
                agg.gamma,
                agg.lambda1,
                agg.lambda2,
                agg.m,
                agg.repetitions,
                agg.ok_runs,
                agg.status,
            ]
            row += [agg.means[f] for f in _METRIC_FIELDS]
            row += [agg.stds[f] for f in _METRIC_FIELDS]
            writer.writerow([_fmt(v) for v in row])


def read_aggregate_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                AggregateRow(
                    method=record["method"],
                    gamma=float(record["gamma"]),
                    lambda1=float(record["lambda1"]),
                    lambda2=float(record["lambda2"]),
                    m=int(record["m"]),
                    repetitions=int(record["repetitions"]),
                    ok_runs=int(record["ok_runs"]),
                    status=record["status"],
                    means={f: float(record[f"{f}_mean"]) for f in _METRIC_FIELDS},
                    stds={f: float(record[f"{f}_std"]) for f in _METRIC_FIELDS},
                )
            )
    return rows


def pareto_frontier(rows):
    """Rows not dominated in (error mean, equalized-odds mean).

    Duplicate coordinate pairs keep their first occurrence; the output
    preserves input order.
    """
    unique = []
    seen = set()
    for row in rows:
        key = (row.error_mean, row.eodds_mean)
        if key in seen:
            continue
        seen.add(key)
        unique.append(row)
    kept = []
    for row in unique:
        dominated = any(
            other.error_mean <= row.error_mean
            and other.eodds_mean <= row.eodds_mean
            and (other.error_mean < row.error_mean or other.eodds_mean < row.eodds_mean)
            for other in unique
            if other is not row
        )
        if not dominated:
            kept.append(row)
    return kept


# -- objective-estimator variance study -------------------------------------

VARIANCE_COLUMNS = [
    "gamma",
    "m",
    "n",
    "repetitions",
    "is_std",
    "we_std",
    "is_mean",
    "we_mean",
]


def _per_row_cross_entropy(probs, label_probs):
    """Exact conditional cross entropy given the true P(Y=1|x)."""
    return -(label_probs * np.log(probs) + (1.0 - label_probs) * np.log(1.0 - probs))


def importance_weighted_risk_estimate(model, task: GaussianShiftTask, n, seed) -> float:
    """Target-risk estimate from a source draw, reweighted by exact ratios."""
    source = task.sample_source(n, seed)
    probs = model.predict_proba(source.features)
    ce = _per_row_cross_entropy(probs, task.label_probability(source.features))
    z = task.target_over_source(source.features)
    return float((z * ce).mean())


def weighted_entropy_objective_estimate(
    model, task: GaussianShiftTask, n, m, seed, entropy_coef=1.0
) -> float:
    """Source risk plus the ratio-damped entropy term from a target draw."""
    kids = np.random.SeedSequence(seed).spawn(2)
    source = task.sample_source(n, kids[0])
    target = task.sample_target(m, kids[1])
    probs_s = model.predict_proba(source.features)
    risk = float(
        _per_row_cross_entropy(probs_s, task.label_probability(source.features)).mean()
    )
    probs_t = model.predict_proba(target.features)
    entropy = conditional_entropy(probs_t).value
    damp = np.exp(-task.source_over_target(target.features))
    return risk + entropy_coef * float((damp * entropy).mean())


def bound_gap_estimate(
    model, task: GaussianShiftTask, n_mc, seed, epsilon=DEFAULT_BOUND_FACTOR
) -> float:
    """Monte-Carlo slack of the weighted-entropy bound for one model."""
    kids = np.random.SeedSequence(seed).spawn(2)
    source = task.sample_source(n_mc, kids[0])
    target = task.sample_target(n_mc, kids[1])
    probs_s = model.predict_proba(source.features)
    source_risk = float(
        _per_row_cross_entropy(probs_s, task.label_probability(source.features)).mean()
    )
    probs_t = model.predict_proba(target.features)
    test_risk = float(
        _per_row_cross_entropy(probs_t, task.label_probability(target.features)).mean()
    )
    entropy = conditional_entropy(probs_t).value
    damp = np.exp(-task.source_over_target(target.features))
    weighted_entropy = float((damp * entropy).mean())
    return risk_bound_gap(source_risk, weighted_entropy, epsilon, test_risk)


def run_variance_study(
    gammas=(2.0, 2.5, 3.0),
    ms=(10, 20, 50),
    repetitions=20,
    n=200,
    base_seed=0,
    entropy_coef=1.0,
    train_cfg: TrainConfig | None = None,
):
    """Spread of the two target-risk estimators for a fixed pretrained model.

    For each (gamma, m) the study redraws data ``repetitions`` times and
    records the standard deviation of (a) the exact-ratio importance
    weighted risk over a source draw and (b) the weighted-entropy
    objective over a source and a target draw.
    """
    cfg = train_cfg or TrainConfig(
        method="erm", pretrain_epochs=10, adapt_epochs=0, seed=base_seed
    )
    base_task = GaussianShiftTask(gamma=float(gammas[0]))
    model = train(base_task.sample_source(500, base_seed), None, replace(cfg, method="erm"))
    rows = []
    for gamma in gammas:
        task = GaussianShiftTask(gamma=float(gamma))
        for m in ms:
            is_estimates = np.array(
                [
                    importance_weighted_risk_estimate(
                        model, task, n, base_seed + 1000 + r
                    )
                    for r in range(repetitions)
                ]
            )
            we_estimates = np.array(
                [
                    weighted_entropy_objective_estimate(
                        model, task, n, m, base_seed + 1000 + r, entropy_coef
                    )
                    for r in range(repetitions)
                ]
            )
            rows.append(
                {
                    "gamma": float(gamma),
                    "m": int(m),
                    "n": int(n),
                    "repetitions": repetitions,
                    "is_std": float(is_estimates.std()),
                    "we_std": float(we_estimates.std()),
                    "is_mean": float(is_estimates.mean()),
                    "we_mean": float(we_estimates.mean()),
                }
            )
    return rows


def write_variance_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VARIANCE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in VARIANCE_COLUMNS])
