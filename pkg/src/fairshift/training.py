"""Training loops: the weighted-entropy min-max method and its baselines.

Every trainer is a pure function of ``(data, config.seed)``.  Randomness
is split into independent streams (model init, weight-net init, batch
shuffling, dropout, target subsampling, ratio fitting), so trainers that
share a seed consume identical randomness on the classifier path.  In
particular ``train_ours`` with both regularizers at zero reproduces the
``train_erm`` parameter trajectory bit for bit.

All trainers run ``pretrain_epochs + adapt_epochs`` epochs over the
source data, using ``batch_size`` during the first stage and the larger
``adapt_train_batch_size`` during the second (the larger batches keep the
Monte-Carlo estimate of the reciprocal-mean constraint low-variance).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import (
    CONTINUOUS,
    LabeledDataset,
    NormalizationStats,
    UnlabeledDataset,
)
from .losses import (
    LossBreakdown,
    conditional_entropy,
    constraint_penalty,
    cross_entropy_risk,
    kliep_loss,
    lsif_loss,
    wasserstein2,
    weighted_entropy_term,
)
from .nets import (
    AdamOptimizer,
    NetConfig,
    PredictorModel,
    WeightNetwork,
    parameter_digest,
    zero_grads,
)

METHODS = ("ours", "erm", "kliep_iw", "lsif_iw", "zsa", "unweighted_entropy")
RATIO_FLOOR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 15
    adapt_epochs: int = 35
    batch_size: int = 32
    adapt_train_batch_size: int = 256
    lambda1: float = 0.1
    lambda2: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    seed: int = 0
    weight_decay: float = 1e-5
    learning_rate: float = 1e-3
    # the inner maximizer runs on a faster timescale than the classifier
    weight_lr_multiplier: float = 10.0
    m_cap: int = 50
    method: str = "ours"
    hidden_dim: int = 64
    rep_dim: int = 64
    clf_hidden_dim: int = 32
    weight_hidden_dim: int = 32
    dropout_rate: float = 0.25

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.batch_size < 1 or self.adapt_train_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.pretrain_epochs < 0 or self.adapt_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda coefficients must be >= 0")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("penalty coefficients must be > 0")
        if self.m_cap < 1:
            raise ValueError("m_cap must be >= 1")

    @property
    def total_epochs(self):
        return self.pretrain_epochs + self.adapt_epochs

    def net_config(self, input_dim) -> NetConfig:
        return NetConfig(
            input_dim=input_dim,
            hidden_dim=self.hidden_dim,
            rep_dim=self.rep_dim,
            clf_hidden_dim=self.clf_hidden_dim,
            weight_hidden_dim=self.weight_hidden_dim,
            dropout_rate=self.dropout_rate,
        )


@dataclass
class TrainedModel:
    method: str
    predictor: PredictorModel
    config: TrainConfig
    history: list = field(default_factory=list)
    param_digests: list = field(default_factory=list)
    weight_net: WeightNetwork | None = None
    input_stats: NormalizationStats | None = None
    skipped_wasserstein_steps: int = 0

    def predict_proba(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if self.input_stats is not None:
            features = (features - self.input_stats.means) / self.input_stats.stds
        return self.predictor.predict_proba(features)

    def predict(self, features) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(np.int64)


def _streams(seed):
    kids = np.random.SeedSequence(seed).spawn(6)
    return {
        "predictor": kids[0],
        "weight_net": kids[1],
        "batches": np.random.default_rng(kids[2]),
        "dropout": np.random.default_rng(kids[3]),
        "subsample": np.random.default_rng(kids[4]),
        "ratio": kids[5],
    }


def _epoch_batch_sizes(cfg):
    return [cfg.batch_size] * cfg.pretrain_epochs + [
        cfg.adapt_train_batch_size
    ] * cfg.adapt_epochs


def _total_steps(cfg, n):
    return sum(-(-n // bs) for bs in _epoch_batch_sizes(cfg))


def _batches(perm, batch_size):
    for start in range(0, len(perm), batch_size):
        yield perm[start : start + batch_size]


def _check_finite(value, epoch, what):
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite {what} at epoch {epoch}: {value!r}")


class _Engine:
    """Shared state for one training run."""

    def __init__(self, source: LabeledDataset, cfg: TrainConfig, features=None):
        self.cfg = cfg
        self.source = source
        self.features = source.features if features is None else features
        self.labels = source.labels.astype(np.float64)
        self.streams = _streams(cfg.seed)
        self.model = PredictorModel(cfg.net_config(source.d), self.streams["predictor"])
        self.total_steps = _total_steps(cfg, source.n)
        self.opt = AdamOptimizer(
            self.model.parameters,
            self.total_steps,
            base_lr=cfg.learning_rate,
            weight_decay=cfg.weight_decay,
        )
        self.step = 0
        self.history = []
        self.digests = []

    def epoch_perm(self):
        return self.streams["batches"].permutation(self.source.n)

    def erm_loss(self, batch_idx):
        _, probs = self.model.forward(
            self.features[batch_idx], dropout_rng=self.streams["dropout"]
        )
        return cross_entropy_risk(probs, self.labels[batch_idx])

    def theta_update(self, loss):
        loss.backward()
        self.opt.step(self.step)
        self.step += 1

    def finish_epoch(self, breakdown: LossBreakdown, epoch):
        _check_finite(breakdown.total, epoch, "loss")
        self.history.append(breakdown)
        self.digests.append(parameter_digest(self.model.parameters))

    def run_erm_epochs(self, epochs):
        """Plain empirical-risk epochs from the start of the schedule."""
        sizes = _epoch_batch_sizes(self.cfg)
        for epoch in range(epochs):
            total = 0.0
            perm = self.epoch_perm()
            for batch_idx in _batches(perm, sizes[epoch]):
                zero_grads(self.model.parameters)
                loss = self.erm_loss(batch_idx)
                self.theta_update(loss)
                total += float(loss) * len(batch_idx)
            erm = total / self.source.n
            self.finish_epoch(LossBreakdown(erm=erm, total=erm), epoch)


def _subsample_target(target: UnlabeledDataset, cfg, rng) -> UnlabeledDataset:
    if cfg.m_cap > target.m:
        raise ValueError(f"m_cap={cfg.m_cap} exceeds available target points ({target.m})")
    idx = rng.choice(target.m, size=cfg.m_cap, replace=False)
    return target.subset(np.sort(idx))


def train_erm(source: LabeledDataset, cfg: TrainConfig) -> TrainedModel:
    """Cross-entropy minimization only; the reference trajectory."""
    eng = _Engine(source, cfg)
    eng.run_erm_epochs(cfg.total_epochs)
    return TrainedModel(
        method="erm",
        predictor=eng.model,
        config=cfg,
        history=eng.history,
        param_digests=eng.digests,
    )


def train_ours(
    source: LabeledDataset, target: UnlabeledDataset, cfg: TrainConfig
) -> TrainedModel:
    """Two-stage min-max training of the composite objective.

    Stage 1 minimizes the source risk alone.  Stage 2 alternates per
    batch: the weight network ascends the entropy term minus the
    squared-error constraint penalties, then the predictor descends the
    source risk plus the (gradient-stopped) weighted entropy plus the
    group-level Wasserstein matching term.
    """
    if not (target.has_group(0) and target.has_group(1)):
        raise ValueError("target must contain both groups for representation matching")
    eng = _Engine(source, cfg)
    target_sub = _subsample_target(target, cfg, eng.streams["subsample"])
    idx0 = np.flatnonzero(target_sub.groups == 0)
    idx1 = np.flatnonzero(target_sub.groups == 1)

    eng.run_erm_epochs(cfg.pretrain_epochs)

    weight_net = WeightNetwork(
        cfg.rep_dim, eng.streams["weight_net"], hidden_dim=cfg.weight_hidden_dim
    )
    w_opt = AdamOptimizer(
        weight_net.parameters,
        eng.total_steps,
        base_lr=cfg.learning_rate * cfg.weight_lr_multiplier,
        weight_decay=cfg.weight_decay,
    )
    target_x = target_sub.features
    skipped_w2 = 0
    sizes = _epoch_batch_sizes(cfg)

    for e in range(cfg.adapt_epochs):
        epoch = cfg.pretrain_epochs + e
        bs = sizes[epoch]
        sums = np.zeros(5)  # erm, we, w2, c1 penalty, c2 penalty
        n_steps = 0
        perm = eng.epoch_perm()
        for batch_idx in _batches(perm, bs):
            # -- weight-network ascent (classifier frozen, inference mode) --
            if cfg.lambda1 > 0:
                rep_t = eng.model.representations(target_x)
                probs_t = eng.model.predict_proba(target_x)
                entropies = conditional_entropy(probs_t).value
                rep_s = eng.model.representations(eng.features[batch_idx])
                zero_grads(weight_net.parameters)
                fw_t = weight_net.forward(rep_t)
                fw_s = weight_net.forward(rep_s)
                we = weighted_entropy_term(fw_t, entropies)
                penalty = constraint_penalty(fw_t, fw_s, cfg.c1, cfg.c2)
                w_loss = penalty - cfg.lambda1 * we
                w_loss.backward()
                w_opt.step(eng.step)
                d1 = float(fw_t.value.mean() - 1.0)
                d2 = float((1.0 / fw_s.value).mean() - 1.0)
                sums[3] += cfg.c1 * d1 * d1
                sums[4] += cfg.c2 * d2 * d2

            # -- classifier descent ------------------------------------
            zero_grads(eng.model.parameters)
            loss = eng.erm_loss(batch_idx)
            sums[0] += float(loss)
            if cfg.lambda1 > 0 or cfg.lambda2 > 0:
                rep_t_theta, probs_t_theta = eng.model.forward(target_x)
            if cfg.lambda1 > 0:
                fw_now = weight_net.ratios(rep_t_theta.value)
                we_term = weighted_entropy_term(
                    Tensor(fw_now), conditional_entropy(probs_t_theta)
                )
                sums[1] += float(we_term)
                loss = loss + cfg.lambda1 * we_term
            if cfg.lambda2 > 0:
                if len(idx0) and len(idx1):
                    w2 = wasserstein2(
                        ad.take_rows(rep_t_theta, idx0), ad.take_rows(rep_t_theta, idx1)
                    )
                    sums[2] += float(w2)
                    loss = loss + cfg.lambda2 * w2
                else:
                    skipped_w2 += 1
            eng.theta_update(loss)
            n_steps += 1
        avg = sums / n_steps
        eng.finish_epoch(
            LossBreakdown(
                erm=avg[0],
                weighted_entropy=avg[1],
                wasserstein=avg[2],
                c1_penalty=avg[3],
                c2_penalty=avg[4],
                total=avg[0] + cfg.lambda1 * avg[1] + cfg.lambda2 * avg[2],
            ),
            epoch,
        )

    return TrainedModel(
        method="ours",
        predictor=eng.model,
        config=cfg,
        history=eng.history,
        param_digests=eng.digests,
        weight_net=weight_net,
        skipped_wasserstein_steps=skipped_w2,
    )


def train_unweighted_entropy(
    source: LabeledDataset, target: UnlabeledDataset, cfg: TrainConfig
) -> TrainedModel:
    """Ablation of :func:`train_ours`: every target point gets weight 1.

    No weight network and no constraints; otherwise the two-stage
    schedule is identical.
    """
    if not (target.has_group(0) and target.has_group(1)):
        raise ValueError("target must contain both groups for representation matching")
    eng = _Engine(source, cfg)
    target_sub = _subsample_target(target, cfg, eng.streams["subsample"])
    idx0 = np.flatnonzero(target_sub.groups == 0)
    idx1 = np.flatnonzero(target_sub.groups == 1)

    eng.run_erm_epochs(cfg.pretrain_epochs)
    target_x = target_sub.features
    skipped_w2 = 0
    sizes = _epoch_batch_sizes(cfg)
    for e in range(cfg.adapt_epochs):
        epoch = cfg.pretrain_epochs + e
        sums = np.zeros(3)
        n_steps = 0
        perm = eng.epoch_perm()
        for batch_idx in _batches(perm, sizes[epoch]):
            zero_grads(eng.model.parameters)
            loss = eng.erm_loss(batch_idx)
            sums[0] += float(loss)
            if cfg.lambda1 > 0 or cfg.lambda2 > 0:
                rep_t, probs_t = eng.model.forward(target_x)
            if cfg.lambda1 > 0:
                ent = conditional_entropy(probs_t).mean()
                sums[1] += float(ent)
                loss = loss + cfg.lambda1 * ent
            if cfg.lambda2 > 0:
                if len(idx0) and len(idx1):
                    w2 = wasserstein2(ad.take_rows(rep_t, idx0), ad.take_rows(rep_t, idx1))
                    sums[2] += float(w2)
                    loss = loss + cfg.lambda2 * w2
                else:
                    skipped_w2 += 1
            eng.theta_update(loss)
            n_steps += 1
        avg = sums / n_steps
        eng.finish_epoch(
            LossBreakdown(
                erm=avg[0],
                weighted_entropy=avg[1],
                wasserstein=avg[2],
                total=avg[0] + cfg.lambda1 * avg[1] + cfg.lambda2 * avg[2],
            ),
            epoch,
        )
    return TrainedModel(
        method="unweighted_entropy",
        predictor=eng.model,
        config=cfg,
        history=eng.history,
        param_digests=eng.digests,
        skipped_wasserstein_steps=skipped_w2,
    )


def _fit_ratio_net(source, target_x, cfg, init_seed, batch_seed):
    """Fit s(x) on raw features by the configured density-ratio loss."""
    loss_fn = kliep_loss if cfg.method == "kliep_iw" else lsif_loss
    net = WeightNetwork(source.d, init_seed, hidden_dim=cfg.weight_hidden_dim)
    rng = np.random.default_rng(batch_seed)
    steps_per_epoch = -(-source.n // cfg.batch_size)
    total = cfg.total_epochs * steps_per_epoch
    opt = AdamOptimizer(
        net.parameters, total, base_lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    step = 0
    for _ in range(cfg.total_epochs):
        perm = rng.permutation(source.n)
        for batch_idx in _batches(perm, cfg.batch_size):
            zero_grads(net.parameters)
            s_test = net.forward(target_x)
            s_train = net.forward(source.features[batch_idx])
            loss = loss_fn(s_test, s_train)
            loss.backward()
            opt.step(step)
            step += 1
    return net


def train_importance_weighted(
    source: LabeledDataset,
    target: UnlabeledDataset,
    cfg: TrainConfig,
    ratio_override=None,
) -> TrainedModel:
    """Density-ratio baseline: fit s(x), then minimize s-weighted risk.

    Phase 1 fits the ratio network by the KLIEP or LSIF loss over the
    available target points and source batches.  Phase 2 trains the
    classifier on the s-weighted cross entropy plus the Wasserstein
    matching term.  ``ratio_override`` (length-n array) skips phase 1,
    which is how exact-ratio studies and the unit-weight degenerate case
    are run.
    """
    if cfg.method not in ("kliep_iw", "lsif_iw"):
        raise ValueError(f"method must be kliep_iw or lsif_iw, got {cfg.method!r}")
    eng = _Engine(source, cfg)
    target_sub = _subsample_target(target, cfg, eng.streams["subsample"])
    idx0 = np.flatnonzero(target_sub.groups == 0)
    idx1 = np.flatnonzero(target_sub.groups == 1)
    target_x = target_sub.features

    ratio_net = None
    if ratio_override is not None:
        weights = np.asarray(ratio_override, dtype=np.float64)
        if weights.shape != (source.n,):
            raise ValueError("ratio_override must have one weight per source row")
    else:
        ratio_net = _fit_ratio_net(
            source, target_x, cfg, eng.streams["weight_net"], eng.streams["ratio"]
        )
        weights = ratio_net.ratios(source.features)
        # the squared-penalty fit overshoots the constrained optimum by a
        # constant factor; rescale so the source mean is exactly one
        weights = weights / weights.mean()
    weights = np.maximum(weights, RATIO_FLOOR)

    sizes = _epoch_batch_sizes(cfg)
    skipped_w2 = 0
    for epoch in range(cfg.total_epochs):
        sums = np.zeros(2)
        n_steps = 0
        perm = eng.epoch_perm()
        for batch_idx in _batches(perm, sizes[epoch]):
            zero_grads(eng.model.parameters)
            _, probs = eng.model.forward(
                eng.features[batch_idx], dropout_rng=eng.streams["dropout"]
            )
            y = eng.labels[batch_idx]
            per_row = -(Tensor(y) * ad.log(probs) + Tensor(1.0 - y) * ad.log(1.0 - probs))
            loss = (Tensor(weights[batch_idx]) * per_row).mean()
            sums[0] += float(loss)
            if cfg.lambda2 > 0:
                if len(idx0) and len(idx1):
                    rep_t, _ = eng.model.forward(target_x)
                    w2 = wasserstein2(ad.take_rows(rep_t, idx0), ad.take_rows(rep_t, idx1))
                    sums[1] += float(w2)
                    loss = loss + cfg.lambda2 * w2
                else:
                    skipped_w2 += 1
            eng.theta_update(loss)
            n_steps += 1
        avg = sums / n_steps
        eng.finish_epoch(
            LossBreakdown(erm=avg[0], wasserstein=avg[1], total=avg[0] + cfg.lambda2 * avg[1]),
            epoch,
        )
    return TrainedModel(
        method=cfg.method,
        predictor=eng.model,
        config=cfg,
        history=eng.history,
        param_digests=eng.digests,
        weight_net=ratio_net,
        skipped_wasserstein_steps=skipped_w2,
    )


def _column_stats(features, kinds):
    means = np.zeros(features.shape[1])
    stds = np.ones(features.shape[1])
    for j, kind in enumerate(kinds):
        if kind != CONTINUOUS:
            continue
        col = features[:, j]
        means[j] = col.mean()
        std = col.std()
        stds[j] = std if std > 0 else 1.0
    return NormalizationStats(means, stds)


def train_zsa(
    source: LabeledDataset, target: UnlabeledDataset, cfg: TrainConfig
) -> TrainedModel:
    """Z-score adaptation: retrain nothing, re-estimate input statistics.

    The classifier trains on source features standardized by source
    statistics; at adaptation time the standardization layer switches to
    statistics recomputed from the available unlabeled target points.
    """
    train_stats = _column_stats(source.features, source.feature_kinds)
    standardized = (source.features - train_stats.means) / train_stats.stds
    eng = _Engine(source, cfg, features=standardized)
    eng.run_erm_epochs(cfg.total_epochs)
    target_sub = _subsample_target(target, cfg, eng.streams["subsample"])
    adapted = _column_stats(target_sub.features, source.feature_kinds)
    return TrainedModel(
        method="zsa",
        predictor=eng.model,
        config=cfg,
        history=eng.history,
        param_digests=eng.digests,
        input_stats=adapted,
    )


_TRAINERS = {
    "ours": train_ours,
    "unweighted_entropy": train_unweighted_entropy,
    "kliep_iw": train_importance_weighted,
    "lsif_iw": train_importance_weighted,
    "zsa": train_zsa,
}


def train(source: LabeledDataset, target, cfg: TrainConfig) -> TrainedModel:
    """Dispatch to the trainer selected by ``cfg.method``."""
    if cfg.method == "erm":
        return train_erm(source, cfg)
    if target is None:
        raise ValueError(f"method {cfg.method!r} requires target data")
    return _TRAINERS[cfg.method](source, target, cfg)
