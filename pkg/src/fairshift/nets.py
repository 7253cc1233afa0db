"""Dense networks and their optimizer.

The predictor is a 4-layer fully connected net split into an encoder
(first two layers, producing the representation) and a classifier head
(last two layers, producing a clamped sigmoid probability).  A separate
two-layer positive-output network estimates instance weights over the
representation space.  Adam with global-norm gradient clipping and a
cosine learning-rate schedule drives both.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PROB_CLAMP = 1e-7
WEIGHT_NET_PREACT_LIMIT = 10.0
GRAD_CLIP_NORM = 5.0


@dataclass(frozen=True)
class NetConfig:
    """Shapes shared by a predictor/weight-network pair."""

    input_dim: int
    hidden_dim: int = 64
    rep_dim: int = 64
    clf_hidden_dim: int = 32
    weight_hidden_dim: int = 32
    dropout_rate: float = 0.25


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _dense_params(rng, fan_in, fan_out):
    return Tensor(_glorot(rng, fan_in, fan_out)), Tensor(np.zeros(fan_out))


class PredictorModel:
    """Soft binary classifier ``h(g(x))`` with an explicit encoder split.

    ``g`` is layers 1-2 (the representation), ``h`` is layers 3-4.
    Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] so entropy
    and cross-entropy never see log(0).  Dropout (rate 0.25 by default)
    follows each hidden layer and is active only when a mask rng is
    passed to :meth:`forward`.
    """

    def __init__(self, config: NetConfig, seed: int):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.w1, self.b1 = _dense_params(rng, c.input_dim, c.hidden_dim)
        self.w2, self.b2 = _dense_params(rng, c.hidden_dim, c.rep_dim)
        self.w3, self.b3 = _dense_params(rng, c.rep_dim, c.clf_hidden_dim)
        self.w4, self.b4 = _dense_params(rng, c.clf_hidden_dim, 1)

    @property
    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4]

    @property
    def encoder_parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, batch, dropout_rng=None):
        """Return ``(representations [b, rep_dim], probabilities [b])``.

        ``dropout_rng`` enables training-mode dropout; omit it for
        deterministic inference.
        """
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.value.ndim != 2 or x.value.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected batch of width {self.config.input_dim}, "
                f"got shape {x.value.shape}"
            )
        rate = self.config.dropout_rate
        h1 = ad.relu(ad.matmul(x, self.w1) + self.b1)
        h1 = _dropout(h1, rate, dropout_rng)
        rep = ad.relu(ad.matmul(h1, self.w2) + self.b2)
        h2 = _dropout(rep, rate, dropout_rng)
        h3 = ad.relu(ad.matmul(h2, self.w3) + self.b3)
        h3 = _dropout(h3, rate, dropout_rng)
        logits = ad.matmul(h3, self.w4) + self.b4
        probs = ad.clip(ad.sigmoid(logits.sum(axis=1)), PROB_CLAMP, 1.0 - PROB_CLAMP)
        return rep, probs

    def predict_proba(self, features) -> np.ndarray:
        _, probs = self.forward(np.asarray(features, dtype=np.float64))
        return probs.value

    def representations(self, features) -> np.ndarray:
        rep, _ = self.forward(np.asarray(features, dtype=np.float64))
        return rep.value


def _dropout(t, rate, rng):
    if rng is None or rate <= 0.0:
        return t
    mask = (rng.random(t.value.shape) >= rate) / (1.0 - rate)
    return t * Tensor(mask)


class WeightNetwork:
    """Strictly positive two-layer ratio estimator over representations.

    The output is ``exp`` of a pre-activation clamped to
    [-WEIGHT_NET_PREACT_LIMIT, +WEIGHT_NET_PREACT_LIMIT], so values stay
    within [e^-10, e^10]: positive for the reciprocal constraint and
    bounded for the exponential weighting.
    """

    OUTPUT_BIAS_INIT = 1.0

    def __init__(self, input_dim: int, seed: int, hidden_dim: int = 32):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        rng = np.random.default_rng(seed)
        self.w1, self.b1 = _dense_params(rng, input_dim, hidden_dim)
        self.w2, self.b2 = _dense_params(rng, hidden_dim, 1)
        # level-shifted init: an uninformed ratio estimate should not
        # start at the constraint-satisfying point
        self.b2.value = self.b2.value + self.OUTPUT_BIAS_INIT

    @property
    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, inputs):
        x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
        if x.value.ndim != 2 or x.value.shape[1] != self.input_dim:
            raise ValueError(
                f"expected input of width {self.input_dim}, got shape {x.value.shape}"
            )
        h = ad.relu(ad.matmul(x, self.w1) + self.b1)
        pre = (ad.matmul(h, self.w2) + self.b2).sum(axis=1)
        return ad.exp(
            ad.clip(pre, -WEIGHT_NET_PREACT_LIMIT, WEIGHT_NET_PREACT_LIMIT)
        )

    def ratios(self, inputs) -> np.ndarray:
        return self.forward(np.asarray(inputs, dtype=np.float64)).value


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine decay from ``base_lr`` at step 0 to exactly 0 at ``total_steps``."""
    if total_steps <= 0 or step >= total_steps:
        return 0.0
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total_steps))


class AdamOptimizer:
    """Adam with decoupled weight decay, global-norm clipping, cosine decay.

    ``step(params, step_index)`` reads gradients from each parameter's
    ``grad`` slot, clips their joint norm to GRAD_CLIP_NORM, applies the
    moment update at the scheduled learning rate, and clears the grads.
    """

    def __init__(
        self,
        params,
        total_steps: int,
        base_lr: float = 1e-3,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.total_steps = total_steps
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, step_index: int):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.value)
            for p in self.params
        ]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient entries")
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
        if norm > GRAD_CLIP_NORM:
            scale = GRAD_CLIP_NORM / norm
            grads = [g * scale for g in grads]
        lr = cosine_lr(step_index, self.total_steps, self.base_lr)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)
            p.value = p.value - lr * update - lr * self.weight_decay * p.value
            p.grad = None


def zero_grads(params):
    for p in params:
        p.grad = None


def parameter_digest(params) -> str:
    """SHA-256 over the concatenated parameter bytes (bit-level identity)."""
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p.value).tobytes())
    return h.hexdigest()


# -- checkpointing -------------------------------------------------------

_PREDICTOR_SLOTS = ["w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4"]
_WEIGHT_NET_SLOTS = ["w1", "b1", "w2", "b2"]
CHECKPOINT_VERSION = 1


def predictor_to_dict(model: PredictorModel) -> dict:
    return {
        "config": asdict(model.config),
        "params": {name: getattr(model, name).value.tolist() for name in _PREDICTOR_SLOTS},
    }


def predictor_from_dict(payload: dict) -> PredictorModel:
    model = PredictorModel(NetConfig(**payload["config"]), seed=0)
    for name in _PREDICTOR_SLOTS:
        getattr(model, name).value = np.asarray(payload["params"][name], dtype=np.float64)
    return model


def weight_net_to_dict(net: WeightNetwork) -> dict:
    return {
        "input_dim": net.input_dim,
        "hidden_dim": net.hidden_dim,
        "params": {name: getattr(net, name).value.tolist() for name in _WEIGHT_NET_SLOTS},
    }


def weight_net_from_dict(payload: dict) -> WeightNetwork:
    net = WeightNetwork(payload["input_dim"], seed=0, hidden_dim=payload["hidden_dim"])
    for name in _WEIGHT_NET_SLOTS:
        getattr(net, name).value = np.asarray(payload["params"][name], dtype=np.float64)
    return net


def save_checkpoint(path, predictor: PredictorModel, weight_net=None, extra=None):
    """Write a versioned JSON checkpoint; floats round-trip exactly."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "predictor": predictor_to_dict(predictor),
    }
    if weight_net is not None:
        payload["weight_net"] = weight_net_to_dict(weight_net)
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Return ``(predictor, weight_net_or_None, extra_dict)``."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('format_version')}")
    predictor = predictor_from_dict(payload["predictor"])
    weight_net = (
        weight_net_from_dict(payload["weight_net"]) if "weight_net" in payload else None
    )
    return predictor, weight_net, payload.get("extra", {})
