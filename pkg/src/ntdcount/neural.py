"""One-hidden-layer feed-forward regressor mapping the response map's average
brightness to a detection threshold, plus the ratio-based linear baseline.

Training is deterministic full-batch gradient descent in min-max normalized
space, with the learning rate halved whenever a step would increase the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


class ModelError(Exception):
    """Raised for malformed model files and training contract violations."""


@dataclass
class MlpModel:
    category: str
    w1: np.ndarray  # (hidden_dim, input_dim)
    b1: np.ndarray  # (hidden_dim,)
    w2: np.ndarray  # (hidden_dim,)
    b2: float
    x_min: np.ndarray
    x_max: np.ndarray
    t_min: float
    t_max: float
    activation: str = "sigmoid"

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.x_min = np.asarray(self.x_min, dtype=np.float64)
        self.x_max = np.asarray(self.x_max, dtype=np.float64)
        if self.activation not in ("sigmoid", "tanh"):
            raise ModelError(f"unknown activation {self.activation!r}")
        if not np.all(self.x_max > self.x_min):
            raise ModelError("x_max must exceed x_min per input dimension")
        if not self.t_max > self.t_min:
            raise ModelError("t_max must exceed t_min")
        for arr in (self.w1, self.b1, self.w2):
            if not np.all(np.isfinite(arr)):
                raise ModelError("non-finite weights")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]


@dataclass
class TrainingRecord:
    frame_id: str
    features: list  # feature[0] = average intensity of the response map
    manual_threshold: float


@dataclass
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 0.05
    seed: int = 0
    init_scale: float = 0.5
    hidden_dim: int = 8
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return np.tanh(z)


def _activate_grad(h: np.ndarray, kind: str) -> np.ndarray:
    # expressed in terms of the activation output
    if kind == "sigmoid":
        return h * (1.0 - h)
    return 1.0 - h**2


def _normalize_x(model: MlpModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValueError(f"expected {model.input_dim} features, got {x.shape}")
    return (x - model.x_min) / (model.x_max - model.x_min)  # no clamping


def _forward_norm(model: MlpModel, x_norm: np.ndarray):
    h = _activate(model.w1 @ x_norm + model.b1, model.activation)
    y = float(model.w2 @ h + model.b2)
    return h, y


def mlp_predict(model: MlpModel, features) -> float:
    """Predicted threshold in target units; out-of-range features extrapolate."""
    _, y_norm = _forward_norm(model, _normalize_x(model, features))
    return model.t_min + y_norm * (model.t_max - model.t_min)


def _loss_and_grads(model: MlpModel, xs: np.ndarray, ts: np.ndarray):
    """Mean squared error in normalized space, with analytic gradients."""
    n = xs.shape[0]
    z = xs @ model.w1.T + model.b1  # (n, hidden)
    h = _activate(z, model.activation)
    y = h @ model.w2 + model.b2  # (n,)
    err = y - ts
    loss = float((err**2).mean())
    dy = 2.0 * err / n
    gw2 = dy @ h
    gb2 = float(dy.sum())
    dh = np.outer(dy, model.w2) * _activate_grad(h, model.activation)
    gw1 = dh.T @ xs
    gb1 = dh.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2


def mlp_train(records: list[TrainingRecord], cfg: TrainConfig, category: str = "") -> MlpModel:
    """Deterministic full-batch gradient descent on MSE in normalized space."""
    if len(records) < 2:
        raise ModelError("too few records (need >= 2)")
    feats = np.asarray([r.features for r in records], dtype=np.float64)
    targets = np.asarray([r.manual_threshold for r in records], dtype=np.float64)
    x_min, x_max = feats.min(axis=0), feats.max(axis=0)
    t_min, t_max = float(targets.min()), float(targets.max())
    if t_max == t_min:
        raise ModelError("degenerate targets (all thresholds equal)")
    # Collapse degenerate feature dimensions to a unit range so normalization
    # stays well-defined.
    span = np.where(x_max > x_min, x_max - x_min, 1.0)
    x_max = x_min + span

    input_dim = feats.shape[1]
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = MlpModel(
        category=category,
        w1=rng.uniform(-cfg.init_scale, cfg.init_scale, (cfg.hidden_dim, input_dim)),
        b1=rng.uniform(-cfg.init_scale, cfg.init_scale, cfg.hidden_dim),
        w2=rng.uniform(-cfg.init_scale, cfg.init_scale, cfg.hidden_dim),
        b2=float(rng.uniform(-cfg.init_scale, cfg.init_scale)),
        x_min=x_min,
        x_max=x_max,
        t_min=t_min,
        t_max=t_max,
        activation=cfg.activation,
    )
    xs = (feats - x_min) / (x_max - x_min)
    ts = (targets - t_min) / (t_max - t_min)

    lr = cfg.learning_rate
    loss, *grads = _loss_and_grads(model, xs, ts)
    for _ in range(cfg.epochs):
        gw1, gb1, gw2, gb2 = grads
        trial = MlpModel(
            category=model.category,
            w1=model.w1 - lr * gw1,
            b1=model.b1 - lr * gb1,
            w2=model.w2 - lr * gw2,
            b2=model.b2 - lr * gb2,
            x_min=x_min,
            x_max=x_max,
            t_min=t_min,
            t_max=t_max,
            activation=cfg.activation,
        )
        new_loss, *new_grads = _loss_and_grads(trial, xs, ts)
        if new_loss > loss:
            lr *= 0.5  # reject the step; retry smaller
            continue
        model, loss, grads = trial, new_loss, new_grads
    return model


def training_rmse(model: MlpModel, records: list[TrainingRecord]) -> float:
    """Root mean squared prediction error in threshold units."""
    errs = [mlp_predict(model, r.features) - r.manual_threshold for r in records]
    return float(np.sqrt(np.mean(np.square(errs))))


def gradient_check(model: MlpModel, record: TrainingRecord, eps: float) -> float:
    """Compare analytic loss gradients against central finite differences.

    Returns the max over parameters of |analytic - numeric| / max(|a|, |n|, 1).
    """
    if not 0 < eps <= 1e-3:
        raise ValueError("eps must be in (0, 1e-3]")
    xs = _normalize_x(model, record.features)[None, :]
    t = (record.manual_threshold - model.t_min) / (model.t_max - model.t_min)
    ts = np.asarray([t])

    _, gw1, gb1, gw2, gb2 = _loss_and_grads(model, xs, ts)
    analytic = np.concatenate([gw1.ravel(), gb1, gw2, [gb2]])

    params = np.concatenate([model.w1.ravel(), model.b1, model.w2, [model.b2]])
    nh, ni = model.w1.shape

    def loss_at(p: np.ndarray) -> float:
        w1 = p[: nh * ni].reshape(nh, ni)
        b1 = p[nh * ni : nh * ni + nh]
        w2 = p[nh * ni + nh : nh * ni + 2 * nh]
        b2 = p[-1]
        h = _activate(xs @ w1.T + b1, model.activation)
        y = h @ w2 + b2
        return float(((y - ts) ** 2).mean())

    numeric = np.empty_like(params)
    for i in range(params.size):
        plus, minus = params.copy(), params.copy()
        plus[i] += eps
        minus[i] -= eps
        numeric[i] = (loss_at(plus) - loss_at(minus)) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def linear_baseline_fit(records: list[TrainingRecord]) -> float:
    """Ratio-based baseline: k = mean(threshold / average-brightness)."""
    if not records:
        raise ModelError("need at least one record")
    ratios = []
    for r in records:
        mu = float(r.features[0])
        if mu == 0:
            raise ModelError(f"zero average intensity for frame {r.frame_id}")
        ratios.append(r.manual_threshold / mu)
    return float(np.mean(ratios))


def linear_baseline_predict(k: float, features) -> float:
    return k * float(features[0])


def save_model(model: MlpModel, path) -> None:
    # JSON floats use repr (shortest round-trip decimal), lossless for doubles.
    doc = {
        "schema_version": SCHEMA_VERSION,
        "category": model.category,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "activation": model.activation,
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": float(model.b2),
        "norm": {
            "x_min": model.x_min.tolist(),
            "x_max": model.x_max.tolist(),
            "t_min": float(model.t_min),
            "t_max": float(model.t_max),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_model(path) -> MlpModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: malformed model file ({exc})") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ModelError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    try:
        return MlpModel(
            category=doc["category"],
            w1=np.array(doc["w1"], dtype=np.float64),
            b1=np.array(doc["b1"], dtype=np.float64),
            w2=np.array(doc["w2"], dtype=np.float64),
            b2=float(doc["b2"]),
            x_min=np.array(doc["norm"]["x_min"], dtype=np.float64),
            x_max=np.array(doc["norm"]["x_max"], dtype=np.float64),
            t_min=float(doc["norm"]["t_min"]),
            t_max=float(doc["norm"]["t_max"]),
            activation=doc.get("activation", "sigmoid"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelError(f"{path}: missing or invalid field ({exc})") from exc
