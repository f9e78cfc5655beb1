"""Resolution-selector head: K-way classifier, trainer, and inference policies.

The head maps a joint image-query feature vector to logits over the
menu's resolution classes. Inference is either discrete (argmax, ties
broken toward the lower resolution) or continuous: the probability-
weighted expectation of the menu entries, rounded up to the next
deployment-supported size so the target model is never under-allocated.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptySupportedSet,
    InconsistentDimensions,
)
from .labeler import SufficiencyLabel
from .menu import ResolutionMenu


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 6
    label_smoothing: float = 0.05
    seed: int = 0
    optimizer: str = "adam"          # "adam" or "sgd"
    hidden_dim: int = 0              # 0 = plain linear head
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def to_dict(self) -> dict[str, Any]:
        d = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "label_smoothing": self.label_smoothing,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "hidden_dim": self.hidden_dim,
        }
        if self.class_weights is not None:
            d["class_weights"] = list(self.class_weights)
        return d


def _f64_to_b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _f64_from_b64(s: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


def _check_vector(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != dim:
        raise DimensionMismatch(f"expected a feature vector of dimension {dim}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DimensionMismatch("feature vector contains non-finite entries")
    return z


@dataclass
class ClassifierHead:
    """Linear map from a D-dim feature vector to K resolution logits."""

    weights: np.ndarray  # (K, D)
    bias: np.ndarray     # (K,)
    menu: ResolutionMenu

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch("weights must be (K, D) with a matching K-length bias")
        if self.weights.shape[0] != self.menu.k:
            raise DimensionMismatch(
                f"head has {self.weights.shape[0]} classes but menu has {self.menu.k}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DimensionMismatch("head parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def logits(self, z) -> np.ndarray:
        z = _check_vector(z, self.dim)
        return self.weights @ z + self.bias

    def _arch_dict(self) -> dict[str, Any]:
        return {
            "arch": "linear",
            "weights": _f64_to_b64(self.weights),
            "bias": _f64_to_b64(self.bias),
        }

    @classmethod
    def _from_arch_dict(cls, d: dict[str, Any], menu: ResolutionMenu, k: int, dim: int):
        return cls(
            weights=_f64_from_b64(d["weights"], (k, dim)),
            bias=_f64_from_b64(d["bias"], (k,)),
            menu=menu,
        )


@dataclass
class MlpHead:
    """One-hidden-layer (ReLU) variant, selectable via TrainConfig.hidden_dim."""

    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (K, H)
    b2: np.ndarray  # (K,)
    menu: ResolutionMenu

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.w2.shape[0] != self.menu.k:
            raise DimensionMismatch(
                f"head has {self.w2.shape[0]} classes but menu has {self.menu.k}"
            )

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def k(self) -> int:
        return self.w2.shape[0]

    def logits(self, z) -> np.ndarray:
        z = _check_vector(z, self.dim)
        h = np.maximum(self.w1 @ z + self.b1, 0.0)
        return self.w2 @ h + self.b2

    def _arch_dict(self) -> dict[str, Any]:
        return {
            "arch": "mlp",
            "hidden_dim": int(self.w1.shape[0]),
            "w1": _f64_to_b64(self.w1),
            "b1": _f64_to_b64(self.b1),
            "w2": _f64_to_b64(self.w2),
            "b2": _f64_to_b64(self.b2),
        }

    @classmethod
    def _from_arch_dict(cls, d: dict[str, Any], menu: ResolutionMenu, k: int, dim: int):
        h = int(d["hidden_dim"])
        return cls(
            w1=_f64_from_b64(d["w1"], (h, dim)),
            b1=_f64_from_b64(d["b1"], (h,)),
            w2=_f64_from_b64(d["w2"], (k, h)),
            b2=_f64_from_b64(d["b2"], (k,)),
            menu=menu,
        )


def save_head(head, path: str | Path, *, train_config: TrainConfig | None = None,
              data_checksum: str | None = None) -> None:
    """Persist a head as self-describing JSON (weights as 8-byte floats)."""
    doc = {
        "format": "resel-head/1",
        "dim": head.dim,
        "k": head.k,
        "menu": head.menu.to_dict(),
        **head._arch_dict(),
    }
    if train_config is not None:
        doc["train_config"] = train_config.to_dict()
    if data_checksum is not None:
        doc["data_checksum"] = data_checksum
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_head(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    menu = ResolutionMenu.from_dict(doc["menu"])
    k, dim = int(doc["k"]), int(doc["dim"])
    arch = doc.get("arch", "linear")
    if arch == "linear":
        return ClassifierHead._from_arch_dict(doc, menu, k, dim)
    if arch == "mlp":
        return MlpHead._from_arch_dict(doc, menu, k, dim)
    raise DimensionMismatch(f"unknown head architecture {arch!r}")


# ------------------------------------------------------------------ inference


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def expected_resolution(p, menu: ResolutionMenu) -> float:
    """Probability-weighted expectation of the menu resolutions."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (menu.k,):
        raise DimensionMismatch(f"probability vector must have length {menu.k}, got {p.shape}")
    return math.fsum(pk * rk for pk, rk in zip(p, menu.entries))


def round_to_supported(r: float, supported: Sequence[int]) -> int:
    """Smallest supported size >= r; clamps to the largest size above it."""
    if not supported:
        raise EmptySupportedSet("supported size list is empty")
    supported = list(supported)
    idx = bisect_left(supported, r)
    if idx == len(supported):
        return supported[-1]
    return supported[idx]


def select_discrete(head, z) -> SufficiencyLabel:
    """Argmax class; ties resolve to the lower resolution."""
    logits = head.logits(z)
    idx = int(np.argmax(logits))
    return SufficiencyLabel(resolution=head.menu.entries[idx], class_index=idx)


def select_continuous(head, z, supported: Sequence[int] | None = None) -> int:
    """Expected resolution under the head's softmax, rounded up to supported."""
    supported = supported if supported is not None else head.menu.supported
    p = softmax(head.logits(z))
    return round_to_supported(expected_resolution(p, head.menu), supported)


# ------------------------------------------------------------------- training


def smoothed_ce_loss(logits, label: int, epsilon: float) -> tuple[float, np.ndarray]:
    """Label-smoothed cross-entropy and its gradient w.r.t. the logits.

    The target distribution is (1 - eps) * onehot(label) + eps / K, so
    the gradient is softmax(logits) - target.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    k = logits.shape[0]
    if not 0 <= label < k:
        raise IndexError(f"label {label} outside [0, {k})")
    q = np.full(k, epsilon / k)
    q[label] += 1.0 - epsilon
    shifted = logits - np.max(logits)
    log_probs = shifted - np.log(np.sum(np.exp(shifted)))
    loss = float(-np.dot(q, log_probs))
    grad = np.exp(log_probs) - q
    return loss, grad


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    train_accuracy: float = 0.0
    val_accuracy: float | None = None
    samples: int = 0
    config: TrainConfig | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "epoch_losses": self.epoch_losses,
            "train_accuracy": self.train_accuracy,
            "samples": self.samples,
        }
        if self.val_accuracy is not None:
            d["val_accuracy"] = self.val_accuracy
        if self.config is not None:
            d["config"] = self.config.to_dict()
        return d


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1**self.t)
            vhat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def __init__(self, shapes, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def _batch_targets(labels: np.ndarray, k: int, epsilon: float) -> np.ndarray:
    q = np.full((labels.shape[0], k), epsilon / k)
    q[np.arange(labels.shape[0]), labels] += 1.0 - epsilon
    return q


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def data_checksum(features: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(labels, dtype="<i8").tobytes())
    return h.hexdigest()


def train_head(
    features,
    labels,
    menu: ResolutionMenu,
    cfg: TrainConfig = TrainConfig(),
    *,
    val_features=None,
    val_labels=None,
):
    """Mini-batch training of the selector head on labeled feature vectors.

    Deterministic for a fixed seed: shuffling, initialization, and the
    per-batch reduction all run in a fixed order.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.size == 0 or y.size == 0:
        raise EmptyDataset("training needs at least one sample")
    if x.ndim != 2:
        raise InconsistentDimensions(f"features must be a (N, D) matrix, got shape {x.shape}")
    if x.shape[0] != y.shape[0]:
        raise InconsistentDimensions(
            f"{x.shape[0]} feature rows vs {y.shape[0]} labels"
        )
    if not np.all(np.isfinite(x)):
        raise InconsistentDimensions("features contain non-finite entries")
    k = menu.k
    if np.any(y < 0) or np.any(y >= k):
        raise InconsistentDimensions(f"labels must be class indices in [0, {k})")

    n, dim = x.shape
    rng = np.random.default_rng(cfg.seed)
    if cfg.hidden_dim > 0:
        h = cfg.hidden_dim
        params = [
            rng.normal(0.0, 1.0 / np.sqrt(dim), size=(h, dim)),
            np.zeros(h),
            rng.normal(0.0, 1.0 / np.sqrt(h), size=(k, h)),
            np.zeros(k),
        ]
        head = MlpHead(*params, menu=menu)
        params = [head.w1, head.b1, head.w2, head.b2]
    else:
        head = ClassifierHead(weights=np.zeros((k, dim)), bias=np.zeros(k), menu=menu)
        params = [head.weights, head.bias]

    opt = _Adam([p.shape for p in params], cfg.learning_rate) if cfg.optimizer == "adam" \
        else _Sgd([p.shape for p in params], cfg.learning_rate)

    sample_weights = None
    if cfg.class_weights is not None:
        if len(cfg.class_weights) != k:
            raise InconsistentDimensions(f"class_weights must have length {k}")
        sample_weights = np.asarray(cfg.class_weights, dtype=np.float64)[y]

    report = TrainReport(samples=n, config=cfg)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            w = sample_weights[idx] if sample_weights is not None else None
            loss = _train_step(head, params, opt, xb, yb, cfg.label_smoothing, w)
            losses.append(loss)
        report.epoch_losses.append(float(np.mean(losses)))

    report.train_accuracy = accuracy(head, x, y)
    if val_features is not None and val_labels is not None:
        report.val_accuracy = accuracy(
            head, np.asarray(val_features, dtype=np.float64), np.asarray(val_labels, dtype=np.int64)
        )
    return head, report


def _forward_batch(head, xb: np.ndarray) -> np.ndarray:
    if isinstance(head, MlpHead):
        hidden = np.maximum(xb @ head.w1.T + head.b1, 0.0)
        return hidden @ head.w2.T + head.b2
    return xb @ head.weights.T + head.bias


def _train_step(head, params, opt, xb, yb, epsilon, sample_weights):
    b = xb.shape[0]
    q = _batch_targets(yb, head.k, epsilon)
    if isinstance(head, MlpHead):
        pre = xb @ head.w1.T + head.b1
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ head.w2.T + head.b2
    else:
        hidden = None
        logits = xb @ head.weights.T + head.bias
    p = _row_softmax(logits)
    log_p = np.log(np.clip(p, 1e-300, None))
    per_sample = -np.sum(q * log_p, axis=1)
    if sample_weights is not None:
        scale = sample_weights / sample_weights.sum()
        loss = float(np.sum(per_sample * scale))
        grad_logits = (p - q) * scale[:, None]
    else:
        loss = float(np.mean(per_sample))
        grad_logits = (p - q) / b
    if isinstance(head, MlpHead):
        grad_w2 = grad_logits.T @ hidden
        grad_b2 = grad_logits.sum(axis=0)
        grad_hidden = (grad_logits @ head.w2) * (pre > 0.0)
        grad_w1 = grad_hidden.T @ xb
        grad_b1 = grad_hidden.sum(axis=0)
        opt.step(params, [grad_w1, grad_b1, grad_w2, grad_b2])
    else:
        grad_w = grad_logits.T @ xb
        grad_b = grad_logits.sum(axis=0)
        opt.step(params, [grad_w, grad_b])
    return loss


def accuracy(head, features: np.ndarray, labels: np.ndarray) -> float:
    logits = _forward_batch(head, np.asarray(features, dtype=np.float64))
    predicted = np.argmax(logits, axis=1)
    return float(np.mean(predicted == np.asarray(labels)))


def predict_probabilities(head, features: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities for a feature matrix."""
    return _row_softmax(_forward_batch(head, np.asarray(features, dtype=np.float64)))
