"""Binary classifiers: a small ReLU MLP and logistic regression.

Both expose the class-1 probability; ties at exactly 0.5 classify as 1.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class ClassifierConfig:
    arch: str = "mlp"  # "mlp" or "logistic"
    hidden_sizes: tuple[int, ...] = (64, 64)
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 3e-3
    weight_decay: float = 1e-4
    optimizer: str = "adam"  # "adam" or "sgd"
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("mlp", "logistic"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 1, batch_size >= 1, learning_rate > 0 required")
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))


class Classifier:
    """A trained binary scorer; parameters are immutable after training."""

    def __init__(self, config: ClassifierConfig, params: list[Tensor], train_accuracy: float):
        self.config = config
        self.params = params
        self.train_accuracy = train_accuracy
        self._weights = [p.data for p in params]  # plain views for the fast path

    @property
    def d(self) -> int:
        return self._weights[0].shape[0]

    def logits_node(self, x: Tensor) -> Tensor:
        """Differentiable forward pass; x is (B, d), result is (B,)."""
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = nm.add(nm.matmul(h, w), b)
            if i < n_layers - 1:
                h = nm.relu(h)
        return nm.sum_(h, axis=1)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected (n, {self.d}) input, got {X.shape}")
        h = X
        n_layers = len(self._weights) // 2
        for i in range(n_layers):
            w, b = self._weights[2 * i], self._weights[2 * i + 1]
            h = h @ w + b
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        z = h[:, 0]
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite logits")
        return z

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.logits(X)
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    # serialization: bit-exact parameter round-trip
    def save(self, path) -> None:
        arrays = {f"p{i}": w for i, w in enumerate(self._weights)}
        meta = json.dumps(
            {
                "version": SERIALIZATION_VERSION,
                "config": _config_dict(self.config),
                "train_accuracy": self.train_accuracy,
            }
        )
        np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "Classifier":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta["version"] != SERIALIZATION_VERSION:
                raise ValueError(f"unsupported model version {meta['version']}")
            n = len([k for k in z.files if k.startswith("p")])
            params = [Tensor(z[f"p{i}"], requires_grad=False) for i in range(n)]
        cfg = ClassifierConfig(**{**meta["config"], "hidden_sizes": tuple(meta["config"]["hidden_sizes"])})
        return cls(cfg, params, meta["train_accuracy"])


def _config_dict(config: ClassifierConfig) -> dict:
    d = asdict(config)
    d["hidden_sizes"] = list(config.hidden_sizes)
    return d


def _init_params(config: ClassifierConfig, d: int, rng: np.random.Generator) -> list[Tensor]:
    sizes = [d, *config.hidden_sizes, 1] if config.arch == "mlp" else [d, 1]
    params = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        scale = np.sqrt(2.0 / fan_in) if i < len(sizes) - 2 else np.sqrt(1.0 / fan_in)
        params.append(Tensor(rng.normal(0.0, scale, size=(fan_in, fan_out)), requires_grad=True))
        params.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return params


def train(config: ClassifierConfig, X_train: np.ndarray, y_train: np.ndarray) -> Classifier:
    """Minimize mean binary cross-entropy by mini-batch updates; seeded."""
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X/y shape mismatch: {X.shape} vs {y.shape}")
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class")

    rng = np.random.default_rng(config.seed)
    params = _init_params(config, X.shape[1], rng)
    model = Classifier(config, params, train_accuracy=0.0)
    if config.optimizer == "adam":
        opt = nm.Adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    else:
        opt = nm.SGD(params, lr=config.learning_rate, weight_decay=config.weight_decay)

    n = X.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb = Tensor(X[idx])
            yb = Tensor(y[idx])
            z = model.logits_node(xb)
            # bce with logits: mean(softplus(z) - z*y)
            loss = nm.mean(nm.sub(nm.softplus(z), nm.mul(z, yb)))
            opt.zero_grad()
            nm.backward(loss)
            opt.step()

    # optimizer steps rebind p.data, so refresh the fast-path views
    model._weights = [p.data for p in params]
    model.train_accuracy = float(np.mean(model.predict(X) == y_train))
    return model
