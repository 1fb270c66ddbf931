"""Conditional masked autoregressive flow over (instance, consensus) pairs.

Density evaluation runs in a single pass: each layer predicts per-dimension
(mu_j, log sigma_j) from the already-seen dimensions plus the scalar
conditioner, so the Jacobian is triangular and the log-determinant is the sum
of per-dimension log-scales. Sampling inverts the stack dimension by
dimension.
"""

from __future__ import annotations

import copy
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor

SERIALIZATION_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)

PARAM_NAMES = ("W1", "b1", "U1", "W2", "b2", "U2", "Vm", "cm", "Um", "Vs", "cs", "Us")


@dataclass(frozen=True)
class FlowConfig:
    n_layers: int = 5
    hidden: int = 128
    log_scale_cap: float = 5.0
    epochs: int = 600
    batch_size: int = 128
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    patience: int = 80
    dequant_sigma: float = 0.0
    # How the scalar consensus enters the conditioner. The right choice
    # depends on how the training consensus values are distributed:
    #   "sigmoid" - sigmoid(gain * (s - 1/2)). When consensus is atomic at
    #     {0, 1} (well-separated classes) the raw-s interpolation at interior
    #     levels is arbitrary; saturating pulls levels well above (below) 1/2
    #     onto the conditional where the ensemble actually agrees.
    #   "logit"   - log(s / (1 - s)) with s clamped to [eps, 1 - eps]. When
    #     consensus is genuinely continuous this stretches the extremes apart
    #     so the s ~ 1 conditional stays sharp instead of pooling with
    #     mid-range levels.
    #   "none"    - raw s.
    cond_embed: str = "sigmoid"
    cond_embed_gain: float = 12.0
    cond_embed_eps: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.cond_embed not in ("none", "sigmoid", "logit"):
            raise ValueError(f"unknown cond_embed {self.cond_embed!r}")


class MadeLayer:
    """One masked autoregressive transform with two hidden layers.

    The conditioner enters every hidden layer and the outputs through
    unmasked projections. Output scales are capped: sigma_j =
    exp(tanh(raw_j) * cap), keeping the layer invertible with bounded
    conditioning.
    """

    def __init__(self, d: int, hidden: int, order: np.ndarray, cap: float, rng: np.random.Generator, n_cond: int = 1):
        self.d = d
        self.hidden = hidden
        self.cap = cap
        self.n_cond = n_cond
        self.order = np.asarray(order, dtype=np.int64)  # order[i] in 1..d

        h_deg = (np.arange(hidden) % max(d - 1, 1)) + 1 if d > 1 else np.zeros(hidden, dtype=np.int64)
        self.mask1 = (h_deg[None, :] >= self.order[:, None]).astype(np.float64)
        self.mask2 = (h_deg[None, :] >= h_deg[:, None]).astype(np.float64)
        self.mask_out = (self.order[None, :] > h_deg[:, None]).astype(np.float64)

        def p(arr):
            return Tensor(arr, requires_grad=True)

        # hidden paths random, output heads zero: the untrained layer is the identity map
        self.W1 = p(rng.normal(0.0, math.sqrt(2.0 / max(d, 1)), size=(d, hidden)))
        self.b1 = p(np.zeros(hidden))
        self.U1 = p(rng.normal(0.0, 0.1, size=(n_cond, hidden)))
        self.W2 = p(rng.normal(0.0, math.sqrt(2.0 / hidden), size=(hidden, hidden)))
        self.b2 = p(np.zeros(hidden))
        self.U2 = p(rng.normal(0.0, 0.1, size=(n_cond, hidden)))
        self.Vm = p(np.zeros((hidden, d)))
        self.cm = p(np.zeros(d))
        self.Um = p(np.zeros((n_cond, d)))
        self.Vs = p(np.zeros((hidden, d)))
        self.cs = p(np.zeros(d))
        self.Us = p(np.zeros((n_cond, d)))

    @property
    def params(self) -> list[Tensor]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def mu_logsig(self, x: Tensor, s: Tensor) -> tuple[Tensor, Tensor]:
        h1 = nm.relu(nm.add(nm.add(nm.matmul(x, nm.mul(self.W1, Tensor(self.mask1))), nm.matmul(s, self.U1)), self.b1))
        h2 = nm.relu(nm.add(nm.add(nm.matmul(h1, nm.mul(self.W2, Tensor(self.mask2))), nm.matmul(s, self.U2)), self.b2))
        mu = nm.add(nm.add(nm.matmul(h2, nm.mul(self.Vm, Tensor(self.mask_out))), nm.matmul(s, self.Um)), self.cm)
        raw = nm.add(nm.add(nm.matmul(h2, nm.mul(self.Vs, Tensor(self.mask_out))), nm.matmul(s, self.Us)), self.cs)
        logsig = nm.mul(nm.tanh(raw), Tensor(self.cap))
        return mu, logsig

    def np_mu_logsig(self, x: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h1 = np.maximum(x @ (self.W1.data * self.mask1) + s @ self.U1.data + self.b1.data, 0.0)
        h2 = np.maximum(h1 @ (self.W2.data * self.mask2) + s @ self.U2.data + self.b2.data, 0.0)
        mu = h2 @ (self.Vm.data * self.mask_out) + s @ self.Um.data + self.cm.data
        raw = h2 @ (self.Vs.data * self.mask_out) + s @ self.Us.data + self.cs.data
        return mu, np.tanh(raw) * self.cap

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).data for name in PARAM_NAMES}


class ConditionalFlow:
    """Stack of MADE layers with alternating (reversed) input orderings."""

    def __init__(self, d: int, config: FlowConfig, rng: np.random.Generator | None = None):
        self.d = d
        self.config = config
        self.tau: float | None = None
        self.tau_per_class: dict[int, float] | None = None
        rng = rng or np.random.default_rng(config.seed)
        natural = np.arange(1, d + 1)
        self.layers = [
            MadeLayer(d, config.hidden, natural if i % 2 == 0 else natural[::-1], config.log_scale_cap, rng)
            for i in range(config.n_layers)
        ]

    @property
    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]

    @staticmethod
    def _as_cond(s, n: int) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if s.ndim == 0:
            s = np.full((n, 1), float(s))
        elif s.ndim == 1:
            s = s[:, None]
        if s.shape != (n, 1):
            raise ValueError(f"conditioner shape {s.shape} does not match batch {n}")
        return s

    def _embed_nodes(self, s: Tensor) -> Tensor:
        kind, gain = self.config.cond_embed, self.config.cond_embed_gain
        if kind == "none" or (kind == "sigmoid" and gain <= 0):
            return s
        if kind == "sigmoid":
            return nm.sigmoid(nm.mul(nm.sub(s, Tensor(0.5)), Tensor(gain)))
        eps = self.config.cond_embed_eps
        sc = nm.clamp(s, eps, 1.0 - eps)
        return nm.sub(nm.log(sc), nm.log(nm.sub(Tensor(1.0), sc)))

    def _embed(self, s: np.ndarray) -> np.ndarray:
        kind, gain = self.config.cond_embed, self.config.cond_embed_gain
        if kind == "none" or (kind == "sigmoid" and gain <= 0):
            return s
        if kind == "sigmoid":
            z = gain * (s - 0.5)
            e = np.exp(-np.abs(z))
            return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        eps = self.config.cond_embed_eps
        sc = np.clip(s, eps, 1.0 - eps)
        return np.log(sc) - np.log(1.0 - sc)

    def log_prob_nodes(self, x: Tensor, s: Tensor) -> Tensor:
        """Differentiable log p(x | s) per row; x is (B, d), s is (B, 1)."""
        u = x
        s = self._embed_nodes(s)
        total_logsig = None
        for layer in self.layers:
            mu, logsig = layer.mu_logsig(u, s)
            u = nm.mul(nm.sub(u, mu), nm.exp(nm.neg(logsig)))
            ls = nm.row_sum(logsig)
            total_logsig = ls if total_logsig is None else nm.add(total_logsig, ls)
        sq = nm.mul(nm.row_sum(nm.mul(u, u)), Tensor(-0.5))
        const = Tensor(-0.5 * self.d * LOG_2PI)
        return nm.sub(nm.add(sq, const), total_logsig)

    def log_prob(self, X: np.ndarray, s) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        cond = self._as_cond(s, X.shape[0])
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(cond))):
            raise ValueError("non-finite inputs to log_prob")
        return self.log_prob_nodes(Tensor(X), Tensor(cond)).data

    def transform_to_noise(self, X: np.ndarray, s) -> tuple[np.ndarray, np.ndarray]:
        """Map data to base-space noise; also return the summed log-scales."""
        u = np.asarray(X, dtype=np.float64)
        cond = self._embed(self._as_cond(s, u.shape[0]))
        total = np.zeros(u.shape[0])
        for layer in self.layers:
            mu, logsig = layer.np_mu_logsig(u, cond)
            u = (u - mu) * np.exp(-logsig)
            total = total + logsig.sum(axis=1)
        return u, total

    def transform_to_data(self, Z: np.ndarray, s) -> np.ndarray:
        """Generation direction: invert the stack, one dimension at a time."""
        u = np.asarray(Z, dtype=np.float64)
        cond = self._embed(self._as_cond(s, u.shape[0]))
        for layer in reversed(self.layers):
            x = np.zeros_like(u)
            for pos in range(1, self.d + 1):
                mu, logsig = layer.np_mu_logsig(x, cond)
                j = int(np.flatnonzero(layer.order == pos)[0])
                x[:, j] = mu[:, j] + u[:, j] * np.exp(logsig[:, j])
            u = x
        return u

    def sample(self, n: int, s, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.d))
        return self.transform_to_data(z, self._as_cond(s, n))

    # serialization: bit-exact round-trip including masks and orderings
    def save(self, path) -> None:
        arrays = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.state_arrays().items():
                arrays[f"l{i}_{name}"] = arr
            arrays[f"l{i}_order"] = layer.order
        meta = {
            "version": SERIALIZATION_VERSION,
            "d": self.d,
            "config": asdict(self.config),
            "tau": self.tau,
            "tau_per_class": {str(k): v for k, v in (self.tau_per_class or {}).items()} or None,
        }
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "ConditionalFlow":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta["version"] != SERIALIZATION_VERSION:
                raise ValueError(f"unsupported flow version {meta['version']}")
            config = FlowConfig(**meta["config"])
            flow = cls(meta["d"], config)
            for i, layer in enumerate(flow.layers):
                layer.order = z[f"l{i}_order"]
                h_deg = (
                    (np.arange(config.hidden) % max(meta["d"] - 1, 1)) + 1
                    if meta["d"] > 1
                    else np.zeros(config.hidden, dtype=np.int64)
                )
                layer.mask1 = (h_deg[None, :] >= layer.order[:, None]).astype(np.float64)
                layer.mask_out = (layer.order[None, :] > h_deg[:, None]).astype(np.float64)
                for name in PARAM_NAMES:
                    getattr(layer, name).data = z[f"l{i}_{name}"]
        flow.tau = meta["tau"]
        if meta["tau_per_class"] is not None:
            flow.tau_per_class = {int(k): v for k, v in meta["tau_per_class"].items()}
        return flow


def threshold_tau(flow: ConditionalFlow, X_train: np.ndarray, s_train) -> float:
    """Median conditional log-likelihood of the training pairs."""
    X_train = np.asarray(X_train, dtype=np.float64)
    if X_train.size == 0:
        raise ValueError("cannot compute a threshold from no rows")
    return float(np.median(flow.log_prob(X_train, s_train)))


def threshold_tau_by_class(flow: ConditionalFlow, X_train: np.ndarray, labels: np.ndarray) -> dict[int, float]:
    """Per-class median log-likelihood for a label-conditioned flow."""
    labels = np.asarray(labels, dtype=np.int64)
    out = {}
    for c in np.unique(labels):
        rows = labels == c
        out[int(c)] = threshold_tau(flow, X_train[rows], labels[rows].astype(np.float64))
    return out


def _snapshot(flow: ConditionalFlow) -> list[np.ndarray]:
    return [p.data.copy() for p in flow.params]


def _restore(flow: ConditionalFlow, arrays: list[np.ndarray]) -> None:
    for p, arr in zip(flow.params, arrays):
        p.data = arr.copy()


def fit(X_train: np.ndarray, s_train, config: FlowConfig | None = None) -> ConditionalFlow:
    """Maximize mean conditional log-likelihood by mini-batch ascent.

    A seed-derived holdout (val_fraction) drives early stopping (patience in
    epochs, best parameters restored). val_fraction=0 disables the holdout:
    the flow trains on every row for the full epoch budget, which trades
    held-out likelihood for sharper conditionals. tau is set afterwards to the
    median log-likelihood over all provided rows, each conditioned on its own
    consensus value.
    """
    config = config or FlowConfig()
    X = np.asarray(X_train, dtype=np.float64)
    n = X.shape[0]
    if n < 2 * config.batch_size:
        raise ValueError(f"need at least {2 * config.batch_size} rows to fit, got {n}")
    cond = ConditionalFlow._as_cond(s_train, n)

    rng = np.random.default_rng(config.seed)
    flow = ConditionalFlow(X.shape[1], config, rng)
    opt = nm.Adam(flow.params, lr=config.learning_rate)

    n_val = int(round(config.val_fraction * n)) if config.val_fraction > 0 else 0
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_fit, c_fit = X[train_idx], cond[train_idx]
    X_val, c_val = X[val_idx], cond[val_idx]

    best_nll = np.inf
    best_params = _snapshot(flow)
    stale = 0
    for epoch in range(config.epochs):
        opt.lr = nm.cosine_lr(config.learning_rate, epoch, config.epochs)
        order = rng.permutation(len(X_fit))
        for start in range(0, len(X_fit), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = X_fit[idx]
            if config.dequant_sigma > 0:
                xb = xb + rng.normal(0.0, config.dequant_sigma, size=xb.shape)
            loss = nm.mul(nm.mean(flow.log_prob_nodes(Tensor(xb), Tensor(c_fit[idx]))), Tensor(-1.0))
            opt.zero_grad()
            nm.backward(loss)
            opt.step()
        if n_val == 0:
            continue
        val_nll = float(-np.mean(flow.log_prob(X_val, c_val)))
        if val_nll < best_nll - 1e-6:
            best_nll = val_nll
            best_params = _snapshot(flow)
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    if n_val > 0:
        _restore(flow, best_params)

    flow.tau = threshold_tau(flow, X, cond)
    return flow
