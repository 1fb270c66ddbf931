"""Counterfactual generation.

The robust generator optimizes perturbation and consensus level jointly:
minimize ||delta||_1 + alpha * [tau - log p(x0 + delta | s)]+ over delta and
s, with s projected back into its box after every step. The non-robust
baseline instead conditions a flow on the class label and adds an explicit
classifier cross-entropy term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .classifier import Classifier
from .flow import ConditionalFlow
from .numerics import Tensor


@dataclass(frozen=True)
class CroceConfig:
    gamma: float
    alpha: float = 5.0
    steps: int = 2000
    step_size: float = 1e-2
    optimizer: str = "plain_gd"  # "plain_gd" or "adam"
    # plain_gd clips each row's joint (delta, s) gradient to this L2 norm: the
    # flow's log-density gradient can exceed 1e4 in its tails, where a literal
    # eta-step diverges. None disables clipping.
    grad_clip: float | None = 1.0
    clamp_x: bool = False  # optionally keep x_cf inside [0, 1]^d
    # descent from delta=0 can stall in an infeasible local density maximum;
    # rows whose hinge is still open at the end get one more run initialized
    # at a plausible flow sample, and the run with the lower final objective
    # wins. 0 disables the restart.
    restarts: int = 1
    restart_samples: int = 64

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.steps < 1 or self.step_size <= 0:
            raise ValueError("steps >= 1 and step_size > 0 required")
        if self.optimizer not in ("plain_gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.restarts < 0 or self.restart_samples < 1:
            raise ValueError("restarts >= 0 and restart_samples >= 1 required")


@dataclass(frozen=True)
class BaselineConfig:
    lam: float = 50.0
    steps: int = 2000
    step_size: float = 1e-2
    optimizer: str = "plain_gd"
    grad_clip: float | None = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass
class CounterfactualResult:
    x0: np.ndarray
    delta: np.ndarray
    s_star: float
    target_class: int
    gamma: float | None
    alpha: float | None
    loss_trace: np.ndarray  # objective value at each of the T steps
    final_loss: float
    hinge_active: bool
    s_trace: np.ndarray | None = None  # consensus iterate after each projection

    @property
    def x_cf(self) -> np.ndarray:
        return self.x0 + self.delta


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


class _BoxAdam:
    """Adam state for the (delta, s) variables of one batched run."""

    def __init__(self, shapes, lr):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros(sh) for sh in shapes]
        self.v = [np.zeros(sh) for sh in shapes]

    def direction(self, grads):
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = 0.9 * self.m[i] + 0.1 * g
            self.v[i] = 0.999 * self.v[i] + 0.001 * g * g
            m_hat = self.m[i] / (1.0 - 0.9**self.t)
            v_hat = self.v[i] / (1.0 - 0.999**self.t)
            out.append(self.lr * m_hat / (np.sqrt(v_hat) + 1e-8))
        return out


def _s_box(targets: np.ndarray, gammas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(targets == 1, gammas, 0.0)
    hi = np.where(targets == 1, 1.0, 1.0 - gammas)
    return lo, hi


def _plausible_init(flow: ConditionalFlow, X0: np.ndarray, s_init: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Initial delta pointing at the nearest plausible flow sample."""
    B, d = X0.shape
    # one sample call per row with a shared seed keeps every row's candidate
    # set independent of which other rows happen to share the batch
    samples = np.stack([flow.sample(m, np.full(m, sv), seed=seed) for sv in s_init])
    logp = flow.log_prob(samples.reshape(-1, d), np.repeat(s_init, m)).reshape(B, m)
    l1 = np.abs(samples - X0[:, None, :]).sum(axis=2)
    score = np.where(logp >= flow.tau, l1, np.inf)
    pick = score.argmin(axis=1)
    none = ~np.isfinite(score.min(axis=1))  # no sample clears tau: take the densest
    pick[none] = logp[none].argmax(axis=1)
    return samples[np.arange(B), pick] - X0


def _descend(flow, X0, targets, gammas, alphas, config, delta0, s0):
    """One clipped (sub)gradient run from the given (delta, s) initialization."""
    B, d = X0.shape
    lo, hi = _s_box(targets, gammas)
    delta = delta0.copy()
    s = np.clip(s0, lo, hi)
    eta = config.step_size
    adam = _BoxAdam([(B, d), (B,)], eta) if config.optimizer == "adam" else None
    alpha_t = Tensor(alphas)
    x0_t = Tensor(X0)
    tau_t = Tensor(flow.tau)

    def objective(delta_arr, s_arr, with_grad):
        delta_t = Tensor(delta_arr, requires_grad=with_grad)
        s_t = Tensor(s_arr[:, None], requires_grad=with_grad)
        x = nm.add(x0_t, delta_t)
        logp = flow.log_prob_nodes(x, s_t)
        hinge = nm.relu(nm.sub(tau_t, logp))
        per_row = nm.add(nm.row_sum(nm.abs_(delta_t)), nm.mul(alpha_t, hinge))
        if with_grad:
            nm.backward(nm.sum_(per_row))
            return per_row.data, hinge.data, delta_t.grad, s_t.grad[:, 0]
        return per_row.data, hinge.data, None, None

    trace = np.empty((config.steps, B))
    strace = np.empty((config.steps, B))
    for step in range(config.steps):
        per_row, _, g_delta, g_s = objective(delta, s, with_grad=True)
        if not np.all(np.isfinite(per_row)):
            raise NonFiniteLossError(step)
        trace[step] = per_row
        # a pinned s contributes nothing to the update, so drop its gradient
        # before clipping instead of letting it eat the step budget
        g_s = np.where(((s <= lo) & (g_s > 0)) | ((s >= hi) & (g_s < 0)), 0.0, g_s)
        if adam is not None:
            d_delta, d_s = adam.direction([g_delta, g_s])
        else:
            if config.grad_clip is not None:
                norm = np.sqrt((g_delta**2).sum(axis=1) + g_s**2)
                scale = config.grad_clip / np.maximum(norm, config.grad_clip)
                g_delta = g_delta * scale[:, None]
                g_s = g_s * scale
            d_delta, d_s = eta * g_delta, eta * g_s
        delta = delta - d_delta
        if config.clamp_x:
            # projection keeping x_cf = x0 + delta inside [0, 1]^d
            delta = np.clip(X0 + delta, 0.0, 1.0) - X0
        s = np.clip(s - d_s, lo, hi)
        strace[step] = s

    final_loss, final_hinge, _, _ = objective(delta, s, with_grad=False)
    return delta, s, trace, strace, final_loss, final_hinge


def generate_croce_batch(
    flow: ConditionalFlow,
    X0: np.ndarray,
    targets: np.ndarray,
    gammas: np.ndarray | float,
    config: CroceConfig,
    alphas: np.ndarray | float | None = None,
) -> list[CounterfactualResult]:
    """Run the joint (delta, s) optimization for a batch of instances.

    Rows are independent: each carries its own target class, gamma and alpha,
    so distinct robustness levels can share one vectorized run. Returns
    results in input order.
    """
    if flow.tau is None:
        raise ValueError("flow has no plausibility threshold; fit it first")
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    B, d = X0.shape
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (B,)).copy()
    gammas = np.broadcast_to(np.asarray(gammas, dtype=np.float64), (B,)).copy()
    alpha = config.alpha if alphas is None else alphas
    alphas = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (B,)).copy()

    s0 = np.where(targets == 1, gammas, 1.0 - gammas).astype(np.float64)
    delta, s, trace, strace, final_loss, final_hinge = _descend(
        flow, X0, targets, gammas, alphas, config, np.zeros_like(X0), s0
    )
    for attempt in range(config.restarts):
        stuck = np.flatnonzero(final_hinge > 0.0)
        if stuck.size == 0:
            break
        d0 = _plausible_init(flow, X0[stuck], s0[stuck], config.restart_samples, seed=attempt)
        sub = _descend(
            flow, X0[stuck], targets[stuck], gammas[stuck], alphas[stuck], config, d0, s0[stuck]
        )
        better = sub[4] < final_loss[stuck]
        idx = stuck[better]
        delta[idx] = sub[0][better]
        s[idx] = sub[1][better]
        trace[:, idx] = sub[2][:, better]
        strace[:, idx] = sub[3][:, better]
        final_loss[idx] = sub[4][better]
        final_hinge[idx] = sub[5][better]

    return [
        CounterfactualResult(
            x0=X0[i].copy(),
            delta=delta[i].copy(),
            s_star=float(s[i]),
            target_class=int(targets[i]),
            gamma=float(gammas[i]),
            alpha=float(alphas[i]),
            loss_trace=trace[:, i].copy(),
            final_loss=float(final_loss[i]),
            hinge_active=bool(final_hinge[i] > 0.0),
            s_trace=strace[:, i].copy(),
        )
        for i in range(B)
    ]


def generate_croce(
    flow: ConditionalFlow, x0: np.ndarray, target_class: int, config: CroceConfig
) -> CounterfactualResult:
    return generate_croce_batch(flow, np.atleast_2d(x0), target_class, config.gamma, config)[0]


def generate_baseline_batch(
    flow_cc: ConditionalFlow,
    classifier: Classifier,
    X0: np.ndarray,
    targets: np.ndarray,
    config: BaselineConfig,
) -> list[CounterfactualResult]:
    """Plausibility baseline: L1 + lambda * (cross-entropy + density hinge).

    The flow is conditioned on the class label and the hinge uses the
    per-class plausibility threshold.
    """
    if flow_cc.tau_per_class is None:
        raise ValueError("class-conditional flow has no per-class thresholds")
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    B, d = X0.shape
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (B,)).copy()
    cond = targets.astype(np.float64)[:, None]
    taus = np.array([flow_cc.tau_per_class[int(c)] for c in targets])

    delta = np.zeros_like(X0)
    eta = config.step_size
    adam = _BoxAdam([(B, d)], eta) if config.optimizer == "adam" else None
    x0_t = Tensor(X0)
    cond_t = Tensor(cond)
    y_t = Tensor(targets.astype(np.float64))
    tau_t = Tensor(taus)
    lam_t = Tensor(config.lam)

    def objective(delta_arr, with_grad):
        delta_t = Tensor(delta_arr, requires_grad=with_grad)
        x = nm.add(x0_t, delta_t)
        z = classifier.logits_node(x)
        bce = nm.sub(nm.softplus(z), nm.mul(z, y_t))
        hinge = nm.relu(nm.sub(tau_t, flow_cc.log_prob_nodes(x, cond_t)))
        per_row = nm.add(nm.row_sum(nm.abs_(delta_t)), nm.mul(lam_t, nm.add(bce, hinge)))
        if with_grad:
            nm.backward(nm.sum_(per_row))
            return per_row.data, hinge.data, delta_t.grad
        return per_row.data, hinge.data, None

    trace = np.empty((config.steps, B))
    for step in range(config.steps):
        per_row, _, g_delta = objective(delta, with_grad=True)
        if not np.all(np.isfinite(per_row)):
            raise NonFiniteLossError(step)
        trace[step] = per_row
        if adam is not None:
            d_delta = adam.direction([g_delta])[0]
        else:
            if config.grad_clip is not None:
                norm = np.sqrt((g_delta**2).sum(axis=1))
                g_delta = g_delta * (config.grad_clip / np.maximum(norm, config.grad_clip))[:, None]
            d_delta = eta * g_delta
        delta = delta - d_delta

    final_loss, final_hinge, _ = objective(delta, with_grad=False)
    return [
        CounterfactualResult(
            x0=X0[i].copy(),
            delta=delta[i].copy(),
            s_star=float(targets[i]),
            target_class=int(targets[i]),
            gamma=None,
            alpha=None,
            loss_trace=trace[:, i].copy(),
            final_loss=float(final_loss[i]),
            hinge_active=bool(final_hinge[i] > 0.0),
        )
        for i in range(B)
    ]


def generate_baseline(
    flow_cc: ConditionalFlow,
    classifier: Classifier,
    x0: np.ndarray,
    target_class: int,
    config: BaselineConfig,
) -> CounterfactualResult:
    return generate_baseline_batch(flow_cc, classifier, np.atleast_2d(x0), target_class, config)[0]


def select_explanation_targets(classifier: Classifier, X_test: np.ndarray) -> list[tuple[np.ndarray, int]]:
    """Every test instance is explained toward the opposite predicted class."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=np.float64))
    preds = classifier.predict(X_test)
    return [(X_test[i].copy(), int(1 - preds[i])) for i in range(X_test.shape[0])]
