"""Empirical dual objective, its exact gradient, Adam, and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import IO, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from . import gmm
from .divergence import DivergenceSpec, conjugate, conjugate_deriv
from .errors import DimensionError, NonFiniteError, ObjectiveError
from .gmm import GaussianMixture
from .plan import PlanModel, _adjusted_log_weights


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.05
    div1: DivergenceSpec = field(default_factory=DivergenceSpec)
    div2: DivergenceSpec = field(default_factory=DivergenceSpec)
    K: int = 5
    L: int = 5
    learning_rate: float = 3e-4
    steps: int = 20000
    batch_size: int = 128
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # Multiplier on the log-weight step sizes. None means 1 / epsilon, i.e. Adam
    # effectively steps in epsilon * log-weight, the scale on which log-weights enter
    # the potentials.
    log_weight_lr_scale: Optional[float] = None

    def __post_init__(self):
        for name in ("epsilon", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("K", "L", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if int(self.steps) < 0:
            raise ValueError("steps must be non-negative")
        if self.log_weight_lr_scale is not None and not self.log_weight_lr_scale > 0:
            raise ValueError("log_weight_lr_scale must be positive")

    @property
    def effective_log_weight_lr_scale(self) -> float:
        if self.log_weight_lr_scale is None:
            return 1.0 / self.epsilon
        return float(self.log_weight_lr_scale)


@dataclass(frozen=True, eq=False)
class TrainState:
    plan: PlanModel
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, plan: PlanModel) -> "TrainState":
        n = plan.packed().size
        return cls(plan, np.zeros(n), np.zeros(n), 0)


def _as_batch(batch, dim, side):
    arr = np.asarray(batch, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim or arr.shape[0] < 1:
        raise DimensionError(f"{side} batch must have shape (n >= 1, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{side} batch contains non-finite values")
    return arr


def _checked_conjugate(spec, t, side):
    vals = conjugate(spec, t)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ObjectiveError(
            f"conjugate overflow for {side}-sample {i} (argument {t[i]:.6g}, {spec.kind}, tau={spec.tau})",
            index=i,
            side=side,
        )
    return vals


def _dual_arguments(plan: PlanModel, x, y):
    """Pieces shared by the value and the gradient."""
    eps = plan.epsilon
    comp_u = gmm.component_log_densities(plan.u, eps, x)
    adj = _adjusted_log_weights(plan, x)
    comp_v = gmm.component_log_densities(plan.v, eps, y)
    log_u = logsumexp(comp_u, axis=1)
    log_c = logsumexp(adj, axis=1)
    log_v = logsumexp(comp_v, axis=1)
    a = -eps * (log_u - log_c) - 0.5 * np.sum(x**2, axis=1)
    b = -eps * log_v - 0.5 * np.sum(y**2, axis=1)
    return comp_u, adj, comp_v, a, b


def objective(plan: PlanModel, batch_x, batch_y) -> float:
    """Monte-Carlo estimate of the dual objective on a pair of batches.

    ``mean f1*(-phi(x)) + mean f2*(-psi(y)) + eps |u|``, where ``phi`` and
    ``psi`` are the potentials induced by the plan parameters.
    """
    x = _as_batch(batch_x, plan.dim, "x")
    y = _as_batch(batch_y, plan.dim, "y")
    _, _, _, a, b = _dual_arguments(plan, x, y)
    t1 = _checked_conjugate(plan.div1, a, "x")
    t2 = _checked_conjugate(plan.div2, b, "y")
    return float(np.mean(t1) + np.mean(t2) + plan.epsilon * gmm.total_mass(plan.u))


def _mixture_grad(m: GaussianMixture, eps, pts, resp, coef):
    """Gradient of ``sum_n coef_n log m(pts_n)`` in packed mixture coordinates."""
    w = coef[:, None] * resp  # (n, C)
    covs = eps * m.diag_covs
    diff = pts[:, None, :] - m.means[None]  # (n, C, d)
    g_lw = w.sum(axis=0)
    g_mu = np.einsum("nc,ncd->cd", w, diff) / covs
    g_ls = np.einsum("nc,ncd->cd", w, 0.5 * diff**2 / covs[None] - 0.5)
    return np.concatenate([g_lw, g_mu.ravel(), g_ls.ravel()])


def objective_and_grad(plan: PlanModel, batch_x, batch_y):
    """Objective value and its gradient w.r.t. ``plan.packed()``."""
    x = _as_batch(batch_x, plan.dim, "x")
    y = _as_batch(batch_y, plan.dim, "y")
    eps = plan.epsilon
    comp_u, adj, comp_v, a, b = _dual_arguments(plan, x, y)
    t1 = _checked_conjugate(plan.div1, a, "x")
    t2 = _checked_conjugate(plan.div2, b, "y")
    mass = gmm.total_mass(plan.u)
    value = float(np.mean(t1) + np.mean(t2) + eps * mass)

    w1 = conjugate_deriv(plan.div1, a) / len(x)
    w2 = conjugate_deriv(plan.div2, b) / len(y)

    # v block: a depends on v through +eps log c(x), b through -eps log v(y)
    pi = softmax(adj, axis=1)
    wp = w1[:, None] * pi
    g_v_c = np.concatenate(
        [
            eps * wp.sum(axis=0),
            (wp.T @ x).ravel(),
            (0.5 * plan.v.diag_covs * (wp.T @ x**2)).ravel(),
        ]
    )
    g_v_y = _mixture_grad(plan.v, eps, y, softmax(comp_v, axis=1), -eps * w2)
    g_v = g_v_c + g_v_y

    # u block: a depends on u through -eps log u(x); plus eps * sum(beta)
    g_u = _mixture_grad(plan.u, eps, x, softmax(comp_u, axis=1), -eps * w1)
    g_u[: plan.L] += eps * np.exp(plan.u.log_weights)
    return value, np.concatenate([g_v, g_u])


def adam_step(state: TrainState, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8) -> TrainState:
    """One bias-corrected Adam update; returns a new state."""
    g = np.asarray(grad, dtype=float)
    if g.shape != state.m.shape:
        raise DimensionError(f"gradient length {g.size} != parameter length {state.m.size}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient passed to adam_step")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    params = state.plan.packed() - lr * m_hat / (np.sqrt(v_hat) + eps)
    return TrainState(state.plan.with_packed(params), m, v, t)


def init_mixture(samples: np.ndarray, n_components: int, rng: np.random.Generator) -> GaussianMixture:
    """Uniform weights, unit pre-scaling covariances, means at distinct data points."""
    n, d = samples.shape
    idx = rng.choice(n, size=n_components, replace=n < n_components)
    return GaussianMixture(
        np.full(n_components, -np.log(n_components)),
        samples[idx].copy(),
        np.zeros((n_components, d)),
    )


def init_plan(config: SolverConfig, samples_x, samples_y, rng: np.random.Generator) -> PlanModel:
    v = init_mixture(np.asarray(samples_y, dtype=float), config.K, rng)
    u = init_mixture(np.asarray(samples_x, dtype=float), config.L, rng)
    return PlanModel(config.epsilon, v, u, config.div1, config.div2)


def train(
    config: SolverConfig,
    samples_x,
    samples_y,
    init: Optional[PlanModel] = None,
    progress: Optional[IO[str]] = None,
    history: Optional[list] = None,
) -> PlanModel:
    """Minibatch Adam on the empirical objective.

    Batches are drawn with replacement from each dataset at every step using
    ``numpy.random.default_rng(config.seed)``.  Per-step objective values go to
    ``progress`` as ``step,objective`` lines and/or are appended to ``history``.
    """
    xs = np.asarray(samples_x, dtype=float)
    ys = np.asarray(samples_y, dtype=float)
    if xs.ndim != 2 or ys.ndim != 2 or len(xs) == 0 or len(ys) == 0:
        raise DimensionError("datasets must be non-empty 2-D arrays")
    if xs.shape[1] != ys.shape[1]:
        raise DimensionError(f"source dimension {xs.shape[1]} != target dimension {ys.shape[1]}")
    rng = np.random.default_rng(config.seed)
    if init is None:
        plan = init_plan(config, xs, ys, rng)
    else:
        if init.dim != xs.shape[1]:
            raise DimensionError(f"initial plan has dimension {init.dim}, data has {xs.shape[1]}")
        plan = init
    state = TrainState.fresh(plan)
    lr = np.full(plan.packed().size, config.learning_rate)
    nv = gmm.n_params(plan.dim, plan.K)
    scale = config.effective_log_weight_lr_scale
    lr[: plan.K] *= scale
    lr[nv : nv + plan.L] *= scale
    for step in range(int(config.steps)):
        bx = xs[rng.integers(len(xs), size=config.batch_size)]
        by = ys[rng.integers(len(ys), size=config.batch_size)]
        try:
            value, grad = objective_and_grad(state.plan, bx, by)
        except ObjectiveError as err:
            err.step = step
            raise
        if progress is not None:
            progress.write(f"{step},{value!r}\n")
        if history is not None:
            history.append(value)
        state = adam_step(
            state, grad, lr, config.adam_beta1, config.adam_beta2, config.adam_eps
        )
    return state.plan


def with_config(config: SolverConfig, **changes) -> SolverConfig:
    return replace(config, **changes)
