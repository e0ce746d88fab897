"""The parametrized transport plan ``u(x) * gamma(y | x)``.

``v`` (K components) shapes the conditionals and ``u`` (L components) is the
unnormalized left marginal.  With diagonal ``S_k``, the normalizer
``c(x) = int exp(<x, y> / eps) v(y) dy`` and the conditional plan are again
Gaussian mixtures, which is what makes everything here closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import gmm
from .divergence import DivergenceSpec
from .errors import DimensionError
from .gmm import GaussianMixture


@dataclass(frozen=True, eq=False)
class PlanModel:
    epsilon: float
    v: GaussianMixture
    u: GaussianMixture
    div1: DivergenceSpec = field(default_factory=DivergenceSpec)
    div2: DivergenceSpec = field(default_factory=DivergenceSpec)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.v.dim != self.u.dim:
            raise DimensionError(f"v has dimension {self.v.dim} but u has {self.u.dim}")

    @property
    def dim(self) -> int:
        return self.v.dim

    @property
    def K(self) -> int:
        return self.v.n_components

    @property
    def L(self) -> int:
        return self.u.n_components

    def packed(self) -> np.ndarray:
        """Unconstrained parameters, ``v`` block first then ``u``."""
        return np.concatenate([gmm.pack_params(self.v), gmm.pack_params(self.u)])

    def with_packed(self, params) -> "PlanModel":
        params = np.asarray(params, dtype=float).ravel()
        nv = gmm.n_params(self.dim, self.K)
        if params.size != nv + gmm.n_params(self.dim, self.L):
            raise DimensionError(f"packed plan vector has wrong length {params.size}")
        return PlanModel(
            self.epsilon,
            gmm.unpack_params(params[:nv], self.dim, self.K),
            gmm.unpack_params(params[nv:], self.dim, self.L),
            self.div1,
            self.div2,
        )

    def __eq__(self, other):
        if not isinstance(other, PlanModel):
            return NotImplemented
        return (
            self.epsilon == other.epsilon
            and self.v == other.v
            and self.u == other.u
            and self.div1 == other.div1
            and self.div2 == other.div2
        )


@dataclass(frozen=True)
class ConditionalMixture:
    """Normalized Gaussian mixture ``gamma(. | x)`` for one source point.

    ``diag_covs`` already include the ``epsilon`` factor.
    """

    log_weights_normalized: np.ndarray
    means: np.ndarray
    diag_covs: np.ndarray

    def as_mixture(self) -> GaussianMixture:
        """View as a :class:`GaussianMixture` meant to be evaluated at ``epsilon=1``."""
        return GaussianMixture(self.log_weights_normalized, self.means, np.log(self.diag_covs))

    def log_density(self, y):
        return gmm.log_density(self.as_mixture(), 1.0, y)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return gmm.sample(self.as_mixture(), 1.0, rng, n)


def _adjusted_log_weights(p: PlanModel, x: np.ndarray) -> np.ndarray:
    """``(n, K)`` logs of ``alpha_k exp((x^T S_k x + 2 r_k^T x) / (2 eps))``."""
    S = p.v.diag_covs
    quad = (x**2) @ S.T + 2.0 * x @ p.v.means.T
    return p.v.log_weights[None, :] + quad / (2.0 * p.epsilon)


def log_c_theta(p: PlanModel, x):
    """Log of the conditional normalizer ``c(x)``; scalar for a point, vector for a batch."""
    pts, single = gmm.check_points(x, p.dim)
    out = logsumexp(_adjusted_log_weights(p, pts), axis=1)
    return float(out[0]) if single else out


def conditional(p: PlanModel, x) -> ConditionalMixture:
    """Closed-form ``gamma(. | x)``: weights ``alpha~_k(x) / c(x)``, means ``r_k + S_k x``."""
    pts, single = gmm.check_points(x, p.dim)
    if not single:
        raise DimensionError("conditional() takes a single point; use sample_conditional for batches")
    a = _adjusted_log_weights(p, pts)[0]
    S = p.v.diag_covs
    return ConditionalMixture(
        a - logsumexp(a),
        p.v.means + S * pts[0],
        p.epsilon * S,
    )


def log_conditional(p: PlanModel, x, y):
    """``log gamma(y | x)`` for paired points (or paired batches)."""
    xs, single = gmm.check_points(x, p.dim)
    ys, _ = gmm.check_points(y, p.dim)
    if xs.shape != ys.shape:
        raise DimensionError(f"x batch {xs.shape} and y batch {ys.shape} differ")
    a = _adjusted_log_weights(p, xs)
    logw = a - logsumexp(a, axis=1, keepdims=True)
    S = p.v.diag_covs
    covs = p.epsilon * S  # (K, d)
    means = p.v.means[None] + S[None] * xs[:, None, :]  # (n, K, d)
    maha = np.sum((ys[:, None, :] - means) ** 2 / covs[None], axis=-1)
    log_norm = -0.5 * (p.dim * gmm.LOG_2PI + np.sum(np.log(covs), axis=-1))
    out = logsumexp(logw + log_norm[None] - 0.5 * maha, axis=1)
    return float(out[0]) if single else out


def log_joint(p: PlanModel, x, y):
    """``log u(x) + <x, y> / eps + log v(y) - log c(x)``."""
    xs, single = gmm.check_points(x, p.dim)
    ys, _ = gmm.check_points(y, p.dim)
    if xs.shape != ys.shape:
        raise DimensionError(f"x batch {xs.shape} and y batch {ys.shape} differ")
    out = (
        gmm.log_density(p.u, p.epsilon, xs)
        + np.sum(xs * ys, axis=1) / p.epsilon
        + gmm.log_density(p.v, p.epsilon, ys)
        - log_c_theta(p, xs)
    )
    return float(out[0]) if single else out


def potentials(p: PlanModel, x, y):
    """Dual potentials ``(phi(x), psi(y))`` induced by the plan parameters.

    ``phi = eps log(u / c) + |x|^2 / 2`` and ``psi = eps log v + |y|^2 / 2``.
    """
    xs, single = gmm.check_points(x, p.dim)
    ys, single_y = gmm.check_points(y, p.dim)
    eps = p.epsilon
    phi = eps * (gmm.log_density(p.u, eps, xs) - log_c_theta(p, xs)) + 0.5 * np.sum(xs**2, axis=1)
    psi = eps * gmm.log_density(p.v, eps, ys) + 0.5 * np.sum(ys**2, axis=1)
    if single and single_y:
        return float(phi[0]), float(psi[0])
    return phi, psi


def sample_conditional(p: PlanModel, x, rng: np.random.Generator) -> np.ndarray:
    """One draw ``y ~ gamma(. | x_i)`` per row of ``x``."""
    xs, single = gmm.check_points(x, p.dim)
    a = _adjusted_log_weights(p, xs)
    probs = np.exp(a - logsumexp(a, axis=1, keepdims=True))
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(xs))[:, None]
    idx = np.minimum(np.sum(cdf < u * cdf[:, -1:], axis=1), p.K - 1)
    S = p.v.diag_covs[idx]
    means = p.v.means[idx] + S * xs
    ys = means + np.sqrt(p.epsilon * S) * rng.standard_normal(xs.shape)
    return ys[0] if single else ys


def sample_marginal(p: PlanModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draws from the normalized left marginal ``u / |u|``."""
    return gmm.sample(p.u, p.epsilon, rng, n)
