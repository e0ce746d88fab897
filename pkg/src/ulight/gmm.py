"""Unnormalized Gaussian mixtures with diagonal covariances.

Every density here carries an extra scalar ``epsilon`` multiplying the stored
covariance diagonals, so a component ``k`` has covariance
``epsilon * diag(exp(log_diag_covs[k]))``.  All arithmetic is done in the log
domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, NonFiniteError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of diagonal Gaussians, stored in unconstrained form.

    Attributes:
        log_weights: ``(C,)`` log of the positive component weights.
        means: ``(C, d)`` component means.
        log_diag_covs: ``(C, d)`` log of the covariance diagonals before the
            ``epsilon`` scaling.
    """

    log_weights: np.ndarray
    means: np.ndarray
    log_diag_covs: np.ndarray

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        ls = np.array(self.log_diag_covs, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(len(lw), -1)
        if ls.ndim == 1:
            ls = ls.reshape(len(lw), -1)
        if mu.shape[0] != lw.shape[0] or mu.shape != ls.shape or mu.ndim != 2:
            raise DimensionError(
                f"inconsistent mixture shapes: log_weights {lw.shape}, "
                f"means {mu.shape}, log_diag_covs {ls.shape}"
            )
        if lw.size == 0 or mu.shape[1] == 0:
            raise DimensionError("mixture needs at least one component and dimension")
        for arr in (lw, mu, ls):
            arr.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "log_diag_covs", ls)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def diag_covs(self) -> np.ndarray:
        return np.exp(self.log_diag_covs)

    def __eq__(self, other):
        if not isinstance(other, GaussianMixture):
            return NotImplemented
        return (
            np.array_equal(self.log_weights, other.log_weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.log_diag_covs, other.log_diag_covs)
        )

    def normalized(self) -> "GaussianMixture":
        """Same components with weights rescaled to sum to one."""
        return GaussianMixture(
            self.log_weights - logsumexp(self.log_weights),
            self.means,
            self.log_diag_covs,
        )


def check_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``x`` as an ``(n, dim)`` array and whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise NonFiniteError(f"non-finite coordinate in point {bad}")
    return arr, single


def component_log_densities(m: GaussianMixture, epsilon: float, x: np.ndarray) -> np.ndarray:
    """``(n, C)`` matrix of ``log w_k + log N(x_n | mean_k, epsilon * S_k)``."""
    covs = epsilon * m.diag_covs  # (C, d)
    diff = x[:, None, :] - m.means[None, :, :]
    maha = np.sum(diff**2 / covs[None], axis=-1)
    log_norm = -0.5 * (m.dim * LOG_2PI + np.sum(np.log(covs), axis=-1))
    return m.log_weights[None, :] + log_norm[None, :] - 0.5 * maha


def log_density(m: GaussianMixture, epsilon: float, x):
    """Log of ``sum_k w_k N(x | mean_k, epsilon * S_k)``.

    Accepts a single ``(d,)`` point (returns a float) or an ``(n, d)`` batch.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    pts, single = check_points(x, m.dim)
    out = logsumexp(component_log_densities(m, epsilon, pts), axis=1)
    return float(out[0]) if single else out


def total_mass(m: GaussianMixture) -> float:
    """Sum of the component weights, i.e. the integral of the mixture."""
    return float(np.sum(np.exp(m.log_weights)))


def sample(m: GaussianMixture, epsilon: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` points from the normalized mixture.

    Component indices are drawn proportionally to the weights, then a Gaussian
    draw with covariance ``epsilon * S_k`` is taken.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    probs = np.exp(m.log_weights - logsumexp(m.log_weights))
    idx = rng.choice(m.n_components, size=n, p=probs / probs.sum())
    std = np.sqrt(epsilon * m.diag_covs[idx])
    return m.means[idx] + std * rng.standard_normal((n, m.dim))


def n_params(dim: int, n_components: int) -> int:
    return n_components * (2 * dim + 1)


def pack_params(m: GaussianMixture) -> np.ndarray:
    """Flatten to ``[log_weights, means (row-major), log_diag_covs (row-major)]``."""
    return np.concatenate([m.log_weights, m.means.ravel(), m.log_diag_covs.ravel()])


def unpack_params(v, dim: int, n_components: int) -> GaussianMixture:
    """Inverse of :func:`pack_params`."""
    v = np.asarray(v, dtype=float).ravel()
    expected = n_params(dim, n_components)
    if v.size != expected:
        raise DimensionError(
            f"parameter vector has length {v.size}, expected {expected} "
            f"for {n_components} components in dimension {dim}"
        )
    c, cd = n_components, n_components * dim
    return GaussianMixture(
        v[:c].copy(),
        v[c : c + cd].reshape(c, dim).copy(),
        v[c + cd :].reshape(c, dim).copy(),
    )
