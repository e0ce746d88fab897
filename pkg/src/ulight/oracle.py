"""Reference computations used to validate the learned solver.

Nothing here is used for training.  The grids use the midpoint rule, the
discrete solver is a log-domain scaling iteration on grid densities, and
``exact_w2`` solves the assignment problem exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .divergence import DivergenceSpec, conjugate, primal
from .errors import ConvergenceError, CoverageError, DimensionError, NonFiniteError
from .plan import PlanModel, potentials

MIN_POINTS = 16


@dataclass(frozen=True)
class Grid:
    """Tensor-product midpoint grid in one or two dimensions.

    Attributes:
        lower, upper: per-axis bounds.
        n: points per axis.
    """

    lower: tuple
    upper: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if len(n) == 1 and len(lo) > 1:
            n = n * len(lo)
        if not (len(lo) == len(hi) == len(n)) or len(lo) not in (1, 2):
            raise DimensionError("grids are one- or two-dimensional with matching bounds")
        for a, b, k in zip(lo, hi, n):
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise ValueError(f"invalid grid bounds [{a}, {b}]")
            if k < MIN_POINTS:
                raise ValueError(f"need at least {MIN_POINTS} points per axis, got {k}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def steps(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.n)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def axes(self) -> list[np.ndarray]:
        return [lo + (np.arange(k) + 0.5) * h for lo, k, h in zip(self.lower, self.n, self.steps)]

    @property
    def points(self) -> np.ndarray:
        """``(prod(n), dim)`` node coordinates, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def boundary_mask(self) -> np.ndarray:
        idx = np.meshgrid(*[np.arange(k) for k in self.n], indexing="ij")
        mask = np.zeros(idx[0].shape, dtype=bool)
        for ax, k in zip(idx, self.n):
            mask |= (ax == 0) | (ax == k - 1)
        return mask.ravel()


def Grid1D(lower, upper, n) -> Grid:
    return Grid((lower,), (upper,), (n,))


def Grid2D(lower, upper, n) -> Grid:
    return Grid(*(tuple(np.broadcast_to(v, 2)) for v in (lower, upper, n)))


def quadrature(f: Callable[[np.ndarray], np.ndarray], grid: Grid) -> float:
    """Midpoint rule: ``sum f(node) * cell_volume``; error O(h^2) for smooth ``f``."""
    vals = np.asarray(f(grid.points), dtype=float).reshape(-1)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("integrand is not finite on every grid node")
    return float(np.sum(vals) * grid.cell_volume)


def check_coverage(density: np.ndarray, grid: Grid, threshold: float = 1e-12, name="density"):
    """Raise unless ``density`` is below ``threshold`` on the grid boundary."""
    edge = np.max(np.abs(density[grid.boundary_mask()]))
    if edge > threshold:
        raise CoverageError(f"{name} reaches {edge:.3e} on the grid boundary (> {threshold:g})")


def cost_matrix(grid_x: Grid, grid_y: Grid) -> np.ndarray:
    return 0.5 * cdist(grid_x.points, grid_y.points, "sqeuclidean")


@dataclass
class DiscretePlan:
    """Grid transport plan.

    ``G[i, j]`` is the mass on the cell pair ``(x_i, y_j)``; ``phi``/``psi`` are
    the potentials with ``G = h_x h_y exp((phi_i + psi_j - |x_i - y_j|^2 / 2) / eps)``.
    """

    G: np.ndarray
    grid_x: Grid
    grid_y: Grid
    phi: np.ndarray
    psi: np.ndarray
    epsilon: float
    residuals: list = field(default_factory=list)

    @property
    def density(self) -> np.ndarray:
        return self.G / (self.grid_x.cell_volume * self.grid_y.cell_volume)

    @property
    def mass(self) -> float:
        return float(self.G.sum())

    def marginal_x(self) -> np.ndarray:
        """Density of the first marginal on ``grid_x`` nodes."""
        return self.G.sum(axis=1) / self.grid_x.cell_volume

    def marginal_y(self) -> np.ndarray:
        return self.G.sum(axis=0) / self.grid_y.cell_volume


def _potential_update(log_dens, lse, epsilon, spec: DivergenceSpec):
    """Closed-form maximization of the dual in one potential (the other fixed).

    Solves ``exp(f / eps) * K(exp(g / eps)) = dens * conj'(-f)``.
    """
    with np.errstate(divide="ignore"):
        base = epsilon * (log_dens - lse)
    if spec.kind == "balanced":
        return base
    if spec.kind == "scaled_kl":
        return spec.tau / (spec.tau + epsilon) * base
    raise ValueError("the discrete scaling solver supports scaled_kl and balanced kinds only")


def sinkhorn_ueot(
    density_p,
    density_q,
    grid_x: Grid,
    grid_y: Grid,
    epsilon: float,
    div1: DivergenceSpec,
    div2: DivergenceSpec,
    max_iter: int = 10000,
    tol: float = 1e-12,
) -> DiscretePlan:
    """Entropic (un)balanced transport between two grid densities.

    Alternating exact maximization of the discretized dual in log domain.  The
    residual at each iteration is the sup-norm change of the log-scalings
    ``phi / eps`` and ``psi / eps``.  Stops once it falls below ``tol``.
    """
    p = np.asarray(density_p, dtype=float).ravel()
    q = np.asarray(density_q, dtype=float).ravel()
    if p.size != grid_x.points.shape[0] or q.size != grid_y.points.shape[0]:
        raise DimensionError("densities must be sampled on every grid node")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("densities must be nonnegative")
    with np.errstate(divide="ignore"):
        log_p, log_q = np.log(p), np.log(q)
    logk = -cost_matrix(grid_x, grid_y) / epsilon
    log_hx, log_hy = np.log(grid_x.cell_volume), np.log(grid_y.cell_volume)
    phi = np.zeros_like(p)
    psi = np.zeros_like(q)
    residuals = []
    for _ in range(max_iter):
        lse_x = logsumexp(logk + (psi / epsilon + log_hy)[None, :], axis=1)
        phi_new = _potential_update(log_p, lse_x, epsilon, div1)
        lse_y = logsumexp(logk + (phi_new / epsilon + log_hx)[:, None], axis=0)
        psi_new = _potential_update(log_q, lse_y, epsilon, div2)
        with np.errstate(invalid="ignore"):
            dphi = np.abs(phi_new - phi)[np.isfinite(phi_new)]
            dpsi = np.abs(psi_new - psi)[np.isfinite(psi_new)]
        res = (max(dphi.max(initial=0.0), dpsi.max(initial=0.0))) / epsilon
        residuals.append(float(res))
        phi, psi = phi_new, psi_new
        if res < tol:
            break
    else:
        raise ConvergenceError(f"scaling iterations did not converge in {max_iter} steps", residuals[-1])
    G = np.exp(logk + (phi / epsilon)[:, None] + (psi / epsilon)[None, :] + log_hx + log_hy)
    return DiscretePlan(G, grid_x, grid_y, phi, psi, epsilon, residuals)


def _divergence_term(spec: DivergenceSpec, marginal, dens, h, tol=1e-8) -> float:
    """``int f(marginal / dens) dens`` on a grid; zero where both vanish."""
    if spec.kind == "balanced":
        gap = np.max(np.abs(marginal - dens)) * h
        return 0.0 if gap <= tol else float("inf")
    pos = dens > 0
    if np.any(marginal[~pos] > 0):
        return float("inf")
    return float(np.sum(primal(spec, marginal[pos] / dens[pos]) * dens[pos]) * h)


def primal_value(plan: DiscretePlan, density_p, density_q, div1, div2) -> float:
    """Discretized unbalanced entropic transport cost of a grid plan.

    ``<C, G> - eps H(G) + D_f1(G_x | p) + D_f2(G_y | q)`` with
    ``H(g) = -int g log g + |g|``.
    """
    hx, hy = plan.grid_x.cell_volume, plan.grid_y.cell_volume
    C = cost_matrix(plan.grid_x, plan.grid_y)
    G = plan.G
    pos = G > 0
    ent = np.sum(G[pos] * (np.log(G[pos] / (hx * hy)) - 1.0))
    p = np.asarray(density_p, dtype=float).ravel()
    q = np.asarray(density_q, dtype=float).ravel()
    return float(
        np.sum(C * G)
        + plan.epsilon * ent
        + _divergence_term(div1, plan.marginal_x(), p, hx)
        + _divergence_term(div2, plan.marginal_y(), q, hy)
    )


def dual_value_on_grid(
    phi_or_plan,
    density_p,
    density_q,
    grid_x: Grid,
    grid_y: Grid,
    epsilon: Optional[float] = None,
    div1: Optional[DivergenceSpec] = None,
    div2: Optional[DivergenceSpec] = None,
    psi=None,
    coverage_threshold: float = 1e-12,
) -> float:
    """Dual objective in minimization form, by quadrature on the grid pair.

    Returns ``int f1*(-phi) p + int f2*(-psi) q + eps int int exp((phi + psi - c) / eps)``,
    the negative of the usual dual.  Pass either a :class:`PlanModel` (its
    induced potentials, divergences and epsilon are used) or ``phi`` with
    ``psi=...`` and explicit ``epsilon``/``div1``/``div2``.
    """
    if isinstance(phi_or_plan, PlanModel):
        model = phi_or_plan
        phi, _ = potentials(model, grid_x.points, grid_x.points)
        _, psi = potentials(model, grid_y.points, grid_y.points)
        epsilon = model.epsilon if epsilon is None else epsilon
        div1 = model.div1 if div1 is None else div1
        div2 = model.div2 if div2 is None else div2
    else:
        phi = np.asarray(phi_or_plan, dtype=float).ravel()
        if psi is None or epsilon is None or div1 is None or div2 is None:
            raise ValueError("raw potentials need psi, epsilon, div1 and div2")
        psi = np.asarray(psi, dtype=float).ravel()
    p = np.asarray(density_p, dtype=float).ravel()
    q = np.asarray(density_q, dtype=float).ravel()
    check_coverage(p, grid_x, coverage_threshold, "source density")
    check_coverage(q, grid_y, coverage_threshold, "target density")
    hx, hy = grid_x.cell_volume, grid_y.cell_volume
    # zero-density nodes contribute nothing (and may carry -inf potentials)
    px, qy = p > 0, q > 0
    t1 = np.sum(conjugate(div1, -phi[px]) * p[px]) * hx
    t2 = np.sum(conjugate(div2, -psi[qy]) * q[qy]) * hy
    logk = -cost_matrix(grid_x, grid_y) / epsilon
    with np.errstate(invalid="ignore"):
        expo = logk + (phi / epsilon)[:, None] + (psi / epsilon)[None, :]
    mass = np.exp(logsumexp(expo)) * hx * hy
    return float(t1 + t2 + epsilon * mass)


def plan_kl(plan_ref: DiscretePlan, log_density_model: np.ndarray) -> float:
    """KL between positive measures, ``KL(ref || model)``, on the reference grid.

    ``log_density_model`` is the model's log-density on every node pair
    (shape of ``plan_ref.G``).
    """
    h2 = plan_ref.grid_x.cell_volume * plan_ref.grid_y.cell_volume
    g = plan_ref.density
    model = np.exp(log_density_model)
    pos = g > 0
    return float(
        h2 * (np.sum(g[pos] * (np.log(g[pos]) - log_density_model[pos])) - g.sum() + model.sum())
    )


MAX_ASSIGNMENT = 2048


def assignment_cost(a, b) -> float:
    """Exact ``min_sigma mean_i |a_i - b_sigma(i)|^2`` over permutations."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    if a.shape != b.shape:
        raise DimensionError(f"sample sets must have equal shape, got {a.shape} and {b.shape}")
    if len(a) > MAX_ASSIGNMENT:
        raise ValueError(f"at most {MAX_ASSIGNMENT} samples per side")
    C = cdist(a, b, "sqeuclidean")
    rows, cols = linear_sum_assignment(C)
    # exactly rounded sum, so swapping the arguments gives a bit-identical value
    return math.fsum(C[rows, cols]) / len(a)


def exact_w2(a, b, convention: str = "normalized") -> float:
    """Empirical quadratic transport discrepancy between equal-size sample sets.

    ``convention="normalized"`` (default) reports the optimal mean of
    ``|x - y|^2 / (2 d)``, the same per-coordinate normalization as the
    transport-cost metric.  ``"distance"`` returns the usual
    ``sqrt(mean |x - y|^2)``, which is a metric.
    """
    raw = assignment_cost(a, b)
    d = 1 if np.ndim(a) == 1 else np.shape(a)[1]
    if convention == "normalized":
        return raw / (2.0 * d)
    if convention == "distance":
        return float(np.sqrt(raw))
    raise ValueError(f"unknown convention {convention!r}")


def _primal_grad_factor(spec: DivergenceSpec, s):
    if spec.kind == "scaled_kl":
        return spec.tau * np.log(s)
    if spec.kind == "scaled_chi2":
        return 2.0 * spec.tau * (s - 1.0)
    raise ValueError("direct descent needs a finite penalty (scaled_kl or scaled_chi2)")


def direct_primal_descent(
    density_p,
    density_q,
    grid_x: Grid,
    grid_y: Grid,
    epsilon: float,
    div1: DivergenceSpec,
    div2: DivergenceSpec,
    init: Optional[np.ndarray] = None,
    gtol: float = 1e-12,
    max_iter: int = 2000,
    restarts: int = 50,
) -> DiscretePlan:
    """Minimize the discretized primal directly over log plan masses with L-BFGS.

    Independent of the scaling iterations; meant for small grids.  Nodes where
    ``p`` or ``q`` vanish are excluded from the support.
    """
    from scipy.optimize import minimize

    p = np.asarray(density_p, dtype=float).ravel()
    q = np.asarray(density_q, dtype=float).ravel()
    hx, hy = grid_x.cell_volume, grid_y.cell_volume
    C = cost_matrix(grid_x, grid_y)
    px, qy = p > 0, q > 0
    Cs = C[np.ix_(px, qy)]
    ps, qs = p[px], q[qy]
    shape = Cs.shape
    if init is None:
        # Gibbs-kernel start: product coupling reweighted by exp(-C / eps), unit mass
        z0 = np.log(np.outer(ps * hx, qs * hy)) - Cs / epsilon
        z0 -= logsumexp(z0)
    else:
        z0 = np.log(np.asarray(init)[np.ix_(px, qy)])

    def fun(z):
        G = np.exp(z.reshape(shape))
        a = G.sum(axis=1) / hx
        b = G.sum(axis=0) / hy
        val = (
            np.sum(Cs * G)
            + epsilon * np.sum(G * (z.reshape(shape) - np.log(hx * hy) - 1.0))
            + np.sum(primal(div1, a / ps) * ps) * hx
            + np.sum(primal(div2, b / qs) * qs) * hy
        )
        dG = (
            Cs
            + epsilon * (z.reshape(shape) - np.log(hx * hy))
            + _primal_grad_factor(div1, a / ps)[:, None]
            + _primal_grad_factor(div2, b / qs)[None, :]
        )
        return val, (dG * G).ravel()

    # restarts drop stale curvature pairs, which matters on this badly scaled problem
    z, best = z0.ravel(), np.inf
    for _ in range(restarts):
        res = minimize(fun, z, jac=True, method="L-BFGS-B",
                       options={"gtol": gtol, "ftol": 1e-15, "maxiter": max_iter, "maxcor": 50})
        z = res.x
        if best - res.fun <= 1e-13:
            break
        best = res.fun
    G = np.zeros(C.shape)
    G[np.ix_(px, qy)] = np.exp(res.x.reshape(shape))
    # this route produces no potentials
    return DiscretePlan(G, grid_x, grid_y, np.full(p.size, np.nan), np.full(q.size, np.nan),
                        epsilon, [float(res.fun)])
