"""Grid-based consistency checks on a fixed 1-D reference problem.

These back the ``oracle`` CLI subcommands and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from .divergence import DivergenceSpec
from .gmm import GaussianMixture, log_density
from .oracle import Grid, Grid1D, dual_value_on_grid, plan_kl, primal_value, sinkhorn_ueot
from .plan import PlanModel, log_joint

# 1-D source/target used by every check: two-mode mixtures with unequal weights
REF_SOURCE = GaussianMixture(np.log([0.3, 0.7]), [[-1.5], [1.0]], np.log([[0.16], [0.25]]))
REF_TARGET = GaussianMixture(np.log([0.6, 0.4]), [[-0.5], [2.0]], np.log([[0.25], [0.16]]))


def reference_densities(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    pts = grid.points
    return np.exp(log_density(REF_SOURCE, 1.0, pts)), np.exp(log_density(REF_TARGET, 1.0, pts))


def default_grid(n: int = 256, lower: float = -6.0, upper: float = 6.0) -> Grid:
    return Grid1D(lower, upper, n)


def duality_gap(grid: Grid, epsilon: float, div1: DivergenceSpec, div2: DivergenceSpec,
                tol: float = 1e-12, max_iter: int = 20000) -> dict:
    """Primal value of the converged scaling plan plus the (minimization-form) dual."""
    p, q = reference_densities(grid)
    plan = sinkhorn_ueot(p, q, grid, grid, epsilon, div1, div2, max_iter=max_iter, tol=tol)
    primal = primal_value(plan, p, q, div1, div2)
    dual = dual_value_on_grid(plan.phi, p, q, grid, grid, epsilon, div1, div2, psi=plan.psi)
    return {
        "primal": primal,
        "dual_min_form": dual,
        "gap": abs(primal + dual),
        "iterations": len(plan.residuals),
        "residual": plan.residuals[-1],
        "mass": plan.mass,
    }


def random_plan(rng: np.random.Generator, epsilon, div1, div2, K=3, L=2) -> PlanModel:
    """Random 1-D plan whose mass stays well inside the reference grid."""
    v = GaussianMixture(rng.normal(size=K), rng.normal(scale=1.5, size=(K, 1)),
                        rng.normal(scale=0.5, size=(K, 1)))
    u = GaussianMixture(rng.normal(size=L) - 1.0, rng.normal(scale=1.5, size=(L, 1)),
                        rng.normal(scale=0.5, size=(L, 1)) + 1.0)
    return PlanModel(epsilon, v, u, div1, div2)


def grid_log_joint(model: PlanModel, grid: Grid) -> np.ndarray:
    pts = grid.points
    n = len(pts)
    return log_joint(model, np.repeat(pts, n, axis=0), np.tile(pts, (n, 1))).reshape(n, n)


def bound_terms(model: PlanModel, reference, grid: Grid, p, q, l_star: float) -> tuple[float, float]:
    """``(eps * KL(gamma* || gamma_model), L(model) - L*)`` on the grid."""
    kl = plan_kl(reference, grid_log_joint(model, grid))
    return model.epsilon * kl, dual_value_on_grid(model, p, q, grid, grid) - l_star


def bound_check(grid: Grid, epsilon: float, div1: DivergenceSpec, div2: DivergenceSpec,
                draws: int = 50, seed: int = 0, slack: float = 1e-6) -> dict:
    """Check ``eps KL(gamma* || gamma) <= L(theta, omega) - L*`` for random parameters."""
    p, q = reference_densities(grid)
    ref = sinkhorn_ueot(p, q, grid, grid, epsilon, div1, div2, tol=1e-12)
    l_star = dual_value_on_grid(ref.phi, p, q, grid, grid, epsilon, div1, div2, psi=ref.psi)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(draws):
        lhs, rhs = bound_terms(random_plan(rng, epsilon, div1, div2), ref, grid, p, q, l_star)
        rows.append((lhs, rhs))
    lhs = np.array([r[0] for r in rows])
    rhs = np.array([r[1] for r in rows])
    ok = lhs <= rhs + slack
    return {
        "l_star": l_star,
        "draws": draws,
        "satisfied": int(ok.sum()),
        "max_violation": float(np.max(lhs - rhs)),
        "lhs": lhs.tolist(),
        "rhs": rhs.tolist(),
        "pass": bool(ok.all()),
    }
