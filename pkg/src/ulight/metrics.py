"""Evaluation metrics for a learned plan."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import gmm
from .oracle import MAX_ASSIGNMENT, exact_w2
from .plan import PlanModel, sample_conditional


@dataclass
class MetricReport:
    ot_cost: float
    ot_cost_se: float
    w2: float
    w2_sd: float
    learned_mass: float
    mode_matrix: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def normalized_ot_cost(
    plan: PlanModel, samples_x, draws_per_x: int = 1, rng=None, per_coordinate: bool = True
) -> tuple[float, float]:
    """Monte-Carlo ``E_x E_{y ~ gamma(.|x)} |x - y|^2 / 2`` and its standard error.

    With ``per_coordinate`` (the default) the squared distance is averaged over
    coordinates instead of summed, i.e. divided by the dimension; the two
    coincide in 1-D.
    """
    rng = np.random.default_rng() if rng is None else rng
    xs, _ = gmm.check_points(samples_x, plan.dim)
    xs = np.repeat(xs, int(draws_per_x), axis=0)
    ys = sample_conditional(plan, xs, rng)
    costs = 0.5 * np.sum((xs - ys) ** 2, axis=1)
    if per_coordinate:
        costs /= plan.dim
    se = float(np.std(costs, ddof=1) / np.sqrt(len(costs))) if len(costs) > 1 else float("nan")
    return float(np.mean(costs)), se


def subsampled_w2(generated, target, size: int = 1024, rng=None, repeats: int = 1) -> float:
    """Mean of ``exact_w2`` over ``repeats`` pairs of equal-size subsamples (without replacement)."""
    return _w2_draws(generated, target, size, rng, repeats).mean()


def _w2_draws(generated, target, size, rng, repeats) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    size = min(size, len(generated), len(target), MAX_ASSIGNMENT)
    out = np.empty(int(repeats))
    for i in range(len(out)):
        a = generated[rng.choice(len(generated), size=size, replace=False)]
        b = target[rng.choice(len(target), size=size, replace=False)]
        out[i] = exact_w2(a, b)
    return out


def _nearest(points, centers):
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def mode_assignment(samples_from, generated, centers_src, centers_tgt) -> np.ndarray:
    """Row-normalized frequencies of (nearest source center -> nearest target center).

    Rows of source centers that received no sample are left as zeros.
    """
    src = np.asarray(samples_from, dtype=float)
    gen = np.asarray(generated, dtype=float)
    cs = np.atleast_2d(np.asarray(centers_src, dtype=float))
    ct = np.atleast_2d(np.asarray(centers_tgt, dtype=float))
    if len(cs) == 0 or len(ct) == 0:
        raise ValueError("mode centers must be non-empty")
    counts = np.zeros((len(cs), len(ct)))
    np.add.at(counts, (_nearest(src, cs), _nearest(gen, ct)), 1.0)
    rows = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)


def evaluate(
    plan: PlanModel,
    samples_x,
    samples_y,
    rng: np.random.Generator,
    centers_src=None,
    centers_tgt=None,
    w2_size: int = 1024,
    draws_per_x: int = 1,
    w2_repeats: int = 10,
) -> MetricReport:
    """Full report: transport cost on all source samples, W2 against the target set.

    W2 is averaged over ``w2_repeats`` subsample pairs; ``w2_sd`` is their spread.
    A single subsample is noisy when mode proportions fluctuate between draws.
    """
    xs = np.asarray(samples_x, dtype=float)
    ys = np.asarray(samples_y, dtype=float)
    cost, se = normalized_ot_cost(plan, xs, draws_per_x, rng)
    generated = sample_conditional(plan, xs, rng)
    draws = _w2_draws(generated, ys, w2_size, rng, w2_repeats)
    w2_sd = float(draws.std(ddof=1)) if len(draws) > 1 else 0.0
    matrix = []
    if centers_src is not None and centers_tgt is not None:
        matrix = mode_assignment(xs, generated, centers_src, centers_tgt).tolist()
    return MetricReport(cost, se, float(draws.mean()), w2_sd, gmm.total_mass(plan.u), matrix)
