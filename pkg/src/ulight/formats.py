"""Dataset CSV and checkpoint JSON formats."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .divergence import DivergenceSpec
from .errors import DimensionError, NonFiniteError
from .gmm import GaussianMixture
from .plan import PlanModel

SCHEMA_VERSION = 1


def write_dataset(path, samples) -> None:
    """CSV with header ``x0,...,x{d-1}``; floats at 17 significant digits."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    header = ",".join(f"x{i}" for i in range(samples.shape[1]))
    np.savetxt(path, samples, fmt="%.17g", delimiter=",", header=header, comments="")


def read_dataset(path) -> np.ndarray:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not any(line.strip() for line in fh):
            raise ValueError(f"{path}: no data rows")
    cols = header.split(",")
    if not header or any(c != f"x{i}" for i, c in enumerate(cols)):
        raise ValueError(f"{path}: header must be x0,...,x{{d-1}}, got {header!r}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
    if data.shape[1] != len(cols):
        raise DimensionError(f"{path}: rows have {data.shape[1]} columns, header has {len(cols)}")
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{path}: non-finite values")
    return data


def _mixture_to_dict(m: GaussianMixture) -> dict:
    return {
        "log_weights": m.log_weights.tolist(),
        "means": m.means.tolist(),
        "log_diag_covs": m.log_diag_covs.tolist(),
    }


def _mixture_from_dict(d: dict, dim: int) -> GaussianMixture:
    m = GaussianMixture(d["log_weights"], np.asarray(d["means"], dtype=float).reshape(-1, dim),
                        np.asarray(d["log_diag_covs"], dtype=float).reshape(-1, dim))
    if m.dim != dim:
        raise DimensionError(f"checkpoint mixture has dimension {m.dim}, header says {dim}")
    return m


def plan_to_dict(plan: PlanModel, seed: int = 0, steps_trained: int = 0) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": plan.dim,
        "epsilon": plan.epsilon,
        "div1": plan.div1.to_dict(),
        "div2": plan.div2.to_dict(),
        "v": _mixture_to_dict(plan.v),
        "u": _mixture_to_dict(plan.u),
        "seed": int(seed),
        "steps_trained": int(steps_trained),
    }


def plan_from_dict(d: dict) -> PlanModel:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema_version {d.get('schema_version')!r}")
    dim = int(d["dim"])
    return PlanModel(
        float(d["epsilon"]),
        _mixture_from_dict(d["v"], dim),
        _mixture_from_dict(d["u"], dim),
        DivergenceSpec.from_dict(d["div1"]),
        DivergenceSpec.from_dict(d["div2"]),
    )


def save_checkpoint(path, plan: PlanModel, seed: int = 0, steps_trained: int = 0) -> None:
    # json writes floats with repr(), which round-trips doubles exactly
    Path(path).write_text(json.dumps(plan_to_dict(plan, seed, steps_trained), indent=1) + "\n")


def load_checkpoint(path) -> tuple[PlanModel, dict]:
    """Return the plan and the raw JSON object (for ``seed``/``steps_trained``)."""
    d = json.loads(Path(path).read_text())
    return plan_from_dict(d), d
