"""Synthetic source/target measures for the 2-D mixture experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gmm
from .gmm import GaussianMixture


@dataclass(frozen=True)
class Scenario:
    name: str
    source: GaussianMixture  # normalized, evaluated at epsilon=1
    target: GaussianMixture
    source_centers: np.ndarray
    target_centers: np.ndarray

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return gmm.sample(self.source, 1.0, rng, n), gmm.sample(self.target, 1.0, rng, n)


def _iso(weights, centers, var):
    centers = np.asarray(centers, dtype=float)
    var = np.broadcast_to(np.asarray(var, dtype=float)[:, None], centers.shape)
    return GaussianMixture(np.log(weights), centers, np.log(var))


MAIN_SRC = np.array([[-3.0, 3.0], [1.0, 3.0]])
MAIN_TGT = np.array([[-3.0, 0.0], [1.0, 0.0]])

# Outlier blobs: not given numerically by the experiment description, picked
# to sit more than 5 main-mode standard deviations (0.1 ** 0.5) from every mode.
OUTLIER_SRC = np.array([-6.0, -3.0])
OUTLIER_TGT = np.array([6.0, 6.0])
OUTLIER_WEIGHT = 0.05
OUTLIER_VAR = 0.01


def gauss_mix() -> Scenario:
    """Class-imbalanced pair: 1/4-3/4 source modes, 3/4-1/4 target modes, variance 0.1."""
    return Scenario(
        "gauss_mix",
        _iso([0.25, 0.75], MAIN_SRC, [0.1, 0.1]),
        _iso([0.75, 0.25], MAIN_TGT, [0.1, 0.1]),
        MAIN_SRC.copy(),
        MAIN_TGT.copy(),
    )


def gauss_mix_outliers() -> Scenario:
    """``gauss_mix`` with a small far-away Gaussian added to each side."""
    keep = 1.0 - OUTLIER_WEIGHT
    return Scenario(
        "gauss_mix_outliers",
        _iso([0.25 * keep, 0.75 * keep, OUTLIER_WEIGHT], np.vstack([MAIN_SRC, OUTLIER_SRC]),
             [0.1, 0.1, OUTLIER_VAR]),
        _iso([0.75 * keep, 0.25 * keep, OUTLIER_WEIGHT], np.vstack([MAIN_TGT, OUTLIER_TGT]),
             [0.1, 0.1, OUTLIER_VAR]),
        np.vstack([MAIN_SRC, OUTLIER_SRC]),
        np.vstack([MAIN_TGT, OUTLIER_TGT]),
    )


SCENARIOS = {"gauss_mix": gauss_mix, "gauss_mix_outliers": gauss_mix_outliers}


def get(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
