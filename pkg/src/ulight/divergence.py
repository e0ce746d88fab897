"""Marginal penalties and the convex conjugates that enter the dual objective.

A penalty ``f = tau * f_base`` has conjugate ``tau * conj_base(t / tau)``.
The base generators are

* KL: ``f(s) = s log s - s + 1``, conjugate ``exp(t) - 1``;
* chi-squared: ``f(s) = (s - 1)^2`` on ``s >= 0``, conjugate ``-1`` for
  ``t < -2`` and ``t^2 / 4 + t`` otherwise;
* balanced: the indicator of ``{1}``, conjugate ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("scaled_kl", "scaled_chi2", "balanced")

# CLI-facing short names
ALIASES = {"kl": "scaled_kl", "chi2": "scaled_chi2", "balanced": "balanced"}


@dataclass(frozen=True)
class DivergenceSpec:
    kind: str = "scaled_kl"
    tau: float = 1.0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown divergence kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        tau = float(self.tau)
        if kind != "balanced" and not (tau > 0 and np.isfinite(tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        object.__setattr__(self, "tau", tau)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "DivergenceSpec":
        return cls(d["kind"], d.get("tau", 1.0))


def conjugate(spec: DivergenceSpec, t):
    """Convex conjugate of the penalty, elementwise.

    The scaled-KL branch may overflow to ``inf`` for large ``t / tau``; callers
    that need finite values check for it.
    """
    t = np.asarray(t, dtype=float)
    if spec.kind == "balanced":
        out = t.copy()
    elif spec.kind == "scaled_kl":
        with np.errstate(over="ignore"):
            out = spec.tau * np.expm1(t / spec.tau)
    else:
        s = t / spec.tau
        out = np.where(s < -2.0, -spec.tau, spec.tau * (0.25 * s * s + s))
    return out if out.ndim else float(out)


def conjugate_deriv(spec: DivergenceSpec, t):
    """Derivative of :func:`conjugate` in ``t`` (right derivative at the chi2 kink)."""
    t = np.asarray(t, dtype=float)
    if spec.kind == "balanced":
        out = np.ones_like(t)
    elif spec.kind == "scaled_kl":
        with np.errstate(over="ignore"):
            out = np.exp(t / spec.tau)
    else:
        s = t / spec.tau
        out = np.where(s < -2.0, 0.0, 0.5 * s + 1.0)
    return out if out.ndim else float(out)


def primal(spec: DivergenceSpec, s):
    """The penalty generator itself, ``tau * f_base(s)``.

    Only the validation oracles use this. For the balanced kind the value is 0
    at ``s == 1`` and ``inf`` elsewhere.
    """
    s = np.asarray(s, dtype=float)
    if spec.kind == "balanced":
        out = np.where(s == 1.0, 0.0, np.inf)
    elif spec.kind == "scaled_kl":
        with np.errstate(divide="ignore", invalid="ignore"):
            xlogx = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)
        out = np.where(s >= 0, spec.tau * (xlogx - s + 1.0), np.inf)
    else:
        out = np.where(s >= 0, spec.tau * (s - 1.0) ** 2, np.inf)
    return out if out.ndim else float(out)
