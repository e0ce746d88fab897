import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulight.divergence import DivergenceSpec, conjugate, conjugate_deriv

KINDS = ["scaled_kl", "scaled_chi2", "balanced"]


def numeric_conjugate(f, t, u_grid):
    """sup_u (u t - f(u)) by brute force on a grid of u values."""
    return np.max(u_grid * t - f(u_grid))


class TestConjugate:
    def test_kl_at_zero(self):
        assert conjugate(DivergenceSpec("scaled_kl", 1.0), 0.0) == 0.0

    def test_chi2_flat_region(self):
        assert conjugate(DivergenceSpec("scaled_chi2", 1.0), -3.0) == -1.0

    def test_scaled_kl_value(self):
        # brute-force sup over u of u*t - 2 (u log u - u + 1), t = 2
        u = np.linspace(1e-9, 10.0, 2_000_001)
        brute = numeric_conjugate(lambda s: 2.0 * (s * np.log(s) - s + 1.0), 2.0, u)
        got = conjugate(DivergenceSpec("scaled_kl", 2.0), 2.0)
        assert got == pytest.approx(brute, rel=1e-9)
        assert got == pytest.approx(2.0 * (np.e - 1.0), rel=1e-15)

    def test_balanced_identity(self):
        assert conjugate(DivergenceSpec("balanced", 123.0), 7.5) == 7.5

    @pytest.mark.parametrize("tau", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("t", [-5.0, -2.5, -1.0, 0.0, 0.7, 2.0])
    def test_chi2_matches_brute_force(self, tau, t):
        u = np.linspace(0.0, 10.0, 1_000_001)
        brute = numeric_conjugate(lambda s: tau * (s - 1.0) ** 2, t, u)
        assert conjugate(DivergenceSpec("scaled_chi2", tau), t) == pytest.approx(brute, abs=1e-9)

    @pytest.mark.parametrize("kind", ["scaled_kl", "scaled_chi2"])
    @pytest.mark.parametrize("tau", [0.1, 1.0, 50.0])
    def test_zero_at_origin(self, kind, tau):
        assert conjugate(DivergenceSpec(kind, tau), 0.0) == 0.0

    def test_vectorized(self):
        t = np.array([-3.0, 0.0, 1.0])
        np.testing.assert_allclose(conjugate(DivergenceSpec("scaled_chi2", 1.0), t), [-1.0, 0.0, 1.25])

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError):
            DivergenceSpec("tv", 1.0)
        with pytest.raises(ValueError):
            DivergenceSpec("scaled_kl", 0.0)


class TestConjugateDeriv:
    def test_kl_at_zero(self):
        assert conjugate_deriv(DivergenceSpec("scaled_kl", 1.0), 0.0) == 1.0

    def test_chi2_kink(self):
        assert conjugate_deriv(DivergenceSpec("scaled_chi2", 1.0), -2.0) == 0.0

    def test_finite_differences(self, rng):
        h = 1e-6
        for _ in range(300):
            kind = KINDS[rng.integers(3)]
            spec = DivergenceSpec(kind, float(rng.uniform(0.2, 5.0)))
            t = float(rng.uniform(-6, 3)) * (spec.tau if kind != "balanced" else 1.0)
            if kind == "scaled_chi2" and abs(t / spec.tau + 2.0) < 1e-3:
                continue
            fd = (conjugate(spec, t + h) - conjugate(spec, t - h)) / (2 * h)
            assert conjugate_deriv(spec, t) == pytest.approx(fd, rel=1e-6, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(KINDS),
    st.floats(0.1, 20.0),
    st.floats(-30.0, 5.0),
    st.floats(-30.0, 5.0),
    st.floats(0.01, 0.99),
)
def test_convex_and_nondecreasing(kind, tau, t1, t2, lam):
    spec = DivergenceSpec(kind, tau)
    lo, hi = min(t1, t2), max(t1, t2)
    f = lambda t: conjugate(spec, t)
    assert f(lo) <= f(hi) + 1e-12
    mid = lam * lo + (1 - lam) * hi
    assert f(mid) <= lam * f(lo) + (1 - lam) * f(hi) + 1e-12 * (1 + abs(f(lo)) + abs(f(hi)))
