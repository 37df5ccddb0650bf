import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde_lab.core import (
    CoefficientSet,
    Dimensions,
    LipschitzWeights,
    TerminalCondition,
    TimeGrid,
    check_h2_sampled,
    check_h3,
    kappa,
)
from bdsde_lab.oracle import example7_problem, example7_rate


def lorentz(t):
    return 1.0 / (1.0 + t * t)


@pytest.mark.parametrize(
    "v, u, t, expected",
    [
        (lambda t: 0.0, lambda t: 0.0, 3.0, 0.0),
        (lorentz, lorentz, 0.0, 1.0),
        (lorentz, lambda t: 2 * lorentz(t), 0.0, 4.0),
    ],
)
def test_kappa_examples(v, u, t, expected):
    assert kappa(LipschitzWeights(v, u), t) == expected


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 100))
def test_kappa_dominates_both_rates(a, b, t):
    w = LipschitzWeights(v=lambda s: a * lorentz(s), u=lambda s: b * lorentz(s))
    k = kappa(w, t)
    assert k >= w.v(t) and k >= w.u(t) ** 2


def test_dimensions_validate():
    assert Dimensions(2, 3, 1).d == 3
    for bad in [(0, 1, 1), (1, 0, 1), (1, 1, -1), (1.5, 1, 1)]:
        with pytest.raises(ValueError):
            Dimensions(*bad)


class TestTimeGrid:
    def test_uniform(self):
        g = TimeGrid.uniform(2.0, 4)
        np.testing.assert_allclose(g.points, [0, 0.5, 1, 1.5, 2])
        assert (g.T, g.N, g.max_step) == (2.0, 4, 0.5)

    @pytest.mark.parametrize("pts", [[0.0], [0.1, 1.0], [0.0, 1.0, 1.0], [0.0, 2.0, 1.0]])
    def test_invalid(self, pts):
        with pytest.raises(ValueError):
            TimeGrid(np.array(pts))

    def test_points_read_only(self):
        g = TimeGrid.uniform(1, 2)
        with pytest.raises(ValueError):
            g.points[1] = 0.7

    @pytest.mark.parametrize(
        "make",
        [
            lambda: TimeGrid.geometric(10, 20, 1.1),
            lambda: TimeGrid.log_uniform(128, 32),
            lambda: TimeGrid.equal_mass(lorentz, 64, 16),
            lambda: TimeGrid.adapted(LipschitzWeights(lorentz, lorentz), 128, 64),
        ],
    )
    def test_constructors_are_valid_and_finest_near_zero(self, make):
        g = make()
        assert g.points[0] == 0.0 and np.all(np.diff(g.points) > 0)
        assert g.steps[0] < g.steps[-1]

    def test_refine_and_coarsen_roundtrip(self):
        g = TimeGrid.adapted(LipschitzWeights(lorentz, lorentz), 32, 8)
        f = g.refine()
        assert f.N == 16 and f.coarsen() == g
        with pytest.raises(ValueError):
            TimeGrid.uniform(1, 3).coarsen()

    def test_max_step_matches_definition(self):
        g = TimeGrid.log_uniform(50, 10)
        assert g.max_step == max(b - a for a, b in zip(g.points[:-1], g.points[1:]))

    def test_equality_and_hash(self):
        assert TimeGrid.uniform(1, 4) == TimeGrid.uniform(1, 4)
        assert hash(TimeGrid.uniform(1, 4)) == hash(TimeGrid.uniform(1, 4))
        assert TimeGrid.uniform(1, 4) != TimeGrid.uniform(1, 5)


class TestCheckH3:
    def test_example7(self):
        rep = check_h3(LipschitzWeights(lorentz, lorentz), quad_tol=1e-8)
        assert rep.passed
        assert rep.v_integral == pytest.approx(math.pi / 2, abs=1e-8)
        assert rep.u2_integral == pytest.approx(math.pi / 4, abs=1e-8)

    def test_zero(self):
        rep = check_h3(LipschitzWeights())
        assert (rep.v_integral, rep.u2_integral, rep.passed) == (0.0, 0.0, True)

    @pytest.mark.parametrize("v", [lambda t: 1.0, lambda t: 1.0 / (1.0 + t)])
    def test_divergent(self, v):
        rep = check_h3(LipschitzWeights(v=v))
        assert not rep.passed
        assert rep.v_integral == math.inf and "v" in rep.message

    def test_tolerance_must_be_positive(self):
        with pytest.raises(ValueError):
            check_h3(LipschitzWeights(), quad_tol=0.0)


class TestCheckH2:
    def test_zero_coefficients(self):
        coeffs = CoefficientSet(lambda t, y, z: np.zeros_like(y), lambda t, y: np.zeros(y.shape + (1,)))
        rep = check_h2_sampled(coeffs, Dimensions(), n_samples=200)
        assert rep.max_violation == 0.0 and rep.passed

    def test_example7(self):
        p = example7_problem()
        rep = check_h2_sampled(p.coefficients, p.dims, n_samples=500)
        assert rep.passed

    def test_quadratic_drift_fails(self):
        coeffs = CoefficientSet(
            lambda t, y, z: y**2,
            lambda t, y: np.zeros(y.shape + (1,)),
            LipschitzWeights(v=lambda t: 1.0),
        )
        rep = check_h2_sampled(coeffs, Dimensions(), n_samples=500, box=10.0)
        assert not rep.passed and rep.max_violation > 1.0 and rep.worst_time is not None

    def test_seed_determinism(self):
        coeffs = CoefficientSet(
            lambda t, y, z: np.sin(y) * 2, lambda t, y: np.zeros(y.shape + (1,)), LipschitzWeights(v=lambda t: 1.0)
        )
        a = check_h2_sampled(coeffs, Dimensions(), seed=4)
        b = check_h2_sampled(coeffs, Dimensions(), seed=4)
        assert a == b and not a.passed

    def test_rates_vary_in_time(self):
        # a(t) decays, so a constant weight below a(0) must be caught early on
        p = example7_problem()
        coeffs = CoefficientSet(p.f, p.g, LipschitzWeights(lambda t: 0.5 * example7_rate(t), example7_rate))
        assert not check_h2_sampled(coeffs, p.dims, n_samples=500, t_max=1.0).passed


def test_terminal_condition_checks():
    class Bundle:
        n_paths = 3

    tc = TerminalCondition.constant([1.0, 2.0])
    assert tc(Bundle()).shape == (3, 2)
    assert tc.second_moment_hint == 5.0
    with pytest.raises(ValueError):
        TerminalCondition(lambda b: np.ones(2))(Bundle())
    with pytest.raises(ValueError):
        TerminalCondition(lambda b: np.array([1.0, np.nan, 0.0]))(Bundle())
    assert TerminalCondition(lambda b: np.arange(3.0))(Bundle()).shape == (3, 1)
