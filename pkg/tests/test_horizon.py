import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde_lab.core import LipschitzWeights
from bdsde_lab.exceptions import NonConvergent
from bdsde_lab.horizon import (
    GronwallProblem,
    choose_truncation,
    gronwall_bound,
    gronwall_bounds,
    gronwall_verify,
    tail_mass,
)
from bdsde_lab.oracle import example7_problem


def lorentz(t):
    return 1.0 / (1.0 + t * t)


def arctan_tail(t):
    return math.pi / 2 - math.atan(t)


GRID = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0]


class TestBound:
    def test_zero_A(self):
        p = GronwallProblem(A=0.0, M=3.0, r=lorentz)
        assert all(gronwall_bound(p, t) == 0.0 for t in (0.0, 1.0, 100.0))

    def test_e_to_pi(self):
        p = GronwallProblem(A=1.0, M=2.0, r=lorentz)
        assert gronwall_bound(p, 0.0) == pytest.approx(math.exp(math.pi), rel=1e-6)

    def test_decays_to_A(self):
        p = GronwallProblem(A=1.0, M=2.0, r=lorentz)
        assert gronwall_bound(p, 1e6) == pytest.approx(1.0, abs=1e-5)

    def test_bounds_vector_matches_scalar(self):
        p = GronwallProblem(A=1.5, M=0.5, r=lorentz)
        vec = gronwall_bounds(p, GRID)
        np.testing.assert_allclose(vec, [gronwall_bound(p, t) for t in GRID], rtol=1e-7)

    def test_monotone_and_at_least_A(self):
        p = GronwallProblem(A=2.0, M=1.3, r=lambda t: math.exp(-t) + lorentz(t))
        vals = gronwall_bounds(p, GRID)
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert min(vals) >= 2.0

    def test_zero_rate_gives_A(self):
        p = GronwallProblem(A=0.7, M=5.0, r=lambda t: 0.0)
        assert gronwall_bound(p, 3.0) == 0.7

    def test_divergent_rate(self):
        with pytest.raises(NonConvergent):
            gronwall_bound(GronwallProblem(A=1.0, M=1.0, r=lambda t: 1.0 / (1.0 + t)), 0.0)

    @pytest.mark.parametrize("kwargs", [dict(A=-1.0, M=1.0), dict(A=1.0, M=0.0)])
    def test_invalid_constants(self, kwargs):
        with pytest.raises(ValueError):
            GronwallProblem(r=lorentz, **kwargs)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            gronwall_bound(GronwallProblem(A=1.0, M=1.0, r=lorentz), -1.0)


class TestVerify:
    def test_constant_m(self):
        rep = gronwall_verify(GronwallProblem(A=2.0, M=1.0, r=lorentz, m=lambda t: 2.0), GRID)
        assert rep.hypothesis_holds and rep.conclusion_holds and rep.printed_hypothesis_holds

    def test_saturating_m(self):
        m = lambda t: math.exp(arctan_tail(t))  # noqa: E731
        rep = gronwall_verify(GronwallProblem(A=1.0, M=1.0, r=lorentz, m=m), GRID)
        assert rep.hypothesis_holds and rep.conclusion_holds
        assert rep.worst_conclusion_ratio == pytest.approx(1.0, abs=1e-5)

    def test_ten_times_bound(self):
        base = GronwallProblem(A=1.0, M=1.0, r=lorentz)
        m = lambda t: 10.0 * gronwall_bound(base, t)  # noqa: E731
        rep = gronwall_verify(GronwallProblem(A=1.0, M=1.0, r=lorentz, m=m), GRID)
        assert not rep.conclusion_holds and not rep.hypothesis_holds

    def test_printed_premise_does_not_imply_bound(self):
        # the premise integrated over [0, inf) for every t is weaker than the backward form
        rep = gronwall_verify(GronwallProblem(A=0.0, M=1.0, r=lorentz, m=lambda t: 1.0), GRID)
        assert rep.printed_hypothesis_holds
        assert not rep.hypothesis_holds and not rep.conclusion_holds

    def test_needs_m(self):
        with pytest.raises(ValueError):
            gronwall_verify(GronwallProblem(A=1.0, M=1.0, r=lorentz), GRID)

    @settings(max_examples=40, deadline=None)
    @given(
        A=st.floats(0.0, 3.0),
        M=st.floats(0.1, 3.0),
        rho=st.floats(0.2, 4.0),
        scale=st.floats(0.0, 2.0),
        shape=st.sampled_from(["saturate", "constant", "decay", "bump"]),
    )
    def test_implication_never_fails(self, A, M, rho, scale, shape):
        r = lambda t: 1.0 / (1.0 + rho * t * t)  # noqa: E731
        R = lambda t: (math.pi / 2 - math.atan(math.sqrt(rho) * t)) / math.sqrt(rho)  # noqa: E731
        m = {
            "saturate": lambda t: scale * A * math.exp(M * R(t)),
            "constant": lambda t: scale * (A + 0.1),
            "decay": lambda t: scale * math.exp(-t),
            "bump": lambda t: scale * t * math.exp(1.0 - t),
        }[shape]
        rep = gronwall_verify(GronwallProblem(A=A, M=M, r=r, m=m), GRID)
        assert rep.conclusion_holds or not rep.hypothesis_holds


class TestTruncation:
    def test_zero_weights(self):
        assert choose_truncation(LipschitzWeights(), 0.1) == 1.0

    @pytest.mark.parametrize("budget, T", [(0.05, 32.0), (0.01, 128.0), (1e-3, 1024.0)])
    def test_example7_weights(self, budget, T):
        assert choose_truncation(example7_problem().weights, budget) == T

    def test_tail_mass_formula(self):
        w = LipschitzWeights(lorentz, lorentz)
        T = 32.0
        exact = arctan_tail(T) + (math.pi / 4 - 0.5 * (math.atan(T) + T / (1 + T * T)))
        assert tail_mass(w, T) == pytest.approx(exact, rel=1e-8)

    def test_monotone_in_budget(self):
        w = example7_problem().weights
        Ts = [choose_truncation(w, b) for b in (0.5, 0.1, 0.02, 0.004)]
        assert Ts == sorted(Ts)

    def test_slow_decay_exhausts_candidates(self):
        w = LipschitzWeights(v=lambda t: (1.0 + t) ** -1.05)
        with pytest.raises(NonConvergent):
            choose_truncation(w, 1e-9)

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            choose_truncation(LipschitzWeights(), 0.0)
