import numpy as np
import pytest

from bdsde_lab.core import CoefficientSet, Dimensions, LipschitzWeights, ProblemSpec, TerminalCondition, TimeGrid
from bdsde_lab.exceptions import NoConvergence
from bdsde_lab.oracle import example7_problem
from bdsde_lab.solver import BDSDESolver, SolutionPair, SolverConfig, bnorm, solve, uniqueness_probe
from bdsde_lab.stoch_calc import generate_bundle


def zero_f(t, y, z):
    return np.zeros_like(y)


def zero_g(t, y):
    return np.zeros(y.shape + (1,))


def problem(terminal, f=zero_f, g=zero_g, weights=None):
    return ProblemSpec(Dimensions(1, 1, 1), CoefficientSet(f, g, weights or LipschitzWeights()), terminal)


W_T = TerminalCondition(lambda b: b.W_T[:, :1])
GRID = TimeGrid.uniform(1.0, 16)


def test_zero_problem_exact():
    sol, diag = solve(problem(TerminalCondition.constant([0.0])), GRID, SolverConfig(n_paths=256))
    assert np.all(sol.Y == 0.0) and np.all(sol.Z == 0.0)
    assert diag.converged and diag.n_sweeps == 1


def test_martingale_terminal():
    sol, _ = solve(problem(W_T), TimeGrid.uniform(1.0, 32), SolverConfig(n_paths=4096, seed=3))
    bundle = generate_bundle(sol.grid, Dimensions(1, 1, 1), 4096, seed=3)
    assert np.abs(sol.Y[:, :, 0] - bundle.W[:, :, 0]).mean() < 0.02
    assert abs(sol.Z[:, :-1].mean() - 1.0) < 0.02


def test_terminal_condition_kept():
    sol, _ = solve(example7_problem(), GRID, SolverConfig(n_paths=128))
    assert np.all(sol.Y[:, -1] == 1.0) and np.all(sol.Z[:, -1] == 0.0)


@pytest.mark.parametrize("mode", ["coupled", "picard"])
def test_linear_in_terminal(mode):
    cfg = SolverConfig(n_paths=512, mode=mode, picard_tol=1e-9, picard_max=40)
    base, _ = solve(example7_problem(1.0), GRID, cfg)
    scaled, _ = solve(example7_problem(-2.5), GRID, cfg)
    np.testing.assert_allclose(scaled.Y, -2.5 * base.Y, rtol=1e-8, atol=1e-12)


def test_example7_matches_pathwise_solution():
    # for constant xi the solution at 0 is exp(A + I_B - q/2) path by path
    grid = TimeGrid.uniform(4.0, 64)
    bundle = generate_bundle(grid, Dimensions(1, 1, 1), 4096, seed=5)
    sol, _ = solve(example7_problem(), grid, bundle=bundle)
    rate = 1.0 / (1.0 + grid.points[1:] ** 2)
    exact = np.exp(np.arctan(4.0) + bundle.dB[:, :, 0] @ rate - 0.5 * (rate**2) @ grid.steps)
    assert np.mean(sol.Y[:, 0, 0] - exact) == pytest.approx(0.0, abs=0.05 * exact.mean())


def test_deterministic():
    cfg = SolverConfig(n_paths=300, seed=9)
    a, _ = solve(example7_problem(), GRID, cfg)
    b, _ = solve(example7_problem(), GRID, cfg)
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z)


class TestBnorm:
    def _pair(self, Y, Z, grid):
        return SolutionPair(Y, Z, grid)

    def test_zero(self):
        n, N = 4, GRID.N
        assert bnorm(self._pair(np.zeros((n, N + 1, 1)), np.zeros((n, N + 1, 1, 1)), GRID)) == 0.0

    @pytest.mark.parametrize("c", [0.5, -3.0])
    def test_constant_y(self, c):
        n, N = 4, GRID.N
        assert bnorm(self._pair(np.full((n, N + 1, 1), c), np.zeros((n, N + 1, 1, 1)), GRID)) == pytest.approx(abs(c))

    def test_unit_z(self):
        n, N = 4, GRID.N
        Z = np.ones((n, N + 1, 1, 1))
        Z[:, -1] = 0.0
        assert bnorm(self._pair(np.zeros((n, N + 1, 1)), Z, GRID)) == pytest.approx(np.sqrt(GRID.T))


class TestEstimator:
    def test_get_params(self):
        est = BDSDESolver(n_paths=10, mode="picard")
        params = est.get_params()
        assert params["n_paths"] == 10 and params["mode"] == "picard"
        assert set(params) == set(SolverConfig.__dataclass_fields__)

    def test_predict_on_training_paths(self):
        est = BDSDESolver(n_paths=400, seed=2).fit(example7_problem(), GRID)
        pred = est.predict(est.bundle_)
        np.testing.assert_allclose(pred.Y, est.solution_.Y, rtol=1e-10, atol=1e-12)

    def test_predict_fresh_paths(self):
        est = BDSDESolver(n_paths=2048, seed=2).fit(example7_problem(), GRID)
        fresh = generate_bundle(GRID, Dimensions(1, 1, 1), 2048, seed=77)
        pred = est.predict(fresh)
        assert pred.Y[:, 0, 0].mean() == pytest.approx(est.solution_.Y[:, 0, 0].mean(), rel=0.03)

    def test_predict_wrong_grid(self):
        est = BDSDESolver(n_paths=64).fit(example7_problem(), GRID)
        with pytest.raises(ValueError):
            est.predict(generate_bundle(TimeGrid.uniform(1.0, 8), Dimensions(1, 1, 1), 64))

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            BDSDESolver(mode="newton").fit(example7_problem(), GRID)


class TestPicard:
    def test_deltas_reach_tolerance(self):
        cfg = SolverConfig(n_paths=1024, mode="picard", picard_tol=1e-6, picard_max=50)
        _, diag = solve(example7_problem(), TimeGrid.uniform(8.0, 32), cfg)
        assert diag.converged and diag.picard_deltas[-1] <= 1e-6
        assert diag.picard_deltas[-1] < diag.picard_deltas[0]

    def test_quadratic_driver_blows_up(self):
        quad = problem(TerminalCondition.constant([1.0]), f=lambda t, y, z: y * y)
        cfg = SolverConfig(n_paths=64, mode="picard", picard_max=30, picard_tol=1e-8)
        with pytest.raises(NoConvergence) as info:
            solve(quad, TimeGrid.uniform(3.0, 32), cfg)
        assert info.value.picard_deltas

    def test_uniqueness_trivial(self):
        rep = uniqueness_probe(problem(W_T), GRID, SolverConfig(n_paths=256))
        assert rep.gap == pytest.approx(0.0, abs=1e-9)

    def test_uniqueness_example7(self):
        cfg = SolverConfig(n_paths=1024, picard_tol=1e-7, picard_max=60)
        rep = uniqueness_probe(example7_problem(), TimeGrid.uniform(8.0, 32), cfg)
        assert rep.gap < 1e-5
        assert rep.deltas_from_constant[0] > rep.deltas_from_zero[0]
