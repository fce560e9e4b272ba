from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphon_reduce.errors import InvalidInputError, NumericalBlowupError
from graphon_reduce.numerics import (IntegratorConfig, UniformGrid, integrate_batch, integrate_span,
                                     integrate_to_equilibrium, newton_polish, rk4_step, simpson_integrate,
                                     simpson_weights, snap_grid_size, solve_equilibria)


class TestSimpson:
    def test_weight_pattern(self):
        w = simpson_weights(6) * 18
        np.testing.assert_allclose(w, [1, 4, 2, 4, 2, 4, 1])

    @pytest.mark.parametrize("M", [2, 4, 10, 200, 1000, 10_000])
    def test_weights_sum_to_one(self, M):
        assert abs(simpson_weights(M).sum() - 1.0) <= 1e-15

    def test_constant_is_exact(self):
        assert simpson_integrate(np.ones(9)) == pytest.approx(1.0, abs=1e-15)

    def test_quadratic_on_two_intervals(self):
        y = np.linspace(0, 1, 3)
        assert abs(simpson_integrate(y**2) - 1 / 3) <= 1e-15

    def test_fourth_order_on_exponential(self):
        exact = math.e - 1
        errs = [abs(simpson_integrate(np.exp(np.linspace(0, 1, M + 1))) - exact) for M in (8, 16)]
        assert max(errs) < 5e-6
        assert 14 < errs[0] / errs[1] < 17

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_bad_length(self, n):
        with pytest.raises(InvalidInputError):
            simpson_integrate(np.ones(n))

    def test_grid_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            simpson_integrate(np.ones(5), UniformGrid(6))


class TestGrid:
    def test_plain_grid(self):
        g = UniformGrid(4)
        np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        assert g.size == 5

    def test_split_grid_duplicates_node(self):
        g = UniformGrid(6, (1 / 3,))
        assert g.size == 8
        np.testing.assert_allclose(g.nodes, [0, 1 / 6, 1 / 3, 1 / 3, 0.5, 2 / 3, 5 / 6, 1])
        assert g.eval_points[2] < 1 / 3 < g.eval_points[3]
        assert abs(g.weights.sum() - 1) < 1e-15

    def test_split_grid_integrates_step_exactly(self):
        g = UniformGrid(12, (1 / 3,))
        vals = np.where(g.eval_points < 1 / 3, 2.0, 5.0)
        assert g.integrate(vals) == pytest.approx(2 / 3 + 5 * 2 / 3, abs=1e-14)

    def test_split_must_be_even_node(self):
        with pytest.raises(InvalidInputError):
            UniformGrid(3 * 4 + 2, (1 / 3,))
        with pytest.raises(InvalidInputError):
            UniformGrid(6, (0.5,))

    def test_odd_M_rejected(self):
        with pytest.raises(InvalidInputError):
            UniformGrid(5)

    def test_snap(self):
        assert snap_grid_size(200, (1 / 3,), (1 / 3,)) == 204
        assert snap_grid_size(200, (1 / 3,)) == 204
        assert snap_grid_size(200) == 200
        assert snap_grid_size(201) == 202


class TestRK4:
    def test_exponential_decay(self):
        x = np.array([1.0])
        for i in range(100):
            x = rk4_step(lambda v: -v, x, 0.01, i * 0.01)
        assert abs(x[0] - math.exp(-1)) < 1e-9

    def test_zero_field(self):
        x = np.array([0.3, -2.0])
        np.testing.assert_array_equal(rk4_step(lambda v: np.zeros_like(v), x, 0.1), x)

    def test_constant_field_is_exact(self):
        x = np.array([1.0, 2.0])
        c = np.array([0.5, -3.0])
        np.testing.assert_allclose(rk4_step(lambda v: c, x, 0.25), x + 0.25 * c, rtol=0, atol=1e-15)

    def test_global_order(self):
        def run(dt):
            x = np.array([1.0])
            for i in range(int(round(1 / dt))):
                x = rk4_step(lambda v: -v, x, dt)
            return abs(x[0] - math.exp(-1))

        ratio = run(0.1) / run(0.05)
        assert 14 <= ratio <= 18

    def test_blowup_carries_time(self):
        with pytest.raises(NumericalBlowupError) as info:
            rk4_step(lambda v: np.full_like(v, np.nan), np.array([1.0]), 0.1, t=2.5)
        assert info.value.time == pytest.approx(2.5)


class TestEquilibrium:
    def test_decay_converges(self):
        res = integrate_to_equilibrium(lambda v: -v, np.array([1.0]), IntegratorConfig())
        assert res.converged
        assert abs(res.state[0]) < 1e-9

    def test_double_well_from_zero_reaches_first_root(self):
        rhs = lambda v: -(v - 1) * (v - 2) * (v - 5)
        res = integrate_to_equilibrium(rhs, np.array([0.0]), IntegratorConfig())
        assert res.converged
        assert res.state[0] == pytest.approx(1.0, abs=1e-8)

    def test_growth_does_not_converge(self):
        res = integrate_to_equilibrium(lambda v: v, np.array([1.0]), IntegratorConfig(t_max=1.0))
        assert not res.converged
        assert res.time == pytest.approx(1.0)

    def test_blowup_propagates(self):
        with pytest.raises(NumericalBlowupError):
            integrate_to_equilibrium(lambda v: v**3, np.array([2.0]), IntegratorConfig(t_max=10.0))

    def test_idempotent(self):
        cfg = IntegratorConfig()
        rhs = lambda v: 0.5 - v
        first = integrate_to_equilibrium(rhs, np.array([3.0]), cfg)
        second = integrate_to_equilibrium(rhs, first.state, cfg)
        assert second.time == 0.0
        assert abs(second.state[0] - first.state[0]) <= cfg.equilibrium_tol * cfg.dt

    @pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"dt": -1.0}, {"equilibrium_tol": 0.0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(InvalidInputError):
            IntegratorConfig(**kwargs)


class TestBatch:
    def test_rows_independent_and_flags(self):
        rates = np.array([-1.0, -2.0, 1.0])
        cfg = IntegratorConfig(t_max=30.0)
        res = integrate_batch(lambda X, rows: rates[rows, None] * X, np.ones((3, 2)), cfg)
        assert res.converged.tolist() == [True, True, False]
        assert res.diverged.tolist() == [False, False, True]
        assert res.hi[2] > cfg.blowup_threshold or not np.isfinite(res.hi[2])
        assert res.times[1] < res.times[0]

    def test_matches_single_trajectory(self):
        cfg = IntegratorConfig()
        rhs1 = lambda v: -(v - 1) * (v - 2) * (v - 5) + 1.5 * v
        single = integrate_to_equilibrium(rhs1, np.array([0.0]), cfg)
        batch = integrate_batch(lambda X, rows: rhs1(X), np.zeros((1, 1)), cfg)
        assert batch.states[0, 0] == single.state[0]
        assert batch.times[0] == pytest.approx(single.time)

    def test_newton_polish_sharpens(self):
        rhs = lambda X, rows: 2.0 - X**2
        jac = lambda X, rows: (-2.0 * X)[:, :, None]
        X = np.array([[1.4142]])
        new, ok = newton_polish(rhs, jac, X, np.array([0]))
        assert ok[0]
        assert new[0, 0] == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_newton_rejects_unstable_target(self):
        rhs = lambda X, rows: X - X**3  # 0 is unstable, +-1 stable
        jac = lambda X, rows: (1.0 - 3.0 * X**2)[:, :, None]
        new, ok = newton_polish(rhs, jac, np.array([[1e-4]]), np.array([0]), check_stability=np.array([True]))
        assert not ok[0]
        assert new[0, 0] == 1e-4

    def test_solve_equilibria_critical_slowing(self):
        # x' = -x^2 decays like 1/t; Newton finishes what time stepping cannot.
        rhs = lambda X, rows: -X**2
        jac = lambda X, rows: (-2.0 * X)[:, :, None]
        res = solve_equilibria(rhs, jac, np.ones((1, 1)), IntegratorConfig(t_max=100.0))
        assert res.converged[0]
        assert abs(res.states[0, 0]) < 1e-8

    def test_span_snapshots(self):
        traj = integrate_span(lambda v: -v, np.array([1.0]), 0.01, 1.0, 0.25)
        np.testing.assert_allclose(traj.times, [0, 0.25, 0.5, 0.75, 1.0])
        assert traj.snapshots[-1, 0] == pytest.approx(math.exp(-1), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500).map(lambda k: 2 * k))
def test_simpson_exact_on_cubics(M):
    y = np.linspace(0, 1, M + 1)
    assert abs(simpson_integrate(4 * y**3 - y**2 + 2) - (1 - 1 / 3 + 2)) < 1e-13
