from __future__ import annotations

import numpy as np
import pytest

from graphon_reduce.errors import DegenerateKernelError, InvalidInputError
from graphon_reduce.full_system import (StateField, boundedness_check, finite_network_matrix, full_rhs,
                                        gbb_observable, integrate_full, kernel_matrix, solve_full,
                                        solve_full_batch, spectral_observable)
from graphon_reduce.kernels import (ErdosRenyi, Modular, PowerLaw, Ring, degree_field, kernel_grid, make_kernel,
                                    KERNEL_NAMES)
from graphon_reduce.models import GLV, SIS, DoubleWell, WilsonCowan, make_model
from graphon_reduce.numerics import IntegratorConfig, UniformGrid
from graphon_reduce.reduction import leading_eigenpair, solve_reduced_batch

CFG = IntegratorConfig()


@pytest.fixture(scope="module")
def er():
    k = ErdosRenyi(0.1)
    g = kernel_grid(k, 40)
    return k, g, kernel_matrix(k, g)


def test_sis_constant_field_rhs(er):
    _, g, km = er
    out = full_rhs(SIS(mu=1.0, D=1.0), km, np.full(g.size, 0.5))
    np.testing.assert_allclose(out, -0.475, atol=1e-15)


@pytest.mark.parametrize("name", ["sis", "double_well", "mutualistic", "wilson_cowan"])
def test_zero_coupling_decouples(name):
    k = PowerLaw()
    g = kernel_grid(k, 20)
    km = kernel_matrix(k, g)
    m = make_model(name, D=0.0)
    x = np.linspace(0.1, 3.0, g.size)
    np.testing.assert_array_equal(full_rhs(m, km, x), m.f(x))


def test_double_well_root_is_rest_state():
    k = Modular()
    g = kernel_grid(k, 12)
    out = full_rhs(DoubleWell(D=0.0), kernel_matrix(k, g), np.full(g.size, 2.0))
    assert np.all(out == 0)


def test_dimension_mismatch(er):
    _, g, km = er
    with pytest.raises(InvalidInputError):
        full_rhs(SIS(), km, np.ones(g.size + 1))


def test_kernel_matrix_symmetric():
    for name in KERNEL_NAMES:
        k = make_kernel(name)
        km = kernel_matrix(k, kernel_grid(k, 30))
        assert np.array_equal(km.values, km.values.T)
        assert np.all((km.values >= 0) & (km.values <= 1))


class TestSolveFull:
    def test_sis_below_threshold(self, er):
        k, g, km = er
        sol = solve_full(SIS(D=5.0), km, g, "upper", CFG)  # D p = 0.5 < mu
        assert sol.converged
        assert np.max(np.abs(sol.field.values)) < 1e-6

    def test_sis_above_threshold(self, er):
        k, g, km = er
        sol = solve_full(SIS(D=20.0), km, g, "upper", CFG)  # D p = 2
        assert sol.converged
        np.testing.assert_allclose(sol.field.values, 0.5, atol=1e-9)

    def test_double_well_rest(self, er):
        k, g, km = er
        sol = solve_full(DoubleWell(D=0.0), km, g, "upper", CFG)
        assert sol.converged and np.all(sol.field.values == 5.0)

    def test_unknown_ic(self, er):
        k, g, km = er
        with pytest.raises(InvalidInputError):
            solve_full(SIS(), km, g, "lower", CFG)

    def test_modular_blocks_agree(self):
        k = Modular()
        g = kernel_grid(k, 60)
        res = solve_full_batch(WilsonCowan(), kernel_matrix(k, g), [40.0], 0.0, CFG)
        x = res.states[0]
        low = g.eval_points < k.gamma
        assert np.ptp(x[low]) <= 1e-9 and np.ptp(x[~low]) <= 1e-9
        assert abs(x[low][0] - x[~low][0]) > 1e-3

    def test_sis_stays_in_unit_interval(self):
        k = PowerLaw()
        g = kernel_grid(k, 40)
        res = solve_full_batch(SIS(), kernel_matrix(k, g), np.linspace(0, 30, 7), 1.0, CFG)
        assert np.all(res.lo >= -1e-9) and np.all(res.hi <= 1 + 1e-9)
        assert res.converged.all()

    def test_glv_divergence_is_flagged(self, er):
        _, g, km = er
        res = solve_full_batch(GLV(), km, [5.0, 20.0], 1e-6, CFG)  # D p = 0.5 and 2 against c = 1.1
        assert res.converged[0] and not res.diverged[0]
        assert res.diverged[1]


def test_er_homogeneity_and_gbb_exactness(er):
    """For a constant kernel and constant initial field the solution stays constant and matches GBB."""
    k, g, km = er
    m = SIS(D=30.0)
    traj = integrate_full(m, km, 0.9, 0.01, 10.0, 0.5)
    assert np.max(np.ptp(traj.snapshots, axis=1)) <= 1e-9
    s = degree_field(k, g)
    obs = np.array([gbb_observable(x, s, g.weights) for x in traj.snapshots])
    from graphon_reduce.numerics import integrate_span
    red = integrate_span(lambda x: m.reduced_rhs(m.D * 0.1, x), np.array([0.9]), 0.01, 10.0, 0.5)
    np.testing.assert_allclose(obs, red.snapshots[:, 0], atol=1e-6)


class TestObservables:
    def test_constant_field(self):
        k = PowerLaw()
        g = kernel_grid(k, 20)
        s = degree_field(k, g)
        assert gbb_observable(np.full(g.size, 0.7), s, g.weights) == pytest.approx(0.7, abs=1e-15)

    def test_er_is_plain_mean(self, er):
        k, g, km = er
        x = np.sin(3 * g.nodes) + 2
        s = degree_field(k, g)
        mean = g.weights @ x
        assert gbb_observable(x, s, g.weights) == pytest.approx(mean, abs=1e-14)
        eig = leading_eigenpair(km)
        assert spectral_observable(x, eig.eigenfunction, g.weights) == pytest.approx(mean, abs=1e-14)

    def test_modular_indicator(self):
        k = Modular(1 / 3, 0.2, 0.01)
        g = kernel_grid(k, 60)
        x = np.where(g.eval_points < 1 / 3, 1.0, 0.0)
        s1, s2 = 0.2 / 3 + 0.02 / 3, 0.01 / 3 + 0.4 / 3
        expected = (s1 / 3) / (s1 / 3 + 2 * s2 / 3)
        assert gbb_observable(x, degree_field(k, g), g.weights) == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(0.2115, abs=1e-4)

    def test_empty_graphon(self):
        g = UniformGrid(4)
        with pytest.raises(DegenerateKernelError):
            gbb_observable(np.ones(5), np.zeros(5), g.weights)

    def test_unnormalized_eigenfunction(self):
        g = UniformGrid(4)
        with pytest.raises(InvalidInputError):
            spectral_observable(np.ones(5), 2 * np.ones(5), g.weights)

    def test_state_field_validation(self):
        g = UniformGrid(4)
        with pytest.raises(InvalidInputError):
            StateField(np.array([1.0, np.nan, 0, 0, 0]), g.weights, g.nodes)


class TestBoundedness:
    def test_sis(self):
        rep = boundedness_check(1.0, 1.0, SIS(D=10.0), 500.0)
        assert rep.passed

    def test_double_well_uses_absolute_constant(self):
        rep = boundedness_check(5.0, 5.0, DoubleWell(D=0.0), 500.0)
        assert rep.constant == pytest.approx(2 * 10 * 500)
        assert rep.passed

    def test_wilson_cowan_constant_includes_coupling(self):
        m = WilsonCowan(D=10.0)
        rep = boundedness_check(3.0, 0.0, m, 2.0)
        assert rep.constant == pytest.approx(2 * 10 / (1 + np.exp(3)) * 2)

    def test_glv_violates_constant(self):
        # GLV is not globally Lipschitz and f(0) = G(0,0) = 0, so the bound is 4 ||x0||.
        rep = boundedness_check(0.45, 1e-6, GLV(D=1.0), 500.0)
        assert rep.finite and not rep.within_bound

    def test_non_finite(self):
        assert not boundedness_check(np.inf, 1.0, SIS(), 1.0).passed


class TestFiniteNetwork:
    def test_uses_cell_averages_and_uniform_weights(self):
        km = finite_network_matrix(Modular(), 6)
        np.testing.assert_allclose(km.weights, 1 / 6)
        assert km.values[0, 1] == pytest.approx(0.2) and km.values[0, 5] == pytest.approx(0.01)

    def test_matches_direct_network_sum(self):
        """The shared right-hand side equals f(x_i) + (D/N) sum_j A_ij G(x_i, x_j)."""
        k = Ring()
        N = 12
        km = finite_network_matrix(k, N)
        m = SIS(D=2.5)
        x = np.linspace(0.1, 0.9, N)
        A = km.values
        direct = m.f(x) + m.D / N * np.array([sum(A[i, j] * m.G(x[i], x[j]) for j in range(N)) for i in range(N)])
        np.testing.assert_allclose(full_rhs(m, km, x), direct, rtol=1e-14)

    def test_modular_aligned_network_is_exact(self):
        """When cells align with the blocks the network reproduces the graphon solution."""
        k = Modular()
        m = SIS(D=8.0)
        g = kernel_grid(k, 60)
        km = kernel_matrix(k, g)
        net = finite_network_matrix(k, 6)
        ref = integrate_full(m, km, 0.8, 0.01, 3.0, 1.0)
        sol = integrate_full(m, net, 0.8, 0.01, 3.0, 1.0)
        low = g.eval_points < 1 / 3
        assert abs(sol.snapshots[-1][0] - ref.snapshots[-1][low][0]) < 1e-12
        assert abs(sol.snapshots[-1][-1] - ref.snapshots[-1][~low][0]) < 1e-12


def test_reduced_batch_consistency():
    res = solve_reduced_batch(SIS(), [0.5, 2.0, 4.0], 1.0, CFG)
    np.testing.assert_allclose(res.states[:, 0], [0.0, 0.5, 0.75], atol=1e-10)
