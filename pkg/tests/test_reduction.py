from __future__ import annotations

import math

import numpy as np
import pytest

from graphon_reduce.errors import DegenerateKernelError, InvalidInputError
from graphon_reduce.full_system import KernelMatrix, kernel_matrix
from graphon_reduce.kernels import (KERNEL_NAMES, Bipartite, ErdosRenyi, Modular, PowerLaw, Ring, kernel_grid,
                                    make_kernel, step_graphon_matrix)
from graphon_reduce.models import GLV, SIS, DoubleWell
from graphon_reduce.numerics import IntegratorConfig, UniformGrid
from graphon_reduce.reduction import (beta_discrete, beta_eff, leading_eigenpair, reduced_branch_sweep,
                                      solve_reduced, summarize_kernel)

CFG = IntegratorConfig()


class TestBeta:
    def test_er(self):
        k = ErdosRenyi(0.1)
        assert beta_eff(k, kernel_grid(k, 200)) == pytest.approx(0.1, abs=1e-15)

    def test_ring(self):
        k = Ring(1 / 3)
        assert beta_eff(k, kernel_grid(k, 200)) == pytest.approx(2 / 3, abs=1e-12)

    def test_modular_closed_form(self):
        k = Modular(1 / 3, 0.2, 0.01)
        s1, s2 = 0.22 / 3, 0.41 / 3
        exact = (s1**2 / 3 + 2 * s2**2 / 3) / (s1 / 3 + 2 * s2 / 3)
        assert beta_eff(k, kernel_grid(k, 204)) == pytest.approx(exact, abs=1e-12)

    def test_empty(self):
        with pytest.raises(DegenerateKernelError):
            beta_eff(ErdosRenyi(0.0), UniformGrid(10))

    @pytest.mark.parametrize("kernel", [Ring(), PowerLaw()], ids=["ring", "power_law"])
    def test_discrete_converges(self, kernel):
        exact = beta_eff(kernel, kernel_grid(kernel, 2000))
        errs = [abs(beta_discrete(step_graphon_matrix(kernel, N)) - exact) for N in (8, 16, 32, 64)]
        assert all(b < a for a, b in zip(errs, errs[1:]))


class TestEigenpair:
    def test_er(self):
        k = ErdosRenyi(0.1)
        eig = leading_eigenpair(kernel_matrix(k, kernel_grid(k, 200)))
        assert abs(eig.alpha - 0.1) <= 1e-12
        np.testing.assert_allclose(eig.eigenfunction, 1.0, atol=1e-12)

    def test_bipartite(self):
        k = Bipartite(1 / 3, 0.1)
        g = kernel_grid(k, 204)
        eig = leading_eigenpair(kernel_matrix(k, g))
        assert eig.alpha == pytest.approx(0.1 * math.sqrt(2) / 3, abs=1e-12)
        a = eig.eigenfunction
        low = g.eval_points < 1 / 3
        assert a[low][0] / a[~low][0] == pytest.approx(math.sqrt(2), abs=1e-10)

    def test_power_law_matches_dense_eigensolver(self):
        k = PowerLaw()
        g = kernel_grid(k, 400)
        km = kernel_matrix(k, g)
        r = np.sqrt(km.weights)
        dense = np.linalg.eigvalsh(r[:, None] * km.values * r[None, :])[-1]
        assert leading_eigenpair(km).alpha == pytest.approx(dense, abs=1e-12)

    @pytest.mark.parametrize("name", KERNEL_NAMES)
    def test_residual_and_perron(self, name):
        k = make_kernel(name)
        g = kernel_grid(k, 200)
        km = kernel_matrix(k, g)
        eig = leading_eigenpair(km)
        assert eig.residual <= 1e-8 and eig.residual_transpose <= 1e-8
        assert np.all(eig.eigenfunction > 0)
        assert g.integrate(eig.eigenfunction) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("c", [0.5, 3.0])
    def test_scale_equivariance(self, c):
        k = PowerLaw()
        km = kernel_matrix(k, kernel_grid(k, 100))
        base = leading_eigenpair(km)
        scaled = leading_eigenpair(KernelMatrix(c * km.values, km.weights, km.nodes))
        assert scaled.alpha == pytest.approx(c * base.alpha, rel=1e-12)
        np.testing.assert_allclose(scaled.eigenfunction, base.eigenfunction, atol=1e-10)

    def test_zero_kernel(self):
        g = UniformGrid(10)
        with pytest.raises(DegenerateKernelError):
            leading_eigenpair(KernelMatrix(np.zeros((11, 11)), g.weights, g.nodes))

    def test_summary_json(self):
        s = summarize_kernel(ErdosRenyi(), M=20)
        d = s.to_json("eig.csv")
        assert d["alpha"] == pytest.approx(0.1) and d["beta_eff"] == pytest.approx(0.1)
        assert d["eigenfunction_csv_path"] == "eig.csv"


class TestReducedSolve:
    @pytest.mark.parametrize("kappa", [0.0, 0.5, 1.0, 2.0, 7.3, 20.0])
    def test_sis_closed_form(self, kappa):
        sol = solve_reduced(SIS(), kappa, 1.0, CFG)
        assert sol.converged
        assert sol.equilibrium == pytest.approx(max(0.0, 1.0 - 1.0 / kappa) if kappa else 0.0, abs=1e-8)

    def test_glv_closed_form(self):
        for kappa in (0.0, 0.3, 1.0):
            sol = solve_reduced(GLV(), kappa, 1e-6, CFG)
            assert sol.equilibrium == pytest.approx(0.5 / (1.1 - kappa), abs=1e-8)

    def test_glv_beyond_threshold_diverges(self):
        sol = solve_reduced(GLV(), 2.0, 1e-6, CFG)
        assert sol.diverged and not sol.converged

    def test_negative_coupling(self):
        with pytest.raises(InvalidInputError):
            solve_reduced(SIS(), -1.0, 1.0, CFG)

    def test_double_well_hysteresis(self):
        kappas = np.round(np.linspace(0, 20, 201), 10)
        pts = reduced_branch_sweep(DoubleWell(), kappas, CFG)
        lower = np.array([p.equilibrium for p in pts if p.ic == "lower"])
        upper = np.array([p.equilibrium for p in pts if p.ic == "upper"])
        assert np.all(upper > 4.9)
        jump = kappas[np.argmax(lower > 3.0)]
        # Saddle-node of -(x-1)(x-2)(x-5) + kappa x on the lower branch.
        xs = np.linspace(1, 2, 200001)
        kc = np.max((xs - 1) * (xs - 2) * (xs - 5) / xs)
        assert jump - 0.1 < kc <= jump
        assert np.all(lower[kappas < kc] < 2.0)

    def test_monotone_grid_required(self):
        with pytest.raises(InvalidInputError):
            reduced_branch_sweep(SIS(), [1.0, 0.5], CFG)
