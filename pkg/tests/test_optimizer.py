import dataclasses
import io

import numpy as np
import pytest

from smp_spde.forward import ControlPath, constant_control
from smp_spde.models import builtin_problem
from smp_spde.optimizer import (
    GradientPath,
    OptimizeOptions,
    estimate_gradient,
    fd_gradient_check,
    hamiltonian_eval,
    hamiltonian_grad_control,
    projected_gradient_descent,
    smp_residual,
    smp_residual_from_gradient,
)

from conftest import small


def lq_unit_spec():
    """Linear drift, G = first-mode column, q = r = 1, references zero."""
    spec = small("linear")
    return dataclasses.replace(spec, cost=dataclasses.replace(spec.cost, q=1.0, r=1.0))


class TestHamiltonian:
    def test_all_zero(self, linear_small):
        assert hamiltonian_eval(linear_small, np.zeros(4), np.zeros(1),
                                np.zeros(4), np.zeros(4)) == 0.0

    def test_hand_value(self):
        spec = lq_unit_spec()
        u = spec.space.unit_mode(1)
        v = 2.0 * spec.space.unit_mode(1)
        # 0.5 (state) + 0.125 (control energy) + 1.0 (drift pairing)
        val = hamiltonian_eval(spec, u, np.array([0.5]), v, np.zeros(4))
        assert val == pytest.approx(1.625)

    def test_linear_in_z(self, cubic_small, rng):
        u = rng.standard_normal(4)
        v = rng.standard_normal(4)
        z = rng.standard_normal(4)
        phi = np.array([0.3])
        h1 = hamiltonian_eval(cubic_small, u, phi, v, z)
        h2 = hamiltonian_eval(cubic_small, u, phi, v, 2.0 * z)
        h0 = hamiltonian_eval(cubic_small, u, phi, v, np.zeros(4))
        assert h2 - h1 == pytest.approx(h1 - h0, rel=1e-10)

    def test_accepts_full_z_matrix(self, cubic_small, rng):
        u = rng.standard_normal(4)
        v = rng.standard_normal(4)
        zd = rng.standard_normal(4)
        phi = np.array([0.1])
        full = np.diag(zd)
        assert hamiltonian_eval(cubic_small, u, phi, v, full) == pytest.approx(
            hamiltonian_eval(cubic_small, u, phi, v, zd), rel=1e-12)


class TestHamiltonianGradControl:
    def test_zeros(self, linear_small):
        np.testing.assert_array_equal(
            hamiltonian_grad_control(linear_small, np.zeros(4), np.zeros(1), np.zeros(4)), 0.0)

    def test_hand_value(self):
        spec = lq_unit_spec()
        g = hamiltonian_grad_control(spec, spec.space.unit_mode(1), np.array([0.5]),
                                     2.0 * spec.space.unit_mode(1))
        np.testing.assert_allclose(g, [2.5])

    @pytest.mark.parametrize("name", ["linear", "cubic", "burgers"])
    def test_matches_fd_of_hamiltonian(self, name, rng):
        spec = small(name)
        u = rng.standard_normal(4)
        v = rng.standard_normal(4)
        z = rng.standard_normal(4)
        phi = rng.standard_normal(1)
        eps = 1e-6
        fd = (hamiltonian_eval(spec, u, phi + eps, v, z)
              - hamiltonian_eval(spec, u, phi - eps, v, z)) / (2 * eps)
        assert hamiltonian_grad_control(spec, u, phi, v)[0] == pytest.approx(fd, rel=1e-7)


class TestEstimateGradient:
    def test_zero_cost_zero_gradient(self, linear_small):
        spec = dataclasses.replace(
            linear_small, cost=dataclasses.replace(linear_small.cost, q=0.0, g=0.0))
        grad = estimate_gradient(spec, spec.u0, constant_control(spec, [0.0]),
                                 n_paths=10, seed=0)
        np.testing.assert_allclose(grad.values, 0.0, atol=1e-14)

    def test_directional_matches_central_difference(self, cubic_small):
        ctrl = constant_control(cubic_small, [0.3])
        d = constant_control(cubic_small, [0.8])
        rep = fd_gradient_check(cubic_small, cubic_small.u0, ctrl, [d], [1e-4],
                                n_paths=30, seed=2)
        assert rep.rel_errors[0, 0] < 1e-6

    def test_lsmc_gradient_close_to_exact(self):
        spec = small("linear", sigma0=0.1)
        ctrl = constant_control(spec, [0.2])
        exact = estimate_gradient(spec, spec.u0, ctrl, n_paths=600, seed=1)
        lsmc = estimate_gradient(spec, spec.u0, ctrl, n_paths=600, seed=1, method="lsmc")
        scale = np.max(np.abs(exact.values))
        assert np.max(np.abs(lsmc.values - exact.values)) / scale < 5e-2

    def test_unknown_method(self, linear_small):
        with pytest.raises(ValueError, match="method"):
            estimate_gradient(linear_small, linear_small.u0,
                              constant_control(linear_small, [0.0]), method="autodiff")

    def test_blowup_propagated(self, linear_small):
        spec = dataclasses.replace(linear_small, u0=1e6 * np.ones(4))
        ctrl = constant_control(spec, [0.0])
        import smp_spde.optimizer as opt
        import smp_spde.forward as fwd
        # tighten the guard through a small-horizon, large-state setup
        with pytest.raises(ValueError, match="blew up"):
            # m_guard default 1e8 < ||u0||^2 = 4e12
            opt.estimate_gradient(spec, spec.u0, ctrl, n_paths=3, seed=0)

    def test_std_err_shrinks(self, cubic_small):
        ctrl = constant_control(cubic_small, [0.3])
        g_small = estimate_gradient(cubic_small, cubic_small.u0, ctrl, n_paths=20, seed=0)
        g_big = estimate_gradient(cubic_small, cubic_small.u0, ctrl, n_paths=320, seed=0)
        assert np.mean(g_big.std_err) < np.mean(g_small.std_err)


class TestFdGradientCheck:
    def test_remainder_slope_near_two(self, cubic_small):
        ctrl = constant_control(cubic_small, [0.2])
        d = constant_control(cubic_small, [1.0])
        rep = fd_gradient_check(cubic_small, cubic_small.u0, ctrl, [d],
                                [1e-2, 1e-3, 1e-4], n_paths=20, seed=1)
        assert 1.9 <= rep.remainder_slopes[0] <= 2.1

    def test_zero_direction(self, linear_small):
        ctrl = constant_control(linear_small, [0.1])
        d = constant_control(linear_small, [0.0])
        rep = fd_gradient_check(linear_small, linear_small.u0, ctrl, [d],
                                [1e-3, 1e-4], n_paths=5, seed=0)
        np.testing.assert_allclose(rep.rel_errors, 0.0, atol=1e-12)
        np.testing.assert_allclose(rep.directional, 0.0, atol=1e-15)

    def test_deterministic_high_accuracy(self):
        spec = builtin_problem("clipped-lq")
        ctrl = constant_control(spec, [0.1])
        d = constant_control(spec, [0.5])
        rep = fd_gradient_check(spec, spec.u0, ctrl, [d], [1e-5], n_paths=1, seed=0)
        assert rep.rel_errors[0, 0] < 1e-9


class TestSmpResidual:
    def test_zero_gradient_zero_residual(self, linear_small):
        ctrl = constant_control(linear_small, [0.5])
        grad = GradientPath(values=np.zeros((20, 1)), std_err=np.zeros(20))
        assert smp_residual_from_gradient(linear_small, ctrl, grad)["max_over_t"] == 0.0

    def test_lower_bound_positive_gradient_tight(self, linear_small):
        # at the lower bound with positive gradient every competitor is worse
        ctrl = constant_control(linear_small, [-2.0])
        grad = GradientPath(values=np.ones((20, 1)), std_err=np.zeros(20))
        assert smp_residual_from_gradient(linear_small, ctrl, grad)["max_over_t"] == 0.0

    def test_interior_nonzero_gradient_positive(self, linear_small):
        ctrl = constant_control(linear_small, [0.0])
        grad = GradientPath(values=np.ones((20, 1)), std_err=np.zeros(20))
        out = smp_residual_from_gradient(linear_small, ctrl, grad)
        assert out["max_over_t"] == pytest.approx(2.0)  # g*(phi - lower) = 2
        assert len(out["per_step"]) == 20

    def test_inadmissible_control_rejected(self, linear_small):
        with pytest.raises(ValueError, match="admissible"):
            smp_residual(linear_small, linear_small.u0,
                         constant_control(linear_small, [3.0]), n_paths=2)


class TestProjectedGradientDescent:
    def test_pure_control_energy_goes_to_zero(self, linear_small):
        # q = g = 0: the cost is control energy alone, minimized at 0
        spec = dataclasses.replace(
            linear_small, cost=dataclasses.replace(linear_small.cost, q=0.0, g=0.0))
        opts = OptimizeOptions(max_iters=100, n_paths=2, seed=0, tol=1e-12)
        rep = projected_gradient_descent(spec, spec.u0, constant_control(spec, [1.5]), opts)
        assert np.max(np.abs(rep.final_control.values)) < 1e-4

    def test_accepted_steps_decrease_cost(self):
        spec = builtin_problem("clipped-lq")
        opts = OptimizeOptions(max_iters=50, n_paths=1, seed=0, tol=0.0)
        rep = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        diffs = np.diff(rep.iterates)
        # decrease is strict until the improvements fall below float resolution
        assert np.all(diffs <= 0.0)
        assert np.all(diffs[:3] < 0.0)

    def test_restart_from_optimum_stops_quickly(self):
        spec = builtin_problem("clipped-lq")
        opts = OptimizeOptions(max_iters=400, n_paths=1, seed=0, tol=1e-8)
        first = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        again = projected_gradient_descent(spec, spec.u0, first.final_control, opts)
        assert len(again.iterates) - 1 <= 2

    def test_stall_reported_not_raised(self):
        spec = builtin_problem("clipped-lq")
        opts = OptimizeOptions(max_iters=10000, n_paths=1, seed=0, tol=0.0)
        rep = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        assert rep.stalled and not rep.converged

    def test_seed_invariant_report(self):
        spec = builtin_problem("clipped-lq")
        opts = OptimizeOptions(max_iters=20, n_paths=1, seed=4, tol=0.0)
        a = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        b = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        assert a.to_json() == b.to_json()

    def test_inadmissible_start_projected(self, linear_small):
        opts = OptimizeOptions(max_iters=1, n_paths=2, seed=0)
        rep = projected_gradient_descent(linear_small, linear_small.u0,
                                         constant_control(linear_small, [9.0]), opts)
        assert np.all(rep.final_control.values <= 2.0)

    def test_csv_log_layout(self):
        spec = builtin_problem("clipped-lq")
        opts = OptimizeOptions(max_iters=3, n_paths=1, seed=0, tol=0.0)
        rep = projected_gradient_descent(spec, spec.u0, constant_control(spec, [0.0]), opts)
        buf = io.StringIO()
        rep.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iter,cost,std_err,step,smp_residual"
        assert len(lines) == len(rep.line_search_log) + 1
