import numpy as np
import pytest

from roughdelay.path_algebra import OffGridError, chen_defect, sup_norm
from roughdelay.signals import SignalSpec, driver_for, generate
from roughdelay.solver import DelayProblem, ProblemSpec, SolverBlowUp, shifted_solution, solve, solve_delay, solve_nodelay


def spec(**kw):
    base = dict(solver_n=256, fine_factor=4, r=0.125, r0=0.25)
    base.update(kw)
    return ProblemSpec(**base)


def problem_on(path, tensor, n, coeff, r, r0=0.25, eta0=0.5):
    """Problem sharing a pre-generated fine signal, so different n see the same driver."""
    s = ProblemSpec(coeff_name=coeff, r=r, r0=r0, solver_n=n, eta0=eta0)
    drv = driver_for(path, tensor, n, rs=[r] if r else [], T=1.0)
    c = s.coeff()
    return DelayProblem(s.exps, 1.0, r, r0, s.eta_path(c.d), c, drv, n)


class TestNoDelay:
    def test_constant_sigma_exact(self):
        p = spec(coeff_name="constant", coeff_params=(("c", 1.5),), r=0.0).build(seed=3)
        res = solve_nodelay(p)
        y = p.driver.y.restrict(0.0, 1.0)
        np.testing.assert_allclose(res.x.values[:, 0], 0.5 + 1.5 * (y.values[:, 0] - y.values[0, 0]), atol=1e-13)

    def test_pure_drift(self):
        p = spec(coeff_name="constant", coeff_params=(("c", 0.0), ("drift", "const"), ("drift_a", -0.75)), r=0.0).build()
        res = solve_nodelay(p)
        np.testing.assert_allclose(res.x.values[:, 0], 0.5 - 0.75 * res.x.times, atol=1e-12)

    @pytest.mark.parametrize("seed", [42, 7])
    def test_stratonovich_exponential(self, seed):
        s = ProblemSpec(coeff_name="affine_test", r=0.0, r0=0.0, solver_n=4096, fine_factor=4, eta0=1.0, ito_correction=False)
        p = s.build(seed=seed)
        res = solve(p, diagnostics=False)
        exact = np.exp(p.driver.y.at(1.0)[0])
        assert abs(res.x.values[-1, 0] - exact) <= 0.01 * abs(exact)

    def test_chen_of_solution(self):
        res = solve(spec(r=0.0).build(seed=1))
        assert chen_defect(res.x_tensor, relative=True) <= 1e-10

    def test_blow_up(self):
        p = spec(coeff_name="constant", coeff_params=(("drift", "linear"), ("drift_c", 1e5)), r=0.0).build()
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(SolverBlowUp, match="blow-up at step"):
            solve(p)

    def test_smooth_self_convergence(self):
        path, tensor = generate(SignalSpec(kind="smooth_sine", fine_n=4096, r_max=0.25))
        errs = []
        ref = solve(problem_on(path, tensor, 4096, "tanh_diag", 0.0), diagnostics=False).x.values[-1]
        for n in (128, 256, 512):
            x = solve(problem_on(path, tensor, n, "tanh_diag", 0.0), diagnostics=False).x.values[-1]
            errs.append(abs(x - ref)[0])
        assert errs[1] <= errs[0] / 2 and errs[2] <= errs[1] / 2


class TestDelay:
    def test_constant_sigma_independent_of_r(self):
        base = spec(coeff_name="constant", coeff_params=(("c", 0.7),))
        p = base.build(seed=5, rs=[0.25, 0.125, 0.0625])
        ref = solve(p.with_r(0.0)).on_positive()[0].values
        for r in (0.25, 0.125, 0.0625):
            np.testing.assert_array_equal(solve(p.with_r(r)).on_positive()[0].values, ref)

    def test_prefix_is_eta(self):
        p = spec(eta_slope=0.3).build(seed=2)
        res = solve_delay(p)
        pre = res.x.restrict(-p.r, 0.0)
        eta = p.eta.restrict(-p.r, 0.0)
        np.testing.assert_array_equal(pre.values, eta.values)

    def test_requires_positive_r(self):
        with pytest.raises(ValueError):
            solve_delay(spec(r=0.0).build())

    def test_off_grid_r(self):
        p = spec().build(seed=1)
        with pytest.raises(OffGridError, match="not a multiple"):
            p.with_r(0.1)

    def test_missing_delayed_tensor(self):
        p = spec().build(seed=1, rs=[0.125])
        with pytest.raises(KeyError):
            solve(p.with_r(0.0625))

    def test_chen_of_delay_solution(self):
        res = solve(spec().build(seed=4))
        assert chen_defect(res.x_tensor, relative=True) <= 1e-10

    def test_self_convergence_brownian(self):
        # r = 0.1 is on both grids only for N divisible by 10; 1040 and 8320 share one fine path
        path, tensor = generate(SignalSpec(fine_n=16640, seed=42, r_max=0.25))
        coarse = solve(problem_on(path, tensor, 1040, "tanh_diag", 0.1), diagnostics=False)
        fine = solve(problem_on(path, tensor, 8320, "tanh_diag", 0.1), diagnostics=False)
        diff = coarse.x.values[:, 0] - fine.x.values[::8, 0]
        assert np.max(np.abs(diff)) <= 5e-3


class TestShifted:
    def test_r_zero_identity(self):
        res = solve(spec(r=0.0).build(seed=2))
        xh, xt = shifted_solution(res)
        x, t = res.on_positive()
        np.testing.assert_array_equal(xh.values, x.values)
        np.testing.assert_array_equal(xt.step_values, t.step_values)

    def test_reindexing_sup(self):
        p = spec().build(seed=6)
        res = solve(p)
        xh, _ = shifted_solution(res, p.r)
        assert sup_norm(xh) == sup_norm(res.x, -p.r, 1.0 - p.r)

    def test_constant_sigma_shift(self):
        p = spec(coeff_name="constant").build(seed=6)
        res = solve(p)
        xh, _ = shifted_solution(res)
        np.testing.assert_array_equal(xh.values, res.x.values[: xh.grid.n + 1])

    def test_chen_and_mismatch(self):
        p = spec().build(seed=6)
        res = solve(p)
        _, xt = shifted_solution(res)
        assert chen_defect(xt, relative=True) <= 1e-10
        with pytest.raises(ValueError):
            shifted_solution(res, 0.0625)
