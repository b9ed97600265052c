import numpy as np
import pytest

from roughdelay.path_algebra import Grid, GridPath, chen_defect, coarsen_path, coarsen_tensor, holder_norm, tensor_from_quadrature
from roughdelay.signals import SignalSpec, delayed_cross_tensors, driver_for, gen_brownian, gen_fourier_holder, gen_smooth, generate


def brownian(seed=1, dim=2, fine_n=256, r_max=0.0, ito=True):
    return gen_brownian(SignalSpec(dim=dim, fine_n=fine_n, seed=seed, r_max=r_max), ito_correction=ito)


class TestBrownian:
    @pytest.mark.parametrize("seed", [0, 1, 42, 2**63 + 5])
    def test_starts_at_zero(self, seed):
        B, _ = brownian(seed, r_max=0.25)
        np.testing.assert_array_equal(B.at(0.0), 0.0)

    def test_diagonal_identity(self):
        B, A = brownian(5, fine_n=128)
        M = A.matrix()
        v = B.values[:, 0]
        t = B.times
        expect = 0.5 * (v[None, :] - v[:, None]) ** 2 - 0.5 * (t[None, :] - t[:, None])
        iu = np.triu_indices(len(t), 1)
        np.testing.assert_allclose(M[..., 0, 0][iu], expect[iu], atol=1e-12)

    def test_deterministic(self):
        a = brownian(11, r_max=0.125)
        b = brownian(11, r_max=0.125)
        np.testing.assert_array_equal(a[0].values, b[0].values)
        np.testing.assert_array_equal(a[1].step_values, b[1].step_values)

    def test_left_extension_keeps_positive_part(self):
        # the positive-time stream does not depend on how far left we generate
        short, _ = brownian(3, r_max=0.0)
        long, _ = brownian(3, r_max=0.25)
        np.testing.assert_array_equal(short.values, long.restrict(0.0, 1.0).values)

    def test_fine_n_too_small(self):
        with pytest.raises(ValueError, match="fine_n too small"):
            gen_brownian(SignalSpec(fine_n=1))

    def test_monte_carlo_variances(self):
        n = 10_000
        end = np.empty(n)
        area = np.empty(n)
        for s in range(n):
            B, A = brownian(s, dim=2, fine_n=64)
            end[s] = B.values[-1, 0]
            area[s] = A.value(0.0, 1.0)[0, 1]
        assert 0.95 <= end.var() <= 1.05
        assert 0.475 <= area.var() <= 0.525


class TestDelayed:
    def test_r_zero_is_stratonovich_diagonal(self):
        B, A = brownian(2, dim=1, fine_n=64)
        dt = delayed_cross_tensors(B, A, 0.0)
        M = dt.shift_y.matrix()[..., 0, 0]
        v = B.values[:, 0]
        iu = np.triu_indices(len(v), 1)
        np.testing.assert_allclose(M[iu], (0.5 * (v[None, :] - v[:, None]) ** 2)[iu], atol=1e-12)

    def test_linear_driver(self):
        g = Grid.uniform(-0.25, 1.0, 125)
        y = GridPath(g, g.times[:, None])
        dt = delayed_cross_tensors(y, tensor_from_quadrature(y, y), 0.1)
        t = dt.shift_y.grid.times
        expect = np.triu(0.5 * (t[None, :] - t[:, None]) ** 2)
        np.testing.assert_allclose(dt.shift_y.matrix()[..., 0, 0], expect, atol=1e-12)

    def test_symmetrization(self):
        B, A = brownian(9, dim=2, fine_n=128, ito=False)
        M = A.matrix()
        dB = B.values[None, :, :] - B.values[:, None, :]
        sym = M + np.swapaxes(M, 2, 3)
        iu = np.triu_indices(len(B.values), 1)
        prod = np.einsum("sti,stj->stij", dB, dB)
        np.testing.assert_allclose(sym[iu], prod[iu], atol=1e-12)

    def test_difference_bilinearity(self):
        B, A = brownian(4, dim=2, fine_n=128, r_max=0.25, ito=False)
        dt = delayed_cross_tensors(B, A, 0.125)
        direct = tensor_from_quadrature(dt.diff_y.left, dt.diff_y.right)
        np.testing.assert_allclose(dt.diff_y.step_values, direct.step_values, atol=1e-14)
        assert chen_defect(dt.shift_diff, relative=True) <= 1e-10

    def test_off_grid(self):
        B, A = brownian(4, fine_n=128, r_max=0.25)
        with pytest.raises(ValueError):
            delayed_cross_tensors(B, A, 0.1)

    def test_driver_missing(self):
        B, A = brownian(4, fine_n=256, r_max=0.25)
        drv = driver_for(B, A, 32, rs=[0.125], T=1.0)
        assert drv.delayed_for(0.125).r == 0.125
        with pytest.raises(KeyError, match="missing delayed tensor"):
            drv.delayed_for(0.0625)


class TestSmooth:
    def test_linear_exact(self):
        y, A = gen_smooth(SignalSpec(kind="smooth_poly", dim=1, fine_n=50, params={"coeffs": [0.0, 1.0]}))
        t = y.times
        np.testing.assert_allclose(A.matrix()[..., 0, 0], np.triu(0.5 * (t[None, :] - t[:, None]) ** 2), atol=1e-10)

    def test_t_t2_cross(self):
        _, A = gen_smooth(SignalSpec(kind="smooth_poly", dim=2, fine_n=64))
        assert A.value(0.0, 1.0)[0, 1] == pytest.approx(2 / 3, abs=1e-12)

    def test_constant(self):
        _, A = gen_smooth(SignalSpec(kind="smooth_poly", dim=1, fine_n=16, params={"coeffs": [3.0]}))
        assert not np.any(A.step_values)

    def test_coarsening_commutes(self):
        spec = SignalSpec(kind="smooth_poly", dim=2, fine_n=256)
        y, A = gen_smooth(spec)
        yc, Ac = gen_smooth(SignalSpec(kind="smooth_poly", dim=2, fine_n=32))
        c = coarsen_tensor(A, 8)
        np.testing.assert_allclose(coarsen_path(y, 8).values, yc.values, atol=1e-15)
        np.testing.assert_allclose(c.step_values, Ac.step_values, atol=1e-14)


class TestFourier:
    def test_deterministic(self):
        spec = SignalSpec(kind="fourier_holder", dim=2, fine_n=512, seed=8)
        a, b = gen_fourier_holder(spec), gen_fourier_holder(spec)
        np.testing.assert_array_equal(a[0].values, b[0].values)
        np.testing.assert_array_equal(a[1].step_values, b[1].step_values)

    def test_single_mode_is_sine(self):
        f, Af = gen_fourier_holder(SignalSpec(kind="fourier_holder", fine_n=512, params={"n_modes": 1, "phases": "zero"}))
        s, As = gen_smooth(SignalSpec(kind="smooth_sine", fine_n=512))
        np.testing.assert_allclose(f.values, s.values, atol=1e-12)
        np.testing.assert_allclose(Af.step_values, As.step_values, atol=1e-12)

    def test_norm_stable_under_refinement(self):
        y2, _ = generate(SignalSpec(kind="fourier_holder", fine_n=2048, seed=42, params={"beta": 0.4}))
        y1, _ = generate(SignalSpec(kind="fourier_holder", fine_n=1024, seed=42, params={"beta": 0.4}))
        n1, n2 = holder_norm(y1, 0.38), holder_norm(y2, 0.38)
        assert np.isfinite(n1)
        assert abs(n2 - n1) / n1 < 0.05
