"""Driving signals with their level-2 data.

Every generator samples the signal on a fine grid covering ``[-r_max, T]`` and
returns the path together with its tensor ``y (x) y`` on that grid.  Solver
resolution data are obtained by Chen aggregation (:func:`driver_for`).

Brownian increments come from numpy's counter-based Philox generator; the
increments on ``[0, T]`` and on ``[-r_max, 0]`` use independent child streams
of the seed, so changing ``r_max`` never changes ``B`` on ``[0, T]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .path_algebra import (
    Grid,
    GridPath,
    OffGridError,
    TwoParamTensor,
    align,
    coarsen_path,
    coarsen_tensor,
    shift_path,
    tensor_from_quadrature,
)

KINDS = ("brownian", "smooth_poly", "smooth_sine", "fourier_holder")


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "brownian"
    dim: int = 1
    T: float = 1.0
    fine_n: int = 8192
    seed: int = 42
    r_max: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("signal dim must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.r_max < 0:
            raise ValueError("r_max must be nonnegative")

    @property
    def fine_grid(self) -> Grid:
        h = self.T / self.fine_n
        n_neg = Grid(0.0, h, 1).steps_for(self.r_max)
        return Grid(-n_neg * h, h, self.fine_n + n_neg)


@dataclass(frozen=True, eq=False)
class DelayedTensors:
    """Cross tensors of ``y`` and ``y_shift = y_{. - r}`` on ``[t0 + r, T]``."""

    r: float
    shift_y: TwoParamTensor  # y_{.-r} (x) y
    y_shift: TwoParamTensor  # y (x) y_{.-r}
    diff_y: TwoParamTensor  # (y - y_{.-r}) (x) y
    shift_diff: TwoParamTensor  # y_{.-r} (x) (y - y_{.-r})
    y_diff: TwoParamTensor  # y (x) (y - y_{.-r})

    def restrict(self, a: float, b: float) -> "DelayedTensors":
        return DelayedTensors(
            self.r, *(t.restrict(a, b) for t in (self.shift_y, self.y_shift, self.diff_y, self.shift_diff, self.y_diff))
        )

    def coarsen(self, factor: int) -> "DelayedTensors":
        return DelayedTensors(
            self.r, *(coarsen_tensor(t, factor) for t in (self.shift_y, self.y_shift, self.diff_y, self.shift_diff, self.y_diff))
        )


def _streams(seed: int, n_pos: int, n_neg: int, dim: int):
    ss = np.random.SeedSequence(int(seed))
    pos_ss, neg_ss = ss.spawn(2)
    pos = np.random.Generator(np.random.Philox(pos_ss)).standard_normal((n_pos, dim))
    neg = np.random.Generator(np.random.Philox(neg_ss)).standard_normal((n_neg, dim))
    return pos, neg


def gen_brownian(spec: SignalSpec, ito_correction: bool = True) -> tuple[GridPath, TwoParamTensor]:
    """Brownian path on ``[-r_max, T]`` with ``B_0 = 0`` and its level-2 tensor.

    Step values are trapezoid (Stratonovich) products; with ``ito_correction``
    the diagonal of every step additionally receives ``-h/2``, which turns
    the aggregated tensor into ``int (B_u - B_s) dB_u`` in the Itô sense.
    """
    if spec.kind != "brownian":
        raise ValueError("gen_brownian needs kind=brownian")
    if spec.fine_n < 2:
        raise ValueError("fine_n too small (< 2)")
    grid = spec.fine_grid
    n_neg = grid.n - spec.fine_n
    pos, neg = _streams(spec.seed, spec.fine_n, n_neg, spec.dim)
    sq = np.sqrt(grid.h)
    vals = np.zeros((grid.n + 1, spec.dim))
    vals[n_neg + 1 :] = np.cumsum(pos * sq, axis=0)
    # walking left from 0: B_{-kh} = -(sum of the k increments nearest to 0)
    vals[:n_neg][::-1] = -np.cumsum(neg * sq, axis=0)
    path = GridPath(grid, vals)
    tensor = tensor_from_quadrature(path, path)
    if ito_correction:
        steps = tensor.step_values.copy()
        idx = np.arange(spec.dim)
        steps[:, idx, idx] -= 0.5 * grid.h
        tensor = TwoParamTensor(grid, steps, path, path)
    return path, tensor


def _poly_coeffs(spec: SignalSpec) -> list[np.ndarray]:
    coeffs = spec.params.get("coeffs")
    if coeffs is None:
        coeffs = [[0.0, 1.0], [0.0, 0.0, 1.0]][: spec.dim]
        while len(coeffs) < spec.dim:
            coeffs.append([0.0] * (len(coeffs) + 1) + [1.0])
    elif np.ndim(coeffs[0]) == 0:
        coeffs = [coeffs]
    if len(coeffs) != spec.dim:
        raise ValueError(f"smooth_poly needs {spec.dim} coefficient lists")
    return [np.asarray(c, dtype=float) for c in coeffs]


def _sine_series(spec: SignalSpec, t: np.ndarray, amps: np.ndarray, phases: np.ndarray) -> np.ndarray:
    # amps, phases: (dim, K); frequencies 1..K
    K = amps.shape[1]
    out = np.zeros((t.size, spec.dim))
    chunk = max(1, 2_000_000 // max(K, 1))
    freqs = 2 * np.pi * np.arange(1, K + 1)
    for lo in range(0, t.size, chunk):
        arg = t[lo : lo + chunk, None] * freqs[None, :]
        for i in range(spec.dim):
            out[lo : lo + chunk, i] = np.sin(arg + phases[i]) @ amps[i]
    return out


def gen_smooth(spec: SignalSpec) -> tuple[GridPath, TwoParamTensor]:
    """Closed-form smooth drivers.

    ``smooth_poly``: component ``i`` is ``sum_k coeffs[i][k] t^k`` (default
    ``t``, ``t^2``, ...).  Step values are integrated exactly with
    polynomial antiderivatives.

    ``smooth_sine``: component ``i`` is ``amp * sin(2 pi freq_i t + phase_i)``
    with trapezoid step values on the fine grid (the same construction as
    :func:`gen_fourier_holder`, of which a single zero-phase mode is a case).
    """
    grid = spec.fine_grid
    t = grid.times
    if spec.kind == "smooth_poly":
        polys = [np.polynomial.Polynomial(c) for c in _poly_coeffs(spec)]
        vals = np.stack([p(t) for p in polys], axis=1)
        path = GridPath(grid, vals)
        dy = path.increments
        steps = np.empty((grid.n, spec.dim, spec.dim))
        for i, px in enumerate(polys):
            for j, py in enumerate(polys):
                anti = (px * py.deriv()).integ()
                steps[:, i, j] = np.diff(anti(t)) - vals[:-1, i] * dy[:, j]
        return path, TwoParamTensor(grid, steps, path, path)
    if spec.kind == "smooth_sine":
        amp = float(spec.params.get("amp", 1.0))
        freq = np.asarray(spec.params.get("freq", np.arange(1, spec.dim + 1)), dtype=float).reshape(-1)
        phase = np.asarray(spec.params.get("phase", np.zeros(spec.dim)), dtype=float).reshape(-1)
        if freq.size == 1:
            freq = np.repeat(freq, spec.dim)
        if phase.size == 1:
            phase = np.repeat(phase, spec.dim)
        vals = amp * np.sin(2 * np.pi * t[:, None] * freq[None, :] + phase[None, :])
        path = GridPath(grid, vals)
        return path, tensor_from_quadrature(path, path)
    raise ValueError(f"gen_smooth cannot generate kind {spec.kind!r}")


def gen_fourier_holder(spec: SignalSpec) -> tuple[GridPath, TwoParamTensor]:
    """Random-phase Fourier series with amplitudes ``amp * k^-(beta + 1/2)``.

    Params: ``n_modes`` (64), ``beta`` (0.4), ``amp`` (1.0), ``phases``
    (``"random"`` or ``"zero"``).  Phases are drawn from the seed.
    """
    if spec.kind != "fourier_holder":
        raise ValueError("gen_fourier_holder needs kind=fourier_holder")
    K = int(spec.params.get("n_modes", 64))
    beta = float(spec.params.get("beta", 0.4))
    amp = float(spec.params.get("amp", 1.0))
    mode = spec.params.get("phases", "random")
    ks = np.arange(1, K + 1, dtype=float)
    amps = np.tile(amp * ks ** -(beta + 0.5), (spec.dim, 1))
    if mode == "zero":
        phases = np.zeros((spec.dim, K))
    elif mode == "random":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(spec.seed))))
        phases = rng.uniform(0.0, 2 * np.pi, size=(spec.dim, K))
    else:
        raise ValueError(f"unknown phases mode {mode!r}")
    grid = spec.fine_grid
    path = GridPath(grid, _sine_series(spec, grid.times, amps, phases))
    return path, tensor_from_quadrature(path, path)


def generate(spec: SignalSpec, ito_correction: bool = True) -> tuple[GridPath, TwoParamTensor]:
    if spec.kind == "brownian":
        return gen_brownian(spec, ito_correction=ito_correction)
    if spec.kind == "fourier_holder":
        return gen_fourier_holder(spec)
    return gen_smooth(spec)


def delayed_cross_tensors(y: GridPath, tensor_yy: TwoParamTensor, r: float) -> DelayedTensors:
    """Cross tensors between ``y`` and its delay ``y_{. - r}``.

    Built on the grid ``[t0 + r, T]`` from trapezoid step values; the three
    difference tensors follow by bilinearity from per-step differences with
    ``tensor_yy`` (and its shift, which plays ``y_{.-r} (x) y_{.-r}``).  With
    ``r = 0`` the base tensors are the plain trapezoid (uncorrected) ones.
    """
    m = y.grid.steps_for(r)
    ys = shift_path(y, r)
    yc = align(y, ys.grid)
    n = ys.grid.n
    yy_here = tensor_yy.step_values[m:]
    yy_shifted = tensor_yy.step_values[:n]
    shift_y = tensor_from_quadrature(ys, yc)
    y_shift = tensor_from_quadrature(yc, ys)
    diff = yc - ys
    diff_y = TwoParamTensor(ys.grid, yy_here - shift_y.step_values, diff, yc)
    shift_diff = TwoParamTensor(ys.grid, shift_y.step_values - yy_shifted, ys, diff)
    y_diff = TwoParamTensor(ys.grid, yy_here - y_shift.step_values, yc, diff)
    return DelayedTensors(float(r), shift_y, y_shift, diff_y, shift_diff, y_diff)


@dataclass(frozen=True, eq=False)
class Driver:
    """Driver data at solver resolution.

    ``y`` and ``yy`` live on ``[-r_max, T]``; ``time_y`` (the tensor of the
    time path ``t`` against ``y``) and the delayed tensors live on ``[0, T]``.
    """

    y: GridPath
    yy: TwoParamTensor
    time_y: TwoParamTensor
    delayed: dict = field(default_factory=dict)  # steps m -> DelayedTensors on [0, T]
    fine_factor: int = 1

    @property
    def h(self) -> float:
        return self.y.grid.h

    @property
    def T(self) -> float:
        return self.y.grid.t_end

    def delayed_for(self, r: float) -> DelayedTensors:
        m = self.y.grid.steps_for(r)
        try:
            return self.delayed[m]
        except KeyError:
            raise KeyError(f"missing delayed tensor for r={r}") from None

    def on_interval(self, a: float, b: float) -> tuple[GridPath, TwoParamTensor]:
        return self.y.restrict(a, b), self.yy.restrict(a, b)


def driver_for(
    path: GridPath, tensor: TwoParamTensor, solver_n: int, rs=(), T: Optional[float] = None
) -> Driver:
    """Aggregate fine-grid signal data onto a solver grid with ``solver_n`` steps on ``[0, T]``.

    Delayed tensors are built on the fine grid for each ``r`` in ``rs``
    (each a multiple of the solver step) and then aggregated.
    """
    T = path.grid.t_end if T is None else T
    fine = path.grid
    n_fine_pos = fine.steps_for(T)
    if n_fine_pos % solver_n:
        raise ValueError(f"solver_n={solver_n} does not divide the fine grid size {n_fine_pos}")
    factor = n_fine_pos // solver_n
    h = T / solver_n
    neg = -fine.t0
    Grid(0.0, h, 1).steps_for(neg)  # r_max must be a multiple of the solver step
    y = coarsen_path(path, factor)
    yy = coarsen_tensor(tensor, factor)
    pos_path = path.restrict(0.0, T)
    tau = GridPath(pos_path.grid, pos_path.times)
    time_y = coarsen_tensor(tensor_from_quadrature(tau, pos_path), factor)
    delayed = {}
    for r in rs:
        if r == 0:
            continue
        m = Grid(0.0, h, 1).steps_for(r)
        if r > neg + 1e-12 * h:
            raise OffGridError(f"delay r={r} exceeds the signal's left extension {neg}")
        dt = delayed_cross_tensors(path, tensor, r).restrict(0.0, T)
        delayed[m] = dt.coarsen(factor)
    return Driver(y, yy, time_y, delayed, factor)
