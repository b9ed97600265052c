"""Level-2 one-step schemes for the equations with and without delay.

Both schemes advance the state with the increment of the driver plus the
second-order correction ``Dsigma . v : A_k`` where ``A_k`` is the step value
of the relevant driver tensor and ``v`` is the controlled derivative of the
argument of ``sigma``.  The solution tensor ``x (x) y`` is assembled from
per-step values ``sigma . (y (x) y)_k + h/2 * b (x) dy_k``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .coefficients import CoefficientModel, builtin
from .path_algebra import (
    Grid,
    GridPath,
    HolderExponents,
    NormReport,
    OffGridError,
    TwoParamTensor,
    align,
    holder_norm,
    shift_path,
    sup_norm,
    two_param_norm,
)
from .signals import Driver, SignalSpec, driver_for, generate


class SolverBlowUp(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class DelayProblem:
    exps: HolderExponents
    T: float
    r: float
    r0: float
    eta: GridPath  # on [-r0, 0] at solver resolution
    coeff: CoefficientModel
    driver: Driver
    solver_n: int

    def __post_init__(self):
        if self.r < 0 or self.r0 < self.r:
            raise ValueError("need 0 <= r <= r0")
        h = self.h
        if abs(self.driver.h - h) > 1e-12 * h:
            raise ValueError("driver resolution does not match solver_n")
        self.grid_steps(self.r)
        if abs(self.eta.grid.h - h) > 1e-12 * h:
            raise ValueError("eta must be sampled at the solver step")
        if self.eta.grid.index(0.0) != self.eta.grid.n:
            raise ValueError("eta must end at time 0")
        if self.eta.grid.t0 > -self.r + 1e-12 * h:
            raise OffGridError("eta does not cover [-r, 0]")
        if self.eta.dim != self.coeff.d or self.driver.y.dim != self.coeff.m:
            raise ValueError("dimension mismatch between eta, driver and coefficients")

    @property
    def h(self) -> float:
        return self.T / self.solver_n

    @property
    def m(self) -> int:
        return self.grid_steps(self.r)

    def grid_steps(self, r: float) -> int:
        try:
            return Grid(0.0, self.h, 1).steps_for(r)
        except OffGridError:
            raise OffGridError(f"r={r} is not a multiple of h={self.h}") from None

    def with_r(self, r: float) -> "DelayProblem":
        return DelayProblem(self.exps, self.T, r, self.r0, self.eta, self.coeff, self.driver, self.solver_n)

    @property
    def eta0(self) -> np.ndarray:
        return self.eta.values[-1]


@dataclass(frozen=True, eq=False)
class SolveResult:
    x: GridPath  # on [-r, T]
    x_tensor: TwoParamTensor  # x (x) y on the same grid
    problem: DelayProblem
    diagnostics: Optional[NormReport] = None
    runtime_ms: float = 0.0
    flags: tuple = field(default_factory=tuple)

    @property
    def r(self) -> float:
        return self.problem.r

    def on_positive(self) -> tuple[GridPath, TwoParamTensor]:
        """Solution path and tensor restricted to ``[0, T]``."""
        T = self.problem.T
        return self.x.restrict(0.0, T), self.x_tensor.restrict(0.0, T)


def _eta_at(eta: GridPath, k: int) -> np.ndarray:
    """eta at solver index ``k <= 0`` (time ``k h``); clamps left of the stored range."""
    i = eta.grid.n + k
    return eta.values[max(i, 0)]


def _contract(dsig: np.ndarray, v: np.ndarray, A: np.ndarray) -> np.ndarray:
    # sum_{j,l,q} dsig[i,j,l] v[l,q] A[q,j]
    return np.einsum("ijl,lq,qj->i", dsig, v, A)


def solve(problem: DelayProblem, diagnostics: bool = True) -> SolveResult:
    """Solve with delay ``problem.r`` (``r = 0`` is the equation without delay)."""
    start = time.perf_counter()
    drv = problem.driver
    coeff = problem.coeff
    N, h, m = problem.solver_n, problem.h, problem.m
    T = problem.T
    d = coeff.d

    y_pos = drv.y.restrict(0.0, T)
    dy = y_pos.increments
    yy = drv.yy.restrict(0.0, T).step_values
    delayed = drv.delayed_for(problem.r).shift_y.step_values if m > 0 else None
    time_y = drv.time_y.step_values  # (N, 1, mdim)

    x = np.empty((N + 1, d))
    x[0] = problem.eta0
    steps = np.empty((N, d, coeff.m))
    flags = []

    def past(k: int) -> np.ndarray:
        return x[k] if k >= 0 else _eta_at(problem.eta, k)

    for k in range(N):
        t = k * h
        xk = x[k]
        xd = past(k - m)
        sig = coeff.sigma(xd)
        bk = coeff.b(t, xk)
        if not coeff.sigma_is_constant:
            dsig = coeff.dsigma(xd)
            if m == 0:
                corr = _contract(dsig, sig, yy[k])
            elif k >= m:
                corr = _contract(dsig, coeff.sigma(past(k - 2 * m)), delayed[k])
            else:
                slope = (_eta_at(problem.eta, k - m + 1) - _eta_at(problem.eta, k - m)) / h
                corr = np.einsum("ijl,l,j->i", dsig, slope, time_y[k, 0])
        else:
            corr = 0.0
        x[k + 1] = xk + bk * h + sig @ dy[k] + corr
        steps[k] = sig @ yy[k] + 0.5 * h * np.outer(bk, dy[k])
        if not np.all(np.isfinite(x[k + 1])):
            raise SolverBlowUp(f"blow-up at step {k}")

    if m > 0:
        eta_part = align(problem.eta, Grid(-m * h, h, m))
        y_neg = align(drv.y, Grid(-m * h, h, m))
        neg_steps = 0.5 * np.einsum("kd,km->kdm", eta_part.increments, y_neg.increments)
        full_vals = np.vstack([eta_part.values[:-1], x])
        steps = np.concatenate([neg_steps, steps])
    else:
        full_vals = x
    grid = Grid(-m * h, h, N + m)
    xp = GridPath(grid, full_vals)
    yp = align(drv.y, grid)
    tensor = TwoParamTensor(grid, steps, xp, yp)
    runtime = (time.perf_counter() - start) * 1e3
    diag = None
    if diagnostics:
        bp = problem.exps.beta_prime
        xpos, tpos = xp.restrict(0.0, T), tensor.restrict(0.0, T)
        diag = NormReport(holder_norm(xpos, bp), two_param_norm(tpos, 2 * bp), sup_norm(xpos), (0.0, T))
    return SolveResult(xp, tensor, problem, diag, runtime, tuple(flags))


def solve_nodelay(problem: DelayProblem, diagnostics: bool = True) -> SolveResult:
    if problem.r != 0:
        problem = problem.with_r(0.0)
    return solve(problem, diagnostics)


def solve_delay(problem: DelayProblem, diagnostics: bool = True) -> SolveResult:
    if problem.r <= 0:
        raise ValueError("solve_delay needs r > 0")
    return solve(problem, diagnostics)


def shifted_solution(res: SolveResult, r: Optional[float] = None) -> tuple[GridPath, TwoParamTensor]:
    """``xhat_t = x^r_{t - r}`` on ``[0, T]`` and its tensor against ``y``."""
    p = res.problem
    if r is not None and p.grid_steps(r) != p.m:
        raise ValueError(f"r={r} does not match the solved delay {p.r}")
    T, h, m, N = p.T, p.h, p.m, p.solver_n
    if m == 0:
        return res.on_positive()
    xhat = align(shift_path(res.x, p.r), Grid(0.0, h, N))
    drv = p.driver
    y_pos = drv.y.restrict(0.0, T)
    dy = y_pos.increments
    ysy = drv.delayed_for(p.r).shift_y.step_values
    coeff = p.coeff
    xr = res.x.values  # index i <-> time (i - m) h
    eta = p.eta
    steps = np.empty((N, coeff.d, coeff.m))
    for k in range(N):
        if k < m:
            d_eta = _eta_at(eta, k - m + 1) - _eta_at(eta, k - m)
            steps[k] = 0.5 * np.outer(d_eta, dy[k])
        else:
            j = k - 2 * m  # time index of x^r_{t_k - 2r}
            arg = xr[j + m] if j >= -m else _eta_at(eta, j)
            bk = coeff.b((k - m) * h, xhat.values[k])
            steps[k] = coeff.sigma(arg) @ ysy[k] + 0.5 * h * np.outer(bk, dy[k])
    return xhat, TwoParamTensor(xhat.grid, steps, xhat, y_pos)


@dataclass(frozen=True)
class ProblemSpec:
    """Plain-data description of a problem; rebuilt inside worker processes.

    The initial path is ``eta_t = eta0 + eta_slope * t`` on ``[-r0, 0]`` in
    every component.  The driver is generated on ``[-r0, T]`` with
    ``solver_n * fine_factor`` fine steps on ``[0, T]``.
    """

    signal: SignalSpec = field(default_factory=SignalSpec)
    coeff_name: str = "tanh_diag"
    coeff_params: tuple = ()
    beta: float = 0.4
    epsilon: float = 0.02
    lam: float = 0.9
    T: float = 1.0
    r: float = 0.125
    r0: float = 0.25
    solver_n: int = 1024
    fine_factor: int = 8
    eta0: float = 0.5
    eta_slope: float = 0.0
    K: float = 1.0
    ito_correction: bool = True

    @property
    def h(self) -> float:
        return self.T / self.solver_n

    @property
    def exps(self) -> HolderExponents:
        return HolderExponents(self.beta, self.epsilon, self.lam)

    def coeff(self) -> CoefficientModel:
        return builtin(self.coeff_name, self.signal.dim, dict(self.coeff_params), lam=self.lam)

    def signal_spec(self, seed: Optional[int] = None) -> SignalSpec:
        s = self.signal
        return replace(
            s,
            T=self.T,
            fine_n=self.solver_n * self.fine_factor,
            r_max=self.r0,
            seed=s.seed if seed is None else int(seed),
        )

    def eta_path(self, d: int) -> GridPath:
        h = self.h
        n0 = Grid(0.0, h, 1).steps_for(self.r0)
        grid = Grid(-n0 * h, h, max(n0, 1)) if n0 else Grid(-h, h, 1)
        t = grid.times
        vals = np.repeat((self.eta0 + self.eta_slope * t)[:, None], d, axis=1)
        return GridPath(grid, vals)

    def build(self, seed: Optional[int] = None, rs=None) -> DelayProblem:
        rs = [self.r] if rs is None else list(rs)
        path, tensor = generate(self.signal_spec(seed), ito_correction=self.ito_correction)
        drv = driver_for(path, tensor, self.solver_n, rs=rs, T=self.T)
        coeff = self.coeff()
        return DelayProblem(self.exps, self.T, self.r, max(self.r0, self.h), self.eta_path(coeff.d), coeff, drv, self.solver_n)
