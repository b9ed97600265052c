"""Bound calculators, inequality checks and the delay -> 0 convergence study.

Every generic constant ``K`` defaults to 1.  Checks that involve ``K`` are
reports: they return the smallest ``K`` for which the displayed bound holds
rather than a pass/fail verdict.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .coefficients import CoefficientModel
from .path_algebra import (
    Grid,
    GridPath,
    OffGridError,
    HolderExponents,
    MissingTensorError,
    MultFunctional,
    endpoint_path,
    holder_norm,
    phi2,
    phi3,
    sup_norm,
    tensor_sup,
    two_param_norm,
)
from .signals import Driver
from .solver import DelayProblem, ProblemSpec, SolveResult, shifted_solution, solve


# --------------------------------------------------------------------------
# a priori constants


def rho_eta_b_sigma(eta_norm: float, sup_b: float, T: float, beta: float, coeff: CoefficientModel) -> float:
    return (
        2 * eta_norm
        + sup_b * T ** (1 - beta)
        + coeff.sup_sigma
        + coeff.sup_dsigma
        + coeff.lambda_norm_dsigma
    )


def lambda_y(y_norm: float, yy_norm: float) -> float:
    return y_norm + max(1.0, y_norm**2 + yy_norm)


def m_eta_y(eta0_abs: float, T: float, r0: float, K: float, rho: float, lam_y: float, beta: float) -> float:
    return eta0_abs + (T + r0) * (K * rho * lam_y) ** (1 / beta) + 1


def delta_tilde_y(K: float, rho: float, lam_y: float, beta: float) -> float:
    return (K * rho * lam_y) ** (-1 / beta)


@dataclass
class AprioriBounds:
    rho_eta_b_sigma: float
    lambda_y: float
    m_eta_y: float
    delta_tilde_y: float
    K: float
    terms: dict = field(default_factory=dict)


@dataclass
class AprioriReport:
    bounds: AprioriBounds
    xhat_sup: float
    xhat_beta_prime: float
    xhat_tensor_two_beta_prime: float
    sup_ok: bool
    k_min_sup: float
    k_min_beta_prime: float
    k_min_two_beta_prime: float

    @property
    def k_min(self) -> float:
        return max(self.k_min_sup, self.k_min_beta_prime, self.k_min_two_beta_prime)


def _smallest_k(bound, target: float) -> float:
    """Smallest K >= 0 with ``bound(K) >= target`` for ``bound`` increasing and ``bound(0) = 0``."""
    if target <= 0:
        return 0.0
    hi = 1.0
    while bound(hi) < target:
        hi *= 2
        if hi > 1e300:
            return math.inf
    return brentq(lambda k: bound(k) - target, 0.0, hi, xtol=1e-14, rtol=1e-12)


def apriori_bounds(problem: DelayProblem, K: float = 1.0) -> AprioriBounds:
    exps, T = problem.exps, problem.T
    beta = exps.beta
    coeff = problem.coeff
    eta_r0 = problem.eta.restrict(-problem.r0, 0.0) if problem.eta.grid.t0 < -problem.r0 else problem.eta
    eta_norm = holder_norm(eta_r0, beta)
    y, yy = problem.driver.on_interval(0.0, T)
    y_norm = holder_norm(y, beta)
    yy_norm = two_param_norm(yy, 2 * beta)
    rho = rho_eta_b_sigma(eta_norm, coeff.sup_b, T, beta, coeff)
    lam_y = lambda_y(y_norm, yy_norm)
    eta0 = float(np.linalg.norm(problem.eta0))
    terms = {
        "eta_beta_norm": eta_norm,
        "sup_b": coeff.sup_b,
        "sup_sigma": coeff.sup_sigma,
        "sup_dsigma": coeff.sup_dsigma,
        "holder_dsigma": coeff.lambda_norm_dsigma,
        "y_beta_norm": y_norm,
        "yy_two_beta_norm": yy_norm,
        "eta0_abs": eta0,
    }
    return AprioriBounds(
        rho, lam_y, m_eta_y(eta0, T, problem.r0, K, rho, lam_y, beta), delta_tilde_y(K, rho, lam_y, beta), K, terms
    )


def apriori(problem: DelayProblem, solution: SolveResult, K: float = 1.0) -> AprioriReport:
    """A priori constants plus the minimal K validating each displayed bound on the shifted solution.

    The shifted solution on ``[0, T + r]`` is ``x^r`` on ``[-r, T]``; its
    tensor against ``y`` is available on ``[0, T]`` only.
    """
    bounds = apriori_bounds(problem, K)
    beta, bp = problem.exps.beta, problem.exps.beta_prime
    T, r0 = problem.T, problem.r0
    rho, lam_y = bounds.rho_eta_b_sigma, bounds.lambda_y
    eta0 = bounds.terms["eta0_abs"]
    s = sup_norm(solution.x)
    hb = holder_norm(solution.x, bp)
    _, xt = shifted_solution(solution)
    h2 = two_param_norm(xt, 2 * bp)

    M = lambda k: m_eta_y(eta0, T, r0, k, rho, lam_y, beta)
    k_sup = 0.0 if s <= eta0 + 1 else ((s - eta0 - 1) / (T + r0)) ** beta / (rho * lam_y)
    k_b = _smallest_k(lambda k: k * rho * lam_y * (1 + 2 * M(k)), hb)
    k_2 = _smallest_k(lambda k: k * rho * lam_y * (2 + (T + r0) * (k * rho * lam_y) ** (1 / beta)), h2)
    return AprioriReport(bounds, s, hb, h2, s <= bounds.m_eta_y, k_sup, k_b, k_2)


def rho_delay_prop(
    coeff: CoefficientModel,
    T: float,
    exps: HolderExponents,
    sup_xr_beta_prime: float,
    eta_beta_prime: float,
    sup_xhat_beta_prime: float,
) -> float:
    """The constant multiplying the bounds on ``x^r - xhat^r`` (distinct from :func:`rho_eta_b_sigma`)."""
    bp, eps, lam = exps.beta_prime, exps.epsilon, exps.lam
    return (
        1
        + 3 * coeff.sup_b * T ** (1 - bp)
        + 3 * coeff.sup_sigma * (1 + T**bp)
        + 2 * coeff.sup_dsigma * (1 + T**bp)
        + 3 * coeff.sup_dsigma * T ** (bp - eps)
        + coeff.lambda_norm_dsigma * (2 * sup_xr_beta_prime**lam + eta_beta_prime**lam) * T ** ((lam + 1) * bp - eps)
        + coeff.sup_d2sigma * T**bp * (1 + T**bp)
        + 2 * coeff.lambda_norm_d2sigma * sup_xhat_beta_prime**lam * T ** ((lam + 1) * bp)
    ) * (1 + T**eps)


def lambda_r(sup_xr_beta_prime: float, diff_y_norm: float, shift_diff_norm: float) -> float:
    return max(1.0, sup_xr_beta_prime) * (diff_y_norm + shift_diff_norm)


# --------------------------------------------------------------------------
# G functionals


@dataclass
class GValues:
    g1: float
    g2: float
    g3: float
    g4: Optional[float]
    g5: Optional[float]
    g6: Optional[float]
    interval: tuple
    inputs: dict = field(default_factory=dict)


@dataclass
class _Norms:
    f1: float
    f2: float
    f2_lam: float
    lam: float
    y: float
    x_ab: float
    xt_ab: float
    phi_xy: float
    span: float
    beta: float


def _norms(f: CoefficientModel, xm: MultFunctional, xtm: MultFunctional, a, b, beta) -> _Norms:
    ai = xm.x.grid.t0 if a is None else a
    bi = xm.x.grid.t_end if b is None else b
    return _Norms(
        f.sup_dsigma,
        f.sup_d2sigma,
        f.lambda_norm_d2sigma,
        f.lam,
        holder_norm(xm.y, beta),
        holder_norm(xm.x, beta, a, b),
        holder_norm(xtm.x, beta, a, b),
        phi2(xm, a, b, beta),
        bi - ai,
        beta,
    )


def _holder_factor(n: _Norms) -> float:
    return n.f2 + n.f2_lam * (n.x_ab**n.lam + n.xt_ab**n.lam) * n.span ** (n.lam * n.beta)


def g3_value(f: CoefficientModel, xt_norm: float, span: float, beta: float, K: float = 1.0) -> float:
    return K * (f.sup_dsigma + f.sup_d2sigma * xt_norm * span**beta)


def g6_value(g3: float, z_norm: float, K: float = 1.0) -> float:
    return K * g3 * z_norm


def g_functionals(
    f: CoefficientModel,
    xm: MultFunctional,
    xtm: MultFunctional,
    yz: Optional[MultFunctional] = None,
    exps: Optional[HolderExponents] = None,
    a: Optional[float] = None,
    b: Optional[float] = None,
    K: float = 1.0,
    beta: Optional[float] = None,
) -> GValues:
    """Evaluate G1..G6 literally with discrete norms.

    ``xm = (x, y, x (x) y)``, ``xtm = (x~, y, x~ (x) y)`` and, for G4..G6,
    ``yz = (y, z, y (x) z)``.  Without ``yz`` the last three are ``None``;
    :func:`g4`/:func:`g5` raise in that case.  ``||y||_beta`` is taken over the
    whole grid of ``y``; all other norms over ``[a, b]``.
    """
    exps = exps or xm.exps
    beta = exps.beta if beta is None else beta
    n = _norms(f, xm, xtm, a, b, beta)
    hf = _holder_factor(n)
    g1 = K * (n.y * n.f1 + hf * (n.phi_xy + n.y * n.xt_ab))
    g2 = K * (n.y * n.f1 + n.f2 * (n.phi_xy + n.y * n.xt_ab) * n.span**beta)
    g3 = g3_value(f, n.xt_ab, n.span, beta, K)
    g4v = g5v = g6v = None
    if yz is not None:
        g4v = g4(f, xm, xtm, yz, a, b, K, beta)
        g5v = g5(f, xm, xtm, yz, a, b, K, beta)
        g6v = g6_value(g3, holder_norm(yz.y, beta, a, b), K)
    return GValues(g1, g2, g3, g4v, g5v, g6v, (a, b), {"beta": beta, "K": K})


def g4(f, xm, xtm, yz, a=None, b=None, K=1.0, beta=None) -> float:
    if yz is None:
        raise MissingTensorError("G4 needs y (x) z")
    beta = xm.exps.beta if beta is None else beta
    n = _norms(f, xm, xtm, a, b, beta)
    p_yz = phi2(yz, a, b, beta)
    p_xyz = phi3(xm, yz, a, b, beta)
    return K * (n.f1 * p_yz + _holder_factor(n) * (p_xyz + n.xt_ab * p_yz))


def g5(f, xm, xtm, yz, a=None, b=None, K=1.0, beta=None) -> float:
    if yz is None:
        raise MissingTensorError("G5 needs y (x) z")
    beta = xm.exps.beta if beta is None else beta
    n = _norms(f, xm, xtm, a, b, beta)
    p_yz = phi2(yz, a, b, beta)
    p_xyz = phi3(xm, yz, a, b, beta)
    return K * ((n.f1 + n.f2 * n.xt_ab * n.span**beta) * p_yz + n.f2 * p_xyz * n.span**beta)


# --------------------------------------------------------------------------
# inequality checks


@dataclass
class LemmaReport:
    r: float
    sup_lhs: float
    sup_rhs: float
    beta_prime_lhs: float
    beta_prime_rhs: float
    sup_bound_ok: bool
    beta_prime_bound_ok: bool

    @property
    def sup_margin(self) -> float:
        return self.sup_rhs - self.sup_lhs

    @property
    def beta_prime_margin(self) -> float:
        return self.beta_prime_rhs - self.beta_prime_lhs

    @property
    def ok(self) -> bool:
        return self.sup_bound_ok and self.beta_prime_bound_ok


def lemma_yyr_check(y: GridPath, r: float, exps: HolderExponents, T: Optional[float] = None) -> LemmaReport:
    """Sup and beta' bounds on ``y - y_{. - r}`` over ``[r, T]`` in terms of ``||y||_beta`` on ``[0, T]``.

    The sup bound is decided in ratio form, ``max |y_t - y_{t-r}| / r^beta <= ||y||_beta``,
    which compares members of the same set of floating point ratios.
    """
    T = y.grid.t_end if T is None else T
    beta, bp, eps = exps.beta, exps.beta_prime, exps.epsilon
    y0T = y.restrict(0.0, T)
    m = y0T.grid.steps_for(r)
    h = y0T.grid.h
    ynorm = holder_norm(y0T, beta)
    v = y0T.values
    if m == 0:
        return LemmaReport(r, 0.0, 0.0, 0.0, 0.0, True, True)
    diff = v[m:] - v[:-m]
    gap = (m * h) ** beta
    # same arithmetic as holder_norm at lag m, so the comparison is exact
    sup_lhs = float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff))))
    ratio = sup_lhs / gap
    z = GridPath(y0T.grid.sub(m, y0T.grid.n), diff)
    blhs = holder_norm(z, bp) if z.grid.n >= 1 else 0.0
    brhs = 2 * ynorm * (m * h) ** eps
    return LemmaReport(r, sup_lhs, ynorm * gap, blhs, brhs, ratio <= ynorm, blhs <= brhs)


def check_329(M: MultFunctional, a: Optional[float] = None, b: Optional[float] = None, beta: Optional[float] = None):
    """``||(x (x) y)_{., b}||_{beta(a,b)}`` against ``Phi_{beta(a,b)}(x, y) (b - a)^beta``; returns (lhs, rhs)."""
    beta = M.exps.beta if beta is None else beta
    a = M.x.grid.t0 if a is None else a
    b = M.x.grid.t_end if b is None else b
    sub = M.restrict(a, b)
    lhs = holder_norm(endpoint_path(sub.tensor), beta)
    rhs = phi2(sub, beta=beta) * (sub.x.grid.n * sub.x.grid.h) ** beta
    return lhs, rhs


# --------------------------------------------------------------------------
# delayed tensors


@dataclass
class DelayedNormRow:
    r: float
    diff_y: float  # ||(y - y_{.-r}) (x) y||
    shift_diff: float  # ||y_{.-r} (x) (y - y_{.-r})||
    y_diff: float  # ||y (x) (y - y_{.-r})||


def delayed_tensor_norms(driver: Driver, r_list: Sequence[float], beta_prime: float) -> list[DelayedNormRow]:
    """Discrete ``2 beta'`` norms over ``[r, T]`` of the three delayed difference tensors."""
    T = driver.T
    rows = []
    for r in r_list:
        dt = driver.delayed_for(r).restrict(r, T)
        rows.append(
            DelayedNormRow(
                float(r),
                two_param_norm(dt.diff_y, 2 * beta_prime),
                two_param_norm(dt.shift_diff, 2 * beta_prime),
                two_param_norm(dt.y_diff, 2 * beta_prime),
            )
        )
    return rows


def trend_ratios(values: Sequence[float]) -> list[float]:
    v = list(values)
    return [v[i + 1] / v[i] if v[i] else math.nan for i in range(len(v) - 1)]


def count_inversions(values: Sequence[float]) -> int:
    return int(sum(1 for a, b in zip(values, values[1:]) if b > a))


# --------------------------------------------------------------------------
# rate fitting and the convergence study


class FitError(ValueError):
    pass


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_used: int
    excluded_zero: int = 0


def fit_rate(points: Sequence[tuple[float, float]], zero_tol: float = 0.0) -> RateFit:
    """Least squares line through ``(log r, log err)``; nonpositive errors are excluded."""
    pts = [(float(r), float(e)) for r, e in points]
    if any(r <= 0 for r, _ in pts):
        raise FitError("all r must be positive")
    used = [(r, e) for r, e in pts if e > zero_tol]
    excluded = len(pts) - len(used)
    if len(used) < 3:
        raise FitError(f"need at least 3 usable points, got {len(used)}")
    lx = np.log([r for r, _ in used])
    ly = np.log([e for _, e in used])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, len(used), excluded)


@dataclass(frozen=True)
class StudyConfig:
    base: ProblemSpec
    r_list: tuple
    seeds: tuple
    parallelism: int = 1
    record_runtime: bool = True
    exact_tol: float = 1e-12

    def __post_init__(self):
        rs = list(self.r_list)
        if not rs or any(r <= 0 for r in rs):
            raise ValueError("r_list must hold positive delays")
        if any(b >= a for a, b in zip(rs, rs[1:])):
            raise ValueError("r_list must be strictly decreasing")
        h = self.base.h
        for r in rs:
            try:
                Grid(0.0, h, 1).steps_for(r)
            except OffGridError:
                raise OffGridError(f"r={r} is not a multiple of h={h}") from None
            if r > self.base.r0 + 1e-12:
                raise ValueError(f"r={r} exceeds r0={self.base.r0}")


@dataclass
class StudyRow:
    seed: int
    r: float
    sup_err: float
    tensor_sup_err: float
    holder_err: float
    yy_r_tensor_norm_1: float
    yy_r_tensor_norm_2: float
    runtime_ms: float


@dataclass
class StudyResult:
    rows: list
    fits: dict  # seed -> RateFit | None
    pooled: Optional[RateFit]
    tensor_fits: dict
    flag: str = ""

    def errors(self, seed: int, column: str = "sup_err") -> list[float]:
        return [getattr(row, column) for row in self.rows if row.seed == seed]


def _study_cell(args) -> StudyRow:
    base, seed, r, record_runtime = args
    start = time.perf_counter()
    spec = ProblemSpec(**{**base.__dict__, "r": r})
    problem = spec.build(seed=seed, rs=[r])
    ref = solve(problem.with_r(0.0), diagnostics=False)
    res = solve(problem, diagnostics=False)
    bp = problem.exps.beta_prime
    T = problem.T
    x_ref, t_ref = ref.on_positive()
    x_r, t_r = res.on_positive()
    diff = x_ref - x_r
    dt = problem.driver.delayed_for(r).restrict(r, T)
    row = StudyRow(
        seed=int(seed),
        r=float(r),
        sup_err=sup_norm(diff),
        tensor_sup_err=tensor_sup(t_ref - t_r),
        holder_err=holder_norm(diff, bp),
        yy_r_tensor_norm_1=two_param_norm(dt.diff_y, 2 * bp),
        yy_r_tensor_norm_2=two_param_norm(dt.shift_diff, 2 * bp),
        runtime_ms=0.0,
    )
    if record_runtime:
        row.runtime_ms = (time.perf_counter() - start) * 1e3
    return row


def convergence_study(cfg: StudyConfig) -> StudyResult:
    """Solve each (seed, r) cell against the no-delay reference and fit log-log rates.

    Cells are independent and may run in a process pool; rows are merged in
    (seed order, r order) regardless of completion order.
    """
    cells = [(cfg.base, s, r, cfg.record_runtime) for s in cfg.seeds for r in cfg.r_list]
    if cfg.parallelism > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.parallelism, len(cells))) as pool:
            rows = list(pool.map(_study_cell, cells))
    else:
        rows = [_study_cell(c) for c in cells]
    order = {s: i for i, s in enumerate(cfg.seeds)}
    rows.sort(key=lambda row: (order[row.seed], -row.r))

    if all(row.sup_err <= cfg.exact_tol for row in rows):
        return StudyResult(rows, {s: None for s in cfg.seeds}, None, {s: None for s in cfg.seeds}, flag="exact")
    fits, tfits = {}, {}
    for s in cfg.seeds:
        pts = [(row.r, row.sup_err) for row in rows if row.seed == s]
        tpts = [(row.r, row.tensor_sup_err) for row in rows if row.seed == s]
        fits[s] = _try_fit(pts)
        tfits[s] = _try_fit(tpts)
    pooled = _try_fit([(row.r, row.sup_err) for row in rows])
    return StudyResult(rows, fits, pooled, tfits)


def _try_fit(pts) -> Optional[RateFit]:
    try:
        return fit_rate(pts)
    except FitError:
        return None
