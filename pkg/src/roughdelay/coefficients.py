"""Coefficient models ``sigma`` (with two derivatives) and drift ``b``.

Array conventions for a state ``x`` of dimension ``d`` and a driver of
dimension ``m``::

    sigma(x)    -> (d, m)
    dsigma(x)   -> (d, m, d)        dsigma[i, j, l]    = d sigma_ij / d x_l
    d2sigma(x)  -> (d, m, d, d)     d2sigma[i, j, l, k] = d^2 sigma_ij / d x_l d x_k
    b(t, x)     -> (d,)

Norms of these objects are Frobenius norms.  The lambda-Hölder constants of
the derivatives are upper bounds from ``|g(u) - g(v)| <= min(osc g, Lip g |u - v|)``,
i.e. ``osc^(1 - lam) * Lip^lam`` (times ``d^((1 - lam)/2)`` for diagonal
models in ``d`` dimensions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .path_algebra import HolderExponents

BUILTINS = ("tanh_diag", "sine", "constant", "affine_test")
DRIFTS = ("zero", "const", "tanh", "linear")

TANH_D2_SUP = 4.0 / (3.0 * math.sqrt(3.0))  # max |d^2/dx^2 tanh| = max |2 tanh sech^2|


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    name: str
    d: int
    m: int
    sigma: Callable[[np.ndarray], np.ndarray]
    dsigma: Callable[[np.ndarray], np.ndarray]
    d2sigma: Callable[[np.ndarray], np.ndarray]
    b: Callable[[float, np.ndarray], np.ndarray]
    sup_sigma: float
    sup_dsigma: float
    sup_d2sigma: float
    lambda_norm_dsigma: float
    lambda_norm_d2sigma: float
    lipschitz_L: Callable[[float], float]
    sup_b: float
    lam: float = 0.9
    drift: str = "zero"
    violations: tuple = field(default_factory=tuple)
    sigma_is_constant: bool = False

    @property
    def satisfies_h3(self) -> bool:
        return math.isfinite(self.sup_sigma) and math.isfinite(self.sup_b)


def _holder_bound(osc: float, lip: float, lam: float, d: int) -> float:
    if osc == 0 or lip == 0:
        return 0.0
    return osc ** (1 - lam) * lip**lam * d ** ((1 - lam) / 2)


def _diag_model(name, d, f, f1, f2, f3_sup, sups, oscs, scale, lam, **kw):
    sup_f, sup_f1, sup_f2 = sups
    osc_f1, osc_f2 = oscs
    idx = np.arange(d)

    def sigma(x):
        out = np.zeros((d, d))
        out[idx, idx] = scale * f(np.asarray(x, dtype=float))
        return out

    def dsigma(x):
        out = np.zeros((d, d, d))
        out[idx, idx, idx] = scale * f1(np.asarray(x, dtype=float))
        return out

    def d2sigma(x):
        out = np.zeros((d, d, d, d))
        out[idx, idx, idx, idx] = scale * f2(np.asarray(x, dtype=float))
        return out

    s = abs(scale)
    return dict(
        name=name,
        d=d,
        m=d,
        sigma=sigma,
        dsigma=dsigma,
        d2sigma=d2sigma,
        sup_sigma=s * sup_f * math.sqrt(d),
        sup_dsigma=s * sup_f1 * math.sqrt(d),
        sup_d2sigma=s * sup_f2 * math.sqrt(d),
        lambda_norm_dsigma=_holder_bound(s * osc_f1, s * sup_f2, lam, d),
        lambda_norm_d2sigma=_holder_bound(s * osc_f2, s * f3_sup, lam, d),
        lam=lam,
        **kw,
    )


def _drift(kind: str, d: int, a, c: float):
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    na = float(np.linalg.norm(a))
    if kind == "zero":
        return (lambda t, x: np.zeros(d)), (lambda N: 0.0), 0.0
    if kind == "const":
        return (lambda t, x: a.copy()), (lambda N: 0.0), na
    if kind == "tanh":
        return (lambda t, x: a + c * np.tanh(x)), (lambda N: abs(c)), na + abs(c) * math.sqrt(d)
    if kind == "linear":
        return (lambda t, x: a + c * np.asarray(x, dtype=float)), (lambda N: abs(c)), (math.inf if c else na)
    raise ValueError(f"unknown drift {kind!r}; choose from {DRIFTS}")


def builtin(name: str, dim: int = 1, params: Optional[dict] = None, lam: float = 0.9) -> CoefficientModel:
    """Build a coefficient model by name.

    ``params`` keys: ``scale`` (diagonal models), ``c`` (constant sigma value,
    scalar or flattened ``d x m`` list), ``m`` (driver dim for ``constant``),
    ``drift`` (one of ``zero|const|tanh|linear``), ``drift_a``, ``drift_c``.
    """
    params = dict(params or {})
    scale = float(params.pop("scale", 1.0))
    drift = params.pop("drift", "zero")
    b, lip, sup_b = _drift(drift, dim, params.pop("drift_a", 0.0), float(params.pop("drift_c", 0.0)))
    c_val = params.pop("c", 1.0)
    m_const = int(params.pop("m", dim))
    if params:
        raise ValueError(f"unknown coefficient params: {sorted(params)}")
    common = dict(b=b, lipschitz_L=lip, sup_b=sup_b, drift=drift)
    violations = []
    if not math.isfinite(sup_b):
        violations.append("drift violates H3 (unbounded)")

    if name == "tanh_diag":
        sech2 = lambda x: 1.0 / np.cosh(x) ** 2
        kw = _diag_model(
            name, dim,
            np.tanh,
            sech2,
            lambda x: -2.0 * np.tanh(x) * sech2(x),
            2.0,
            (1.0, 1.0, TANH_D2_SUP),
            (1.0, 2 * TANH_D2_SUP),
            scale, lam, **common,
        )
    elif name == "sine":
        kw = _diag_model(
            name, dim, np.sin, np.cos, lambda x: -np.sin(x), 1.0,
            (1.0, 1.0, 1.0), (2.0, 2.0), scale, lam, **common,
        )
    elif name == "affine_test":
        kw = _diag_model(
            name, dim, lambda x: x, np.ones_like, np.zeros_like, 0.0,
            (math.inf, 1.0, 0.0), (0.0, 0.0), scale, lam, **common,
        )
        kw["sup_sigma"] = math.inf
        violations.append("violates H3 (unbounded)")
    elif name == "constant":
        cmat = np.broadcast_to(np.asarray(c_val, dtype=float).reshape(-1), (dim * m_const,)).reshape(dim, m_const).copy()
        m = m_const
        kw = dict(
            name=name, d=dim, m=m,
            sigma=lambda x: cmat.copy(),
            dsigma=lambda x: np.zeros((dim, m, dim)),
            d2sigma=lambda x: np.zeros((dim, m, dim, dim)),
            sup_sigma=float(np.linalg.norm(cmat)),
            sup_dsigma=0.0, sup_d2sigma=0.0,
            lambda_norm_dsigma=0.0, lambda_norm_d2sigma=0.0,
            lam=lam, sigma_is_constant=True, **common,
        )
    else:
        raise ValueError(f"unknown coefficient model {name!r}; choose from {BUILTINS}")
    return CoefficientModel(violations=tuple(violations), **kw)


@dataclass(frozen=True)
class LatticeSpec:
    lo: float = -10.0
    hi: float = 10.0
    n: int = 2001
    n_random: int = 400
    seed: int = 0
    lipschitz_N: float = 5.0


@dataclass
class HypothesisReport:
    model: str
    sup_sigma: float
    sup_dsigma: float
    sup_d2sigma: float
    holder_dsigma: float
    holder_d2sigma: float
    lipschitz_b: float
    sup_b: float
    derivative_error: float
    dominated: dict
    violations: list

    @property
    def passes(self) -> bool:
        return not self.violations and all(self.dominated.values()) and self.derivative_error <= 1e-6


def _lattice(model: CoefficientModel, spec: LatticeSpec) -> np.ndarray:
    """Points in R^d, sorted along the first axis for d == 1."""
    if model.d == 1:
        return np.linspace(spec.lo, spec.hi, spec.n)[:, None]
    rng = np.random.default_rng(spec.seed)
    diag = np.linspace(spec.lo, spec.hi, spec.n)[:, None] * np.ones(model.d)
    return np.vstack([diag, rng.uniform(spec.lo, spec.hi, size=(spec.n_random, model.d))])


def _pair_holder(pts: np.ndarray, vals: np.ndarray, lam: float) -> float:
    best = 0.0
    n = len(pts)
    flat = vals.reshape(n, -1)
    for k in range(1, n):
        dv = np.linalg.norm(flat[k:] - flat[:-k], axis=1)
        dx = np.linalg.norm(pts[k:] - pts[:-k], axis=1)
        ok = dx > 0
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / dx[ok] ** lam)))
    return best


def derivative_check(model: CoefficientModel, pts: np.ndarray, delta: float = 1e-5) -> float:
    """Max error of analytic derivatives against central differences, relative to ``max(1, |analytic|)``."""
    worst = 0.0
    for x in pts:
        ds = model.dsigma(x)
        d2 = model.d2sigma(x)
        for l in range(model.d):
            e = np.zeros(model.d)
            e[l] = delta
            fd1 = (model.sigma(x + e) - model.sigma(x - e)) / (2 * delta)
            fd2 = (model.dsigma(x + e) - model.dsigma(x - e)) / (2 * delta)
            err1 = np.max(np.abs(fd1 - ds[..., l]) / np.maximum(1.0, np.abs(ds[..., l])))
            err2 = np.max(np.abs(fd2 - d2[..., l]) / np.maximum(1.0, np.abs(d2[..., l])))
            worst = max(worst, float(err1), float(err2))
    return worst


def validate_hypotheses(
    model: CoefficientModel, exps: Optional[HolderExponents] = None, lattice: Optional[LatticeSpec] = None
) -> HypothesisReport:
    """Sample the model on a lattice and compare against its declared constants (report only)."""
    lattice = lattice or LatticeSpec()
    lam = model.lam if exps is None else exps.lam
    pts = _lattice(model, lattice)
    S = np.array([model.sigma(x) for x in pts])
    D1 = np.array([model.dsigma(x) for x in pts])
    D2 = np.array([model.d2sigma(x) for x in pts])
    fro = lambda a: np.sqrt(np.sum(a.reshape(len(a), -1) ** 2, axis=1))
    sup_s, sup_1, sup_2 = float(fro(S).max()), float(fro(D1).max()), float(fro(D2).max())
    h1 = _pair_holder(pts, D1, lam)
    h2 = _pair_holder(pts, D2, lam)

    inside = pts[np.linalg.norm(pts, axis=1) <= lattice.lipschitz_N]
    bvals = np.array([model.b(0.0, x) for x in inside]) if len(inside) else np.zeros((0, model.d))
    lip = _pair_lipschitz(inside, bvals)
    sup_b = float(np.linalg.norm(np.array([model.b(0.0, x) for x in pts]), axis=1).max())

    fd_pts = pts[:: max(1, len(pts) // 101)]
    derr = derivative_check(model, fd_pts)

    tol = 1e-12
    dominated = {
        "sup_sigma": sup_s <= model.sup_sigma * (1 + tol) + tol,
        "sup_dsigma": sup_1 <= model.sup_dsigma * (1 + tol) + tol,
        "sup_d2sigma": sup_2 <= model.sup_d2sigma * (1 + tol) + tol,
        "holder_dsigma": h1 <= model.lambda_norm_dsigma * (1 + tol) + tol,
        "holder_d2sigma": h2 <= model.lambda_norm_d2sigma * (1 + tol) + tol,
        "lipschitz_b": lip <= model.lipschitz_L(lattice.lipschitz_N) * (1 + tol) + tol,
        "sup_b": sup_b <= model.sup_b * (1 + tol) + tol,
    }
    return HypothesisReport(
        model.name, sup_s, sup_1, sup_2, h1, h2, lip, sup_b, derr, dominated, list(model.violations)
    )


def _pair_lipschitz(pts: np.ndarray, vals: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    best = 0.0
    for k in range(1, len(pts)):
        dv = np.linalg.norm(vals[k:] - vals[:-k], axis=1)
        dx = np.linalg.norm(pts[k:] - pts[:-k], axis=1)
        ok = dx > 0
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / dx[ok])))
    return best
