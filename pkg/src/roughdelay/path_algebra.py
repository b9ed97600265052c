"""Discrete paths, two-parameter tensors and their Hölder-type norms.

A :class:`TwoParamTensor` stores one ``d x m`` matrix per grid step.  Values on
an arbitrary pair of grid nodes are rebuilt with the Chen recursion

    A[i, j+1] = A[i, j] + (x[j] - x[i]) (x) (y[j+1] - y[j]) + A[j, j+1]

so the multiplicative property holds to rounding by construction.

All norms are suprema over grid pairs.  Gaps between nodes are computed as
``(j - i) * h`` everywhere so that inequalities comparing two sups see the
same floating point ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GRID_RTOL = 1e-9
CHEN_MAX_MIDDLE = 512


class OffGridError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class MissingTensorError(ValueError):
    pass


@dataclass(frozen=True)
class HolderExponents:
    """Exponents beta, epsilon and lambda; ``beta_prime = beta - epsilon``."""

    beta: float = 0.4
    epsilon: float = 0.02
    lam: float = 0.9

    def __post_init__(self):
        if not (1.0 / 3.0 < self.beta < 0.5):
            raise ValueError(f"beta must lie in (1/3, 1/2), got {self.beta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.beta - 2 * self.epsilon <= 0:
            raise ValueError("need beta - 2*epsilon > 0")
        if self.lam <= 1.0 / (self.beta - self.epsilon) - 2:
            raise ValueError(
                f"lambda={self.lam} must exceed 1/(beta-epsilon) - 2 = "
                f"{1.0 / (self.beta - self.epsilon) - 2:.6g}"
            )

    @property
    def beta_prime(self) -> float:
        return self.beta - self.epsilon


@dataclass(frozen=True)
class Grid:
    t0: float
    h: float
    n: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid step must be positive")
        if self.n < 1:
            raise ValueError("grid needs at least one step")

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "Grid":
        return cls(float(a), (b - a) / n, int(n))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n * self.h

    def steps_for(self, length: float) -> int:
        """Number of steps spanning ``length``; raises if not a multiple of h."""
        q = length / self.h
        k = round(q)
        if abs(q - k) > GRID_RTOL * max(1.0, abs(q)):
            raise OffGridError(f"{length!r} is not a multiple of the step {self.h!r}")
        return int(k)

    def index(self, t: float) -> int:
        try:
            k = self.steps_for(t - self.t0)
        except OffGridError:
            raise OffGridError(f"off-grid interval: t={t!r} is not a grid node") from None
        if not 0 <= k <= self.n:
            raise OffGridError(f"off-grid interval: t={t!r} outside [{self.t0}, {self.t_end}]")
        return k

    def sub(self, i0: int, i1: int) -> "Grid":
        return Grid(self.t0 + i0 * self.h, self.h, i1 - i0)

    def compatible(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and math.isclose(self.h, other.h, rel_tol=1e-12)
            and math.isclose(self.t0, other.t0, rel_tol=1e-12, abs_tol=1e-12 * self.h)
        )


@dataclass(frozen=True, eq=False)
class GridPath:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n + 1:
            raise ValueError(f"expected {self.grid.n + 1} nodes, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.index(t)]

    def restrict(self, a: float, b: float) -> "GridPath":
        i, j = self.grid.index(a), self.grid.index(b)
        if j <= i:
            raise OffGridError(f"empty interval [{a}, {b}]")
        return GridPath(self.grid.sub(i, j), self.values[i : j + 1])

    def __sub__(self, other: "GridPath") -> "GridPath":
        _check_same_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values - other.values)

    def __add__(self, other: "GridPath") -> "GridPath":
        _check_same_grid(self.grid, other.grid)
        return GridPath(self.grid, self.values + other.values)


def _check_same_grid(g1: Grid, g2: Grid) -> None:
    if not g1.compatible(g2):
        raise GridMismatchError(f"grid mismatch: {g1} vs {g2}")


@dataclass(frozen=True, eq=False)
class TwoParamTensor:
    """Discrete ``(x (x) y)_{s,t}`` stored as per-step ``d x m`` matrices.

    ``dense`` optionally carries explicitly supplied values on every grid pair
    (shape ``(n+1, n+1, d, m)``); when present it takes precedence over the
    Chen reconstruction.  It exists so externally given tensors (closed forms,
    injected faults) can be checked against the multiplicative property.
    """

    grid: Grid
    step_values: np.ndarray
    left: GridPath
    right: GridPath
    dense: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        _check_same_grid(self.grid, self.left.grid)
        _check_same_grid(self.grid, self.right.grid)
        a = np.array(self.step_values, dtype=float)
        if a.ndim == 1:
            a = a[:, None, None]
        expected = (self.grid.n, self.left.dim, self.right.dim)
        if a.shape != expected:
            raise ValueError(f"step values must have shape {expected}, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "step_values", a)

    @property
    def dims(self) -> tuple[int, int]:
        return self.left.dim, self.right.dim

    @classmethod
    def from_dense(cls, left: GridPath, right: GridPath, values: np.ndarray) -> "TwoParamTensor":
        values = np.asarray(values, dtype=float)
        n = left.grid.n
        if values.ndim == 2:
            values = values[:, :, None, None]
        steps = values[np.arange(n), np.arange(1, n + 1)]
        return cls(left.grid, steps, left, right, dense=values)

    def row(self, i: int, j_max: Optional[int] = None) -> np.ndarray:
        """``A[i, j]`` for ``j = i .. j_max`` (shape ``(j_max - i + 1, d, m)``)."""
        n = self.grid.n if j_max is None else j_max
        if self.dense is not None:
            return self.dense[i, i : n + 1]
        x = self.left.values
        dy = np.diff(self.right.values[i : n + 1], axis=0)
        inc = self.step_values[i:n] + np.einsum("ld,lm->ldm", x[i:n] - x[i], dy)
        out = np.zeros((n - i + 1,) + inc.shape[1:])
        np.cumsum(inc, axis=0, out=out[1:])
        return out

    def value(self, s: float, t: float) -> np.ndarray:
        i, j = self.grid.index(s), self.grid.index(t)
        if j < i:
            raise ValueError("need s <= t")
        return self.row(i, j)[-1]

    def matrix(self) -> np.ndarray:
        """All pair values as an ``(n+1, n+1, d, m)`` array; zero below the diagonal."""
        if self.dense is not None:
            return self.dense
        n = self.grid.n
        d, m = self.dims
        out = np.zeros((n + 1, n + 1, d, m))
        for i in range(n):
            out[i, i:] = self.row(i)
        return out

    def restrict(self, a: float, b: float) -> "TwoParamTensor":
        i, j = self.grid.index(a), self.grid.index(b)
        if j <= i:
            raise OffGridError(f"empty interval [{a}, {b}]")
        dense = None if self.dense is None else self.dense[i : j + 1, i : j + 1]
        return TwoParamTensor(
            self.grid.sub(i, j),
            self.step_values[i:j],
            self.left.restrict(a, b),
            self.right.restrict(a, b),
            dense=dense,
        )

    def __sub__(self, other: "TwoParamTensor") -> "TwoParamTensor":
        _check_same_grid(self.grid, other.grid)
        _check_same_grid(self.right.grid, other.right.grid)
        if not np.array_equal(self.right.values, other.right.values):
            raise GridMismatchError("tensor difference needs a common right path")
        return TwoParamTensor(
            self.grid, self.step_values - other.step_values, self.left - other.left, self.right
        )


@dataclass(frozen=True, eq=False)
class MultFunctional:
    x: GridPath
    y: GridPath
    tensor: TwoParamTensor
    exps: HolderExponents = field(default_factory=HolderExponents)

    def __post_init__(self):
        _check_same_grid(self.x.grid, self.y.grid)
        if self.tensor.left is not self.x and not np.array_equal(self.tensor.left.values, self.x.values):
            raise ValueError("tensor.left must be x")
        if self.tensor.right is not self.y and not np.array_equal(self.tensor.right.values, self.y.values):
            raise ValueError("tensor.right must be y")

    @classmethod
    def of(cls, tensor: TwoParamTensor, exps: Optional[HolderExponents] = None) -> "MultFunctional":
        return cls(tensor.left, tensor.right, tensor, exps or HolderExponents())

    def restrict(self, a: float, b: float) -> "MultFunctional":
        t = self.tensor.restrict(a, b)
        return MultFunctional(t.left, t.right, t, self.exps)


@dataclass(frozen=True)
class NormReport:
    beta_norm: float
    two_beta_norm: float
    sup_norm: float
    interval: tuple[float, float]
    phi2: Optional[float] = None
    phi3: Optional[float] = None


def _interval(grid: Grid, a: Optional[float], b: Optional[float]) -> tuple[int, int]:
    i = 0 if a is None else grid.index(a)
    j = grid.n if b is None else grid.index(b)
    if j <= i:
        raise OffGridError(f"off-grid interval: no grid pairs in [{a}, {b}]")
    return i, j


def holder_norm(p: GridPath, beta: float, a: Optional[float] = None, b: Optional[float] = None) -> float:
    """Discrete ``sup |p_t - p_s| / (t - s)^beta`` over grid pairs in ``[a, b]``."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    i, j = _interval(p.grid, a, b)
    v = p.values[i : j + 1]
    h = p.grid.h
    best = 0.0
    for k in range(1, j - i + 1):
        diff = v[k:] - v[:-k]
        top = float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff))))
        best = max(best, top / (k * h) ** beta)
    return best


def sup_norm(p: GridPath, a: Optional[float] = None, b: Optional[float] = None) -> float:
    i, j = _interval(p.grid, a, b)
    return float(np.max(np.linalg.norm(p.values[i : j + 1], axis=1)))


def two_param_norm(
    tensor: TwoParamTensor, two_beta: float, a: Optional[float] = None, b: Optional[float] = None
) -> float:
    """Discrete ``sup ||A_{s,t}|| / (t - s)^two_beta`` (Frobenius) over grid pairs in ``[a, b]``.

    ``two_beta = 0`` gives the plain supremum of ``||A_{s,t}||``.
    """
    i0, j0 = _interval(tensor.grid, a, b)
    h = tensor.grid.h
    gaps = (np.arange(1, j0 - i0 + 1) * h) ** two_beta
    best = 0.0
    for i in range(i0, j0):
        row = tensor.row(i, j0)[1:]
        norms = np.sqrt(np.einsum("kdm,kdm->k", row, row))
        best = max(best, float(np.max(norms / gaps[: j0 - i])))
    return best


def tensor_sup(tensor: TwoParamTensor, a: Optional[float] = None, b: Optional[float] = None) -> float:
    return two_param_norm(tensor, 0.0, a, b)


def chen_defect(obj, relative: bool = False) -> float:
    """Largest residual of the multiplicative property over grid triples ``s < u < t``.

    Accepts a :class:`MultFunctional` or a :class:`TwoParamTensor`.  For grids
    with more than 512 steps the middle index ``u`` runs with stride
    ``ceil(n / 512)``; ``s`` and ``t`` always range over every node.

    With ``relative=True`` the residual is divided by the largest of
    ``max ||A||`` and ``max|dx| * max|dy|`` over the grid (floored at 1e-300).
    """
    tensor = obj.tensor if isinstance(obj, MultFunctional) else obj
    n = tensor.grid.n
    if n < 2:
        return 0.0
    A = tensor.matrix()
    C = np.ascontiguousarray(np.moveaxis(A, (2, 3), (0, 1)))  # (d, m, n+1, n+1)
    x = tensor.left.values
    y = tensor.right.values
    d, m = tensor.dims
    stride = max(1, math.ceil(n / CHEN_MAX_MIDDLE))
    worst = 0.0
    for u in range(1, n, stride):
        sq = np.zeros((u, n - u))
        for i in range(d):
            dx = x[u, i] - x[:u, i]
            for j in range(m):
                c = C[i, j]
                res = np.multiply.outer(dx, y[u + 1 :, j] - y[u, j])
                res += c[:u, u, None]  # A[s, u]
                res += c[u, u + 1 :]  # A[u, t]
                res -= c[:u, u + 1 :]  # A[s, t]
                res *= res
                sq += res
        worst = max(worst, float(sq.max()))
    worst = math.sqrt(worst)
    if not relative:
        return worst
    amax = float(np.sqrt(np.max(np.einsum("ijdm,ijdm->ij", A, A))))
    dx = np.linalg.norm(x[:, None] - x[None, :], axis=-1).max()
    dy = np.linalg.norm(y[:, None] - y[None, :], axis=-1).max()
    return worst / max(amax, float(dx * dy), 1e-300)


def tensor_from_quadrature(x: GridPath, y: GridPath) -> TwoParamTensor:
    """Trapezoid tensor: step value ``0.5 * dx_k (x) dy_k``."""
    _check_same_grid(x.grid, y.grid)
    steps = 0.5 * np.einsum("kd,km->kdm", x.increments, y.increments)
    return TwoParamTensor(x.grid, steps, x, y)


def coarsen_path(p: GridPath, factor: int) -> GridPath:
    if factor < 1 or p.grid.n % factor:
        raise ValueError(f"factor {factor} does not divide {p.grid.n}")
    g = Grid(p.grid.t0, p.grid.h * factor, p.grid.n // factor)
    return GridPath(g, p.values[::factor])


def coarsen_tensor(tensor: TwoParamTensor, factor: int) -> TwoParamTensor:
    """Chen-aggregate blocks of ``factor`` fine steps into one coarse step."""
    n = tensor.grid.n
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide {n}")
    if factor == 1:
        return tensor
    d, m = tensor.dims
    x = tensor.left.values
    dy = tensor.right.increments
    nc = n // factor
    base = np.repeat(x[:-1:factor], factor, axis=0)
    inc = tensor.step_values + np.einsum("ld,lm->ldm", x[:-1] - base, dy)
    steps = inc.reshape(nc, factor, d, m).sum(axis=1)
    left = coarsen_path(tensor.left, factor)
    right = coarsen_path(tensor.right, factor)
    return TwoParamTensor(left.grid, steps, left, right)


def shift_path(p: GridPath, r: float) -> GridPath:
    """``q_t = p_{t - r}`` on the part of ``p``'s grid shifted right by ``r``."""
    m = p.grid.steps_for(r)
    if m < 0:
        raise ValueError("shift must be nonnegative")
    if m >= p.grid.n:
        raise OffGridError("insufficient left extension for the requested shift")
    g = Grid(p.grid.t0 + m * p.grid.h, p.grid.h, p.grid.n - m)
    return GridPath(g, p.values[: p.grid.n - m + 1])


def align(p: GridPath, grid: Grid) -> GridPath:
    """Restrict ``p`` to the nodes of ``grid`` (which must be a sub-grid)."""
    if not math.isclose(p.grid.h, grid.h, rel_tol=1e-12):
        raise GridMismatchError("step mismatch")
    i = p.grid.index(grid.t0)
    if i + grid.n > p.grid.n:
        raise OffGridError("grid extends beyond path")
    return GridPath(grid, p.values[i : i + grid.n + 1])


def phi2(M: MultFunctional, a: Optional[float] = None, b: Optional[float] = None, beta: Optional[float] = None) -> float:
    """``||x (x) y||_{2 beta} + ||x||_beta ||y||_beta`` on ``[a, b]``."""
    beta = M.exps.beta if beta is None else beta
    return two_param_norm(M.tensor, 2 * beta, a, b) + holder_norm(M.x, beta, a, b) * holder_norm(M.y, beta, a, b)


def phi3(
    xy: Optional[MultFunctional],
    yz: Optional[MultFunctional],
    a: Optional[float] = None,
    b: Optional[float] = None,
    beta: Optional[float] = None,
) -> float:
    """Three-path aggregate built from ``(x, y, x (x) y)`` and ``(y, z, y (x) z)``."""
    if xy is None or yz is None:
        raise MissingTensorError("phi3 needs both x (x) y and y (x) z")
    _check_same_grid(xy.y.grid, yz.x.grid)
    beta = xy.exps.beta if beta is None else beta
    nx = holder_norm(xy.x, beta, a, b)
    ny = holder_norm(xy.y, beta, a, b)
    nz = holder_norm(yz.y, beta, a, b)
    nxy = two_param_norm(xy.tensor, 2 * beta, a, b)
    nyz = two_param_norm(yz.tensor, 2 * beta, a, b)
    return nx * ny * nz + nz * nxy + nx * nyz


def endpoint_path(tensor: TwoParamTensor, b: Optional[float] = None) -> GridPath:
    """The one-parameter path ``u -> A_{u, b}`` on ``[t0, b]`` (d*m components)."""
    j = tensor.grid.n if b is None else tensor.grid.index(b)
    d, m = tensor.dims
    vals = np.empty((j + 1, d * m))
    for i in range(j + 1):
        vals[i] = tensor.row(i, j)[-1].reshape(-1)
    return GridPath(tensor.grid.sub(0, j), vals)


def norm_report(M: MultFunctional, a: Optional[float] = None, b: Optional[float] = None,
                beta: Optional[float] = None, with_phi: bool = False) -> NormReport:
    beta = M.exps.beta if beta is None else beta
    i, j = _interval(M.x.grid, a, b)
    nb = holder_norm(M.x, beta, a, b)
    n2 = two_param_norm(M.tensor, 2 * beta, a, b)
    interval = (float(M.x.grid.t0 + i * M.x.grid.h), float(M.x.grid.t0 + j * M.x.grid.h))
    p2 = n2 + nb * holder_norm(M.y, beta, a, b) if with_phi else None
    return NormReport(nb, n2, sup_norm(M.x, a, b), interval, phi2=p2)
