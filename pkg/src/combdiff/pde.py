"""Effective equations on the comb.

* :func:`solve_effective` -- heat flow ``u_t = u_yy / 2`` on ``[0, h0]`` with the
  dynamic boundary row ``u_t = (alpha u_y + u_xx) / 2`` at ``y = 0`` and Neumann
  at the top.  Finite volumes in ``y``: the bottom node carries capacity
  ``1/alpha + dy/2`` so that ``(1/alpha) u(0) + int u dy`` is conserved exactly
  for x-independent data.  The ``y`` fluxes are explicit; the ``u_xx`` term on
  the bottom row is implicit.
* :func:`solve_basset` -- the boundary trace as a memory equation
  ``v_t + (alpha/2) D^w v - v_xx / 2 = (alpha/2) f`` with kernel ``w``, discretised by
  product integration of a piecewise-constant ``v_t`` against the exact kernel
  primitive.
* :func:`solve_cell_problem` -- the Neumann Poisson problem with a unit spine
  source balanced by a gate sink, used for the oscillation scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve
from scipy.special import erfc

from .core import CombParams, NumericalError, ParameterError

__all__ = [
    "Grid2D",
    "Field",
    "CaputoKernel",
    "kernel_w",
    "kernel_primitive",
    "kernel_laplace",
    "kernel_laplace_check",
    "solve_effective",
    "compute_source_g",
    "solve_basset",
    "BassetResult",
    "solve_cell_problem",
    "CellSolution",
    "probe_solution",
    "x_range",
]

_SQ2PI = math.sqrt(2.0 / math.pi)


# --- kernel ---------------------------------------------------------------------


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ParameterError("kernel is singular at t = 0; t > 0 required")
    return t


def _images(h0: float, tmax: float) -> int:
    # terms with 2 n^2 h0^2 / t > 40 are below e^-40
    return int(math.ceil(math.sqrt(20.0 * tmax) / h0)) + 1


def kernel_w(t, h0: float, K: int | None = None):
    """Kernel ``w(t) = (2/h0) sum_k exp(-(2k+1)^2 pi^2 t / (8 h0^2))``.

    With ``K`` the first ``K`` terms are summed.  Without it the sum is
    evaluated to machine precision, switching to the equivalent image sum
    ``sqrt(2/(pi t)) sum_n (-1)^n exp(-2 n^2 h0^2 / t)`` for ``t <= h0^2``.
    ``h0 = inf`` gives ``sqrt(2/(pi t))``.
    """
    t = _check_t(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if math.isinf(h0):
        out = np.sqrt(2.0 / (math.pi * t))
    elif K is not None:
        if K < 1:
            raise ParameterError("K >= 1 required")
        lam = ((2 * np.arange(K) + 1) * math.pi / (2.0 * h0)) ** 2 / 2.0
        out = (2.0 / h0) * np.exp(-np.outer(t, lam)).sum(axis=1)
    else:
        out = np.empty_like(t)
        small = t <= h0 * h0
        if np.any(small):
            ts = t[small]
            n = np.arange(1, _images(h0, ts.max()) + 1)
            terms = ((-1.0) ** n) * np.exp(-2.0 * np.outer(1.0 / ts, (n * h0) ** 2))
            out[small] = np.sqrt(2.0 / (math.pi * ts)) * (1.0 + 2.0 * terms.sum(axis=1))
        if np.any(~small):
            out[~small] = kernel_w(t[~small], h0, K=40)
    return float(out[0]) if scalar else out


def kernel_primitive(tau, h0: float):
    """``W(tau) = int_0^tau w(t) dt`` in closed form (``W(0) = 0``)."""
    tau = np.asarray(tau, dtype=float)
    scalar = tau.ndim == 0
    tau = np.atleast_1d(tau)
    if np.any(tau < 0):
        raise ParameterError("tau >= 0 required")
    out = 2.0 * _SQ2PI * np.sqrt(tau)
    if not math.isinf(h0):
        small = tau <= h0 * h0
        if np.any(small):
            ts = tau[small]
            st = np.sqrt(ts)
            n = np.arange(1, _images(h0, max(ts.max(), 1e-300)) + 1)
            a = 2.0 * (n * h0) ** 2
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                ex = np.where(ts[:, None] > 0, np.exp(-a[None, :] / ts[:, None]), 0.0)
                ef = np.where(ts[:, None] > 0, erfc(np.sqrt(a[None, :] / ts[:, None])), 0.0)
            part = 2.0 * st[:, None] * ex - 2.0 * np.sqrt(math.pi * a)[None, :] * ef
            out[small] = _SQ2PI * (2.0 * st + 2.0 * (((-1.0) ** n)[None, :] * part).sum(axis=1))
        if np.any(~small):
            lam = ((2 * np.arange(60) + 1) * math.pi / (2.0 * h0)) ** 2 / 2.0
            tl = tau[~small]
            out[~small] = 2.0 * h0 - ((2.0 / h0) * np.exp(-np.outer(tl, lam)) / lam).sum(axis=1)
    return float(out[0]) if scalar else out


def kernel_laplace(s: float, h0: float) -> float:
    """Closed-form transform ``2 tanh(h0 sqrt(2s)) / sqrt(2s)``."""
    if not s > 0:
        raise ParameterError("s > 0 required")
    r = math.sqrt(2.0 * s)
    return 2.0 / r if math.isinf(h0) else 2.0 * math.tanh(h0 * r) / r


def kernel_laplace_check(h0: float, s: float) -> float:
    """``|numeric int_0^inf e^{-st} w(t) dt - closed form|``.

    The integral is taken in ``u = sqrt(t)`` which removes the ``t^{-1/2}``
    endpoint singularity, by adaptive Gauss-Kronrod quadrature.
    """
    if not s > 0:
        raise ParameterError("s > 0 required")

    def g(u):
        if u == 0.0:
            return 2.0 * _SQ2PI
        return 2.0 * u * kernel_w(u * u, h0) * math.exp(-s * u * u)

    brk = [] if math.isinf(h0) else [h0]
    val, _ = integrate.quad(g, 0.0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    if brk:
        # split at the representation switch to keep the adaptive rule honest
        a, _ = integrate.quad(g, 0.0, h0, epsabs=1e-13, epsrel=1e-12, limit=400)
        b, _ = integrate.quad(g, h0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
        val = a + b
    return abs(val - kernel_laplace(s, h0))


@dataclass(frozen=True)
class CaputoKernel:
    """Product-integration weights ``a_m = (W((m+1)dt) - W(m dt)) / dt``."""

    h0: float
    dt: float
    weights: np.ndarray

    @classmethod
    def tabulate(cls, h0: float, dt: float, n: int) -> "CaputoKernel":
        W = kernel_primitive(dt * np.arange(n + 1), h0)
        return cls(float(h0), float(dt), np.diff(W) / dt)

    def w(self, t):
        return kernel_w(t, self.h0)


# --- grids and fields -----------------------------------------------------------


def x_range(t_max: float) -> tuple[float, float]:
    """Truncated x-interval ``[-8 sqrt(t_max), 8 sqrt(t_max)]``."""
    r = 8.0 * math.sqrt(t_max)
    return -r, r


@dataclass(frozen=True)
class Grid2D:
    x_min: float
    x_max: float
    nx: int
    y_max: float
    ny: int
    dt: float
    nt: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ParameterError("nx, ny >= 3 required")
        if not self.x_max > self.x_min:
            raise ParameterError("x_max > x_min required")
        if not (self.y_max > 0 and math.isfinite(self.y_max)):
            raise ParameterError("y_max must be finite and positive")
        if not self.dt > 0 or self.nt < 1:
            raise ParameterError("dt > 0 and nt >= 1 required")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.ny)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.y_max / (self.ny - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    def stable_dt(self) -> float:
        return 0.5 * self.dy**2

    @classmethod
    def for_horizon(cls, t_max: float, y_max: float, dx: float, dy: float, dt: float | None = None):
        lo, hi = x_range(t_max)
        nx = int(round((hi - lo) / dx)) + 1
        ny = int(round(y_max / dy)) + 1
        dyy = y_max / (ny - 1)
        dt = 0.5 * dyy**2 if dt is None else dt
        nt = int(math.ceil(t_max / dt - 1e-9))
        return cls(lo, hi, nx, y_max, ny, t_max / nt, nt)


@dataclass(frozen=True)
class Field:
    """Values on ``t x [x] x [y]``; ``y`` is ``None`` for 1-D fields."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray | None
    values: np.ndarray

    def __post_init__(self):
        shape = (len(self.t), len(self.x)) + (() if self.y is None else (len(self.y),))
        if self.values.shape != shape:
            raise ParameterError(f"values shape {self.values.shape} does not match grid {shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("field has non-finite values")

    def at(self, k: int) -> np.ndarray:
        return self.values[k]


def _tridiag_neumann(n: int, diag: float, off: float) -> np.ndarray:
    # banded storage of  diag*I + off*(second difference with reflecting ends)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[2, :-1] = off
    ab[1, :] = diag - 2.0 * off
    ab[0, 1] = 2.0 * off
    ab[2, -2] = 2.0 * off
    return ab


def _as_initial(u0, grid: Grid2D) -> np.ndarray:
    if callable(u0):
        X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
        arr = np.asarray(u0(X, Y), dtype=float) * np.ones_like(X)
    elif isinstance(u0, Field):
        arr = np.asarray(u0.values[0], dtype=float)
    else:
        arr = np.asarray(u0, dtype=float)
    if arr.shape != (grid.nx, grid.ny):
        raise ParameterError(f"initial data must have shape {(grid.nx, grid.ny)}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("initial data must be finite")
    return arr.copy()


def _save_steps(grid: Grid2D, save_every: int | None, save_times) -> np.ndarray:
    if save_times is not None:
        idx = np.rint(np.asarray(save_times, float) / grid.dt).astype(int)
        if np.any(np.abs(idx * grid.dt - np.asarray(save_times)) > 1e-9 * max(1.0, grid.dt * grid.nt)):
            raise ParameterError("save_times must lie on the time grid")
        return np.unique(np.clip(idx, 0, grid.nt))
    step = 1 if save_every is None else int(save_every)
    idx = np.arange(0, grid.nt + 1, step)
    return idx if idx[-1] == grid.nt else np.append(idx, grid.nt)


def solve_effective(params: CombParams, u0, grid: Grid2D, save_every: int | None = None, save_times=None) -> Field:
    """Time-step the effective system from ``u0`` (array ``(nx, ny)``, callable or Field)."""
    if not params.alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {params.alpha}")
    if not params.h0_is_inf and abs(grid.y_max - params.h0) > 1e-12 * params.h0:
        raise ParameterError(f"grid must span [0, h0] = [0, {params.h0}]")
    if grid.dt > grid.stable_dt() * (1 + 1e-12):
        raise ParameterError(f"dt must not exceed dy^2/2 = {grid.stable_dt():.6g}")
    u = _as_initial(u0, grid)
    a, dy, dx, dt = params.alpha, grid.dy, grid.dx, grid.dt
    lam = 0.5 * dt / dy**2
    cap = 1.0 / a + 0.5 * dy
    ab = _tridiag_neumann(grid.nx, cap / dt, -0.5 / (a * dx**2))
    keep = _save_steps(grid, save_every, save_times)
    out = np.empty((keep.size, grid.nx, grid.ny))
    pos = 0
    if keep[0] == 0:
        out[0] = u
        pos = 1
    for n in range(1, grid.nt + 1):
        new = np.empty_like(u)
        new[:, 1:-1] = u[:, 1:-1] + lam * (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2])
        new[:, -1] = u[:, -1] + 2.0 * lam * (u[:, -2] - u[:, -1])
        rhs = (cap / dt) * u[:, 0] + 0.5 * (u[:, 1] - u[:, 0]) / dy
        new[:, 0] = solve_banded((1, 1), ab, rhs)
        u = new
        if pos < keep.size and keep[pos] == n:
            out[pos] = u
            pos += 1
    return Field(keep * dt, grid.x, grid.y, out)


def stationary_mass(u_col: np.ndarray, alpha: float, dy: float) -> float:
    """``(1/alpha) u(0) + trapezoid int u dy`` for one column."""
    return u_col[0] / alpha + dy * (0.5 * u_col[0] + u_col[1:-1].sum() + 0.5 * u_col[-1])


def compute_source_g(u0, params: CombParams, grid: Grid2D, top_bc: str = "neumann") -> Field:
    """Flux ``f = g_y(x, 0, t)`` of the tooth problem for ``g``.

    ``g`` solves ``g_t = g_yy / 2`` with ``g(x, 0, t) = 0``, initial value
    ``u0(x, y) - u0(x, 0)`` and, at ``y = h0``, ``g_y = 0`` (``top_bc="neumann"``)
    or ``g = 0`` (``"dirichlet"``).  Same explicit scheme and grid as
    :func:`solve_effective`; the flux uses the second-order one-sided stencil.
    """
    if params.h0_is_inf:
        raise ParameterError("the source term needs a finite h0")
    if top_bc not in ("neumann", "dirichlet"):
        raise ParameterError("top_bc must be 'neumann' or 'dirichlet'")
    if abs(grid.y_max - params.h0) > 1e-12 * params.h0:
        raise ParameterError(f"grid must span [0, h0] = [0, {params.h0}]")
    if grid.dt > grid.stable_dt() * (1 + 1e-12):
        raise ParameterError(f"dt must not exceed dy^2/2 = {grid.stable_dt():.6g}")
    u = _as_initial(u0, grid)
    g = u - u[:, :1]
    dy, lam = grid.dy, 0.5 * grid.dt / grid.dy**2
    f = np.empty((grid.nt + 1, grid.nx))

    def flux(gg):
        return (4.0 * gg[:, 1] - gg[:, 2] - 3.0 * gg[:, 0]) / (2.0 * dy)

    if top_bc == "dirichlet":
        g[:, -1] = 0.0
    f[0] = flux(g)
    for n in range(1, grid.nt + 1):
        new = np.empty_like(g)
        new[:, 1:-1] = g[:, 1:-1] + lam * (g[:, 2:] - 2.0 * g[:, 1:-1] + g[:, :-2])
        new[:, 0] = 0.0
        new[:, -1] = 0.0 if top_bc == "dirichlet" else g[:, -1] + 2.0 * lam * (g[:, -2] - g[:, -1])
        g = new
        f[n] = flux(g)
    return Field(grid.times, grid.x, None, f)


@dataclass(frozen=True)
class BassetResult:
    field: Field
    increments: np.ndarray  # v^{n+1} - v^n, one row per step
    kernel: CaputoKernel


def solve_basset(
    v0,
    f,
    params: CombParams,
    x: np.ndarray,
    dt: float,
    nt: int,
    kernel: CaputoKernel | None = None,
    history: BassetResult | None = None,
    save_every: int = 1,
) -> BassetResult:
    """Implicit product-integration solver for the memory equation.

    ``f`` is ``None`` (no forcing), a :class:`Field` on the same ``x`` grid with
    at least ``nt + 1`` time levels, or an array of shape ``(nt + 1, nx)``.
    Passing ``history`` continues a previous run: its increments enter the
    memory sum and ``v0`` is ignored.
    """
    if not params.alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {params.alpha}")
    x = np.asarray(x, float)
    nx = x.size
    dx = (x[-1] - x[0]) / (nx - 1)
    n0 = 0 if history is None else history.increments.shape[0]
    total = n0 + nt
    if kernel is None:
        kernel = CaputoKernel.tabulate(params.h0, dt, total)
    if abs(kernel.dt - dt) > 1e-12 * dt or kernel.weights.size < total or (
        not (math.isinf(kernel.h0) and params.h0_is_inf) and kernel.h0 != params.h0
    ):
        raise ParameterError("kernel does not match the time grid or h0")
    if f is None:
        fv = np.zeros((nt + 1, nx))
    else:
        fv = np.asarray(f.values if isinstance(f, Field) else f, float)
        if fv.shape[1] != nx or fv.shape[0] < nt + 1:
            raise ParameterError("forcing must cover the x grid and nt + 1 time levels")
    if history is None:
        v = np.asarray(v0, float) * np.ones(nx)
        dv = np.zeros((total, nx))
    else:
        v = history.field.values[-1].copy()
        dv = np.zeros((total, nx))
        dv[:n0] = history.increments
    a = kernel.weights
    half_a = 0.5 * params.alpha
    lead = 1.0 / dt + half_a * a[0]
    ab = _tridiag_neumann(nx, lead, -0.5 / dx**2)
    saved_t, saved_v = [n0 * dt], [v.copy()]
    for n in range(n0, total):
        hist = a[n:0:-1] @ dv[:n] if n > 0 else 0.0
        lap = np.empty(nx)
        lap[1:-1] = v[2:] - 2.0 * v[1:-1] + v[:-2]
        lap[0] = 2.0 * (v[1] - v[0])
        lap[-1] = 2.0 * (v[-2] - v[-1])
        rhs = half_a * fv[n + 1 - n0] - half_a * hist + 0.5 * lap / dx**2
        d = solve_banded((1, 1), ab, rhs)
        dv[n] = d
        v = v + d
        if (n + 1 - n0) % save_every == 0 or n + 1 == total:
            saved_t.append((n + 1) * dt)
            saved_v.append(v.copy())
    fld = Field(np.array(saved_t), x, None, np.array(saved_v))
    return BassetResult(fld, dv, kernel)


# --- cell problem ---------------------------------------------------------------


@dataclass(frozen=True)
class CellSolution:
    epsilon: float
    h: float
    centers: np.ndarray  # (n_unknowns, 2)
    u: np.ndarray  # normalised so that min u = 0
    oscillation: float
    residual: float
    mean_before: float


def solve_cell_problem(
    epsilon: float,
    alpha: float,
    h0_trunc: float = 1.0,
    resolution: int = 4,
    n_cells: int = 5,
    source: bool = True,
) -> CellSolution:
    """Neumann Poisson problem ``-lap u = alpha 1_Q - mu`` on a truncated comb.

    Cell-centred finite volumes on a uniform mesh with ``resolution`` cells
    across a tooth.  ``Q`` is the spine cell around the centre junction and
    ``mu`` has total mass ``alpha eps^2`` spread evenly over that junction's
    gate; each gate face gives half its share to the cell on either side.
    The singular system is solved with one node pinned, then checked against
    the full operator.
    """
    if not (epsilon > 0 and alpha > 0):
        raise ParameterError("epsilon > 0 and alpha > 0 required")
    if n_cells < 1 or n_cells % 2 == 0:
        raise ParameterError("n_cells must be odd")
    if resolution < 4:
        raise ParameterError("resolution must give at least 4 cells per tooth width")
    H = min(float(h0_trunc), 1.0)
    tw = alpha * epsilon**2
    h = tw / resolution
    per = epsilon / h
    if abs(per - round(per)) > 1e-6 or abs(per / 2 - round(per / 2)) > 1e-6 and resolution % 2 == 1:
        raise ParameterError("mesh must align with the junction spacing; choose epsilon/h integral")
    per = int(round(per))
    if (per - resolution) % 2:
        raise ParameterError("tooth must sit symmetrically on the mesh")
    nxs = per * n_cells
    nys = per  # spine height equals epsilon
    nyt = int(round(H / h))
    half = n_cells // 2
    # spine cells: ix in [0, nxs), iy in [0, nys); x centre = (ix + 0.5) h - n_cells*eps/2
    idx_spine = np.arange(nxs * nys).reshape(nxs, nys)
    n = nxs * nys
    tooth_cols = []
    for k in range(-half, half + 1):
        c = (k + half) * per + per // 2  # first column right of the junction in cell units
        tooth_cols.append(list(range(c - resolution // 2, c + resolution // 2)))
    tooth_idx = []
    for cols in tooth_cols:
        block = np.arange(n, n + len(cols) * nyt).reshape(len(cols), nyt)
        tooth_idx.append(block)
        n += block.size
    rows, cols_ = [], []

    def link(a, b):
        rows.append(a)
        cols_.append(b)

    # spine neighbours
    for ix in range(nxs):
        for iy in range(nys):
            i = idx_spine[ix, iy]
            if ix + 1 < nxs:
                link(i, idx_spine[ix + 1, iy])
            if iy + 1 < nys:
                link(i, idx_spine[ix, iy + 1])
    # teeth and mouths
    for cols, block in zip(tooth_cols, tooth_idx):
        for a, ix in enumerate(cols):
            link(idx_spine[ix, nys - 1], block[a, 0])
            for iy in range(nyt):
                if iy + 1 < nyt:
                    link(block[a, iy], block[a, iy + 1])
                if a + 1 < len(cols):
                    link(block[a, iy], block[a + 1, iy])
    r = np.array(rows)
    c = np.array(cols_)
    W = sparse.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    W = (W + W.T).tocsr()
    A = (sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()
    b = np.zeros(n)
    if source:
        xc = (np.arange(nxs) + 0.5) * h - n_cells * epsilon / 2
        inq = np.abs(xc) < epsilon / 2
        b[idx_spine[inq, :].ravel()] += alpha * h * h
        centre = tooth_cols[half]
        for a, ix in enumerate(centre):
            b[idx_spine[ix, nys - 1]] -= 0.5 * h
            b[tooth_idx[half][a, 0]] -= 0.5 * h
        mass_q = alpha * h * h * inq.sum() * nys
        mass_g = h * len(centre)
        if abs(mass_q - mass_g) > 1e-12 * max(mass_q, 1e-300) or abs(mass_q - alpha * epsilon**2) > 1e-9 * mass_q:
            raise NumericalError(f"source {mass_q} and gate sink {mass_g} do not balance")
    keep = np.arange(1, n)
    u = np.zeros(n)
    if np.any(b != 0):
        u[1:] = spsolve(A[keep][:, keep].tocsc(), b[1:])
    res = np.linalg.norm(A @ u - b) / max(np.linalg.norm(b), 1e-300)
    if res > 1e-10:
        raise NumericalError(f"cell problem residual {res:.3e} above tolerance")
    mean = float(np.mean(u - u.mean()))
    u = u - u.min()
    xs = np.empty(n)
    ys = np.empty(n)
    X, Yg = np.meshgrid((np.arange(nxs) + 0.5) * h - n_cells * epsilon / 2, -epsilon + (np.arange(nys) + 0.5) * h, indexing="ij")
    xs[idx_spine.ravel()] = X.ravel()
    ys[idx_spine.ravel()] = Yg.ravel()
    for cols, block in zip(tooth_cols, tooth_idx):
        cx = (np.array(cols) + 0.5) * h - n_cells * epsilon / 2
        cy = (np.arange(nyt) + 0.5) * h
        TX, TY = np.meshgrid(cx, cy, indexing="ij")
        xs[block.ravel()] = TX.ravel()
        ys[block.ravel()] = TY.ravel()
    return CellSolution(epsilon, h, np.column_stack([xs, ys]), u, float(u.max()), float(res), mean)


# --- probes ---------------------------------------------------------------------


def probe_solution(field: Field, points, k: int = -1) -> np.ndarray:
    """Bilinear (linear in 1-D) interpolation of time level ``k`` at ``points``."""
    pts = np.atleast_2d(np.asarray(points, float))
    vals = field.values[k]
    axes = (field.x,) if field.y is None else (field.x, field.y)
    if pts.shape[1] != len(axes):
        raise ParameterError(f"points need {len(axes)} coordinates")
    for d, ax in enumerate(axes):
        lo, hi = ax[0], ax[-1]
        if np.any(pts[:, d] < lo - 1e-12 * max(1.0, abs(lo))) or np.any(pts[:, d] > hi + 1e-12 * max(1.0, abs(hi))):
            raise ParameterError("probe point outside the grid hull")
    interp = RegularGridInterpolator(axes, vals, method="linear", bounds_error=False, fill_value=None)
    return interp(pts)
