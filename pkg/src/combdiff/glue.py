"""Gluing spine and tooth excursions by coupled time changes.

Given a Brownian path X̄ (spine) and an independent reflected path Ȳ
(tooth), with local times LX on the lattice ``eps*Z`` and LY at 0, the glued
process runs X̄ on the clock psi_x and Ȳ on psi_y = t - psi_x, where psi_x is
the right-continuous inverse of ``s + tau_Y(c * LX_s)`` and ``c = alpha*eps/2``.

Both local times are read as piecewise-linear functions of their own clocks.
The inverse is then found by a sweep that keeps ``c * LX(psi_x) = LY(psi_y)``:
X̄ runs alone while LX is flat, Ȳ runs alone while LY is flat (a tooth
excursion, consumed as soon as its level is reached), and both run together
while both local times grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import (
    CombParams,
    ContractError,
    InsufficientDataError,
    ParameterError,
    SamplePath,
    TimeGrid,
    _as_generator,
    default_band,
    lattice_local_time,
    local_time_estimate,
)
from .limit_process import _reflected_kernel

__all__ = [
    "MonotoneFn",
    "GluedPath",
    "inverse_monotone",
    "inverse_linear",
    "glue_time_changes",
    "simulate_glued",
    "psi_y_from_definition",
    "excursion_durations",
    "ExcursionSample",
    "brownian_path",
]


@dataclass(frozen=True)
class MonotoneFn:
    """Nondecreasing values on a grid of times."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size < 1:
            raise ParameterError("times and values must be equal-length 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("times must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise ContractError("values must be nondecreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def inverse_monotone(f: MonotoneFn, level, with_flag: bool = False):
    """Grid inverse ``inf{s_k : f(s_k) > level}``.

    Levels at or above the last value return the last grid time; with
    ``with_flag`` a boolean saturation flag is returned alongside.
    """
    lv = np.asarray(level, dtype=float)
    idx = np.searchsorted(f.values, lv, side="right")
    sat = idx >= f.values.size
    out = f.times[np.minimum(idx, f.values.size - 1)]
    if out.ndim == 0:
        out, sat = float(out), bool(sat)
    return (out, sat) if with_flag else out


def inverse_linear(values: np.ndarray, dt: float, level) -> np.ndarray:
    """``inf{s : v(s) > level}`` for ``v`` linear between the points ``k*dt``.

    Levels beyond the range map to the last grid time.
    """
    v = np.asarray(values, dtype=float)
    lv = np.asarray(level, dtype=float)
    i = np.searchsorted(v, lv, side="right")
    n = v.size - 1
    k = np.clip(i - 1, 0, n - 1)
    lo, hi = v[k], v[k + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(hi > lo, (lv - lo) / (hi - lo), 0.0)
    s = (k + np.clip(frac, 0.0, 1.0)) * dt
    s = np.where(i == 0, 0.0, s)
    return np.where(i > n, n * dt, s)


@nb.njit(cache=True, nogil=True)
def _sweep(LX, LY, c, dt, n_out, psx, psy):
    # positions s = k + fs, r = m + fr in units of dt
    nx = LX.shape[0] - 1
    ny = LY.shape[0] - 1
    k = 0
    fs = 0.0
    m = 0
    fr = 0.0
    j = 0
    psx[0] = 0.0
    psy[0] = 0.0
    j = 1
    while j <= n_out:
        if k >= nx or m >= ny:
            break
        dX = c * (LX[k + 1] - LX[k])
        dY = LY[m + 1] - LY[m]
        t = k + fs + m + fr
        if dY == 0.0:
            # Ȳ alone to the end of its segment
            rem = 1.0 - fr
            while j <= n_out and j <= t + rem:
                psx[j] = k + fs
                psy[j] = j - (k + fs)
                j += 1
            m += 1
            fr = 0.0
        elif dX == 0.0:
            rem = 1.0 - fs
            while j <= n_out and j <= t + rem:
                psy[j] = m + fr
                psx[j] = j - (m + fr)
                j += 1
            k += 1
            fs = 0.0
        else:
            # both move: ds / dr = dY / dX, so one unit of real time moves
            # s by a = dY/(dX+dY) and r by b = dX/(dX+dY)
            a = dY / (dX + dY)
            b = dX / (dX + dY)
            tx = (1.0 - fs) / a
            ty = (1.0 - fr) / b
            tau = tx if tx < ty else ty
            while j <= n_out and j <= t + tau:
                u = j - t
                psx[j] = k + fs + a * u
                psy[j] = j - psx[j]
                j += 1
            if tx <= ty:
                fr = fr + b * tx
                k += 1
                fs = 0.0
                if fr >= 1.0:
                    m += 1
                    fr = 0.0
            else:
                fs = fs + a * ty
                m += 1
                fr = 0.0
                if fs >= 1.0:
                    k += 1
                    fs = 0.0
    return j - 1


@dataclass(frozen=True)
class GluedPath:
    grid: TimeGrid
    psi_x: np.ndarray
    psi_y: np.ndarray
    x: np.ndarray
    y: np.ndarray
    lx: np.ndarray
    ly: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def _interp(values: np.ndarray, dt: float, s: np.ndarray) -> np.ndarray:
    return np.interp(s / dt, np.arange(values.size), values)


def glue_time_changes(
    xbar: SamplePath, ybar: SamplePath, params: CombParams, band: float | None = None
) -> GluedPath:
    """Build the glued process on the common grid of ``xbar`` and ``ybar``.

    Local times use the shared band rule (``2 sqrt(dt)`` by default): a
    symmetric band summed over ``eps*Z`` for X̄ and the one-sided band at 0
    for Ȳ.  The output grid is the input grid.
    """
    if xbar.grid != ybar.grid:
        raise ParameterError("xbar and ybar must share one grid")
    if not params.alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {params.alpha}")
    grid = xbar.grid
    band = default_band(grid.dt) if band is None else float(band)
    LX = lattice_local_time(xbar, params.epsilon, band)
    LY = local_time_estimate(ybar, 0.0, band)
    return glue_from_local_times(xbar.values(), ybar.values(), LX, LY, params, grid)


def glue_from_local_times(xv, yv, LX, LY, params: CombParams, grid: TimeGrid) -> GluedPath:
    LX = np.ascontiguousarray(LX, dtype=float)
    LY = np.ascontiguousarray(LY, dtype=float)
    if np.any(np.diff(LX) < 0) or np.any(np.diff(LY) < 0):
        raise ContractError("local times must be nondecreasing")
    n = grid.n_steps
    c = 0.5 * params.alpha * params.epsilon
    psx = np.full(n + 1, np.nan)
    psy = np.full(n + 1, np.nan)
    last = _sweep(LX, LY, c, 1.0, n, psx, psy)
    if last < n:
        raise RuntimeError("input paths too short for the requested horizon")
    dt = grid.dt
    psx *= dt
    psy = grid.times - psx
    x = _interp(np.asarray(xv, float), dt, psx)
    y = _interp(np.asarray(yv, float), dt, psy)
    lx = _interp(LX, dt, psx)
    ly = _interp(LY, dt, psy)
    return GluedPath(grid, psx, psy, x, y, lx, ly)


def psi_y_from_definition(LX, LY, params: CombParams, dt: float, times: np.ndarray, iters: int = 60) -> np.ndarray:
    """``inf{r : r + tau_X(LY(r) / c) > t}`` by bisection, independent of the sweep."""
    LX = np.asarray(LX, float)
    LY = np.asarray(LY, float)
    c = 0.5 * params.alpha * params.epsilon
    t = np.asarray(times, float)
    r_max = (LY.size - 1) * dt

    def phi(r):
        ly = _interp(LY, dt, r)
        return r + inverse_linear(LX, dt, ly / c)

    lo = np.zeros_like(t)
    hi = np.minimum(t, r_max)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        big = phi(mid) > t
        hi = np.where(big, mid, hi)
        lo = np.where(big, lo, mid)
    return hi


def brownian_path(grid: TimeGrid, rng, x0: float = 0.0) -> SamplePath:
    g = _as_generator(rng)
    inc = math.sqrt(grid.dt) * g.standard_normal(grid.n_steps)
    return SamplePath(grid, np.concatenate([[x0], x0 + np.cumsum(inc)]))


def simulate_glued(params: CombParams, grid: TimeGrid, rng) -> GluedPath:
    """Draw X̄ then Ȳ from one stream and glue them."""
    g = _as_generator(rng)
    xbar = brownian_path(grid, g)
    ybar = SamplePath(grid, _reflected_kernel(g, params.h0, grid.dt, grid.n_steps, 0.0))
    return glue_time_changes(xbar, ybar, params)


# --- excursions across the spine -----------------------------------------------


@nb.njit(cache=True, nogil=True)
def _lattice_hits(v, dt, eps):
    # times at which the path reaches a lattice point other than the last one visited
    out = np.empty(v.shape[0])
    n = 0
    a = eps * math.floor(v[0] / eps + 0.5)
    for k in range(v.shape[0] - 1):
        x0 = v[k]
        x1 = v[k + 1]
        up = a + eps
        dn = a - eps
        if x1 >= up:
            out[n] = (k + (up - x0) / (x1 - x0)) * dt
            n += 1
            a = up
        elif x1 <= dn:
            out[n] = (k + (x0 - dn) / (x0 - x1)) * dt
            n += 1
            a = dn
    return out[:n]


@dataclass(frozen=True)
class ExcursionSample:
    durations: np.ndarray
    levels: np.ndarray
    tau: np.ndarray


def excursion_durations(xbar: SamplePath, epsilon: float, levels=None, band: float | None = None) -> ExcursionSample:
    """Durations between visits to distinct points of ``epsilon * Z``.

    The path must start on the lattice.  Hits are detected at grid times only,
    which shifts each effective level outward by about ``0.5826 sqrt(dt)``;
    the shift scales out when ``dt`` is proportional to ``epsilon**2``.
    ``tau`` is the right-continuous
    inverse of the lattice local time evaluated at ``levels`` (default: 100
    evenly spaced levels up to the final local time).
    """
    dt = xbar.grid.dt
    if not epsilon > 0:
        raise ParameterError(f"epsilon > 0 required, got {epsilon}")
    if dt > epsilon**2 / 64 * (1 + 1e-9):
        raise ParameterError(f"dt must not exceed epsilon^2/64 = {epsilon**2 / 64:.6g}")
    v = np.ascontiguousarray(xbar.values())
    hits = _lattice_hits(v, dt, float(epsilon))
    if hits.size < 11:
        raise InsufficientDataError(f"only {max(hits.size - 1, 0)} complete excursions")
    # the first hit closes the excursion that started at time 0 on the lattice
    start = abs(v[0] - epsilon * round(v[0] / epsilon)) < 1e-12
    marks = np.concatenate([[0.0], hits]) if start else hits
    durations = np.diff(marks)
    LX = lattice_local_time(xbar, epsilon, band)
    if levels is None:
        levels = np.linspace(0.0, LX[-1], 101)[1:-1]
    levels = np.asarray(levels, float)
    return ExcursionSample(durations, levels, inverse_linear(LX, dt, levels))
