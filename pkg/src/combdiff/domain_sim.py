"""Reflected Brownian motion in the fattened comb.

The domain is the strip ``-w_S < y < 0`` plus the teeth
``|x - eps*k| < w_T/2, 0 <= y < h0``.  Every wall is an axis-aligned segment,
so reflection is done by repeatedly folding the remaining displacement across
the first wall it crosses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import CombParams, ParameterError, SamplePath, TimeGrid, _as_generator, map_streams

__all__ = [
    "DomainGeometry",
    "Point2",
    "contains",
    "in_closure",
    "reflect_step",
    "simulate_domain",
    "simulate_domain_endpoints",
    "DomainPath",
    "default_dt",
]

MAX_BOUNCE = 8


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ParameterError("point coordinates must be finite")


@dataclass(frozen=True)
class DomainGeometry:
    params: CombParams

    @property
    def spine_width(self) -> float:
        return self.params.spine_width

    @property
    def half_width(self) -> float:
        return 0.5 * self.params.tooth_width

    @property
    def h0(self) -> float:
        return self.params.h0

    @property
    def epsilon(self) -> float:
        return self.params.epsilon

    def _arrays(self):
        return self.epsilon, self.spine_width, self.half_width, self.h0


@nb.njit(cache=True, nogil=True, inline="always")
def _dist(x, eps):
    return abs(x - eps * math.floor(x / eps + 0.5))


@nb.njit(cache=True, nogil=True)
def _contains(eps, ws, hw, h0, x, y, closed):
    if closed:
        if y < -ws or y > h0:
            return False
        if y <= 0.0:
            return True
        return _dist(x, eps) <= hw
    if y <= -ws or y >= h0:
        return False
    if y < 0.0:
        return True
    return _dist(x, eps) < hw


def contains(geom: DomainGeometry, p: Point2) -> bool:
    """Membership in the open domain."""
    return bool(_contains(*geom._arrays(), p.x, p.y, False))


def in_closure(geom: DomainGeometry, p: Point2, tol: float = 1e-12) -> bool:
    eps, ws, hw, h0 = geom._arrays()
    return bool(_contains(eps, ws + tol, hw + tol, h0 + tol, p.x, p.y, True))


@nb.njit(cache=True, nogil=True)
def _reflect(eps, ws, hw, h0, x0, y0, x1, y1, max_bounce):
    # returns (x, y, flag); flag = 1 if max_bounce was exhausted
    for _ in range(max_bounce + 1):
        best = 2.0
        kind = 0  # 1 horizontal line, 2 vertical line
        line = 0.0
        dy = y1 - y0
        dx = x1 - x0
        # floor of the spine
        if y1 < -ws and dy < 0.0:
            s = (-ws - y0) / dy
            if s < best:
                best, kind, line = s, 1, -ws
        # part of the segment above y = 0 and the tooth it lies in
        s_up = -1.0
        c = 0.0
        if y0 > 0.0:
            s_up = 0.0
            c = eps * math.floor(x0 / eps + 0.5)
        elif y1 > 0.0:
            s = -y0 / dy
            xc = x0 + s * dx
            if _dist(xc, eps) >= hw:
                if s < best:
                    best, kind, line = s, 1, 0.0
            else:
                s_up = s
                c = eps * math.floor(xc / eps + 0.5)
        if s_up >= 0.0:
            if dx != 0.0:
                for wall in (c - hw, c + hw):
                    s = (wall - x0) / dx
                    if s > s_up and s <= 1.0 and ((dx > 0.0 and wall > x0) or (dx < 0.0 and wall < x0)):
                        if y0 + s * dy > 0.0 and s < best:
                            best, kind, line = s, 2, wall
            if y1 > h0 and dy > 0.0:
                s = (h0 - y0) / dy
                if s >= s_up and s < best:
                    best, kind, line = s, 1, h0
        if kind == 0:
            return x1, y1, 0
        xh = x0 + best * dx
        yh = y0 + best * dy
        if kind == 1:
            yh = line
            y1 = 2.0 * line - y1
        else:
            xh = line
            x1 = 2.0 * line - x1
        x0, y0 = xh, yh
    return x0, y0, 1


def reflect_step(geom: DomainGeometry, start: Point2, proposed: Point2, max_bounce: int = MAX_BOUNCE):
    """Fold ``proposed`` back into the closed domain.

    Returns ``(point, flagged)``.  If the chain needs more than ``max_bounce``
    folds the last boundary hit point is returned and ``flagged`` is True.
    """
    if not in_closure(geom, start):
        raise ParameterError(f"start point {start} is outside the domain")
    x, y, flag = _reflect(*geom._arrays(), start.x, start.y, proposed.x, proposed.y, int(max_bounce))
    return Point2(x, y), bool(flag)


def default_dt(geom: DomainGeometry) -> float:
    """Largest step with ``sqrt(dt) = w_T / 4``."""
    return (geom.params.tooth_width / 4.0) ** 2


def _check_dt(geom: DomainGeometry, dt: float):
    need = default_dt(geom)
    if dt > need * (1.0 + 1e-9):
        raise ParameterError(f"sqrt(dt) must not exceed tooth width / 4: need dt <= {need:.6g}, got {dt:.6g}")


@nb.njit(cache=True, nogil=True)
def _walk(g, eps, ws, hw, h0, n, sd, x, y, stride, X, Y, diag):
    # diag: bounce-limit flags, steps with contact, steps with y < 0
    rec = 0
    for k in range(n):
        if k % stride == 0:
            X[rec] = x
            Y[rec] = y
            rec += 1
        if y < 0.0:
            diag[2] += 1
        px = x + sd * g.standard_normal()
        py = y + sd * g.standard_normal()
        nx, ny, f = _reflect(eps, ws, hw, h0, x, y, px, py, MAX_BOUNCE)
        if nx != px or ny != py:
            diag[1] += 1
        diag[0] += f
        if not _contains(eps, ws + 1e-12, hw + 1e-12, h0 + 1e-12, nx, ny, True):
            diag[0] += 1000000
            nx, ny = x, y
        x, y = nx, ny
    if n % stride == 0:
        X[rec] = x
        Y[rec] = y
    return x, y


@dataclass(frozen=True)
class DomainPath:
    grid: TimeGrid
    x: np.ndarray
    y: np.ndarray
    bounce_flags: int
    contact_steps: int
    spine_steps: int

    @property
    def x_proj(self) -> np.ndarray:
        return self.x

    @property
    def y_proj(self) -> np.ndarray:
        return np.maximum(self.y, 0.0)

    def path(self) -> SamplePath:
        return SamplePath(self.grid, [Point2(a, b) for a, b in zip(self.x, self.y)])

    def projected(self) -> tuple[SamplePath, SamplePath]:
        return SamplePath(self.grid, self.x_proj), SamplePath(self.grid, self.y_proj)


def _prepare(geom, dt, start):
    _check_dt(geom, dt)
    start = start or Point2(0.0, 0.0)
    if not in_closure(geom, start):
        raise ParameterError(f"start point {start} is outside the domain")
    return start


def simulate_domain(
    geom: DomainGeometry, grid: TimeGrid, start: Point2 | None, rng, record_every: int = 1
) -> DomainPath:
    """Euler-Maruyama with unit diffusion and specular folding at the walls."""
    start = _prepare(geom, grid.dt, start)
    stride = int(record_every)
    if stride < 1 or grid.n_steps % stride:
        raise ParameterError("record_every must divide n_steps")
    n_rec = grid.n_steps // stride + 1
    X = np.empty(n_rec)
    Y = np.empty(n_rec)
    diag = np.zeros(3, dtype=np.int64)
    eps, ws, hw, h0 = geom._arrays()
    _walk(_as_generator(rng), eps, ws, hw, h0, grid.n_steps, math.sqrt(grid.dt), start.x, start.y, stride, X, Y, diag)
    if diag[0] >= 1000000:
        raise RuntimeError("reflected point left the domain closure")
    out_grid = TimeGrid(grid.dt * stride, n_rec - 1)
    return DomainPath(out_grid, X, Y, int(diag[0]), int(diag[1]), int(diag[2]))


def simulate_domain_endpoints(
    geom: DomainGeometry,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    start: Point2 | None = None,
    threads: int | None = None,
):
    """Terminal points of independent paths plus pooled diagnostics."""
    start = _prepare(geom, grid.dt, start)
    eps, ws, hw, h0 = geom._arrays()
    n, sd = grid.n_steps, math.sqrt(grid.dt)

    def one(g, _i):
        X = np.empty(2)
        Y = np.empty(2)
        diag = np.zeros(3, dtype=np.int64)
        x, y = _walk(g, eps, ws, hw, h0, n, sd, start.x, start.y, n, X, Y, diag)
        return x, y, diag

    res = map_streams(one, n_paths, master_seed, threads)
    diag = np.sum([r[2] for r in res], axis=0)
    if diag[0] >= 1000000:
        raise RuntimeError("reflected point left the domain closure")
    x = np.array([r[0] for r in res])
    y = np.array([r[1] for r in res])
    return x, y, {"bounce_flags": int(diag[0]), "contact_steps": int(diag[1]), "spine_steps": int(diag[2])}
