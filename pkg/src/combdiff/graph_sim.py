"""Nearest-neighbour walk on the comb graph.

Sites are integer pairs ``(i, j)``: ``j == 0`` is the spine point ``x = i*delta``,
``j > 0`` is height ``j*delta`` in the tooth hanging off the junction ``i`` (which
must be a multiple of ``m = epsilon/delta``).  Each step takes ``delta**2`` of
model time.  From a junction the walk goes up with probability
``alpha*eps/(2 + alpha*eps)`` and left/right with ``1/(2 + alpha*eps)`` each; a
tooth top reflects downward.

Discrete local times use one lattice spacing as band:

* ``lx = (delta/2) * #steps spent on spine sites next to a junction``
  (a site between two junctions counts twice when ``m == 2``);
* ``ly = (delta/2) * #steps spent at tooth height ``delta``.

Reversibility of the walk gives ``ly / lx -> alpha*eps/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import (
    CombParams,
    ParameterError,
    ResourceError,
    SamplePath,
    TimeGrid,
    _as_generator,
    map_streams,
)

__all__ = [
    "GraphState",
    "WalkCounters",
    "GraphRun",
    "lattice_ratio",
    "step_graph_walk",
    "simulate_graph",
    "simulate_graph_endpoints",
    "graph_counters",
]

MAX_STEPS = 200_000_000


@dataclass(frozen=True)
class GraphState:
    """Spine point ``(x,)`` when ``tooth is None``, else ``(tooth, y)`` with ``y`` in ``(0, h0]``."""

    x: float
    y: float = 0.0
    tooth: int | None = None

    @property
    def branch(self) -> str:
        return "spine" if self.tooth is None else "tooth"

    @classmethod
    def spine(cls, x: float) -> "GraphState":
        return cls(float(x), 0.0, None)

    @classmethod
    def in_tooth(cls, k: int, y: float, epsilon: float) -> "GraphState":
        return cls(k * epsilon, float(y), int(k))


@dataclass
class WalkCounters:
    junction_visits: int = 0
    tooth_entries: int = 0
    lx: float = 0.0
    ly: float = 0.0

    def __add__(self, other: "WalkCounters") -> "WalkCounters":
        return WalkCounters(
            self.junction_visits + other.junction_visits,
            self.tooth_entries + other.tooth_entries,
            self.lx + other.lx,
            self.ly + other.ly,
        )

    def as_dict(self) -> dict:
        return {
            "junction_visits": self.junction_visits,
            "tooth_entries": self.tooth_entries,
            "lx": self.lx,
            "ly": self.ly,
        }


def lattice_ratio(params: CombParams, delta: float) -> tuple[int, int]:
    """``(m, top)``: sites per spine cell and tooth height in sites (``-1`` if infinite)."""
    if not delta > 0:
        raise ParameterError(f"delta > 0 required, got {delta}")
    m = int(round(params.epsilon / delta))
    if m < 2 or abs(m * delta - params.epsilon) > 1e-9 * params.epsilon:
        raise ParameterError(f"delta must divide epsilon into m >= 2 steps (eps={params.epsilon}, delta={delta})")
    if params.h0_is_inf:
        return m, -1
    top = int(round(params.h0 / delta))
    if top < 1 or abs(top * delta - params.h0) > 1e-9 * params.h0:
        raise ParameterError(f"delta must divide h0 (h0={params.h0}, delta={delta})")
    return m, top


@nb.njit(cache=True, nogil=True, inline="always")
def _step(i, j, u, m, top, pe):
    if j == 0:
        if i % m == 0:
            if u < pe:
                return i, 1, 1
            if u < pe + 0.5 * (1.0 - pe):
                return i - 1, 0, 0
            return i + 1, 0, 0
        if u < 0.5:
            return i - 1, 0, 0
        return i + 1, 0, 0
    if j == top:
        return i, j - 1, 0
    if u < 0.5:
        return i, j - 1, 0
    return i, j + 1, 0


@nb.njit(cache=True, nogil=True)
def _walk(g, i, j, n, m, top, pe, stride, I, J, cnt):
    # cnt: junction_visits, tooth_entries, spine-neighbour steps, height-1 steps
    rec = 0
    for s in range(n):
        if s % stride == 0:
            I[rec] = i
            J[rec] = j
            rec += 1
        if j == 0:
            r = i % m
            if r == 0:
                cnt[0] += 1
            else:
                if r == 1:
                    cnt[2] += 1
                if r == m - 1:
                    cnt[2] += 1
        elif j == 1:
            cnt[3] += 1
        i, j, up = _step(i, j, g.random(), m, top, pe)
        cnt[1] += up
    if n % stride == 0:
        I[rec] = i
        J[rec] = j
    return i, j


def _entry_probability(params: CombParams) -> float:
    return params.entry_probability if params.alpha > 0 else 0.0


def _to_sites(state: GraphState, params: CombParams, delta: float, m: int, top: int):
    if state.tooth is None:
        i = int(round(state.x / delta))
        if abs(i * delta - state.x) > 0.5 * delta:
            raise ParameterError("spine state is off the lattice")
        return i, 0
    j = int(round(state.y / delta))
    if j < 1 or (top > 0 and j > top):
        raise ParameterError(f"tooth height must lie in (0, h0], got {state.y}")
    return state.tooth * m, j


def _from_sites(i: int, j: int, delta: float, m: int) -> GraphState:
    if j == 0:
        return GraphState.spine(i * delta)
    return GraphState(i * delta, j * delta, i // m)


def step_graph_walk(state: GraphState, params: CombParams, delta: float, rng) -> GraphState:
    """One step of the walk; advances model time by ``delta**2``."""
    m, top = lattice_ratio(params, delta)
    i, j = _to_sites(state, params, delta, m, top)
    u = _as_generator(rng).random()
    i, j, _ = _step(i, j, u, m, top, _entry_probability(params))
    return _from_sites(i, j, delta, m)


@dataclass(frozen=True)
class GraphRun:
    grid: TimeGrid
    sites: np.ndarray  # (n_rec, 2) integer lattice coordinates
    delta: float
    m: int
    counters: WalkCounters

    @property
    def x(self) -> np.ndarray:
        return self.sites[:, 0] * self.delta

    @property
    def y(self) -> np.ndarray:
        return self.sites[:, 1] * self.delta

    @property
    def branch(self) -> np.ndarray:
        return np.where(self.sites[:, 1] > 0, "tooth", "spine")

    def state(self, k: int) -> GraphState:
        i, j = self.sites[k]
        return _from_sites(int(i), int(j), self.delta, self.m)

    def path(self) -> SamplePath:
        return SamplePath(self.grid, [self.state(k) for k in range(len(self.sites))])

    def projected(self) -> tuple[SamplePath, SamplePath]:
        return SamplePath(self.grid, self.x), SamplePath(self.grid, self.y)


def _n_steps(t_max: float, delta: float) -> int:
    n = int(round(t_max / delta**2))
    if n < 1:
        raise ParameterError("t_max shorter than one step")
    if n > MAX_STEPS:
        raise ResourceError(f"t_max/delta^2 = {n} steps exceeds the budget of {MAX_STEPS}")
    return n


def simulate_graph(
    params: CombParams,
    delta: float | None,
    t_max: float,
    rng,
    start: GraphState | None = None,
    record_every: int = 1,
) -> GraphRun:
    """Run the walk for ``t_max / delta**2`` steps from ``start`` (origin junction by default).

    ``record_every`` thins the stored path (the counters always see every step).
    """
    delta = params.epsilon / 8 if delta is None else float(delta)
    m, top = lattice_ratio(params, delta)
    n = _n_steps(t_max, delta)
    stride = int(record_every)
    if stride < 1 or n % stride:
        raise ParameterError("record_every must divide the number of steps")
    i0, j0 = _to_sites(start or GraphState.spine(0.0), params, delta, m, top)
    n_rec = n // stride + 1
    I = np.empty(n_rec, dtype=np.int64)
    J = np.empty(n_rec, dtype=np.int64)
    cnt = np.zeros(4, dtype=np.int64)
    _walk(_as_generator(rng), i0, j0, n, m, top, _entry_probability(params), stride, I, J, cnt)
    counters = WalkCounters(int(cnt[0]), int(cnt[1]), 0.5 * delta * cnt[2], 0.5 * delta * cnt[3])
    grid = TimeGrid(delta**2 * stride, n_rec - 1)
    return GraphRun(grid, np.column_stack([I, J]), delta, m, counters)


def simulate_graph_endpoints(
    params: CombParams,
    delta: float | None,
    t_max: float,
    n_paths: int,
    master_seed: int,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, WalkCounters]:
    """Terminal ``(X, Y)`` of independent walks plus pooled counters."""
    delta = params.epsilon / 8 if delta is None else float(delta)
    m, top = lattice_ratio(params, delta)
    n = _n_steps(t_max, delta)
    pe = _entry_probability(params)

    def one(g, _i):
        I = np.empty(2, dtype=np.int64)
        J = np.empty(2, dtype=np.int64)
        cnt = np.zeros(4, dtype=np.int64)
        i, j = _walk(g, 0, 0, n, m, top, pe, n, I, J, cnt)
        return i, j, cnt

    res = map_streams(one, n_paths, master_seed, threads)
    x = np.array([r[0] for r in res], dtype=float) * delta
    y = np.array([r[1] for r in res], dtype=float) * delta
    c = np.sum([r[2] for r in res], axis=0)
    return x, y, WalkCounters(int(c[0]), int(c[1]), 0.5 * delta * c[2], 0.5 * delta * c[3])


def graph_counters(params: CombParams, delta: float | None, t_max: float, n_paths: int, master_seed: int, threads=None):
    """Pooled counters over ``n_paths`` independent runs."""
    return simulate_graph_endpoints(params, delta, t_max, n_paths, master_seed, threads)[2]
