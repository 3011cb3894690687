"""Shared types, random streams and estimators.

Local time follows the occupation convention used throughout the package::

    L_t(level) = lim_{b -> 0} (1 / 2b) * int_0^t 1{level < X_s <= level + b} ds

with a strict lower inequality, so time spent exactly at ``level`` (a sticky
boundary) is not counted.  For a reflected Brownian motion on ``[0, inf)`` this
equals the Skorokhod regulator at 0.  Two-sided paths use the symmetric band
``|X_s - level| < b`` with the same ``1 / 2b`` factor, which gives the usual
occupation density.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numba as nb
import numpy as np
from scipy import stats

__all__ = [
    "ParameterError",
    "ContractError",
    "ResourceError",
    "NumericalError",
    "InsufficientDataError",
    "CombParams",
    "TimeGrid",
    "SamplePath",
    "RngStream",
    "SummaryStat",
    "RunManifest",
    "derive_stream",
    "default_band",
    "local_time_estimate",
    "lattice_local_time",
    "msd",
    "ks_two_sample",
    "map_streams",
]

MASK64 = (1 << 64) - 1


class ParameterError(ValueError):
    """An input violates a documented invariant."""


class ContractError(ValueError):
    """An input breaks a structural precondition (e.g. monotonicity)."""


class ResourceError(RuntimeError):
    """A requested run exceeds the step budget."""


class NumericalError(RuntimeError):
    """A numerical solve did not meet its residual tolerance."""


class InsufficientDataError(RuntimeError):
    """Too few events to form the requested statistic."""


def _is_inf(h0: float) -> bool:
    return math.isinf(h0) and h0 > 0


def parse_h0(value: Any) -> float:
    """Accept a positive real or the token ``"inf"``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(value)
        except ValueError as exc:
            raise ParameterError(f"h0 must be a positive real or 'inf', got {value!r}") from exc
    return float(value)


def format_h0(h0: float) -> Any:
    return "inf" if _is_inf(h0) else h0


@dataclass(frozen=True)
class CombParams:
    """Comb geometry and gluing strength.

    ``alpha = 0`` is accepted only with ``degenerate=True``; it switches the
    teeth off and is used as a test mode.
    """

    alpha: float
    h0: float = 1.0
    epsilon: float = 0.1
    scaling_sigma: float = 1.0
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "h0", parse_h0(self.h0))
        for name in ("alpha", "h0", "epsilon", "scaling_sigma"):
            v = float(getattr(self, name))
            if math.isnan(v):
                raise ParameterError(f"{name} must not be NaN")
            object.__setattr__(self, name, v)
        if self.degenerate:
            if self.alpha < 0:
                raise ParameterError("alpha >= 0 required in degenerate mode")
        elif not self.alpha > 0:
            raise ParameterError(f"alpha > 0 required, got {self.alpha}")
        if math.isinf(self.alpha):
            raise ParameterError("alpha must be finite")
        if not self.h0 > 0:
            raise ParameterError(f"h0 > 0 required, got {self.h0}")
        if not (0 < self.epsilon <= 0.5):
            raise ParameterError(f"epsilon in (0, 1/2] required, got {self.epsilon}")
        if not (self.scaling_sigma > 0 and math.isfinite(self.scaling_sigma)):
            raise ParameterError(f"scaling_sigma > 0 required, got {self.scaling_sigma}")

    @property
    def h0_is_inf(self) -> bool:
        return _is_inf(self.h0)

    @property
    def spine_width(self) -> float:
        return self.epsilon ** self.scaling_sigma

    @property
    def tooth_width(self) -> float:
        return self.alpha * self.epsilon ** (1.0 + self.scaling_sigma)

    @property
    def entry_probability(self) -> float:
        """Chance a junction step goes into the tooth."""
        ae = self.alpha * self.epsilon
        return ae / (2.0 + ae)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        dt = float(self.dt)
        if not (dt > 0 and math.isfinite(dt)):
            raise ParameterError(f"dt > 0 required, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps >= 1 required, got {self.n_steps}")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_horizon(cls, t_max: float, dt: float) -> "TimeGrid":
        if not t_max > 0:
            raise ParameterError(f"t_max > 0 required, got {t_max}")
        n = int(round(t_max / dt))
        if n < 1 or abs(n * dt - t_max) > 1e-9 * max(1.0, t_max):
            raise ParameterError(f"t_max={t_max} is not a whole number of steps dt={dt}")
        return cls(dt, n)

    @property
    def t_max(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(self.dt, abs(t)):
            raise ParameterError(f"t={t} is not on the grid (dt={self.dt}, n_steps={self.n_steps})")
        return k


@dataclass(frozen=True)
class SamplePath:
    grid: TimeGrid
    states: Any

    def __post_init__(self):
        if len(self.states) != self.grid.n_steps + 1:
            raise ParameterError(
                f"path has {len(self.states)} states, grid needs {self.grid.n_steps + 1}"
            )

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def values(self) -> np.ndarray:
        return np.asarray(self.states, dtype=float)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by ``(master_seed, stream_id)``.

    The pair is used directly as the 128-bit Philox key, so a stream is a pure
    function of its key and independent of any other stream.
    """

    master_seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.stream_id & MASK64, self.master_seed & MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    return RngStream(int(master_seed) & MASK64, int(stream_id) & MASK64)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ParameterError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class SummaryStat:
    mean: float
    variance: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, samples) -> "SummaryStat":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 1:
            raise ParameterError("summary needs at least one sample")
        var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
        return cls(float(np.mean(x)), var, math.sqrt(var / x.size), int(x.size))

    @classmethod
    def combine(cls, parts: Sequence["SummaryStat"]) -> "SummaryStat":
        """Pooled statistic of disjoint batches (associative)."""
        n = sum(p.n for p in parts)
        mean = sum(p.n * p.mean for p in parts) / n
        ss = sum((p.n - 1) * p.variance + p.n * (p.mean - mean) ** 2 for p in parts)
        var = ss / (n - 1) if n > 1 else 0.0
        return cls(mean, var, math.sqrt(var / n), n)


def default_band(dt: float) -> float:
    return 2.0 * math.sqrt(dt)


@nb.njit(cache=True, nogil=True)
def _band_local_time(v, dt, level, band):
    out = np.empty(v.shape[0])
    out[0] = 0.0
    w = dt / (2.0 * band)
    acc = 0.0
    for k in range(v.shape[0] - 1):
        d = v[k] - level
        if d > 0.0 and d <= band:
            acc += w
        out[k + 1] = acc
    return out


@nb.njit(cache=True, nogil=True)
def _lattice_local_time(v, dt, spacing, band):
    out = np.empty(v.shape[0])
    out[0] = 0.0
    w = dt / (2.0 * band)
    acc = 0.0
    for k in range(v.shape[0] - 1):
        r = v[k] - spacing * np.floor(v[k] / spacing + 0.5)
        if abs(r) < band:
            acc += w
        out[k + 1] = acc
    return out


def _check_band(band: float) -> float:
    band = float(band)
    if not band > 0:
        raise ParameterError(f"band > 0 required, got {band}")
    return band


def local_time_estimate(path: SamplePath, level: float = 0.0, band: float | None = None) -> np.ndarray:
    """Cumulative one-sided band estimate of local time at ``level``.

    Left-endpoint Riemann sum of ``(1/2b) 1{level < X <= level + b}``.
    ``band`` defaults to ``2 sqrt(dt)``.
    """
    band = default_band(path.grid.dt) if band is None else _check_band(band)
    v = np.ascontiguousarray(path.values())
    if not np.all(np.isfinite(v)):
        raise ParameterError("path values must be finite")
    return _band_local_time(v, path.grid.dt, float(level), band)


def lattice_local_time(path: SamplePath, spacing: float, band: float | None = None) -> np.ndarray:
    """Symmetric band estimate of the local time summed over ``spacing * Z``."""
    band = default_band(path.grid.dt) if band is None else _check_band(band)
    if not spacing > 0:
        raise ParameterError(f"spacing > 0 required, got {spacing}")
    if band >= spacing / 2:
        raise ParameterError("band must be below half the lattice spacing")
    v = np.ascontiguousarray(path.values())
    if not np.all(np.isfinite(v)):
        raise ParameterError("path values must be finite")
    return _lattice_local_time(v, path.grid.dt, float(spacing), band)


def msd(paths, t: float, grid: TimeGrid | None = None) -> SummaryStat:
    """Mean squared displacement ``E|X_t - X_0|^2`` over a path collection.

    ``paths`` is a sequence of :class:`SamplePath` on a common grid, or a 2-D
    array (one row per path) together with ``grid``.
    """
    if isinstance(paths, np.ndarray):
        if grid is None:
            raise ParameterError("grid is required for array input")
        arr = paths
    else:
        paths = list(paths)
        if not paths:
            raise ParameterError("msd needs at least two paths")
        grid = paths[0].grid
        if any(p.grid != grid for p in paths):
            raise ParameterError("paths must share one time grid")
        arr = np.array([p.values() for p in paths])
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ParameterError("msd needs at least two paths")
    k = grid.index_of(t)
    return SummaryStat.from_samples((arr[:, k] - arr[:, 0]) ** 2)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ParameterError("both samples must be nonempty")
    with np.errstate(divide="ignore"):
        d = float(stats.ks_2samp(a, b, method="asymp").statistic)
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    return d, float(stats.kstwobign.sf(en * d))


def available_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def map_streams(
    fn: Callable[[np.random.Generator, int], Any],
    n_paths: int,
    master_seed: int,
    threads: int | None = None,
    first_id: int = 0,
) -> list:
    """Apply ``fn(generator, path_index)`` to every path, one stream per path.

    Results come back in path order whatever the thread count, so output is a
    pure function of ``master_seed``.
    """
    threads = available_threads() if threads is None else max(1, int(threads))
    ids = range(first_id, first_id + n_paths)

    def run(chunk: Iterable[int]):
        return [fn(derive_stream(master_seed, i).generator(), i) for i in chunk]

    if threads == 1 or n_paths < 2:
        return run(ids)
    size = -(-n_paths // threads)
    chunks = [ids[i : i + size] for i in range(0, n_paths, size)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(run, chunks))
    return [r for part in parts for r in part]


@dataclass
class RunManifest:
    command: str
    params: CombParams
    grid: TimeGrid
    master_seed: int
    n_paths: int
    version: str
    counters: dict | None = field(default=None)
    options: dict | None = field(default=None)

    def to_dict(self) -> dict:
        d = {
            "command": self.command,
            "alpha": self.params.alpha,
            "h0": format_h0(self.params.h0),
            "epsilon": self.params.epsilon,
            "scaling_sigma": self.params.scaling_sigma,
            "dt": self.grid.dt,
            "n_steps": self.grid.n_steps,
            "n_paths": self.n_paths,
            "master_seed": self.master_seed,
            "version": self.version,
        }
        if self.params.degenerate:
            d["degenerate"] = True
        if self.counters is not None:
            d["counters"] = self.counters
        if self.options is not None:
            d["options"] = self.options
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        params = CombParams(
            alpha=d["alpha"],
            h0=parse_h0(d["h0"]),
            epsilon=d["epsilon"],
            scaling_sigma=d["scaling_sigma"],
            degenerate=bool(d.get("degenerate", False)),
        )
        return cls(
            command=d["command"],
            params=params,
            grid=TimeGrid(d["dt"], d["n_steps"]),
            master_seed=int(d["master_seed"]),
            n_paths=int(d["n_paths"]),
            version=d["version"],
            counters=d.get("counters"),
            options=d.get("options"),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))
