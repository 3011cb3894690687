"""Sticky limit process built by time change.

Y is a reflected Brownian motion B̄ run on the clock T, the inverse of
phi(s) = s + (2/alpha) L̂_s, where L̂ is the band local time of B̄ at 0.
X is an independent Brownian motion W̄ read at (2/alpha) L_t.  W̄ lives on its
own grid (spacing dt in local-time units) and is extended lazily as L grows;
values between nodes are Brownian-bridge draws, so a single W̄ path serves
every t and each value read from it has the exact Brownian law.

All per-path randomness comes from one counter-based stream; B̄ and W̄
increments are drawn from it in the order the sweep needs them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import optimize

from .core import (
    CombParams,
    ParameterError,
    ContractError,
    SamplePath,
    SummaryStat,
    TimeGrid,
    RngStream,
    _as_generator,
    default_band,
    local_time_estimate,
    map_streams,
)

__all__ = [
    "LimitPath",
    "simulate_reflected_bm",
    "build_sticky_time_change",
    "simulate_limit_process",
    "simulate_limit_endpoints",
    "sample_occupation_time",
    "occupation_samples",
    "generator_catalogue",
    "generator_residual",
    "catalogue_function",
    "trig_beta",
    "CATALOGUE",
]


@dataclass(frozen=True)
class LimitPath:
    grid: TimeGrid
    X: np.ndarray
    Y: np.ndarray
    L: np.ndarray
    T: np.ndarray
    band: float
    bbar: np.ndarray  # reflected path on its own clock, step grid.dt / substeps
    substeps: int = 1

    def x_path(self) -> SamplePath:
        return SamplePath(self.grid, self.X)

    def y_path(self) -> SamplePath:
        return SamplePath(self.grid, self.Y)


@nb.njit(cache=True, nogil=True, inline="always")
def _fold(y, h0):
    y = abs(y)
    if y > h0:
        y = y % (2.0 * h0)
        if y > h0:
            y = 2.0 * h0 - y
    return y


@nb.njit(cache=True, nogil=True)
def _reflected_kernel(g, h0, dt, n, y0):
    out = np.empty(n + 1)
    out[0] = y0
    sd = math.sqrt(dt)
    for k in range(n):
        out[k + 1] = _fold(out[k] + sd * g.standard_normal(), h0)
    return out


def simulate_reflected_bm(h0: float, grid: TimeGrid, rng, y0: float = 0.0, band: float | None = None):
    """Reflected Brownian motion on ``[0, h0]`` by folding Euler increments.

    Folding a Gaussian increment reproduces the reflected transition law
    exactly at grid times.  Returns the path and its band local time at 0.
    """
    h0 = float(h0)
    if not h0 > 0:
        raise ParameterError(f"h0 > 0 required, got {h0}")
    if not (0 <= y0 <= h0):
        raise ParameterError(f"start must lie in [0, h0], got {y0}")
    g = _as_generator(rng)
    v = _reflected_kernel(g, h0, grid.dt, grid.n_steps, float(y0))
    path = SamplePath(grid, v)
    return path, local_time_estimate(path, 0.0, band)


@nb.njit(cache=True, nogil=True)
def _inverse_sweep(phi, dt, n_out):
    # phi strictly increasing on the grid k*dt with phi[0] = 0; linear in between.
    T = np.empty(n_out + 1)
    k = 0
    K = phi.shape[0] - 1
    for j in range(n_out + 1):
        t = j * dt
        while k < K - 1 and phi[k + 1] < t:
            k += 1
        th = (t - phi[k]) / (phi[k + 1] - phi[k])
        if th > 1.0:
            th = 1.0
        T[j] = (k + th) * dt
    return T


def build_sticky_time_change(Lbar, alpha: float, dt: float) -> np.ndarray:
    """Inverse of ``phi(s) = s + (2/alpha) Lbar_s`` on the grid ``j*dt``.

    ``Lbar`` is sampled at ``k*dt`` and interpolated linearly, so phi is
    continuous with slope at least 1 and the inverse has no jumps and never
    advances more than ``dt`` per step.
    """
    Lbar = np.asarray(Lbar, dtype=float)
    if not alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {alpha}")
    if Lbar.ndim != 1 or Lbar.size < 2:
        raise ParameterError("Lbar needs at least two grid values")
    if Lbar[0] != 0.0:
        raise ContractError("Lbar must start at 0")
    if np.any(np.diff(Lbar) < 0):
        raise ContractError("Lbar must be nondecreasing")
    phi = dt * np.arange(Lbar.size) + (2.0 / alpha) * Lbar
    return _inverse_sweep(phi, float(dt), Lbar.size - 1)


@nb.njit(cache=True, nogil=True, inline="always")
def _bridge_increment(g, a, b, h):
    # local time at 0 gathered by reflected BM over a step of length h from a
    # to b: P(dL > l) = 2 exp(-(l+a+b)^2/2h) / (exp(-(a-b)^2/2h) + exp(-(a+b)^2/2h))
    s = a + b
    if s * s > 80.0 * h:
        return 0.0
    e = math.exp(-s * s / (2.0 * h))
    d = math.exp(-(a - b) * (a - b) / (2.0 * h)) + e
    u = g.random()
    if u * d >= 2.0 * e:
        return 0.0
    return max(math.sqrt(-2.0 * h * math.log(0.5 * u * d)) - s, 0.0)


@nb.njit(cache=True, nogil=True)
def _limit_kernel(g, alpha, h0, dt, n, r, band, x0, y0, X, Y, L, T, bbar):
    # reflected path on its own clock with step h = dt / r, interval [k*h, (k+1)*h];
    # W̄ on the grid m*dt in local-time units, refined by bridge draws at the
    # points actually visited (w0 holds W̄ at the last visited point up).
    # band <= 0 selects bridge sampling of the local time instead of the band count.
    c = 2.0 / alpha
    h = dt / r
    sh = math.sqrt(h)
    sd = math.sqrt(dt)
    w = h / (2.0 * band) if band > 0.0 else 0.0
    rec = bbar.shape[0] > 0
    k = 0
    b0 = y0
    b1 = _fold(b0 + sh * g.standard_normal(), h0)
    if rec:
        bbar[0] = b0
        bbar[1] = b1
    bridge = band <= 0.0
    l0 = 0.0
    if bridge:
        l1 = _bridge_increment(g, b0, b1, h)
    else:
        l1 = w if (b0 > 0.0 and b0 <= band) else 0.0
    p0 = 0.0
    p1 = h + c * l1
    m = 0
    up = 0.0
    w0 = x0
    w1 = x0 + sd * g.standard_normal()
    for j in range(n + 1):
        t = j * dt
        while p1 < t:
            k += 1
            b0 = b1
            b1 = _fold(b0 + sh * g.standard_normal(), h0)
            if rec:
                bbar[k + 1] = b1
            l0 = l1
            if bridge:
                l1 = l0 + _bridge_increment(g, b0, b1, h)
            elif b0 > 0.0 and b0 <= band:
                l1 = l0 + w
            p0 = p1
            p1 = (k + 1) * h + c * l1
        th = (t - p0) / (p1 - p0)
        if th < 0.0:
            th = 0.0
        elif th > 1.0:
            th = 1.0
        T[j] = (k + th) * h
        Y[j] = b0 + th * (b1 - b0)
        lt = l0 + th * (l1 - l0)
        L[j] = lt
        u = c * lt
        while u > (m + 1) * dt:
            m += 1
            up = m * dt
            w0 = w1
            w1 = w0 + sd * g.standard_normal()
        if u > up:
            # Brownian bridge from the last evaluated point to the next node
            right = (m + 1) * dt
            q = (u - up) / (right - up)
            w0 = w0 + q * (w1 - w0) + math.sqrt(q * (right - u)) * g.standard_normal()
            up = u
        X[j] = w0
    return k + 2


def _check_limit_params(params: CombParams):
    if not params.alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {params.alpha}")


def _start(params: CombParams, start):
    x0, y0 = (0.0, 0.0) if start is None else (float(start[0]), float(start[1]))
    if not (0.0 <= y0 <= params.h0):
        raise ParameterError(f"start height must lie in [0, h0], got {y0}")
    return x0, y0


LOCAL_TIME_RULES = ("band", "bridge")


def _inner(grid: TimeGrid, substeps: int, band: float | None, local_time: str = "band"):
    r = int(substeps)
    if r != substeps or r < 1:
        raise ParameterError(f"substeps >= 1 required, got {substeps}")
    if local_time not in LOCAL_TIME_RULES:
        raise ParameterError(f"local_time must be one of {LOCAL_TIME_RULES}, got {local_time!r}")
    if local_time == "bridge":
        if band is not None:
            raise ParameterError("band applies only to the band local-time rule")
        return r, -1.0
    band = default_band(grid.dt / r) if band is None else float(band)
    if not band > 0:
        raise ParameterError(f"band > 0 required, got {band}")
    return r, band


def simulate_limit_process(
    params: CombParams,
    grid: TimeGrid,
    rng,
    start=None,
    substeps: int = 1,
    band: float | None = None,
    local_time: str = "band",
) -> LimitPath:
    """One path of the limit process ``Z = (X, Y)`` started at ``start``.

    The reflected path and its local time use step ``grid.dt / substeps`` and,
    by default, band ``2 sqrt(grid.dt / substeps)``.  Refining pays off at
    short horizons, where the band would otherwise be comparable to the
    reflected path's own clock.

    ``local_time="bridge"`` replaces the band count by a draw of each step's
    local-time increment from its exact law given the step's endpoints.  This
    removes the ``O(sqrt(h))`` bias of the band rule in expectations; the
    returned ``band`` is then ``-1``.
    """
    _check_limit_params(params)
    x0, y0 = _start(params, start)
    r, band = _inner(grid, substeps, band, local_time)
    g = _as_generator(rng)
    n = grid.n_steps
    X, Y, L, T = (np.empty(n + 1) for _ in range(4))
    bb = np.empty(n * r + 2)
    used = _limit_kernel(g, params.alpha, params.h0, grid.dt, n, r, band, x0, y0, X, Y, L, T, bb)
    return LimitPath(grid, X, Y, L, T, band, bb[:used].copy(), r)


def _endpoint_fn(params, grid, r, band, x0, y0):
    n = grid.n_steps
    a, h0, dt = params.alpha, params.h0, grid.dt
    empty = np.empty(0)

    def one(g, _i):
        X, Y, L, T = (np.empty(n + 1) for _ in range(4))
        _limit_kernel(g, a, h0, dt, n, r, band, x0, y0, X, Y, L, T, empty)
        return X, Y

    return one


def simulate_limit_endpoints(
    params: CombParams,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    start=None,
    threads: int | None = None,
    substeps: int = 1,
    band: float | None = None,
    first_id: int = 0,
    local_time: str = "band",
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal values ``(X_t, Y_t)`` of ``n_paths`` independent paths."""
    _check_limit_params(params)
    x0, y0 = _start(params, start)
    r, band = _inner(grid, substeps, band, local_time)
    path = _endpoint_fn(params, grid, r, band, x0, y0)
    n = grid.n_steps

    def one(g, i):
        X, Y = path(g, i)
        return X[n], Y[n]

    out = np.array(map_streams(one, n_paths, master_seed, threads, first_id))
    return out[:, 0], out[:, 1]


def sample_occupation_time(alpha: float, t: float, rng, size: int | None = None):
    """Time ``(2|N|/alpha) sqrt(t + N^2/alpha^2) - 2 N^2/alpha^2`` spent on the spine.

    Infinite teeth only.  Evaluated in the cancellation-free form
    ``2 a t / (sqrt(t + a^2) + a)`` with ``a = |N|/alpha``.
    """
    if not alpha > 0:
        raise ParameterError(f"alpha > 0 required, got {alpha}")
    if not t > 0:
        raise ParameterError(f"t > 0 required, got {t}")
    g = _as_generator(rng)
    nrm = g.standard_normal(size)
    return occupation_from_normal(nrm, alpha, t)


def occupation_from_normal(nrm, alpha: float, t: float):
    a = np.abs(np.asarray(nrm, dtype=float)) / alpha
    val = 2.0 * a * t / (np.sqrt(t + a * a) + a)
    if not np.all((val >= 0.0) & (val <= t)):
        raise ContractError("occupation sample left [0, t]")
    return float(val) if np.ndim(val) == 0 else val


def occupation_samples(alpha: float, t: float, n_paths: int, master_seed: int, threads: int | None = None):
    """One draw per path stream, stream id = path index."""
    res = map_streams(lambda g, _i: g.standard_normal(), n_paths, master_seed, threads)
    return occupation_from_normal(np.array(res), alpha, t)


# --- generator test functions ---------------------------------------------------

CATALOGUE = ("constant", "quadratic", "trig")


def trig_beta(alpha: float, h0: float) -> float:
    """Root of ``alpha beta tan(beta h0) = 1 - beta^2`` in ``(0, pi / 2h0)``."""

    def c(b):
        return alpha * b * math.tan(b * h0) - (1.0 - b * b)

    hi = math.pi / (2.0 * h0) * (1.0 - 1e-12)
    return optimize.brentq(c, 1e-14, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def generator_catalogue(params: CombParams) -> dict:
    """Coefficients of the built-in test functions for ``params``.

    quadratic: ``x^2 + a y^2 + b y`` with ``a = 1/(1 + alpha h0)``, ``b = -2 a h0``.
    trig: ``cos(x) cos(beta (y - h0))`` with ``beta`` from :func:`trig_beta`.
    Both satisfy ``f_y(x, h0) = 0`` and ``f_xx + alpha f_y = f_yy`` at ``y = 0``.
    """
    out = {"constant": {"value": 1.0}}
    if not params.h0_is_inf:
        a = 1.0 / (1.0 + params.alpha * params.h0)
        out["quadratic"] = {"a": a, "b": -2.0 * a * params.h0, "Af": a}
        out["trig"] = {"beta": trig_beta(params.alpha, params.h0)}
    return out


def catalogue_function(f_id: str, params: CombParams):
    """``(f, Af)`` as numpy callables of ``(x, y)``."""
    cat = generator_catalogue(params)
    if f_id not in CATALOGUE:
        raise ParameterError(f"unknown test function {f_id!r}; choose from {CATALOGUE}")
    if f_id not in cat:
        raise ParameterError(f"{f_id!r} needs a finite h0")
    if f_id == "constant":
        return (lambda x, y: np.ones_like(np.asarray(x, float) + y)), (lambda x, y: np.zeros_like(np.asarray(x, float) + y))
    if f_id == "quadratic":
        a, b = cat["quadratic"]["a"], cat["quadratic"]["b"]
        return (lambda x, y: x * x + a * y * y + b * y), (lambda x, y: np.full_like(np.asarray(x, float) + y, a))
    beta, h0 = cat["trig"]["beta"], params.h0
    f = lambda x, y: np.cos(x) * np.cos(beta * (y - h0))  # noqa: E731
    return f, (lambda x, y: -0.5 * beta * beta * f(x, y))


@nb.njit(cache=True, nogil=True)
def _f_eval(code, p0, p1, p2, x, y):
    if code == 0:
        return 1.0
    if code == 1:
        return x * x + p0 * y * y + p1 * y
    return math.cos(x) * math.cos(p0 * (y - p2))


@nb.njit(cache=True, nogil=True)
def _af_eval(code, p0, p1, p2, x, y):
    if code == 0:
        return 0.0
    if code == 1:
        return p0
    return -0.5 * p0 * p0 * math.cos(x) * math.cos(p0 * (y - p2))


@nb.njit(cache=True, nogil=True)
def _residual(code, p0, p1, p2, X, Y, dt):
    n = X.shape[0] - 1
    acc = 0.5 * (_af_eval(code, p0, p1, p2, X[0], Y[0]) + _af_eval(code, p0, p1, p2, X[n], Y[n]))
    for j in range(1, n):
        acc += _af_eval(code, p0, p1, p2, X[j], Y[j])
    return _f_eval(code, p0, p1, p2, X[n], Y[n]) - _f_eval(code, p0, p1, p2, X[0], Y[0]) - acc * dt


def generator_residual(
    f_id: str,
    params: CombParams,
    t: float,
    n_paths: int,
    rng,
    dt: float = 1e-4,
    substeps: int = 1,
    threads: int | None = None,
    local_time: str = "band",
) -> SummaryStat:
    """Monte Carlo mean of ``f(Z_t) - f(Z_0) - int_0^t Af(Z_s) ds`` from ``(0, 0)``.

    ``rng`` is an :class:`RngStream` (path ``i`` uses stream id
    ``rng.stream_id + i`` under the same master seed) or an integer seed.
    The time integral uses the trapezoid rule on the path grid.
    """
    _check_limit_params(params)
    catalogue_function(f_id, params)  # validates the selector
    if isinstance(rng, RngStream):
        seed, first = rng.master_seed, rng.stream_id
    else:
        seed, first = int(rng), 0
    if n_paths < 2:
        raise ParameterError("n_paths >= 2 required")
    cat = generator_catalogue(params)
    if f_id == "constant":
        code, p = 0, (0.0, 0.0, 0.0)
    elif f_id == "quadratic":
        code, p = 1, (cat["quadratic"]["a"], cat["quadratic"]["b"], 0.0)
    else:
        code, p = 2, (cat["trig"]["beta"], 0.0, params.h0)
    grid = TimeGrid.from_horizon(t, dt)
    r, band = _inner(grid, substeps, None, local_time)
    path = _endpoint_fn(params, grid, r, band, 0.0, 0.0)

    def one(g, i):
        X, Y = path(g, i)
        return _residual(code, p[0], p[1], p[2], X, Y, dt)

    return SummaryStat.from_samples(map_streams(one, n_paths, seed, threads, first))
