"""Executable module invariants.

Each ``check_*`` function takes concrete inputs and raises ``AssertionError``
when the invariant fails.  The test-suite drives them with generated inputs;
:func:`run_sweep` drives them from a seeded generator for the ``verify``
command.
"""

from __future__ import annotations

import math

import numpy as np

from . import domain_sim, glue, graph_sim, limit_process, pde
from .core import (
    CombParams,
    SamplePath,
    TimeGrid,
    default_band,
    derive_stream,
    ks_two_sample,
    local_time_estimate,
    msd,
)

# --- core -----------------------------------------------------------------------


def check_local_time_monotone(values, dt: float, level: float, band: float):
    L = local_time_estimate(SamplePath(TimeGrid(dt, len(values) - 1), np.asarray(values, float)), level, band)
    assert L[0] == 0.0, "local time must start at 0"
    assert np.all(np.diff(L) >= 0), "local time must be nondecreasing"


def check_msd_translation(paths, dt: float, shift: float, k: int):
    paths = np.asarray(paths, float)
    grid = TimeGrid(dt, paths.shape[1] - 1)
    t = k * dt
    a = msd(paths, t, grid).mean
    # msd measures displacement from the start, so a common shift drops out
    b = msd(paths + shift, t, grid).mean
    assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12 * (1 + abs(shift)) ** 2), (a, b)


def check_stream_determinism(seed: int, stream_id: int, n: int = 16):
    a = derive_stream(seed, stream_id).generator().standard_normal(n)
    b = derive_stream(seed, stream_id).generator().standard_normal(n)
    assert np.array_equal(a, b), "equal stream inputs gave different draws"


def check_ks_symmetry(a, b):
    assert ks_two_sample(a, a)[0] == 0.0
    d1 = ks_two_sample(a, b)[0]
    d2 = ks_two_sample(b, a)[0]
    assert d1 == d2, (d1, d2)


# --- limit_process ---------------------------------------------------------------


def check_limit_identities(alpha: float, h0: float, seed: int, dt: float, n: int, local_time: str = "band"):
    p = CombParams(alpha, h0)
    path = limit_process.simulate_limit_process(p, TimeGrid(dt, n), derive_stream(seed, 0), local_time=local_time)
    t = dt * np.arange(n + 1)
    gap = np.max(np.abs(path.T + (2.0 / alpha) * path.L - t))
    assert gap <= dt, f"T + (2/alpha) L deviates from t by {gap}"
    flat = np.diff(path.L) == 0
    assert np.all(np.diff(path.X)[flat] == 0), "X moved while L was constant"
    assert np.all((path.Y >= 0) & (path.Y <= h0)), "Y left [0, h0]"


def check_occupation_bounds(alpha: float, t: float, normals):
    v = limit_process.occupation_from_normal(np.asarray(normals, float), alpha, t)
    assert np.all((v >= 0) & (v <= t)), "occupation time outside [0, t]"


def check_inverse_round_trip(increments, alpha: float, dt: float):
    Lbar = np.concatenate([[0.0], np.cumsum(np.asarray(increments, float))])
    T = limit_process.build_sticky_time_change(Lbar, alpha, dt)
    phi = dt * np.arange(Lbar.size) + (2.0 / alpha) * Lbar
    s = dt * np.arange(Lbar.size)
    # brute force: scan for the segment containing t and solve the linear piece
    ref = np.empty_like(T)
    for j in range(T.size):
        tj = j * dt
        k = 0
        while k < phi.size - 2 and phi[k + 1] < tj:
            k += 1
        th = min(max((tj - phi[k]) / (phi[k + 1] - phi[k]), 0.0), 1.0)
        ref[j] = s[k] + th * dt
    assert np.allclose(T, ref, rtol=0, atol=1e-12 * max(1.0, s[-1])), np.max(np.abs(T - ref))
    assert np.all(np.diff(T) >= -1e-15), "inverse must be nondecreasing"


def check_large_alpha(seed: int, dt: float = 1e-3, n: int = 500, alpha: float = 1e4, tol: float = 0.05):
    p = CombParams(alpha, 1.0)
    path = limit_process.simulate_limit_process(p, TimeGrid(dt, n), derive_stream(seed, 0))
    bbar = path.bbar[: n + 1]
    gap = np.max(np.abs(path.Y[: bbar.size] - bbar))
    assert gap < tol, f"sup |Y - B| = {gap} at alpha = {alpha}"


# --- graph_sim -------------------------------------------------------------------


def check_graph_run(alpha: float, h0: float, epsilon: float, m: int, seed: int, t_max: float):
    p = CombParams(alpha, h0, epsilon)
    delta = epsilon / m
    run = graph_sim.simulate_graph(p, delta, t_max, derive_stream(seed, 0))
    i, j = run.sites[:, 0], run.sites[:, 1]
    _, top = graph_sim.lattice_ratio(p, delta)
    assert np.all(j >= 0)
    if top > 0:
        assert np.all(j <= top), "walk climbed above the tooth top"
    assert np.all(i[j > 0] % m == 0), "tooth site off a junction"
    assert np.all(np.abs(np.diff(i)) + np.abs(np.diff(j)) == 1), "non-neighbour move"
    half = graph_sim.simulate_graph(p, delta, t_max / 2, derive_stream(seed, 0))
    c0, c1 = half.counters, run.counters
    assert c0.lx <= c1.lx and c0.ly <= c1.ly, "counters decreased"
    assert c0.junction_visits <= c1.junction_visits and c0.tooth_entries <= c1.tooth_entries


# --- domain_sim ------------------------------------------------------------------


def check_domain_confinement(alpha: float, h0: float, epsilon: float, sigma: float, seed: int, n: int):
    geom = domain_sim.DomainGeometry(CombParams(alpha, h0, epsilon, sigma))
    dt = domain_sim.default_dt(geom)
    path = domain_sim.simulate_domain(geom, TimeGrid(dt, n), None, derive_stream(seed, 0))
    for x, y in zip(path.x, path.y):
        assert domain_sim.in_closure(geom, domain_sim.Point2(x, y)), f"left the closure at {(x, y)}"


def check_interior_step(alpha: float, h0: float, epsilon: float, u, v, w, z):
    """A move between two points of one convex piece comes back bitwise unchanged."""
    geom = domain_sim.DomainGeometry(CombParams(alpha, h0, epsilon))
    ws, hw = geom.spine_width, geom.half_width
    if u < 0.5:
        # both points in the open spine strip
        a = domain_sim.Point2((v - 0.5) * 4 * epsilon, -ws * (0.01 + 0.98 * w))
        b = domain_sim.Point2(a.x + (z - 0.5) * epsilon, -ws * (0.01 + 0.98 * z))
    else:
        top = (h0 if math.isfinite(h0) else 1.0) * 0.98
        c = epsilon * round((v - 0.5) * 4)
        a = domain_sim.Point2(c + hw * 0.98 * (2 * w - 1), top * (0.01 + 0.98 * z))
        b = domain_sim.Point2(c + hw * 0.98 * (1 - 2 * z), top * (0.01 + 0.98 * w))
    out, flagged = domain_sim.reflect_step(geom, a, b)
    assert not flagged
    assert out.x == b.x and out.y == b.y, f"interior step altered: {b} -> {out}"


# --- glue ------------------------------------------------------------------------


def _visited_near(values, lo, hi, target_fn, band):
    # left endpoints of every grid segment touching [lo, hi]; the band local
    # time of a segment is read at its left endpoint, and a clock parked on a
    # grid point still lies in the closed support of the segment before it
    k0 = max(int(math.ceil(lo - 1e-9)) - 1, 0)
    k1 = int(math.floor(hi + 1e-9))
    seg = values[k0 : k1 + 1]
    return bool(np.any(target_fn(seg) <= band))


def check_complementary_freezing(alpha: float, h0: float, epsilon: float, seed: int, n: int, dt: float):
    p = CombParams(alpha, h0, epsilon)
    grid = TimeGrid(dt, n)
    g = derive_stream(seed, 0).generator()
    xbar = glue.brownian_path(grid, g)
    ybar = SamplePath(grid, limit_process._reflected_kernel(g, h0, dt, n, 0.0))
    gp = glue.glue_time_changes(xbar, ybar, p)
    band = default_band(dt)
    xv, yv = xbar.values(), ybar.values()
    assert np.allclose(gp.psi_x + gp.psi_y, grid.times, rtol=0, atol=1e-12 * max(1.0, grid.t_max))

    def dist_lattice(v):
        return np.abs(v - epsilon * np.round(v / epsilon))

    sx, sy = gp.psi_x / dt, gp.psi_y / dt
    for j in range(n):
        mx = sx[j + 1] > sx[j] + 1e-12
        my = sy[j + 1] > sy[j] + 1e-12
        if my:
            # the tooth clock only runs while the spine path sits at a junction
            assert _visited_near(xv, sx[j], sx[j + 1], dist_lattice, band), f"Y moved away from junctions at step {j}"
        if mx:
            assert _visited_near(yv, sy[j], sy[j + 1], np.abs, band), f"X moved while Y was in a tooth at step {j}"


def check_inverse_inequality(increments, dt: float):
    v = np.concatenate([[0.0], np.cumsum(np.asarray(increments, float))])
    f = glue.MonotoneFn(dt * np.arange(v.size), v)
    inv = glue.inverse_monotone(f, f.values)
    assert np.all(inv >= f.times - 1e-12), "inverse fell below s"


# --- pde -------------------------------------------------------------------------


def check_effective_mass_and_bounds(alpha: float, coeffs, ny: int, steps: int):
    h0 = 1.0
    dy = h0 / (ny - 1)
    grid = pde.Grid2D(-1.0, 1.0, 3, h0, ny, 0.5 * dy * dy, steps)
    y = grid.y
    col = sum(c * np.cos(k * math.pi * y) for k, c in enumerate(coeffs))
    u0 = np.tile(col, (3, 1))
    fld = pde.solve_effective(CombParams(alpha, h0), u0, grid)
    m = [pde.stationary_mass(fld.values[k][1], alpha, dy) for k in range(fld.values.shape[0])]
    scale = max(1.0, float(np.max(np.abs(col))))
    assert np.max(np.abs(np.diff(m))) <= 1e-8 * scale, "stationary mass drifted"
    lo, hi = col.min(), col.max()
    tol = 1e-12 * scale
    assert fld.values.min() >= lo - tol and fld.values.max() <= hi + tol, "maximum principle violated"


def check_kernel_tail(t: float, h0: float, K: int):
    a = pde.kernel_w(t, h0, K=K)
    b = pde.kernel_w(t, h0, K=4 * K)
    c = math.pi**2 * t / (8 * h0 * h0)
    tail = (2 / h0) * math.exp(-((2 * K + 1) ** 2) * c) / (1 - math.exp(-8 * (K + 1) * c))
    assert -1e-15 * b <= b - a <= tail * (1 + 1e-9) + 1e-15 * b, (a, b, tail)


def check_cell_problem(epsilon: float, alpha: float, resolution: int, n_cells: int, h0_trunc: float = 1.0):
    sol = pde.solve_cell_problem(epsilon, alpha, h0_trunc, resolution, n_cells)
    assert sol.residual < 1e-10
    assert abs(sol.mean_before) < 1e-10 * max(1.0, sol.oscillation)
    assert sol.u.min() == 0.0


def check_duhamel_restart(alpha: float, h0: float, n1: int, n2: int, width: float):
    x = np.linspace(-4, 4, 41)
    v0 = np.exp(-((x / width) ** 2))
    p = CombParams(alpha, h0)
    dt = 0.01
    direct = pde.solve_basset(v0, None, p, x, dt, n1 + n2)
    first = pde.solve_basset(v0, None, p, x, dt, n1, kernel=direct.kernel)
    second = pde.solve_basset(None, None, p, x, dt, n2, kernel=direct.kernel, history=first)
    gap = np.max(np.abs(second.field.values[-1] - direct.field.values[-1]))
    assert gap < 1e-12, f"restart differs by {gap}"


# --- sweep -----------------------------------------------------------------------


def _cases(rng: np.random.Generator, n: int):
    return [rng.spawn(1)[0] for _ in range(n)]


def run_sweep(seed: int, cases: int = 100) -> dict:
    """Run every invariant on ``cases`` random inputs; returns ``{name: failures}``."""
    root = np.random.default_rng(seed)
    out: dict[str, int] = {}

    def run(name, fn):
        bad = 0
        for g in _cases(root, cases):
            try:
                fn(g)
            except AssertionError:
                bad += 1
        out[name] = bad

    run("local_time_monotone", lambda g: check_local_time_monotone(
        np.cumsum(g.standard_normal(g.integers(2, 200))) * 0.1, 10 ** g.uniform(-4, -1), g.uniform(-1, 1), g.uniform(1e-3, 1)))
    run("msd_translation", lambda g: check_msd_translation(
        np.cumsum(g.standard_normal((g.integers(2, 20), 30)), axis=1), 0.01, g.uniform(-100, 100), int(g.integers(0, 30))))
    run("stream_determinism", lambda g: check_stream_determinism(int(g.integers(0, 2**63)), int(g.integers(0, 2**63))))
    run("ks_symmetry", lambda g: check_ks_symmetry(g.standard_normal(g.integers(1, 60)), g.standard_normal(g.integers(1, 60)) + g.uniform(-1, 1)))
    run("limit_identities", lambda g: check_limit_identities(
        10 ** g.uniform(-1, 1), float(g.choice([0.5, 1.0, 2.0, math.inf])), int(g.integers(0, 2**32)), 1e-3, int(g.integers(1, 300)),
        str(g.choice(["band", "bridge"]))))
    run("occupation_bounds", lambda g: check_occupation_bounds(10 ** g.uniform(-2, 2), 10 ** g.uniform(-3, 4), g.standard_normal(50) * 10 ** g.uniform(-3, 3)))
    run("inverse_round_trip", lambda g: check_inverse_round_trip(
        g.exponential(size=g.integers(1, 200)) * (g.random(1) < 0.5) * g.random(), 10 ** g.uniform(-1, 1), 10 ** g.uniform(-3, 0)))
    run("large_alpha", lambda g: check_large_alpha(int(g.integers(0, 2**32))))
    run("graph_run", lambda g: check_graph_run(
        10 ** g.uniform(-1, 1), float(g.choice([0.25, 0.5, math.inf])), 0.25, int(g.choice([2, 4])), int(g.integers(0, 2**32)), 0.5))
    run("domain_confinement", lambda g: check_domain_confinement(
        10 ** g.uniform(-0.5, 0.5), float(g.choice([0.5, 1.0])), 0.25, float(g.choice([0.5, 1.0, 2.0])), int(g.integers(0, 2**32)), 2000))
    run("interior_step", lambda g: check_interior_step(10 ** g.uniform(-0.5, 0.5), float(g.choice([0.5, 1.0, math.inf])), 0.25, *g.random(4)))
    run("complementary_freezing", lambda g: check_complementary_freezing(
        10 ** g.uniform(-0.5, 0.5), 1.0, float(g.choice([0.1, 0.2])), int(g.integers(0, 2**32)), 400, 1e-4))
    run("inverse_inequality", lambda g: check_inverse_inequality(g.exponential(size=g.integers(1, 100)) * (g.random(1) < 0.6), 10 ** g.uniform(-3, 0)))
    run("effective_mass_bounds", lambda g: check_effective_mass_and_bounds(
        10 ** g.uniform(-1, 1), g.uniform(-1, 1, size=4), int(g.integers(3, 30)), int(g.integers(1, 60))))
    run("kernel_tail", lambda g: check_kernel_tail(10 ** g.uniform(-1, 1), 10 ** g.uniform(-0.5, 0.5), int(g.integers(1, 8))))
    run("cell_problem", lambda g: check_cell_problem(0.25, float(g.choice([0.5, 1.0, 2.0])), 4, int(g.choice([1, 3]))))
    run("duhamel_restart", lambda g: check_duhamel_restart(
        10 ** g.uniform(-1, 1), float(g.choice([1.0, 2.0, math.inf])), int(g.integers(1, 30)), int(g.integers(1, 30)), g.uniform(0.3, 2)))
    return out
