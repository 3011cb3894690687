"""Desk-scale acceptance checks.

Criterion ``k`` draws from master seed ``seed + k``.  When a criterion needs
two independent samples under one seed, the second uses stream ids from
``SECOND_SAMPLE`` upward.  Every check returns a plain dict with keys
``criterion_id, name, target, measured, tolerance, pass, detail``; nothing
in it depends on wall-clock time, so equal seeds give equal reports.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import domain_sim, glue, graph_sim, invariants, limit_process, pde
from .core import (
    CombParams,
    RngStream,
    SamplePath,
    TimeGrid,
    derive_stream,
    ks_two_sample,
    lattice_local_time,
    local_time_estimate,
    map_streams,
)

DEFAULT_SEED = 1000
SECOND_SAMPLE = 10**7
# bridge local time for every limit-process Monte Carlo run: no O(sqrt(h)) band bias
LOCAL_TIME = "bridge"


def _n(n: int, scale: float, floor: int = 200) -> int:
    return max(floor, int(round(n * scale)))


def _entry(cid, name, target, measured, tolerance, ok, **detail):
    return {
        "criterion_id": cid,
        "name": name,
        "target": target,
        "measured": measured,
        "tolerance": tolerance,
        "pass": bool(ok),
        "detail": detail,
    }


def _msd_ratio(X: np.ndarray, t: float):
    sq = X * X
    return float(sq.mean() / t), float(sq.std(ddof=1) / math.sqrt(sq.size) / t)


def c1_short_time(seed: int, scale: float = 1.0, threads=None):
    n = _n(100_000, scale)
    t = 0.01
    X, _ = limit_process.simulate_limit_endpoints(
        CombParams(1.0, 1.0), TimeGrid.from_horizon(t, 1e-5), n, seed, threads=threads, local_time=LOCAL_TIME
    )
    r, se = _msd_ratio(X, t)
    return _entry(1, "short-time variance msd/t", 1.0, r, [0.95, 1.05], 0.95 <= r <= 1.05, stderr=se, n_paths=n)


def c2_long_time(seed: int, scale: float = 1.0, threads=None):
    n = _n(20_000, scale)
    t = 100.0
    X, _ = limit_process.simulate_limit_endpoints(
        CombParams(1.0, 1.0), TimeGrid.from_horizon(t, 1e-3), n, seed, threads=threads, local_time=LOCAL_TIME
    )
    r, se = _msd_ratio(X, t)
    return _entry(2, "long-time variance msd/t", 0.5, r, [0.475, 0.525], 0.475 <= r <= 0.525, stderr=se, n_paths=n)


def c3_subdiffusive(seed: int, scale: float = 1.0, threads=None):
    n = _n(1_000_000, scale)
    t = 400.0
    s = limit_process.occupation_samples(1.0, t, n, seed, threads)
    m = float(np.mean(s) / math.sqrt(t))
    target = math.sqrt(8 / math.pi)
    se = float(np.std(s, ddof=1) / math.sqrt(n) / math.sqrt(t))
    ok = 0.97 * target <= m <= 1.03 * target
    return _entry(3, "sub-diffusive mean/sqrt(t)", target, m, [0.97 * target, 1.03 * target], ok,
                  ratio=m / target, stderr=se, n_paths=n)


def c4_graph_vs_limit(seed: int, scale: float = 1.0, threads=None):
    n = _n(20_000, scale)
    p = CombParams(1.0, 1.0, 0.05)
    xg, _, _ = graph_sim.simulate_graph_endpoints(p, p.epsilon / 8, 1.0, n, seed, threads)
    xl, _ = limit_process.simulate_limit_endpoints(
        p, TimeGrid.from_horizon(1.0, 1e-4), n, seed, threads=threads, first_id=SECOND_SAMPLE, local_time=LOCAL_TIME
    )
    d, pv = ks_two_sample(xg, xl)
    return _entry(4, "graph vs limit X_1 KS", 0.0, d, 0.05, d < 0.05, p_value=pv, n_each=n)


def c5_domain_vs_limit(seed: int, scale: float = 1.0, threads=None):
    n = _n(5_000, scale)
    p = CombParams(1.0, 1.0, 0.1)
    geom = domain_sim.DomainGeometry(p)
    grid = TimeGrid.from_horizon(1.0, domain_sim.default_dt(geom))
    xd, _, diag = domain_sim.simulate_domain_endpoints(geom, grid, n, seed, threads=threads)
    xl, _ = limit_process.simulate_limit_endpoints(
        p, TimeGrid.from_horizon(1.0, 1e-4), n, seed, threads=threads, first_id=SECOND_SAMPLE, local_time=LOCAL_TIME
    )
    d, pv = ks_two_sample(xd, xl)
    return _entry(5, "domain vs limit X_1 KS", 0.0, d, 0.10, d < 0.10, p_value=pv, n_each=n, **diag)


def c6_local_time_balance(seed: int, scale: float = 1.0, threads=None):
    n = _n(100, scale, floor=10)
    p = CombParams(1.0, 1.0, 0.05)
    c = graph_sim.graph_counters(p, p.epsilon / 8, 10.0, n, seed, threads)
    target = p.alpha * p.epsilon / 2
    r = c.ly / c.lx
    return _entry(6, "graph ly/lx", target, r, 0.02, abs(r / target - 1) <= 0.02, relative=r / target, n_runs=n,
                  **c.as_dict())


def c7_gluing(seed: int, scale: float = 1.0, threads=None):
    n = _n(20, scale, floor=2)
    p = CombParams(1.0, 1.0, 0.1)
    grid = TimeGrid.from_horizon(10.0, 1e-4)
    worst_sum = worst_def = worst_ratio = 0.0
    for i in range(n):
        g = derive_stream(seed, i).generator()
        xbar = glue.brownian_path(grid, g)
        ybar = SamplePath(grid, limit_process._reflected_kernel(g, p.h0, grid.dt, grid.n_steps, 0.0))
        gp = glue.glue_time_changes(xbar, ybar, p)
        worst_sum = max(worst_sum, float(np.max(np.abs(gp.psi_x + gp.psi_y - grid.times))))
        LX = lattice_local_time(xbar, p.epsilon)
        LY = local_time_estimate(ybar, 0.0)
        ref = glue.psi_y_from_definition(LX, LY, p, grid.dt, grid.times)
        worst_def = max(worst_def, float(np.max(np.abs(ref - gp.psi_y)) / grid.dt))
        if gp.ly[-1] > 0:
            worst_ratio = max(worst_ratio, abs(gp.lx[-1] / ((2 / (p.alpha * p.epsilon)) * gp.ly[-1]) - 1))
    # psi_y is t - psi_x, so the sum is exact up to one rounding
    sum_tol = 1e-12 * grid.t_max
    ok = worst_sum <= sum_tol and worst_def <= 2.0 and worst_ratio <= 0.02
    return _entry(7, "gluing identities", 0.0,
                  {"sum_gap": worst_sum, "definition_gap_dt": worst_def, "ratio_gap": worst_ratio},
                  {"sum_gap": sum_tol, "definition_gap_dt": 2.0, "ratio_gap": 0.02}, ok, n_paths=n)


def c8_excursions(seed: int, scale: float = 1.0, threads=None):
    budget = _n(10_000, scale, floor=500)
    samples = {}
    for k, eps in enumerate((0.1, 1.0)):
        dt = eps * eps / 64
        grid = TimeGrid.from_horizon(1.2 * budget * eps * eps, dt)
        xbar = glue.brownian_path(grid, derive_stream(seed, k))
        samples[eps] = glue.excursion_durations(xbar, eps).durations / eps**2
    d, pv = ks_two_sample(samples[0.1], samples[1.0])
    n_paths = _n(1000, scale, floor=50)
    level = 200.0
    grid = TimeGrid.from_horizon(400.0, 1 / 64)

    def tau(g, _i):
        xbar = glue.brownian_path(grid, g)
        LX = lattice_local_time(xbar, 1.0)
        return float(glue.inverse_linear(LX, grid.dt, level)), bool(LX[-1] <= level)

    res = map_streams(tau, n_paths, seed, threads, SECOND_SAMPLE)
    taus = np.array([r[0] for r in res])
    sat = int(sum(r[1] for r in res))
    m = float(taus.mean() / level)
    ok = d < 0.05 and 0.95 <= m <= 1.05 and sat == 0
    return _entry(8, "excursion scaling and unit mean", {"ks": 0.0, "mean_ratio": 1.0},
                  {"ks": d, "mean_ratio": m}, {"ks": 0.05, "mean_ratio": [0.95, 1.05]}, ok,
                  p_value=pv, n_small=int(samples[0.1].size), n_large=int(samples[1.0].size),
                  mean_ratio_stderr=float(taus.std(ddof=1) / math.sqrt(n_paths) / level), saturated=sat)


def c9_laplace(seed: int, scale: float = 1.0, threads=None):
    worst = 0.0
    table = {}
    for h0 in (1.0, 2.0, math.inf):
        for s in (0.5, 1.0, 2.0):
            e = pde.kernel_laplace_check(h0, s)
            table[f"h0={h0},s={s}"] = e
            worst = max(worst, e)
    return _entry(9, "kernel Laplace identity", 0.0, worst, 1e-6, worst < 1e-6, cases=table)


C10_PROBES = ((0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 0.5), (1.0, 0.5))


def _c10_u0(x, y):
    return np.exp(-(x**2)) * (1.0 + y)


def c10_pde_vs_mc(seed: int, scale: float = 1.0, threads=None):
    n = _n(100_000, scale)
    p = CombParams(1.0, 1.0)
    t = 0.5
    grid = pde.Grid2D.for_horizon(t, 1.0, 0.02, 0.01)
    U = pde.solve_effective(p, _c10_u0, grid, save_times=[t])
    pv = pde.probe_solution(U, C10_PROBES)
    mc_grid = TimeGrid.from_horizon(t, 1e-4)
    samples = {}
    for k, y0 in enumerate(sorted({y for _, y in C10_PROBES})):
        samples[y0] = limit_process.simulate_limit_endpoints(
            p, mc_grid, n, seed, start=(0.0, y0), threads=threads, substeps=4, first_id=k * SECOND_SAMPLE,
            local_time=LOCAL_TIME,
        )
    rows, ok = [], True
    for (x, y), v in zip(C10_PROBES, pv):
        X, Y = samples[y]
        s = _c10_u0(x + X, Y)
        m = float(s.mean())
        se = float(s.std(ddof=1) / math.sqrt(n))
        good = abs(m - v) <= 3 * se
        ok &= good
        rows.append({"x": x, "y": y, "pde": float(v), "mc": m, "stderr": se, "z": (m - v) / se})
    worst = max(abs(r["z"]) for r in rows)
    return _entry(10, "PDE vs Monte Carlo", 0.0, worst, 3.0, ok, probes=rows, n_paths=n)


def c11_basset_slice(seed: int, scale: float = 1.0, threads=None):
    p = CombParams(1.0, 1.0)
    grid = pde.Grid2D.for_horizon(0.5, 1.0, 0.05, 0.02)
    every = grid.nt // 10
    U = pde.solve_effective(p, _c10_u0, grid, save_every=every)
    f = pde.compute_source_g(_c10_u0, p, grid)
    B = pde.solve_basset(U.values[0][:, 0], f, p, grid.x, grid.dt, grid.nt, save_every=every)
    err = float(np.max(np.abs(B.field.values - U.values[:, :, 0])))
    return _entry(11, "Basset vs effective slice", 0.0, err, 1e-2, err <= 1e-2, nt=grid.nt, nx=grid.nx, ny=grid.ny)


def c12_oscillation(seed: int, scale: float = 1.0, threads=None):
    vals = {}
    for eps in (1 / 8, 1 / 16, 1 / 32):
        sol = pde.solve_cell_problem(eps, 1.0, 1.0, 4, 5)
        vals[str(eps)] = sol.oscillation / (eps**2 * abs(math.log(eps)))
    r = max(vals.values()) / min(vals.values())
    return _entry(12, "oscillation scaling max/min", 1.0, r, 2.0, r <= 2.0, normalised=vals)


def c13_generator(seed: int, scale: float = 1.0, threads=None):
    n = _n(100_000, scale)
    p = CombParams(1.0, 1.0)
    out, ok = {}, True
    for k, (f_id, t) in enumerate((("quadratic", 1.0), ("trig", 0.5))):
        s = limit_process.generator_residual(
            f_id, p, t, n, RngStream(seed, k * SECOND_SAMPLE), dt=1e-4, substeps=4, threads=threads,
            local_time=LOCAL_TIME,
        )
        out[f_id] = {"mean": s.mean, "stderr": s.stderr, "z": s.mean / s.stderr}
        ok &= abs(s.mean) < 3 * s.stderr
    worst = max(abs(v["z"]) for v in out.values())
    return _entry(13, "generator residuals", 0.0, worst, 3.0, ok, residuals=out, n_paths=n)


def c14_properties(seed: int, scale: float = 1.0, threads=None):
    fails = invariants.run_sweep(seed, 100)
    bad = sum(fails.values())
    return _entry(14, "randomized invariant sweep", 0, bad, 0, bad == 0, failures=fails, cases_per_property=100)


CRITERIA: dict[int, Callable] = {
    1: c1_short_time,
    2: c2_long_time,
    3: c3_subdiffusive,
    4: c4_graph_vs_limit,
    5: c5_domain_vs_limit,
    6: c6_local_time_balance,
    7: c7_gluing,
    8: c8_excursions,
    9: c9_laplace,
    10: c10_pde_vs_mc,
    11: c11_basset_slice,
    12: c12_oscillation,
    13: c13_generator,
    14: c14_properties,
}


def run_criterion(cid: int, seed: int = DEFAULT_SEED, scale: float = 1.0, threads=None) -> dict:
    return CRITERIA[cid](seed + cid, scale, threads)


def run_all(seed: int = DEFAULT_SEED, scale: float = 1.0, threads=None, only=None, progress=None) -> list[dict]:
    out = []
    for cid in sorted(CRITERIA if only is None else only):
        e = run_criterion(cid, seed, scale, threads)
        if progress is not None:
            progress(e)
        out.append(e)
    return out
