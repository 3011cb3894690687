"""Command-line front end.

Exit codes: 0 success, 1 runtime or acceptance failure, 2 usage error.
Run parameters come from flags; ``--config file.json`` supplies defaults that
flags override.  All randomness derives from ``--seed``; path ``i`` uses
stream id ``i``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, domain_sim, glue, graph_sim, limit_process, pde
from .core import (
    CombParams,
    ParameterError,
    RunManifest,
    SummaryStat,
    TimeGrid,
    available_threads,
    default_band,
    derive_stream,
    map_streams,
    parse_h0,
)

MAX_ROWS = 100_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- output helpers ---------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(out: Path, stem: str, header: list[str], columns: list, fmt: str = "csv") -> Path:
    n = len(columns[0])
    if fmt == "json":
        path = out / f"{stem}.json"
        rows = [{h: (c[i].item() if hasattr(c[i], "item") else c[i]) for h, c in zip(header, columns)} for i in range(n)]
        path.write_text(json.dumps(rows, indent=1))
        return path
    path = out / f"{stem}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(n):
            w.writerow([_fmt(c[i]) for c in columns])
    return path


def write_manifest(out: Path, manifest: RunManifest):
    (out / "manifest.json").write_text(manifest.to_json() + "\n")


def write_json(out: Path, name: str, obj):
    (out / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _msd_table(out: Path, times, stats: list[SummaryStat], fmt: str):
    write_table(
        out,
        "msd",
        ["t", "msd", "stderr", "n_paths"],
        [list(times), [s.mean for s in stats], [s.stderr for s in stats], [s.n for s in stats]],
        fmt,
    )


def _stride(n_steps: int) -> int:
    s = max(1, -(-n_steps // MAX_ROWS))
    while n_steps % s:
        s += 1
    return s


# --- parser -----------------------------------------------------------------------


def _positive(kind):
    def conv(text):
        try:
            v = kind(float(text)) if kind is int else kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid number {text!r}")
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
        if kind is int and float(text) != v:
            raise argparse.ArgumentTypeError(f"must be an integer, got {text}")
        return v

    return conv


def _h0(text):
    try:
        return parse_h0(text)
    except (ParameterError, ValueError) as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with default flag values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive(int), default=None)
    common.add_argument("--out", default="out")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    comb = _Parser(add_help=False)
    comb.add_argument("--alpha", type=float, default=1.0)
    comb.add_argument("--h0", type=_h0, default=1.0, help='tooth height or "inf"')
    comb.add_argument("--epsilon", type=float, default=0.1)
    comb.add_argument("--sigma", type=float, default=1.0, help="spine width exponent")

    parser = _Parser(prog="combdiff", description="Brownian motion on combs: simulators, solvers, checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("limit", parents=[common, comb], help="sticky limit process")
    p.add_argument("--t-max", type=_positive(float), default=1.0)
    p.add_argument("--dt", type=_positive(float), default=1e-4)
    p.add_argument("--paths", type=_positive(int), default=1000)
    p.add_argument("--substeps", type=_positive(int), default=1)
    p.add_argument("--local-time", choices=limit_process.LOCAL_TIME_RULES, default="band")
    p.add_argument("--probes", type=_positive(int), default=10, help="number of msd probe times")

    p = sub.add_parser("graph", parents=[common, comb], help="random walk on the comb graph")
    p.add_argument("--t-max", type=_positive(float), default=1.0)
    p.add_argument("--delta", type=_positive(float), default=None, help="lattice step (default epsilon/8)")
    p.add_argument("--paths", type=_positive(int), default=100)

    p = sub.add_parser("domain", parents=[common, comb], help="reflected BM in the fattened comb")
    p.add_argument("--t-max", type=_positive(float), default=1.0)
    p.add_argument("--dt", type=_positive(float), default=None, help="time step (default (w_T/4)^2)")
    p.add_argument("--paths", type=_positive(int), default=100)

    p = sub.add_parser("glue", parents=[common, comb], help="time-change gluing of spine and tooth paths")
    p.add_argument("--t-max", type=_positive(float), default=1.0)
    p.add_argument("--dt", type=_positive(float), default=1e-4)
    p.add_argument("--paths", type=_positive(int), default=1)

    for name, hlp in (("pde-effective", "effective two-dimensional system"), ("basset", "memory equation on the spine")):
        p = sub.add_parser(name, parents=[common, comb], help=hlp)
        p.add_argument("--t-max", type=_positive(float), default=0.5)
        p.add_argument("--dx", type=_positive(float), default=0.05)
        p.add_argument("--dy", type=_positive(float), default=0.02)
        p.add_argument("--dt", type=_positive(float), default=None, help="time step (default dy^2/2)")
        p.add_argument("--u0", default="exp(-x**2)*(1+y)", help="initial data as an expression in x and y")
        p.add_argument("--save-every", type=_positive(int), default=None)
        if name == "basset":
            p.add_argument("--top-bc", choices=("neumann", "dirichlet"), default="neumann")
            p.add_argument("--h0-trunc", type=_positive(float), default=None,
                           help="tooth height for the source problem when h0 is inf")

    p = sub.add_parser("cell", parents=[common, comb], help="cell Poisson problem and its oscillation")
    p.add_argument("--resolution", type=_positive(int), default=4)
    p.add_argument("--n-cells", type=_positive(int), default=5)
    p.add_argument("--h0-trunc", type=_positive(float), default=None)

    p = sub.add_parser("occupation", parents=[common, comb], help="exact spine occupation time, infinite teeth")
    p.add_argument("--t", type=_positive(float), default=400.0)
    p.add_argument("--paths", type=_positive(int), default=100_000)

    p = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    p.add_argument("--scale", type=_positive(float), default=1.0, help="multiplier on sample sizes")
    p.add_argument("--only", type=int, nargs="+", default=None, help="criterion ids to run")
    p.set_defaults(seed=acceptance.DEFAULT_SEED)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {known.config}: {e}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    cmd = next((a for a in argv if a in _subparsers(parser)), None)
    if cmd is None:
        return
    sp = _subparsers(parser)[cmd]
    dests = {a.dest: a for a in sp._actions}
    defaults = {}
    for k, v in cfg.items():
        d = k.replace("-", "_")
        if d not in dests or d in ("config", "help"):
            raise UsageError(f"unknown config key {k!r} for {cmd}")
        act = dests[d]
        if act.type is not None and not isinstance(v, list):
            try:
                v = act.type(str(v))
            except argparse.ArgumentTypeError as e:
                raise UsageError(f"config key {k}: {e}")
        defaults[d] = v
    sp.set_defaults(**defaults)


def _subparsers(parser) -> dict:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices
    return {}


# --- commands ---------------------------------------------------------------------


def _params(a) -> CombParams:
    return CombParams(a.alpha, a.h0, a.epsilon, a.sigma)


def _options(a, *names) -> dict:
    return {n: getattr(a, n) for n in names}


def _grid(t_max: float, dt: float) -> TimeGrid:
    return TimeGrid.from_horizon(t_max, dt)


def _probe_indices(n_steps: int, probes: int) -> np.ndarray:
    return np.unique(np.linspace(0, n_steps, min(probes, n_steps) + 1).round().astype(int)[1:])


def prepare_limit(a):
    params, grid = _params(a), _grid(a.t_max, a.dt)
    limit_process._inner(grid, a.substeps, None, a.local_time)

    def run(out: Path):
        path = limit_process.simulate_limit_process(
            params, grid, derive_stream(a.seed, 0), substeps=a.substeps, local_time=a.local_time
        )
        write_table(out, "limit_path", ["t", "x", "y", "l", "tchange"], [grid.times, path.X, path.Y, path.L, path.T], a.format)
        idx = _probe_indices(grid.n_steps, a.probes)

        def one(g, _i):
            p = limit_process.simulate_limit_process(params, grid, g, substeps=a.substeps, local_time=a.local_time)
            return p.X[idx] - p.X[0]

        X = np.array(map_streams(one, a.paths, a.seed, a.threads))
        stats = [SummaryStat.from_samples(X[:, k] ** 2) for k in range(idx.size)]
        _msd_table(out, grid.times[idx], stats, a.format)
        return RunManifest("limit", params, grid, a.seed, a.paths, __version__,
                           options=_options(a, "substeps", "local_time", "probes", "format"))

    return run


def prepare_graph(a):
    params = _params(a)
    delta = params.epsilon / 8 if a.delta is None else a.delta
    m, _ = graph_sim.lattice_ratio(params, delta)
    n = graph_sim._n_steps(a.t_max, delta)

    def run(out: Path):
        stride = _stride(n)
        r = graph_sim.simulate_graph(params, delta, a.t_max, derive_stream(a.seed, 0), record_every=stride)
        write_table(out, "graph_path", ["t", "x", "y", "branch"], [r.grid.times, r.x, r.y, r.branch], a.format)
        x, _, counters = graph_sim.simulate_graph_endpoints(params, delta, a.t_max, a.paths, a.seed, a.threads)
        _msd_table(out, [n * delta**2], [SummaryStat.from_samples(x**2)], a.format)
        return RunManifest("graph", params, TimeGrid(delta**2, n), a.seed, a.paths, __version__,
                           counters=counters.as_dict(), options={"delta": delta, "record_every": stride, "format": a.format})

    return run


def prepare_domain(a):
    params = _params(a)
    geom = domain_sim.DomainGeometry(params)
    if a.dt is None:
        # largest admissible step that divides the horizon
        n = math.ceil(a.t_max / domain_sim.default_dt(geom) - 1e-9)
        grid = TimeGrid(a.t_max / n, n)
    else:
        grid = _grid(a.t_max, a.dt)
    domain_sim._check_dt(geom, grid.dt)

    def run(out: Path):
        stride = _stride(grid.n_steps)
        p = domain_sim.simulate_domain(geom, grid, None, derive_stream(a.seed, 0), record_every=stride)
        write_table(out, "domain_path", ["t", "x", "y", "x_proj", "y_proj"],
                    [p.grid.times, p.x, p.y, p.x_proj, p.y_proj], a.format)
        x, _, diag = domain_sim.simulate_domain_endpoints(geom, grid, a.paths, a.seed, threads=a.threads)
        _msd_table(out, [grid.t_max], [SummaryStat.from_samples(x**2)], a.format)
        return RunManifest("domain", params, grid, a.seed, a.paths, __version__, counters=diag,
                           options={"record_every": stride, "format": a.format})

    return run


def prepare_glue(a):
    params, grid = _params(a), _grid(a.t_max, a.dt)
    if default_band(grid.dt) >= params.epsilon / 2:
        raise ParameterError(f"dt must be below (epsilon/4)^2 = {(params.epsilon / 4) ** 2:.6g} "
                             "so the local-time band fits between teeth")

    def run(out: Path):
        gp = glue.simulate_glued(params, grid, derive_stream(a.seed, 0))
        write_table(out, "glued_path", ["t", "x", "y", "psi_x", "psi_y", "lx", "ly"],
                    [grid.times, gp.x, gp.y, gp.psi_x, gp.psi_y, gp.lx, gp.ly], a.format)
        xs = map_streams(lambda g, _i: glue.simulate_glued(params, grid, g).x[-1], a.paths, a.seed, a.threads)
        _msd_table(out, [grid.t_max], [SummaryStat.from_samples(np.asarray(xs) ** 2)], a.format)
        return RunManifest("glue", params, grid, a.seed, a.paths, __version__, options={"format": a.format})

    return run


_NAMES = {k: getattr(np, k) for k in ("exp", "sin", "cos", "tan", "tanh", "sqrt", "abs", "where", "pi", "log", "minimum", "maximum")}


def _initial(expr: str):
    try:
        code = compile(expr, "<u0>", "eval")
    except SyntaxError as e:
        raise ParameterError(f"cannot parse --u0: {e.msg}")
    bad = [n for n in code.co_names if n not in _NAMES and n not in ("x", "y")]
    if bad:
        raise ParameterError(f"--u0 uses unknown names {bad}; allowed: x, y, {sorted(_NAMES)}")

    def u0(x, y):
        return np.asarray(eval(code, {"__builtins__": {}}, {**_NAMES, "x": x, "y": y}), dtype=float) + 0 * x

    u0(np.zeros(2), np.zeros(2))
    return u0


def _pde_grid(a, y_max: float) -> pde.Grid2D:
    g = pde.Grid2D.for_horizon(a.t_max, y_max, a.dx, a.dy, a.dt)
    if g.dt > g.stable_dt() * (1 + 1e-12):
        raise ParameterError(f"dt must not exceed dy^2/2 = {g.stable_dt():.6g}")
    return g


def _pde_manifest(cmd, params, g, a, extra) -> RunManifest:
    opts = {"x_min": g.x_min, "x_max": g.x_max, "nx": g.nx, "ny": g.ny, "y_max": g.y_max, "u0": a.u0, "format": a.format}
    opts.update(extra)
    return RunManifest(cmd, params, TimeGrid(g.dt, g.nt), a.seed, 0, __version__, options=opts)


def prepare_pde_effective(a):
    params = _params(a)
    if params.h0_is_inf:
        raise ParameterError("pde-effective needs a finite h0")
    u0 = _initial(a.u0)
    g = _pde_grid(a, params.h0)
    every = a.save_every or max(1, g.nt // 10)

    def run(out: Path):
        U = pde.solve_effective(params, u0, g, save_every=every)
        T, X, Y = np.meshgrid(U.t, U.x, U.y, indexing="ij")
        write_table(out, "field", ["t", "x", "y", "u"], [T.ravel(), X.ravel(), Y.ravel(), U.values.ravel()], a.format)
        return _pde_manifest("pde-effective", params, g, a, {"save_every": every})

    return run


def prepare_basset(a):
    params = _params(a)
    u0 = _initial(a.u0)
    if params.h0_is_inf and a.h0_trunc is None:
        ys = np.linspace(0.0, 4.0, 9)
        xs = np.linspace(-2.0, 2.0, 9)
        X, Y = np.meshgrid(xs, ys)
        if not np.allclose(u0(X, Y), u0(X, 0 * Y)):
            raise ParameterError("h0 = inf needs y-independent u0 or --h0-trunc for the source problem")
    y_max = params.h0 if not params.h0_is_inf else (a.h0_trunc or 1.0)
    g = _pde_grid(a, y_max)
    every = a.save_every or max(1, g.nt // 10)

    def run(out: Path):
        if params.h0_is_inf and a.h0_trunc is None:
            f = None
        else:
            src = params if not params.h0_is_inf else CombParams(params.alpha, y_max, params.epsilon, params.scaling_sigma)
            f = pde.compute_source_g(u0, src, g, top_bc=a.top_bc)
        v0 = u0(g.x, np.zeros_like(g.x))
        B = pde.solve_basset(v0, f, params, g.x, g.dt, g.nt, save_every=every)
        T, X = np.meshgrid(B.field.t, B.field.x, indexing="ij")
        write_table(out, "field", ["t", "x", "u"], [T.ravel(), X.ravel(), B.field.values.ravel()], a.format)
        tk = g.times[1:]
        write_table(out, "kernel", ["t", "w"], [tk, pde.kernel_w(tk, params.h0)], a.format)
        return _pde_manifest("basset", params, g, a, {"save_every": every, "top_bc": a.top_bc, "h0_trunc": a.h0_trunc})

    return run


def prepare_cell(a):
    params = _params(a)
    h0t = min(params.h0, 1.0) if a.h0_trunc is None else a.h0_trunc

    def run(out: Path):
        s = pde.solve_cell_problem(params.epsilon, params.alpha, h0t, a.resolution, a.n_cells)
        n = s.u.size
        write_table(out, "field", ["t", "x", "y", "u"], [np.zeros(n), s.centers[:, 0], s.centers[:, 1], s.u], a.format)
        eps = params.epsilon
        write_json(out, "summary.json", {
            "oscillation": s.oscillation,
            "normalised_oscillation": s.oscillation / (eps**2 * abs(math.log(eps))),
            "residual": s.residual,
            "mesh": s.h,
            "unknowns": n,
        })
        return RunManifest("cell", params, TimeGrid(1.0, 1), a.seed, 0, __version__,
                           options={"resolution": a.resolution, "n_cells": a.n_cells, "h0_trunc": h0t, "format": a.format})

    return run


def prepare_occupation(a):
    params = _params(a)
    if not params.h0_is_inf:
        raise ParameterError("occupation needs h0 = inf")

    def run(out: Path):
        s = limit_process.occupation_samples(params.alpha, a.t, a.paths, a.seed, a.threads)
        st = SummaryStat.from_samples(s)
        target = math.sqrt(8 * a.t / math.pi) / params.alpha
        write_json(out, "summary.json", {
            "t": a.t,
            "alpha": params.alpha,
            "n_paths": a.paths,
            "mean": st.mean,
            "stderr": st.stderr,
            "mean_over_sqrt_t": st.mean / math.sqrt(a.t),
            "asymptote": target,
            "ratio_to_asymptote": st.mean / target,
        })
        if a.format == "csv":
            write_table(out, "occupation", ["path", "time_on_spine"], [np.arange(a.paths), s], "csv")
        return RunManifest("occupation", params, TimeGrid(a.t, 1), a.seed, a.paths, __version__,
                           options={"t": a.t, "format": a.format})

    return run


def prepare_verify(a):
    only = a.only
    if only is not None:
        unknown = sorted(set(only) - set(acceptance.CRITERIA))
        if unknown:
            raise ParameterError(f"unknown criterion ids {unknown}")

    def run(out: Path):
        def show(e):
            print(f"criterion {e['criterion_id']:2d} {'PASS' if e['pass'] else 'FAIL'}  {e['name']}: "
                  f"measured {json.dumps(e['measured'])}, tolerance {json.dumps(e['tolerance'])}", flush=True)

        report = acceptance.run_all(a.seed, a.scale, a.threads, only, progress=show)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        failed = [e["criterion_id"] for e in report if not e["pass"]]
        m = RunManifest("verify", CombParams(1.0), TimeGrid(1.0, 1), a.seed, 0, __version__,
                        options={"scale": a.scale, "only": only})
        return m, failed

    return run


PREPARE = {
    "limit": prepare_limit,
    "graph": prepare_graph,
    "domain": prepare_domain,
    "glue": prepare_glue,
    "pde-effective": prepare_pde_effective,
    "basset": prepare_basset,
    "cell": prepare_cell,
    "occupation": prepare_occupation,
    "verify": prepare_verify,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        a = parser.parse_args(argv)
        if a.threads is None:
            a.threads = available_threads()
        job = PREPARE[a.command](a)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 2
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)
    except ParameterError as e:
        parser.print_usage(sys.stderr)
        print(f"combdiff {a.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # e.g. a step budget exceeded while planning the run
        print(f"combdiff {a.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    out = Path(a.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        res = job(out)
        failed = []
        if isinstance(res, tuple):
            res, failed = res
        write_manifest(out, res)
    except Exception as e:  # runtime failures map to exit 1
        print(f"combdiff {a.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if failed:
        print(f"failed criteria: {', '.join(map(str, failed))}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
