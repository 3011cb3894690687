import math

import numpy as np
import pytest

from combdiff import graph_sim as gs
from combdiff.core import CombParams, ParameterError, ResourceError, derive_stream

# alpha eps / (2 + alpha eps) at alpha = 1, eps = 0.1
UP_PROB_01 = 0.1 / 2.1  # 0.047619...


def test_entry_probability_value():
    assert CombParams(1.0, 1.0, 0.1).entry_probability == pytest.approx(0.047619047619, abs=1e-12)
    assert CombParams(1.0, 1.0, 0.1).entry_probability == pytest.approx(UP_PROB_01)


def test_junction_step_frequencies():
    p = CombParams(1.0, 1.0, 0.1)
    g = derive_stream(1, 0).generator()
    n = 100_000
    out = [gs.step_graph_walk(gs.GraphState.spine(0.0), p, 0.0125, g) for _ in range(n)]
    up = sum(s.branch == "tooth" for s in out) / n
    left = sum(s.branch == "spine" and s.x < 0 for s in out) / n
    se = math.sqrt(UP_PROB_01 * (1 - UP_PROB_01) / n)
    assert abs(up - UP_PROB_01) < 3 * se
    assert abs(left - 1 / 2.1) < 3 * math.sqrt(0.25 / n)


def test_interior_spine_symmetric():
    p = CombParams(1.0, 1.0, 0.1)
    g = derive_stream(2, 0).generator()
    n = 100_000
    right = sum(gs.step_graph_walk(gs.GraphState.spine(0.025), p, 0.0125, g).x > 0.025 for _ in range(n)) / n
    assert abs(right - 0.5) < 3 * math.sqrt(0.25 / n)


def test_tooth_moves_and_top_reflection():
    p = CombParams(1.0, 1.0, 0.1)
    g = derive_stream(3, 0).generator()
    for _ in range(200):
        s = gs.step_graph_walk(gs.GraphState.in_tooth(2, 1.0, 0.1), p, 0.0125, g)
        assert s.tooth == 2 and s.y == pytest.approx(1.0 - 0.0125)
    ys = {round(gs.step_graph_walk(gs.GraphState.in_tooth(-1, 0.5, 0.1), p, 0.0125, g).y / 0.0125) for _ in range(200)}
    assert ys == {39, 41}
    s = gs.step_graph_walk(gs.GraphState.in_tooth(0, 0.0125, 0.1), p, 0.0125, derive_stream(3, 1))
    assert s.branch in ("spine", "tooth")


def test_lattice_errors():
    p = CombParams(1.0, 1.0, 0.1)
    with pytest.raises(ParameterError):
        gs.lattice_ratio(p, 0.03)
    with pytest.raises(ParameterError):
        gs.lattice_ratio(CombParams(1.0, 0.33, 0.1), 0.0125)
    with pytest.raises(ParameterError):
        gs.step_graph_walk(gs.GraphState.spine(0.0), p, 0.07, derive_stream(0, 0))
    with pytest.raises(ResourceError):
        gs.simulate_graph(p, 1e-4, 1e6, derive_stream(0, 0))


def test_run_stays_on_comb():
    p = CombParams(1.0, 0.25, 0.1)
    run = gs.simulate_graph(p, 0.0125, 0.5, derive_stream(4, 0))
    x, y, br = run.x, run.y, run.branch
    assert np.all(y >= 0) and np.all(y <= 0.25 + 1e-12)
    on_tooth = y > 0
    assert np.all(br[on_tooth] == "tooth")
    assert np.allclose(x[on_tooth] / 0.1, np.round(x[on_tooth] / 0.1))
    c = run.counters
    assert c.tooth_entries <= c.junction_visits
    xs, ys = run.projected()
    assert np.array_equal(xs.values(), x) and np.array_equal(ys.values(), y)


def test_record_every_thins_only():
    p = CombParams(1.0, 1.0, 0.1)
    full = gs.simulate_graph(p, 0.0125, 0.1, derive_stream(5, 0))
    thin = gs.simulate_graph(p, 0.0125, 0.1, derive_stream(5, 0), record_every=4)
    assert np.array_equal(full.sites[::4], thin.sites)
    assert full.counters == thin.counters


def test_endpoints_match_runs():
    p = CombParams(1.0, 1.0, 0.1)
    X, Y, c = gs.simulate_graph_endpoints(p, None, 0.1, 4, 9, threads=1)
    tot = gs.WalkCounters()
    for i in range(4):
        run = gs.simulate_graph(p, None, 0.1, derive_stream(9, i))
        assert (X[i], Y[i]) == (run.x[-1], run.y[-1])
        tot = tot + run.counters
    assert c.as_dict() == pytest.approx(tot.as_dict())


def test_degenerate_alpha_simple_walk():
    p = CombParams(0.0, 1.0, 0.1, degenerate=True)
    X, Y, c = gs.simulate_graph_endpoints(p, None, 1.0, 4000, 10, threads=1)
    assert np.all(Y == 0) and c.tooth_entries == 0
    assert np.mean(X**2) == pytest.approx(1.0, rel=0.05)


def test_entry_ratio_long_run():
    p = CombParams(1.0, 1.0, 0.05)
    c = gs.graph_counters(p, None, 2.0, 20, 11, threads=1)
    q = p.entry_probability
    frac = c.tooth_entries / c.junction_visits
    assert abs(frac - q) < 3 * math.sqrt(q * (1 - q) / c.junction_visits)


def test_spine_martingale_between_junctions():
    # displacement from one junction visit to the next junction visit
    p = CombParams(1.0, 1.0, 0.1)
    d = []
    for i in range(10):
        run = gs.simulate_graph(p, None, 2.0, derive_stream(12, i))
        i_site, j_site = run.sites[:, 0], run.sites[:, 1]
        at = np.flatnonzero((j_site == 0) & (i_site % run.m == 0))
        d.append(np.diff(i_site[at]) * run.delta)
    d = np.concatenate(d)
    assert abs(d.mean()) < 3 * d.std() / math.sqrt(d.size)
