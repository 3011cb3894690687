import math

import numpy as np
import pytest

from combdiff import domain_sim as ds
from combdiff.core import CombParams, ParameterError, TimeGrid, derive_stream, ks_two_sample

# msd(X)/t of the limit process at alpha = h0 = 1, t = 0.01, by Laplace inversion
LIMIT_MSD_T001 = 0.949205331071552

GEOM = ds.DomainGeometry(CombParams(1.0, 1.0, 0.1, 1.0))


def test_geometry_widths():
    assert GEOM.spine_width == pytest.approx(0.1)
    assert GEOM.half_width == pytest.approx(0.005)
    g = ds.DomainGeometry(CombParams(2.0, 1.0, 0.1, 0.5))
    assert 2 * g.half_width / (0.1 * g.spine_width) == pytest.approx(2.0)


@pytest.mark.parametrize("pt,inside", [
    ((0.0, -0.05), True),
    ((0.05, 0.5), False),
    ((0.0, 0.5), True),
    ((0.2, 0.999), True),
    ((0.0, 1.0), False),
    ((0.3, -0.1), False),
    ((0.004, 0.3), True),
    ((0.006, 0.3), False),
])
def test_contains(pt, inside):
    assert ds.contains(GEOM, ds.Point2(*pt)) is inside


def test_reflect_examples():
    p, flag = ds.reflect_step(GEOM, ds.Point2(0.0, -0.05), ds.Point2(0.01, -0.02))
    assert (p.x, p.y, flag) == (0.01, -0.02, False)
    p, flag = ds.reflect_step(GEOM, ds.Point2(0.0, -0.05), ds.Point2(0.0, -0.13))
    assert p.x == 0.0 and p.y == pytest.approx(-0.07) and not flag
    # a step into a tooth wall folds back across x = 0.005
    p, _ = ds.reflect_step(GEOM, ds.Point2(0.0, 0.5), ds.Point2(0.008, 0.5))
    assert p.x == pytest.approx(0.002) and p.y == 0.5
    # a step out of a tooth into the spine at the mouth needs no fold
    p, _ = ds.reflect_step(GEOM, ds.Point2(0.0, 0.001), ds.Point2(0.03, -0.01))
    assert (p.x, p.y) == (0.03, -0.01)


def test_reflect_lands_in_closure():
    g = derive_stream(1, 0).generator()
    for _ in range(2000):
        a = ds.Point2(g.uniform(-0.3, 0.3), g.uniform(-0.1, 0.0))
        b = ds.Point2(a.x + 0.05 * g.standard_normal(), a.y + 0.05 * g.standard_normal())
        p, flag = ds.reflect_step(GEOM, a, b)
        assert ds.in_closure(GEOM, p)


def test_reflect_bad_start():
    with pytest.raises(ParameterError):
        ds.reflect_step(GEOM, ds.Point2(0.05, 0.5), ds.Point2(0.0, 0.0))


def test_resolution_constraint_names_dt():
    with pytest.raises(ParameterError, match="dt <="):
        ds.simulate_domain(GEOM, TimeGrid(1e-4, 10), None, derive_stream(0, 0))
    assert ds.default_dt(GEOM) == pytest.approx(0.0025**2)


def test_path_confined():
    dt = ds.default_dt(GEOM)
    path = ds.simulate_domain(GEOM, TimeGrid(dt, 20_000), None, derive_stream(2, 0))
    assert all(ds.in_closure(GEOM, ds.Point2(a, b)) for a, b in zip(path.x, path.y))
    assert path.bounce_flags == 0
    assert np.array_equal(path.y_proj, np.maximum(path.y, 0))


def _short_msd(eps, fine=1, n_paths=2000, t=0.01, seed=3):
    g = ds.DomainGeometry(CombParams(1.0, 1.0, eps))
    n = int(round(t / (ds.default_dt(g) / fine)))
    X, _, _ = ds.simulate_domain_endpoints(g, TimeGrid(t / n, n), n_paths, seed, threads=1)
    return np.mean(X**2) / t, np.std(X**2) / t / math.sqrt(n_paths)


@pytest.mark.xfail(strict=True, reason="at eps = 0.1 the comb is not yet in the small-eps regime at t = eps^2; "
                                       "msd/t is about 0.81")
def test_short_time_msd_eps_01():
    m, _ = _short_msd(0.1)
    assert m == pytest.approx(1.0, abs=0.10)


@pytest.mark.slow
def test_short_time_msd_converges_in_dt_and_eps():
    coarse, se_c = _short_msd(0.1)
    fine, se_f = _short_msd(0.1, fine=4)
    assert abs(coarse - fine) < 3 * math.hypot(se_c, se_f)
    half, se_h = _short_msd(0.05)
    # tooth trapping near the start point weakens as eps shrinks
    assert half > coarse + 2 * math.hypot(se_c, se_h)
    assert abs(half - LIMIT_MSD_T001) < abs(coarse - LIMIT_MSD_T001)


def test_x_symmetry():
    dt = ds.default_dt(GEOM)
    X, _, _ = ds.simulate_domain_endpoints(GEOM, TimeGrid(dt, 16_000), 2000, 4, threads=1)
    assert abs(X.mean()) < 3 * X.std() / math.sqrt(X.size)


@pytest.mark.slow
def test_spine_fraction_long_run():
    geom = ds.DomainGeometry(CombParams(1.0, 1.0, 0.05))
    dt = ds.default_dt(geom)
    n = int(round(5.0 / dt))
    fr = []
    for i in range(32):
        path = ds.simulate_domain(geom, TimeGrid(dt, n), None, derive_stream(5, i), record_every=n)
        fr.append(path.spine_steps / n)
    assert np.mean(fr) == pytest.approx(0.5, abs=0.05)


@pytest.mark.slow
def test_mouth_exit_refinement():
    # position after a short time from a tooth mouth, default dt vs dt/4
    dt = ds.default_dt(GEOM)
    start = ds.Point2(0.0, 0.0)
    a, _, _ = ds.simulate_domain_endpoints(GEOM, TimeGrid(dt, 1600), 5000, 6, start=start, threads=1)
    b, _, _ = ds.simulate_domain_endpoints(GEOM, TimeGrid(dt / 4, 6400), 5000, 7, start=start, threads=1)
    assert ks_two_sample(a, b)[0] < 0.05


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [0.5, 2.0])
def test_generalized_scaling_same_limit(sigma):
    eps = 0.25
    ref = ds.DomainGeometry(CombParams(1.0, 1.0, eps, 1.0))
    alt = ds.DomainGeometry(CombParams(1.0, 1.0, eps, sigma))
    xs = []
    for k, g in enumerate((ref, alt)):
        dt = ds.default_dt(g)
        n = int(math.ceil(1.0 / dt))
        X, _, _ = ds.simulate_domain_endpoints(g, TimeGrid(1.0 / n, n), 2000, 20 + k, threads=1)
        xs.append(X)
    assert ks_two_sample(*xs)[0] < 0.1
