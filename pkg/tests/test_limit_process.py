import math

import numpy as np
import pytest

from combdiff import limit_process as lp
from combdiff.core import CombParams, ContractError, ParameterError, TimeGrid, derive_stream

E_ABS_B1 = math.sqrt(2.0 / math.pi)
# E[2|N| sqrt(t + N^2) - 2 N^2] at alpha = 1, t = 400 by adaptive quadrature; the
# Laplace inversion of 1/(s^2 + s sqrt(s/2)) gives the same value to 30 digits
OCC_MEAN_T400 = 29.994972894707922
# msd(X)/t at alpha = h0 = 1 from Laplace inversion of 1/(s^2 (1 + tanh(sqrt(2s))/sqrt(2s)))
MSD_T001 = 0.949205331071552
# root of b tan b = 1 - b^2 in (0, pi/2), by brentq
TRIG_BETA_11 = 0.6762531507971835


def test_reflected_stays_in_interval():
    for h0 in (0.3, 1.0, math.inf):
        path, L = lp.simulate_reflected_bm(h0, TimeGrid(1e-3, 2000), derive_stream(1, 0))
        v = path.values()
        assert v.min() >= 0 and v.max() <= h0
        assert L[0] == 0 and np.all(np.diff(L) >= 0)


def test_reflected_stationary_variance():
    # folding is exact at grid times, so a coarse grid samples the t = 50 law
    v = np.array([lp.simulate_reflected_bm(1.0, TimeGrid(0.5, 100), derive_stream(9, i))[0].values()[-1]
                  for i in range(10_000)])
    assert v.var() == pytest.approx(1 / 12, rel=0.05)


@pytest.mark.slow
def test_reflected_local_time_rate():
    rates = {}
    for band in (0.01, 0.02):
        r = [lp.simulate_reflected_bm(1.0, TimeGrid(1e-4, 500_000), derive_stream(7, i), band=band)[1][-1] / 50
             for i in range(40)]
        rates[band] = np.mean(r)
        assert rates[band] == pytest.approx(0.5, rel=0.05)
    assert abs(rates[0.01] - rates[0.02]) < 0.02


def test_time_change_trivial_and_inverse():
    dt = 0.1
    T = lp.build_sticky_time_change(np.zeros(11), 1.0, dt)
    assert np.allclose(T, dt * np.arange(11))
    Lbar = np.array([0, 0, 0.2, 0.2, 0.5, 0.5, 0.5])
    T = lp.build_sticky_time_change(Lbar, 2.0, dt)
    phi = dt * np.arange(7) + Lbar
    t = dt * np.arange(7)
    phi_T = np.interp(T, t, phi)
    assert np.all(phi_T >= t - 1e-12)
    assert np.all(T <= t + 1e-15)
    assert np.all(np.diff(T) <= dt + 1e-15)


def test_time_change_errors():
    with pytest.raises(ContractError):
        lp.build_sticky_time_change([0, 1, 0.5], 1.0, 0.1)
    with pytest.raises(ContractError):
        lp.build_sticky_time_change([0.1, 0.2], 1.0, 0.1)
    with pytest.raises(ParameterError):
        lp.build_sticky_time_change([0, 0.1], 0.0, 0.1)


@pytest.mark.parametrize("local_time", ["band", "bridge"])
def test_limit_path_invariants(local_time):
    p = CombParams(1.0, 1.0)
    dt, n = 1e-3, 5000
    path = lp.simulate_limit_process(p, TimeGrid(dt, n), derive_stream(2, 0), local_time=local_time)
    t = dt * np.arange(n + 1)
    assert np.max(np.abs(path.T + 2 * path.L - t)) <= dt
    assert path.L[0] == path.T[0] == 0
    assert np.all(np.diff(path.L) >= 0) and np.all(np.diff(path.T) >= 0)
    assert np.all((path.Y >= 0) & (path.Y <= 1))
    flat = np.diff(path.L) == 0
    assert np.all(np.diff(path.X)[flat] == 0)


def test_limit_quadratic_variation_matches_local_time():
    p = CombParams(1.5, 1.0)
    dt, n = 1e-4, 100_000
    path = lp.simulate_limit_process(p, TimeGrid(dt, n), derive_stream(12, 0), local_time="bridge")
    qv = np.sum(np.diff(path.X) ** 2)
    assert qv == pytest.approx((2 / 1.5) * path.L[-1], rel=0.05)


def test_local_time_relation_at_zero():
    # 2 dL = alpha 1{Y = 0} dt, with "Y = 0" read as the band [0, 2 sqrt(dt))
    dt, n = 1e-4, 100_000
    band = 2 * math.sqrt(dt)
    for i in range(3):
        P = lp.simulate_limit_process(CombParams(1.0, 1.0), TimeGrid(dt, n), derive_stream(5, i), local_time="bridge")
        at0 = np.sum(P.Y[:-1] < band) * dt
        assert 2 * P.L[-1] == pytest.approx(at0, rel=0.05)


@pytest.mark.slow
def test_time_fraction_long_run():
    T = [lp.simulate_limit_process(CombParams(1.0, 1.0), TimeGrid(1e-3, 100_000), derive_stream(10, i),
                                   local_time="bridge").T[-1] / 100 for i in range(20)]
    assert np.mean(T) == pytest.approx(0.5, rel=0.05)


def test_bridge_local_time_mean():
    # alpha large makes stickiness negligible, so L_1 is the reflected local time
    L = [lp.simulate_limit_process(CombParams(1e6, math.inf), TimeGrid(1e-3, 1000), derive_stream(8, i),
                                   local_time="bridge").L[-1] for i in range(8000)]
    se = np.std(L) / math.sqrt(len(L))
    assert abs(np.mean(L) - E_ABS_B1) < 3 * se


def test_local_time_rule_validation():
    p = CombParams(1.0, 1.0)
    with pytest.raises(ParameterError):
        lp.simulate_limit_process(p, TimeGrid(1e-3, 10), derive_stream(0, 0), local_time="exact")
    with pytest.raises(ParameterError):
        lp.simulate_limit_process(p, TimeGrid(1e-3, 10), derive_stream(0, 0), band=0.1, local_time="bridge")
    assert lp.simulate_limit_process(p, TimeGrid(1e-3, 10), derive_stream(0, 0), local_time="bridge").band == -1.0


def test_endpoints_match_full_paths():
    p = CombParams(1.0, 1.0)
    grid = TimeGrid(1e-3, 200)
    X, Y = lp.simulate_limit_endpoints(p, grid, 5, 77, threads=1, substeps=2)
    for i in range(5):
        path = lp.simulate_limit_process(p, grid, derive_stream(77, i), substeps=2)
        assert (X[i], Y[i]) == (path.X[-1], path.Y[-1])


def test_short_time_msd_exact():
    p = CombParams(1.0, 1.0)
    X, _ = lp.simulate_limit_endpoints(p, TimeGrid(1e-5, 1000), 20_000, 41, threads=1, substeps=4,
                                       local_time="bridge")
    m = np.mean(X**2) / 0.01
    se = np.std(X**2) / 0.01 / math.sqrt(X.size)
    assert abs(m - MSD_T001) < 3 * se


def test_occupation_asymptote_gap():
    # the large-t law (1/alpha) sqrt(8t/pi) overstates the t = 400 mean by 6%
    assert OCC_MEAN_T400 / math.sqrt(8 * 400 / math.pi) == pytest.approx(0.939828, abs=1e-6)


def test_occupation_sampler():
    assert lp.occupation_from_normal(0.0, 1.0, 5.0) == 0.0
    v = lp.sample_occupation_time(0.3, 7.0, derive_stream(1, 1), size=10_000)
    assert np.all((v >= 0) & (v <= 7.0))
    # huge |N| saturates at t without overshooting
    assert lp.occupation_from_normal(1e8, 1.0, 4.0) <= 4.0
    with pytest.raises(ParameterError):
        lp.sample_occupation_time(0.0, 1.0, derive_stream(1, 1))


def test_occupation_mean_against_quadrature():
    v = lp.occupation_samples(1.0, 400.0, 200_000, 13, threads=1)
    se = v.std() / math.sqrt(v.size)
    assert abs(v.mean() - OCC_MEAN_T400) < 3 * se


def test_catalogue():
    p = CombParams(1.0, 1.0)
    cat = lp.generator_catalogue(p)
    assert cat["quadratic"]["a"] == 0.5 and cat["quadratic"]["b"] == -1.0
    assert cat["trig"]["beta"] == pytest.approx(TRIG_BETA_11, abs=1e-14)
    with pytest.raises(ParameterError):
        lp.catalogue_function("cubic", p)
    with pytest.raises(ParameterError):
        lp.catalogue_function("quadratic", CombParams(1.0, math.inf))


@pytest.mark.parametrize("alpha,h0", [(1.0, 1.0), (0.3, 2.0), (5.0, 0.5)])
@pytest.mark.parametrize("f_id", ["quadratic", "trig"])
def test_catalogue_domain_conditions(alpha, h0, f_id):
    p = CombParams(alpha, h0)
    f, Af = lp.catalogue_function(f_id, p)
    x = np.linspace(-1, 1, 7)
    e = 1e-4
    fy = lambda y: (f(x, y + e) - f(x, y - e)) / (2 * e)  # noqa: E731
    fyy = (f(x, 2 * e) - 2 * f(x, e) + f(x, 0.0)) / e**2
    fxx = (f(x + e, 0.0) - 2 * f(x, 0.0) + f(x - e, 0.0)) / e**2
    fy0 = (-3 * f(x, 0.0) + 4 * f(x, e) - f(x, 2 * e)) / (2 * e)
    assert np.allclose(fy(h0), 0, atol=1e-6)
    # one-sided second difference is first order, hence the loose tolerance
    assert np.allclose(fxx + alpha * fy0, fyy, atol=1e-3)
    y = np.full_like(x, 0.3 * h0)
    lap_y = (f(x, y + e) - 2 * f(x, y) + f(x, y - e)) / e**2
    assert np.allclose(Af(x, y), 0.5 * lap_y, atol=1e-5)


def test_trig_beta_constraint():
    b = lp.trig_beta(1.0, 1.0)
    assert abs(b * math.tan(b) - (1 - b * b)) < 1e-10


def test_generator_residual_constant_is_zero():
    s = lp.generator_residual("constant", CombParams(1.0, 1.0), 0.1, 50, 3, dt=1e-3, threads=1)
    assert s.mean == 0.0 and s.variance == 0.0


def test_generator_residual_quadratic_small():
    s = lp.generator_residual("quadratic", CombParams(1.0, 1.0), 0.5, 4000, 21, dt=1e-3, substeps=4,
                              threads=1, local_time="bridge")
    assert abs(s.mean) < 3 * s.stderr + 1e-3


def test_large_alpha_removes_stickiness():
    p = CombParams(1e4, 1.0)
    path = lp.simulate_limit_process(p, TimeGrid(1e-3, 500), derive_stream(4, 0))
    assert np.max(np.abs(path.Y - path.bbar[:501])) < 0.05
