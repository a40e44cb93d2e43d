import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import synthetic_trajectory
from kslab.fronts import (AnalysisError, behind_front_deviation, crossing_positions, estimate_speed,
                          fit_decay, shape_ratio_ahead, spreading_interval, track_level)
from kslab.kernel import Grid
from kslab.theory import ModelParams, c_kappa

P = ModelParams(chi=0.3, a=1.0, b=1.0, lam=1.0, mu=1.0)


def linear_front_traj(c=1.5, times=np.arange(0, 20.5, 0.5), grid=Grid(60.0, 1200)):
    fields = [np.clip(1.0 - (grid.x - c * t), 0.0, 1.0) for t in times]
    return synthetic_trajectory(fields, times, grid, P)


def test_crossings_interpolate():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    u = np.array([0.0, 1.0, 1.0, 0.0])
    assert crossing_positions(x, u, 0.25) == (0.25, 2.75)
    assert all(math.isnan(v) for v in crossing_positions(x, u, 2.0))


def test_linear_front_exact():
    tr = track_level(linear_front_traj(), theta=0.5)
    ok = tr.valid("right")
    assert np.allclose(tr.right[ok], 1.5 * tr.times[ok] + 0.5, atol=1e-12)
    est = estimate_speed(tr)
    assert est.c_hat == pytest.approx(1.5, abs=1e-12)
    assert est.stderr < 1e-12
    # the plateau reaches the left end: left positions flagged, right ones not
    assert len(tr.flagged_left) == len(tr.times) and not tr.flagged_right


def test_equilibrium_flags_both_sides():
    g = Grid(30.0, 300)
    traj = synthetic_trajectory([np.ones(g.n_nodes)] * 3, [0.0, 1.0, 2.0], g, P)
    tr = track_level(traj)
    assert tr.flagged == [0, 1, 2]
    assert np.all(tr.right == g.x[-1] - 10.0) and np.all(tr.left == g.x[0] + 10.0)


def test_empty_level_set_flagged():
    g = Grid(30.0, 300)
    traj = synthetic_trajectory([np.full(g.n_nodes, 0.1)] * 2, [0.0, 1.0], g, P)
    tr = track_level(traj, theta=0.5)
    assert tr.flagged == [0, 1] and np.all(np.isnan(tr.right))
    with pytest.raises(AnalysisError):
        estimate_speed(tr)


def test_theta_range():
    with pytest.raises(AnalysisError):
        track_level(linear_front_traj(), theta=1.0)


def test_clipped_exponential_translation():
    k = 0.5
    ck = c_kappa(P, k)
    g = Grid(80.0, 1600)
    times = np.arange(0.0, 20.01, 0.5)
    fields = [np.minimum(1.0, np.exp(-k * (g.x - ck * t))) for t in times]
    tr = track_level(synthetic_trajectory(fields, times, g, P), theta=0.5)
    assert estimate_speed(tr).c_hat == pytest.approx(ck, abs=1e-4)


def test_speed_with_noise_converges():
    rng = np.random.default_rng(1)
    errs = []
    for n in (50, 5000):
        t = np.linspace(0, 100, n)
        from kslab.fronts import FrontTrace
        pos = 2.0 * t + 3.0 + rng.normal(0, 0.5, n)
        tr = FrontTrace(0.5, t, -pos, pos)
        est = estimate_speed(tr, window=(0, 100))
        errs.append(abs(est.c_hat - 2.0))
        assert abs(est.c_hat - 2.0) < 5 * est.stderr
    assert errs[1] < errs[0]


def test_speed_needs_points():
    tr = track_level(linear_front_traj(times=np.arange(0, 3, 0.5)))
    with pytest.raises(AnalysisError, match="need 10"):
        estimate_speed(tr)


@settings(max_examples=20, deadline=None)
@given(shift=st.integers(-100, 100))
def test_translation_equivariance(shift):
    g = Grid(60.0, 1200)
    times = np.arange(0, 20.5, 0.5)
    base = [np.clip(1.0 - np.abs(g.x) + 1.2 * t, 0.0, 1.0) for t in times]
    moved = [np.roll(f, shift) for f in base]      # bumps stay clear of both ends
    d = shift * g.h
    a = track_level(synthetic_trajectory(base, times, g, P), theta=0.5, buffer=5.0)
    b = track_level(synthetic_trajectory(moved, times, g, P), theta=0.5, buffer=5.0)
    assert np.allclose(b.right, a.right + d, atol=1e-9)
    assert np.allclose(b.left, a.left + d, atol=1e-9)
    assert estimate_speed(b).c_hat == pytest.approx(estimate_speed(a).c_hat, abs=1e-10)


def test_reflection_swaps_sides():
    g = Grid(60.0, 1200)
    times = np.arange(0, 20.5, 0.5)
    fields = [np.clip(1.0 - np.abs(g.x - 3.0) + 1.2 * t, 0.0, 1.0) for t in times]
    a = track_level(synthetic_trajectory(fields, times, g, P), buffer=5.0)
    b = track_level(synthetic_trajectory([f[::-1] for f in fields], times, g, P), buffer=5.0)
    assert np.allclose(b.left, -a.right, atol=1e-9) and np.allclose(b.right, -a.left, atol=1e-9)
    assert estimate_speed(b, side="left").c_hat == pytest.approx(-estimate_speed(a).c_hat, abs=1e-10)


def test_spreading_interval_synthetic():
    # plateau over |x| <= 2t + 1 with a unit ramp: crossing of 0.5 at 2t + 1.5
    g = Grid(100.0, 2000)
    times = np.arange(0, 40.5, 0.5)
    fields = [np.clip(2.0 * t + 2.0 - np.abs(g.x), 0.0, 1.0) for t in times]
    traj = synthetic_trajectory(fields, times, g, P)
    lo, hi, flags = spreading_interval(traj, np.round(np.arange(1.8, 2.2001, 0.01), 10))
    # late window t in [30, 40]: interior holds for c <= 2 + 1.5/40, exterior
    # (strictly below theta) for c > 2 + 1.5/30
    assert lo == pytest.approx(2.03) and hi == pytest.approx(2.06)
    assert not flags


def test_spreading_interval_errors_and_flags():
    g = Grid(50.0, 500)
    zero = synthetic_trajectory([np.zeros(g.n_nodes)] * 2, [0.0, 1.0], g, P)
    with pytest.raises(AnalysisError, match="zero initial"):
        spreading_interval(zero, [1.0, 2.0])
    # wide ramp, short horizon: interval [3.5, 4] is too wide to be conclusive
    times = np.arange(0, 4.5, 0.5)
    fields = [np.clip((2.0 * t + 11.0 - np.abs(g.x)) / 10.0, 0.0, 1.0) for t in times]
    lo, hi, flags = spreading_interval(synthetic_trajectory(fields, times, g, P),
                                       np.round(np.arange(1.0, 5.01, 0.05), 10))
    assert lo == pytest.approx(3.5) and hi == pytest.approx(4.0)
    assert any("horizon" in f for f in flags)


def test_behind_front_deviation():
    g = Grid(50.0, 500)
    traj = synthetic_trajectory([np.ones(g.n_nodes)] * 2, [0.0, 10.0], g, P)
    assert behind_front_deviation(traj, 1.0) == 0.0
    with pytest.raises(AnalysisError):
        behind_front_deviation(traj, 2.0)
    bumpy = synthetic_trajectory([np.ones(g.n_nodes), 1.0 + 0.1 * np.exp(-(g.x - 5) ** 2)],
                                 [0.0, 10.0], g, P)
    assert behind_front_deviation(bumpy, 1.0) == pytest.approx(0.1, rel=1e-12)


def test_shape_ratio_exact_ansatz():
    k = 0.5
    ck = c_kappa(P, k)
    g = Grid(150.0, 3000)
    times = [0.0, 10.0, 20.0]
    fields = [np.exp(-k * (g.x - ck * t)) for t in times]
    traj = synthetic_trajectory(fields, times, g, P)
    dev, (xl, xh) = shape_ratio_ahead(traj, k)
    assert dev <= 1e-12
    assert xl >= (ck + 0.1) * 20.0 and np.exp(-k * (xh - ck * 20.0)) >= 1e-8
    with pytest.raises(AnalysisError):
        shape_ratio_ahead(traj, 1.0)        # kappa >= sqrt(lam)


def test_fit_decay():
    x = np.linspace(0, 40, 801)
    f = fit_decay(x, np.exp(-0.5 * x), 1e-8, 1.0)
    assert f.kappa_hat == pytest.approx(0.5, abs=1e-10)
    mixed = np.exp(-0.5 * x) + 0.01 * np.exp(-x)
    shallow = fit_decay(x, mixed, 1e-2, 1.0).kappa_hat
    deep = fit_decay(x, mixed, 1e-8, 1e-5).kappa_hat
    assert abs(deep - 0.5) < abs(shallow - 0.5) and abs(deep - 0.5) < 1e-6
    with pytest.raises(AnalysisError):
        fit_decay(x, np.full(x.size, 0.5), 0.1, 1.0)
    with pytest.raises(AnalysisError, match="need 10"):
        fit_decay(x, np.exp(-0.5 * x), 0.5, 0.51)
