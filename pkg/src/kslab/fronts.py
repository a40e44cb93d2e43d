"""Front positions, speeds and tail diagnostics extracted from trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .theory import ModelParams, c_kappa

__all__ = [
    "FrontTrace",
    "SpeedEstimate",
    "DecayFit",
    "AnalysisError",
    "crossing_positions",
    "track_level",
    "estimate_speed",
    "spreading_interval",
    "behind_front_deviation",
    "shape_ratio_ahead",
    "fit_decay",
]


class AnalysisError(ValueError):
    pass


@dataclass
class FrontTrace:
    """Level-``theta`` crossing positions over time.

    ``right[k]`` is the largest ``x`` with ``u >= theta`` at ``times[k]``,
    ``left[k]`` the smallest; NaN when the level set is empty. Positions
    that fall inside the boundary buffer are clamped to its edge and their
    snapshot index is listed in ``flagged_left`` / ``flagged_right``.
    Empty level sets are flagged on both sides.
    """

    theta: float
    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    flagged_left: list = field(default_factory=list)
    flagged_right: list = field(default_factory=list)

    @property
    def flagged(self) -> list:
        return sorted(set(self.flagged_left) | set(self.flagged_right))

    def valid(self, side="right") -> np.ndarray:
        pos = self.right if side == "right" else self.left
        bad = self.flagged_right if side == "right" else self.flagged_left
        ok = np.isfinite(pos)
        if bad:
            ok[np.asarray(bad, dtype=int)] = False
        return ok


@dataclass(frozen=True)
class SpeedEstimate:
    c_hat: float
    stderr: float
    window: tuple
    n_points: int


@dataclass(frozen=True)
class DecayFit:
    kappa_hat: float
    x_range: tuple
    goodness: float
    n_points: int


def crossing_positions(x, u, theta):
    """Interpolated ``(left, right)`` crossings of level ``theta``; NaN if none."""
    above = np.nonzero(u >= theta)[0]
    if above.size == 0:
        return math.nan, math.nan
    j = above[-1]
    if j == u.size - 1:
        right = x[-1]
    else:
        right = x[j] + (x[j + 1] - x[j]) * (u[j] - theta) / (u[j] - u[j + 1])
    i = above[0]
    if i == 0:
        left = x[0]
    else:
        left = x[i] - (x[i] - x[i - 1]) * (u[i] - theta) / (u[i] - u[i - 1])
    return float(left), float(right)


def track_level(traj, theta=None, buffer=None) -> FrontTrace:
    """Trace the ``theta`` level set through a trajectory.

    ``theta`` defaults to ``a/(2b)``; ``buffer`` to ``10/sqrt(lam)``.
    """
    p = traj.params
    if theta is None:
        theta = 0.5 * p.carrying_capacity
    if not 0 < theta < p.carrying_capacity:
        raise AnalysisError(f"theta must lie in (0, a/b) = (0, {p.carrying_capacity:g})")
    if buffer is None:
        buffer = 10.0 / math.sqrt(p.lam)
    x = traj.grid.x
    lo_edge, hi_edge = x[0] + buffer, x[-1] - buffer
    times, left, right, fl, fr = [], [], [], [], []
    for k, s in enumerate(traj.states):
        l, r = crossing_positions(x, s.u, theta)
        if math.isnan(r):
            fl.append(k)
            fr.append(k)
        else:
            if r > hi_edge:
                fr.append(k)
                r = hi_edge
            if l < lo_edge:
                fl.append(k)
                l = lo_edge
        times.append(s.t)
        left.append(l)
        right.append(r)
    return FrontTrace(theta, np.array(times), np.array(left), np.array(right), fl, fr)


def estimate_speed(trace: FrontTrace, window=None, side="right", min_points=10) -> SpeedEstimate:
    """Least-squares slope of position against time over ``window``.

    Default window is the last half of the traced time span. Left-side
    speeds are reported as signed slopes (negative for an outward front).
    """
    t = trace.times
    if window is None:
        t_lo = t[0] + 0.5 * (t[-1] - t[0])
        window = (t_lo, t[-1])
    t_lo, t_hi = window
    pos = trace.right if side == "right" else trace.left
    m = trace.valid(side) & (t >= t_lo - 1e-9) & (t <= t_hi + 1e-9)
    n = int(m.sum())
    if n < min_points:
        raise AnalysisError(f"only {n} valid front positions in window {window}; need {min_points}")
    fit = stats.linregress(t[m], pos[m])
    return SpeedEstimate(float(fit.slope), float(fit.stderr), (float(t_lo), float(t_hi)), n)


def spreading_interval(traj, speeds, theta=None, late_fraction=0.25):
    """Finite-horizon estimates ``(c_minus_hat, c_plus_hat, flags)``.

    Over the last ``late_fraction`` of the recorded horizon,
    ``c_minus_hat`` is the largest ``c`` in ``speeds`` with
    ``min_{|x| <= c t} u >= theta`` at every late snapshot and
    ``c_plus_hat`` the smallest ``c`` with ``max_{|x| >= c t} u < theta``.
    The gap between the two is the finite-time uncertainty.
    """
    p = traj.params
    if theta is None:
        theta = 0.5 * p.carrying_capacity
    x = np.abs(traj.grid.x)
    t = traj.times
    if np.all(traj.states[0].u == 0):
        raise AnalysisError("zero initial data: spreading speeds are undefined")
    late = np.nonzero(t >= t[-1] - late_fraction * (t[-1] - t[0]))[0]
    late = late[t[late] > 0]
    if late.size == 0:
        raise AnalysisError("no snapshots with t > 0 in the late window")
    speeds = np.sort(np.asarray(speeds, dtype=float))
    inner_ok, outer_ok = [], []
    for c in speeds:
        ok_in = ok_out = True
        for k in late:
            u, r = traj.states[k].u, c * t[k]
            inside = x <= r
            outside = ~inside
            if not inside.any() or u[inside].min() < theta:
                ok_in = False
            if outside.any() and u[outside].max() >= theta:
                ok_out = False
        inner_ok.append(ok_in)
        outer_ok.append(ok_out)
    inner_ok, outer_ok = np.array(inner_ok), np.array(outer_ok)
    flags = []
    c_minus = float(speeds[inner_ok].max()) if inner_ok.any() else math.nan
    c_plus = float(speeds[outer_ok].min()) if outer_ok.any() else math.nan
    if math.isnan(c_minus):
        flags.append("no speed in grid keeps the interior above theta")
    if math.isnan(c_plus):
        flags.append("no speed in grid keeps the exterior below theta")
    if not (math.isnan(c_minus) or math.isnan(c_plus)):
        if c_plus - c_minus > 0.1 * max(c_plus, 1e-12):
            flags.append("horizon too short: interval still wide")
    return c_minus, c_plus, flags


def behind_front_deviation(traj, c, p: ModelParams | None = None, t=None, one_sided=False) -> float:
    """``max |u - a/b|`` over ``|x| <= c t`` (or ``x <= c t``) at time ``t``."""
    p = traj.params if p is None else p
    if c >= 2.0 * math.sqrt(p.a):
        raise AnalysisError("behind-front convergence is only claimed for c < 2 sqrt(a)")
    s = traj.final if t is None else traj.at(t)
    x = traj.grid.x
    region = (x <= c * s.t) if one_sided else (np.abs(x) <= c * s.t)
    if not region.any():
        return 0.0
    return float(np.max(np.abs(s.u[region] - p.carrying_capacity)))


def shape_ratio_ahead(traj, kappa, p: ModelParams | None = None, eps=0.1, t=None,
                      floor=1e-8, buffer=None):
    """``max |u / exp(-kappa (x - c_kappa t)) - 1|`` for ``x >= (c_kappa + eps) t``.

    Restricted to where the reference exponential is at least ``floor`` and
    outside the boundary buffer. Returns ``(deviation, (x_lo, x_hi))``.
    """
    p = traj.params if p is None else p
    if not 0 < kappa < min(math.sqrt(p.a), math.sqrt(p.lam)):
        raise AnalysisError("shape convergence needs 0 < kappa < min(sqrt(a), sqrt(lam))")
    if buffer is None:
        buffer = 10.0 / math.sqrt(p.lam)
    s = traj.final if t is None else traj.at(t)
    x = traj.grid.x
    ck = c_kappa(p, kappa)
    ref = np.exp(-kappa * (x - ck * s.t))
    m = (x >= (ck + eps) * s.t) & (ref >= floor) & (x <= x[-1] - buffer)
    if not m.any():
        raise AnalysisError("empty comparison window")
    dev = np.abs(s.u[m] / ref[m] - 1.0)
    return float(dev.max()), (float(x[m].min()), float(x[m].max()))


def fit_decay(x, u, u_lo, u_hi, buffer=0.0, min_points=10) -> DecayFit:
    """Log-linear fit of the right tail, ``u ~ exp(-kappa x)``.

    Uses nodes right of the maximum with ``u_lo <= u <= u_hi`` and at
    least ``buffer`` from the right end.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not 0 < u_lo < u_hi:
        raise AnalysisError("need 0 < u_lo < u_hi")
    right = np.arange(u.size) >= int(np.argmax(u))
    m = right & (u >= u_lo) & (u <= u_hi) & (x <= x[-1] - buffer)
    n = int(m.sum())
    if n < min_points:
        raise AnalysisError(f"only {n} nodes in the fit range; need {min_points}")
    xs, ly = x[m], np.log(u[m])
    if np.ptp(ly) == 0.0:
        raise AnalysisError("field is constant over the fit range")
    slope, icpt = np.polyfit(xs, ly, 1)
    resid = ly - (slope * xs + icpt)
    return DecayFit(float(-slope), (float(xs.min()), float(xs.max())), float(np.abs(resid).max()), n)
