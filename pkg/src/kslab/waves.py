"""Traveling-wave profiles by frozen-coefficient relaxation and fixed-point iteration.

In the frame moving with speed ``c = c_kappa`` a wave ``U(x - c t)`` solves

    0 = U'' + (c - chi Psi'(x; U)) U' + (a - chi lam Psi(x; U) - (b - chi mu) U) U.

Freezing ``Psi`` at some ``u`` gives a scalar parabolic problem whose
solution started from the super-solution ``U_plus = min(a/(b - chi mu),
exp(-kappa x))`` decreases monotonically to a steady state ``T(u)``. The
wave is a fixed point of ``T``.

The discrete relaxation is a linearly implicit pseudo-time march

    (1/dt + K - L_h) U_new = (1/dt + K) U + f(U),

with the 3-point centred operator ``L_h`` and ``K`` large enough that the
right side is nondecreasing in ``U``. On grids with
``h (c + chi max|Psi'|) < 2`` the matrix is an M-matrix, the update is
order preserving, and the monotone decrease from ``U_plus`` and the lower
bound by the sub-solution ``U_minus`` hold exactly on the grid.

Boundary conditions on ``[x_0, x_N]``: zero slope on the left (the
plateau) and ``U(x_N) = exp(-kappa x_N)`` on the right (the prescribed
tail). The kernel sees ``U`` extended by its left value and by
``U(x_N) exp(-kappa (y - x_N))``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .kernel import Grid, psi_fast
from .theory import ModelParams, c_kappa, global_existence, kappa_for_speed, speed_constants

__all__ = [
    "WaveError",
    "WaveEnvelopes",
    "FixedPointConfig",
    "WaveProfile",
    "ProfileDiagnostics",
    "default_kappa_tilde",
    "grid_decay_rate",
    "make_envelopes",
    "wave_grid",
    "wave_tails",
    "relax_to_steady",
    "fixed_point_wave",
    "verify_profile",
    "min_speed_scan",
    "self_consistency",
]

logger = logging.getLogger(__name__)


class WaveError(RuntimeError):
    pass


def default_kappa_tilde(p: ModelParams, kappa: float) -> float:
    """Midpoint of the admissible interval ``(kappa, min(2 kappa, sqrt a, sqrt lam))``."""
    top = min(2.0 * kappa, math.sqrt(p.a), math.sqrt(p.lam))
    return kappa + 0.5 * (top - kappa)


def grid_decay_rate(p: ModelParams, kappa: float, h: float) -> float:
    """Decay rate seen by the 3-point scheme at speed ``c_kappa``.

    Smaller root of ``(2 cosh(k h) - 2)/h^2 - c sinh(k h)/h + a = 0``;
    equals ``kappa + O(h^2)``.
    """
    c = c_kappa(p, kappa)

    def char(k):
        return (2.0 * math.cosh(k * h) - 2.0) / (h * h) - c * math.sinh(k * h) / h + p.a

    return brentq(char, 0.0, kappa + 0.5 * (p.a / kappa - kappa), xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class WaveEnvelopes:
    """``U_plus = min(plateau, e^{-k x})`` and ``U_minus = max(0, e^{-k x} - D e^{-kt x})``.

    ``k`` is ``kappa_grid``, the scheme's own decay rate for ``kappa``
    (``kappa`` itself when no grid is involved); ``kt`` is ``kappa_tilde``.
    """

    kappa: float
    kappa_tilde: float
    D: float
    plateau: float          # a/(b - chi mu)
    kappa_grid: float | None = None

    @property
    def rate(self) -> float:
        return self.kappa if self.kappa_grid is None else self.kappa_grid

    def upper(self, x):
        with np.errstate(over="ignore"):
            return np.minimum(self.plateau, np.exp(-self.rate * np.asarray(x)))

    def lower(self, x):
        x = np.asarray(x)
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp(-self.rate * x) - self.D * np.exp(-self.kappa_tilde * x)
        return np.where(x > self.support_start, np.maximum(val, 0.0), 0.0)

    @property
    def support_start(self) -> float:
        """``U_minus > 0`` exactly for ``x > ln(D)/(kappa_tilde - k)``."""
        return math.log(self.D) / (self.kappa_tilde - self.rate)


@dataclass(frozen=True)
class FixedPointConfig:
    steady_tol: float = 1e-8
    fp_tol: float = 1e-6
    max_outer_iters: int = 50
    relax_dt: float = 2.0
    relax_horizon: float = 5000.0
    omega: float = 1.0
    monotone_tol: float = 1e-9
    max_D: float = 2.0 ** 30

    def __post_init__(self):
        for name in ("steady_tol", "fp_tol", "relax_dt", "relax_horizon", "monotone_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class ProfileDiagnostics:
    residual: float
    tail_ratio_deviation: float
    tail_window: tuple
    left_value: float
    left_deviation: float
    envelope_margin: float

    def as_dict(self):
        return dict(
            residual=self.residual,
            tail_ratio_deviation=self.tail_ratio_deviation,
            left_value=self.left_value,
            left_deviation=self.left_deviation,
            envelope_margin=self.envelope_margin,
        )


@dataclass
class WaveProfile:
    grid: Grid
    params: ModelParams
    kappa: float
    speed: float
    U: np.ndarray
    V: np.ndarray
    V_x: np.ndarray
    envelopes: WaveEnvelopes
    outer_iters: int = 0
    history: list = field(default_factory=list)
    diagnostics: ProfileDiagnostics | None = None

    @property
    def elliptic_residual(self):
        return None if self.diagnostics is None else self.diagnostics.residual

    @property
    def right_tail_ratio_deviation(self):
        return None if self.diagnostics is None else self.diagnostics.tail_ratio_deviation

    @property
    def left_value(self):
        return None if self.diagnostics is None else self.diagnostics.left_value


def wave_grid(kappa: float, h: float, half_length=None, center=0.0) -> Grid:
    """Grid with ``half_length >= 40/kappa`` (both tails resolved)."""
    if half_length is None:
        half_length = 40.0 / kappa
    return Grid.from_spacing(half_length, h, center)


def wave_tails(U, p: ModelParams, kappa: float):
    """Boundary integrals for ``U`` extended by a constant on the left and
    by ``U(x_N) exp(-kappa (y - x_N))`` on the right."""
    s = math.sqrt(p.lam)
    return U[0] / s, U[-1] / (s + kappa)


def _check_kappa(p: ModelParams, kappa: float):
    if not global_existence(p):
        raise WaveError(f"traveling waves are constructed only for chi*mu < b "
                        f"(chi*mu={p.chi_mu:g}, b={p.b:g})")
    top = min(math.sqrt(p.a), math.sqrt(p.lam))
    if not 0 < kappa < top:
        raise WaveError(f"kappa must lie in (0, min(sqrt a, sqrt lam)) = (0, {top:.6g}), got {kappa}")


def _centred(U, h):
    d2 = np.zeros_like(U)
    d1 = np.zeros_like(U)
    d2[1:-1] = (U[2:] - 2.0 * U[1:-1] + U[:-2]) / (h * h)
    d1[1:-1] = (U[2:] - U[:-2]) / (2.0 * h)
    return d2, d1


def _is_subsolution(grid, env, p, psi_upper, kappa):
    """Check ``U_minus`` is a discrete sub-solution for every frozen ``u <= U_plus``.

    ``Psi(u) <= Psi(U_plus)`` and ``|Psi'(u)| <= sqrt(lam) Psi(u)``, so the
    worst case of the frozen operator at ``U_minus`` is bounded below by
    ``D2 + c D1 - chi sqrt(lam) Psi_+ |D1| + (a - chi lam Psi_+ - beta U) U``.
    """
    x = grid.x
    h = grid.h
    lo = env.lower(x)
    if np.any(lo > env.upper(x)):
        return False
    if lo[-2] <= 0.0:
        return False    # support does not reach into the domain
    c = c_kappa(p, kappa)
    beta = p.b - p.chi_mu
    d2, d1 = _centred(lo, h)
    val = (d2 + c * d1 - p.chi * math.sqrt(p.lam) * psi_upper * np.abs(d1)
           + (p.a - p.chi * p.lam * psi_upper - beta * lo) * lo)
    active = lo[1:-1] > 0.0
    return bool(np.all(val[1:-1][active] >= -1e-10 * lo[1:-1][active]))


def make_envelopes(grid: Grid, p: ModelParams, kappa: float, kappa_tilde=None,
                   max_D=2.0 ** 30) -> WaveEnvelopes:
    """Envelopes with the smallest power-of-two ``D`` making ``U_minus`` a
    discrete sub-solution."""
    _check_kappa(p, kappa)
    if kappa_tilde is None:
        kappa_tilde = default_kappa_tilde(p, kappa)
    top = min(math.sqrt(p.a), math.sqrt(p.lam))
    if not (kappa < kappa_tilde < top and kappa_tilde < 2.0 * kappa):
        raise WaveError("need kappa < kappa_tilde < min(sqrt a, sqrt lam) and kappa_tilde < 2 kappa")
    plateau = p.sup_bound
    k_grid = grid_decay_rate(p, kappa, grid.h)
    up = WaveEnvelopes(kappa, kappa_tilde, 1.0, plateau, k_grid).upper(grid.x)
    psi_upper, _ = psi_fast(grid, up, p, wave_tails(up, p, k_grid))
    D = 1.0
    while D <= max_D:
        env = WaveEnvelopes(kappa, kappa_tilde, D, plateau, k_grid)
        if _is_subsolution(grid, env, p, psi_upper, kappa):
            return env
        D *= 2.0
    raise WaveError(f"no D <= {max_D:g} makes U_minus a discrete sub-solution on this grid")


def relax_to_steady(grid: Grid, u_frozen, kappa: float, p: ModelParams,
                    cfg: FixedPointConfig = FixedPointConfig(), env: WaveEnvelopes | None = None):
    """Steady state of the frozen-coefficient problem started from ``U_plus``.

    Returns ``(U, info)``; ``info`` holds the pseudo-time reached and the
    number of steps. Raises :class:`WaveError` if the march fails to
    decrease monotonically or does not settle within ``relax_horizon``.
    """
    _check_kappa(p, kappa)
    if env is None:
        env = make_envelopes(grid, p, kappa)
    x = grid.x
    h = grid.h
    upper = env.upper(x)
    lower = env.lower(x)

    u = grid.check(u_frozen, "u_frozen")
    viol = max(float((u - upper).max()), float(-u.min()))
    if viol > 1e-12:
        warnings.warn(f"frozen density leaves the envelope by {viol:.2e}; clamping",
                      RuntimeWarning, stacklevel=2)
    u = np.clip(u, 0.0, upper)

    psi, psix = psi_fast(grid, u, p, wave_tails(u, p, env.rate))
    c = c_kappa(p, kappa)
    beta = p.b - p.chi_mu
    r = p.a - p.chi * p.lam * psi
    drift = c - p.chi * psix
    if h * float(np.abs(drift).max()) >= 2.0:
        raise WaveError(f"grid too coarse for a monotone scheme: h={h:g}, max drift {np.abs(drift).max():.3g}")

    dt = cfg.relax_dt
    shift = max(0.0, float(np.max(2.0 * beta * upper.max() - r)))
    diag0 = 1.0 / dt + shift
    n = x.size
    ab = np.zeros((3, n))
    lower_off = -(1.0 / (h * h) - drift / (2.0 * h))    # coefficient of U[i-1] in row i
    upper_off = -(1.0 / (h * h) + drift / (2.0 * h))    # coefficient of U[i+1] in row i
    ab[1, :] = diag0 + 2.0 / (h * h)
    ab[0, 1:] = upper_off[:-1]
    ab[2, :-1] = lower_off[1:]
    # left: zero slope via ghost U[-1] = U[1]
    ab[0, 1] = -2.0 / (h * h)
    # right: Dirichlet
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    right_value = upper[-1]

    U = upper.copy()
    t = 0.0
    steps = 0
    max_steps = int(math.ceil(cfg.relax_horizon / dt))
    while True:
        rhs = diag0 * U + (r - beta * U) * U
        rhs[-1] = right_value
        new = solve_banded((1, 1), ab, rhs, check_finite=False)
        steps += 1
        t += dt
        incr = new - U
        if incr.max() > cfg.monotone_tol:
            raise WaveError(f"relaxation increased by {incr.max():.2e} at t={t:g}; "
                            "discretization too coarse for the comparison principle")
        if np.any(new < lower - cfg.monotone_tol):
            raise WaveError(f"relaxation dropped below U_minus by "
                            f"{float((lower - new).max()):.2e} at t={t:g}")
        U = new
        rate = float(np.abs(incr).max()) / dt
        if rate < cfg.steady_tol:
            break
        if steps >= max_steps:
            raise WaveError(f"relaxation not steady by t={t:g} (rate {rate:.2e})")
    return U, dict(t=t, steps=steps)


def fixed_point_wave(kappa: float, p: ModelParams, grid: Grid | None = None,
                     cfg: FixedPointConfig = FixedPointConfig(), h: float = 0.05,
                     kappa_tilde=None) -> WaveProfile:
    """Iterate ``u <- (1 - omega) u + omega T(u)`` from ``U_plus`` to a fixed point."""
    _check_kappa(p, kappa)
    if grid is None:
        grid = wave_grid(kappa, h)
    env = make_envelopes(grid, p, kappa, kappa_tilde, cfg.max_D)
    x = grid.x
    upper, lower = env.upper(x), env.lower(x)
    u = upper.copy()
    omega = cfg.omega
    history = []
    for it in range(1, cfg.max_outer_iters + 1):
        Tu, _ = relax_to_steady(grid, u, kappa, p, cfg, env)
        new = (1.0 - omega) * u + omega * Tu
        gap = float(np.abs(new - u).max())
        if history and gap > history[-1] and omega > 1.0 / 64:
            omega *= 0.5
            logger.info("fixed point: gap grew to %.3e, damping omega -> %g", gap, omega)
        history.append(gap)
        u = new
        if np.any(u > upper + cfg.monotone_tol) or np.any(u < lower - cfg.monotone_tol):
            raise WaveError(f"iterate {it} left the envelope")
        logger.debug("fixed point iter %d: gap %.3e", it, gap)
        if gap < cfg.fp_tol:
            break
    else:
        raise WaveError(f"no fixed point within {cfg.max_outer_iters} iterations "
                        f"(last gap {history[-1]:.3e})")
    V, Vx = psi_fast(grid, u, p, wave_tails(u, p, env.rate))
    w = WaveProfile(grid, p, kappa, c_kappa(p, kappa), u, V, Vx, env, it, history)
    w.diagnostics = verify_profile(w, p)
    return w


def _fourth_order(U, h):
    d2 = (-U[4:] + 16.0 * U[3:-1] - 30.0 * U[2:-2] + 16.0 * U[1:-3] - U[:-4]) / (12.0 * h * h)
    d1 = (-U[4:] + 8.0 * U[3:-1] - 8.0 * U[1:-3] + U[:-4]) / (12.0 * h)
    return d2, d1


def verify_profile(w: WaveProfile, p: ModelParams | None = None, tail_window=None,
                   left_probe=None) -> ProfileDiagnostics:
    """Diagnostics of a candidate profile; never raises on a bad profile.

    The residual of the wave equation is taken with 5-point (fourth-order)
    differences, independent of the 3-point stencil used to build the
    profile, so for a converged profile it measures the O(h^2)
    discretization error. The tail window defaults to the nodes where
    ``D exp(-(kappa_tilde - kappa) x) <= 1e-3``, up to a ``10/sqrt(lam)``
    buffer from the right end; the left probe to ``x_0 + 10/sqrt(lam)``.
    """
    p = w.params if p is None else p
    grid = w.grid
    x, h = grid.x, grid.h
    U = w.U
    psi, psix = psi_fast(grid, U, p, wave_tails(U, p, w.envelopes.rate))
    d2, d1 = _fourth_order(U, h)
    Ui = U[2:-2]
    res = (d2 + (w.speed - p.chi * psix[2:-2]) * d1
           + (p.a - p.chi * p.lam * psi[2:-2] - (p.b - p.chi_mu) * Ui) * Ui)
    residual = float(np.abs(res).max())

    buf = 10.0 / math.sqrt(p.lam)
    if tail_window is None:
        # start where the sub-solution already pins the ratio within 1e-3
        env = w.envelopes
        start = math.log(1e3 * env.D) / (env.kappa_tilde - env.rate)
        if not start < x[-1] - buf:
            start = grid.center
        tail_window = (max(start, grid.center), x[-1] - buf)
    m = (x >= tail_window[0]) & (x <= tail_window[1])
    ratio = U[m] / np.exp(-w.kappa * x[m])
    tail_dev = float(np.abs(ratio - 1.0).max()) if m.any() else math.nan

    if left_probe is None:
        left_probe = x[0] + buf
    left_value = float(np.interp(left_probe, x, U))
    margin = float(min((U - w.envelopes.lower(x)).min(), (w.envelopes.upper(x) - U).min()))
    return ProfileDiagnostics(residual, tail_dev, tuple(map(float, tail_window)),
                              left_value, abs(left_value - p.carrying_capacity), margin)


def min_speed_scan(p: ModelParams, speeds, cfg: FixedPointConfig = FixedPointConfig(),
                   h: float = 0.05, solve: bool = True, rel_tol: float = 1e-9):
    """Classify requested speeds and build waves where existence is proven.

    Each entry is a dict with ``speed``, ``status`` and, for solved
    entries, ``kappa`` and ``profile``. Statuses:

    ``excluded``  c < 2 sqrt(a); no wave with a positive left limit exists; this is
                  known analytically, not a numerical finding.
    ``open``      2 sqrt(a) <= c < c** (only possible for lam < a); outside proven theory.
    ``boundary``  c == c**; solved at a slightly smaller decay rate, flagged sensitive.
    ``solved`` / ``failed``  c > c**.
    """
    sc = speed_constants(p)
    c0, css = sc.c0_star, sc.c_star_star
    top = min(math.sqrt(p.a), math.sqrt(p.lam))
    out = []
    for c in speeds:
        c = float(c)
        entry = dict(speed=c)
        if c < c0 * (1.0 - rel_tol):
            entry["status"] = "excluded"
            entry["note"] = "no wave with speed below 2 sqrt(a) (excluded by theory)"
        elif c < css * (1.0 - rel_tol):
            entry["status"] = "open"
            entry["kappa"] = kappa_for_speed(p, c)
            entry["note"] = "between 2 sqrt(a) and c**: outside proven theory"
        else:
            boundary = c <= css * (1.0 + rel_tol)
            kappa = top * (1.0 - 1e-3) if boundary else kappa_for_speed(p, c)
            entry["kappa"] = kappa
            entry["status"] = "boundary" if boundary else "solved"
            if boundary:
                entry["note"] = "c = c**: needs a limiting argument; solved at kappa slightly below the edge"
            if solve:
                try:
                    entry["profile"] = fixed_point_wave(kappa, p, cfg=cfg, h=h)
                except WaveError as exc:
                    entry["status"] = "failed" if not boundary else "boundary-failed"
                    entry["note"] = str(exc)
        out.append(entry)
    return out


def self_consistency(w: WaveProfile, T: float = 10.0, dt: float = 0.005, pad=None):
    """Sup-norm gap between the profile advected by the full solver for time
    ``T`` and the same profile translated by ``c T``.

    The profile is embedded in a symmetric lab-frame domain wide enough for
    the translation, extended by its left value and by ``exp(-kappa x)``.
    """
    from .solver import SolverConfig, simulate

    p = w.params
    xg = w.grid.x
    shift = w.speed * T
    half = max(abs(xg[0]), abs(xg[-1]) + shift) if pad is None else pad
    lab = Grid.from_spacing(half, w.grid.h)

    def embed(x):
        x = np.asarray(x)
        with np.errstate(over="ignore"):
            far = np.minimum(w.U[0], w.U[-1] * np.exp(-w.kappa * (x - xg[-1])))
        inside = np.interp(x, xg, w.U)
        return np.where(x < xg[0], w.U[0], np.where(x > xg[-1], far, inside))

    u0 = embed(lab.x)
    cfg = SolverConfig(dt=dt, t_end=T, scheme="imex2", tail="constant-left",
                       observer_stride=10 ** 9)
    traj = simulate(u0, lab, p, cfg, check_invariants=False)
    target = embed(lab.x - shift)
    m = (lab.x >= xg[0] + shift) & (lab.x <= xg[-1])
    return float(np.abs(traj.final.u[m] - target[m]).max())
