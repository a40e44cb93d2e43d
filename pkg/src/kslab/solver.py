"""Time integration of ``u_t = u_xx - chi (u v_x)_x + u (a - b u)`` with ``v = Psi(.; u)``.

Vertex-centred finite volumes on a :class:`~kslab.kernel.Grid`: node ``i``
owns the dual cell ``[x_{i-1/2}, x_{i+1/2}]`` (half cells at the two ends),
fluxes live on faces, and the ends are zero-flux. The chemotactic flux at
face ``i+1/2`` is ``chi * (u_i + u_{i+1})/2 * (v_x,i + v_x,i+1)/2``. The
chemical is recomputed from ``u`` with :func:`~kslab.kernel.psi_fast` at
every stage, never carried over.

Schemes
-------
``explicit``
    forward Euler for everything; needs ``dt <= h^2/2``.
``imex``
    diffusion backward Euler, transport and reaction forward Euler.
``imex2``
    the two-stage, L-stable, second-order IMEX Runge-Kutta of Ascher,
    Ruuth and Spiteri (ARS(2,2,2)), same implicit/explicit split.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .kernel import Grid, TailPolicy, psi_fast
from .theory import ModelParams, global_existence

__all__ = [
    "SCHEMES",
    "SolverConfig",
    "State",
    "Trajectory",
    "SolverError",
    "StabilityError",
    "NegativityError",
    "InvariantViolation",
    "make_initial",
    "make_state",
    "stable_dt",
    "step",
    "simulate",
]

logger = logging.getLogger(__name__)

SCHEMES = ("explicit", "imex", "imex2")

# ARS(2,2,2)
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


class SolverError(RuntimeError):
    """Raised when a step cannot be taken; carries the simulation time."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"{message} (t={t:.6g})"
        super().__init__(message)


class StabilityError(SolverError):
    pass


class NegativityError(SolverError):
    pass


class InvariantViolation(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    ``dt`` is the largest step taken; the step actually used is
    ``min(dt, cfl_safety * stable_dt)`` and the last step is shortened to
    land on ``t_end``.
    """

    dt: float = 0.02
    t_end: float = 10.0
    cfl_safety: float = 0.9
    scheme: str = "imex2"
    tail: TailPolicy = TailPolicy.ZERO
    observer_stride: int = 25
    neg_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.observer_stride) != self.observer_stride or self.observer_stride < 1:
            raise ValueError("observer_stride must be a positive integer")
        if not self.neg_tolerance >= 0:
            raise ValueError("neg_tolerance must be nonnegative")
        if isinstance(self.tail, str):
            object.__setattr__(self, "tail", TailPolicy(self.tail))


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    v_x: np.ndarray


@dataclass
class Trajectory:
    grid: Grid
    params: ModelParams
    config: SolverConfig
    states: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def u(self) -> np.ndarray:
        """Recorded densities, shape ``(n_snapshots, n_nodes)``."""
        return np.array([s.u for s in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]

    def at(self, t: float) -> State:
        """Recorded state nearest to time ``t``."""
        times = self.times
        return self.states[int(np.argmin(np.abs(times - t)))]

    def append(self, state: State):
        if self.states and not state.t > self.states[-1].t:
            raise ValueError("trajectory times must be strictly increasing")
        self.states.append(state)


def make_initial(kind: str, grid: Grid, *, center=0.0, width=2.0, height=1.0,
                 level=1.0, interface=0.0, kappa=0.5, floor=None,
                 a=None, strict=False) -> np.ndarray:
    """Initial density of one of three classes.

    ``compact``
        ``height * cos^2(pi (x - center)/width)`` on ``|x - center| <= width/2``,
        zero elsewhere.
    ``front``
        ``level`` for ``x <= interface``, a ``cos^2`` ramp down to zero over
        ``[interface, interface + width]``, zero to the right.
    ``exponential``
        ``min(floor, exp(-kappa x))`` (``floor`` defaults to ``level``).
        With ``strict=True`` and ``a`` given, ``kappa`` must lie in
        ``(0, sqrt(a))``.
    """
    x = grid.x
    if kind == "compact":
        if not (width > 0 and height >= 0):
            raise ValueError("compact bump needs width > 0 and height >= 0")
        r = (x - center) / width
        return np.where(np.abs(r) < 0.5, height * np.cos(np.pi * r) ** 2, 0.0)
    if kind == "front":
        if not (width > 0 and level >= 0):
            raise ValueError("front needs width > 0 and level >= 0")
        r = np.clip((x - interface) / width, 0.0, 1.0)
        # cos^2(pi/2) is 4e-33 in floating point; the tail must be exactly zero
        return np.where(r < 1.0, level * np.cos(0.5 * np.pi * r) ** 2, 0.0)
    if kind == "exponential":
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        if strict:
            if a is None:
                raise ValueError("strict exponential data needs the growth rate a")
            if not kappa < math.sqrt(a):
                raise ValueError(
                    f"exponential data needs 0 < kappa < sqrt(a) = {math.sqrt(a):.6g}, got {kappa}"
                )
        floor = level if floor is None else floor
        if not floor > 0:
            raise ValueError("floor must be positive")
        with np.errstate(over="ignore"):
            return np.minimum(floor, np.exp(-kappa * x))
    raise ValueError(f"unknown initial-data kind {kind!r}")


def make_state(grid: Grid, u, p: ModelParams, tail=TailPolicy.ZERO, t=0.0) -> State:
    u = grid.check(u, "u").copy()
    v, vx = psi_fast(grid, u, p, tail)
    return State(t, u, v, vx)


def stable_dt(state: State, grid: Grid, p: ModelParams, scheme: str) -> float:
    """Largest step allowed by the advective, reaction and (explicit) diffusive limits."""
    h = grid.h
    limits = [1.0 / (p.a + 2.0 * p.b * max(float(state.u.max()), 0.0))]
    wmax = p.chi * float(np.abs(state.v_x).max())
    if wmax > 0:
        limits.append(h / wmax)
    if scheme == "explicit":
        limits.append(0.5 * h * h)
    return min(limits)


def _transport_reaction(u, vx, h, p):
    """Explicit part: ``-chi (u v_x)_x + u (a - b u)`` in finite-volume form."""
    out = u * (p.a - p.b * u)
    if p.chi != 0.0:
        flux = p.chi * 0.25 * (u[1:] + u[:-1]) * (vx[1:] + vx[:-1])
        div = np.empty_like(u)
        div[1:-1] = (flux[1:] - flux[:-1]) / h
        div[0] = flux[0] / (0.5 * h)
        div[-1] = -flux[-1] / (0.5 * h)
        out -= div
    return out


def _laplacian(u, h):
    """Zero-flux finite-volume Laplacian."""
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    out[0] = 2.0 * (u[1] - u[0]) / (h * h)
    out[-1] = 2.0 * (u[-2] - u[-1]) / (h * h)
    return out


def _implicit_diffusion(rhs, tau, h):
    """Solve ``(I - tau * Laplacian) w = rhs``."""
    n = rhs.size
    r = tau / (h * h)
    ab = np.empty((3, n))
    ab[0, :] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :] = -r
    ab[0, 1] = -2.0 * r          # row 0 couples to node 1 with the half-cell factor
    ab[2, -2] = -2.0 * r         # row n-1 couples to node n-2
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)


def step(state: State, dt: float, grid: Grid, p: ModelParams, cfg: SolverConfig) -> State:
    """Advance one step of length ``dt`` and refresh ``(v, v_x)``."""
    limit = stable_dt(state, grid, p, cfg.scheme)
    if dt > limit * (1.0 + 1e-12):
        raise StabilityError(
            f"dt={dt:.4g} exceeds the stability limit {limit:.4g} of the {cfg.scheme} scheme",
            state.t,
        )
    h = grid.h
    u = state.u
    if cfg.scheme == "explicit":
        new = u + dt * (_laplacian(u, h) + _transport_reaction(u, state.v_x, h, p))
    elif cfg.scheme == "imex":
        new = _implicit_diffusion(u + dt * _transport_reaction(u, state.v_x, h, p), dt, h)
    else:
        g = _GAMMA
        e0 = _transport_reaction(u, state.v_x, h, p)
        u1 = _implicit_diffusion(u + g * dt * e0, g * dt, h)
        _, vx1 = psi_fast(grid, u1, p, cfg.tail)
        e1 = _transport_reaction(u1, vx1, h, p)
        rhs = u + dt * ((1.0 - g) * _laplacian(u1, h) + _DELTA * e0 + (1.0 - _DELTA) * e1)
        new = _implicit_diffusion(rhs, g * dt, h)

    t = state.t + dt
    umin = float(new.min())
    if umin < -cfg.neg_tolerance:
        raise NegativityError(f"min(u) = {umin:.3e} below -{cfg.neg_tolerance:g}", t)
    if not np.all(np.isfinite(new)):
        raise SolverError("non-finite density", t)
    v, vx = psi_fast(grid, new, p, cfg.tail)
    return State(t, new, v, vx)


def _check_snapshot(state: State, grid: Grid, p: ModelParams, u0_max: float, margin: float):
    if global_existence(p):
        bound = max(u0_max, p.sup_bound)
        umax = float(state.u.max())
        if umax > bound + 1e-8:
            raise InvariantViolation(f"max(u) = {umax:.10g} exceeds {bound:.10g}", state.t)
    mask = grid.interior_mask(margin)
    gap = np.abs(state.v_x[mask]) - math.sqrt(p.lam) * state.v[mask]
    scale = max(float(state.v.max()), 1e-300)
    if gap.size and gap.max() > 1e-10 * scale:
        raise InvariantViolation(
            f"|v_x| <= sqrt(lam) v violated by {gap.max():.3e}", state.t
        )


def simulate(u0, grid: Grid, p: ModelParams, cfg: SolverConfig,
             observers: Sequence[Callable[[State], None]] = (),
             check_invariants: bool = True, record: bool = True) -> Trajectory:
    """Integrate from ``u0`` to ``cfg.t_end``.

    Every ``observer_stride``-th state (plus the initial and final ones) is
    appended to the trajectory and passed to each observer. With
    ``check_invariants`` the L-infinity bound and ``|v_x| <= sqrt(lam) v``
    are asserted on every recorded state.
    """
    if not global_existence(p):
        warnings.warn(
            f"chi*mu = {p.chi_mu:g} >= b = {p.b:g}: global existence is not guaranteed",
            RuntimeWarning, stacklevel=2,
        )
    state = make_state(grid, u0, p, cfg.tail)
    u0_max = float(state.u.max())
    margin = 10.0 / math.sqrt(p.lam)
    traj = Trajectory(grid, p, cfg)

    def emit(s):
        if check_invariants:
            _check_snapshot(s, grid, p, u0_max, margin)
        if record:
            traj.append(s)
        for obs in observers:
            obs(s)

    emit(state)
    n = 0
    eps = 1e-12 * max(cfg.t_end, 1.0)
    while state.t < cfg.t_end - eps:
        dt = min(cfg.dt, cfg.cfl_safety * stable_dt(state, grid, p, cfg.scheme))
        if state.t + dt > cfg.t_end - eps:
            dt = cfg.t_end - state.t
        state = step(state, dt, grid, p, cfg)
        n += 1
        if n % cfg.observer_stride == 0 or state.t >= cfg.t_end - eps:
            emit(state)
    logger.debug("simulate: %d steps to t=%g", n, state.t)
    return traj


def with_config(cfg: SolverConfig, **changes) -> SolverConfig:
    return replace(cfg, **changes)
