"""Whole-line solution of ``0 = v_xx - lam v + mu u`` via the exponential kernel.

``v = Psi(x; u) = mu/(2 sqrt(lam)) * int exp(-sqrt(lam)|x - y|) u(y) dy``.

The field ``u`` is taken to be the piecewise-linear interpolant of its
node values, and every cell integral against the exponential is done in
closed form. Splitting the kernel at ``x`` gives two one-sided integrals

    I_minus(x) = int_{-inf}^{x} exp(-s (x - y)) u(y) dy
    I_plus(x)  = int_{x}^{inf}  exp(-s (y - x)) u(y) dy

with ``s = sqrt(lam)``, so that ``Psi = mu/(2s) (I_minus + I_plus)`` and
``Psi_x = mu/2 (I_plus - I_minus)``. Each one-sided integral obeys a
first-order linear recursion from node to node, which is run as an IIR
filter (O(N)). :func:`psi_direct` evaluates the same integrals node by
node from antiderivatives (O(N^2)) and is kept as the test oracle.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.signal import lfilter

from .theory import ModelParams

__all__ = [
    "Grid",
    "TailPolicy",
    "tail_integrals",
    "cell_weights",
    "psi_fast",
    "psi_direct",
    "elliptic_residual",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``center + [-half_length, half_length]`` with ``n_cells + 1`` nodes."""

    half_length: float
    n_cells: int
    center: float = 0.0

    def __post_init__(self):
        if not self.half_length > 0:
            raise ValueError("half_length must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError("n_cells must be an integer >= 2")

    @classmethod
    def from_spacing(cls, half_length: float, h: float, center: float = 0.0) -> "Grid":
        n = int(round(2.0 * half_length / h))
        return cls(half_length, n, center)

    @property
    def h(self) -> float:
        return 2.0 * self.half_length / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @cached_property
    def x(self) -> np.ndarray:
        x = self.center + np.linspace(-self.half_length, self.half_length, self.n_cells + 1)
        x.flags.writeable = False
        return x

    def check(self, field: np.ndarray, name: str = "field") -> np.ndarray:
        field = np.asarray(field, dtype=float)
        if field.shape != (self.n_nodes,):
            raise ValueError(
                f"{name} has shape {field.shape}, grid has {self.n_nodes} nodes"
            )
        return field

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at least ``margin`` away from both ends."""
        return np.abs(self.x - self.center) <= self.half_length - margin + 1e-12 * self.half_length


class TailPolicy(enum.Enum):
    """Assumed extension of ``u`` beyond the truncated domain."""

    ZERO = "zero"
    CONSTANT_LEFT = "constant-left"
    CONSTANT_BOTH = "constant-both"


def tail_integrals(u: np.ndarray, p: ModelParams, tail) -> tuple[float, float]:
    """``(I_minus(x_0), I_plus(x_N))`` contributed by the extension of ``u``.

    ``tail`` is a :class:`TailPolicy` or an explicit pair of boundary
    integrals (used for analytic extensions such as an exponential tail).
    """
    if not isinstance(tail, TailPolicy):
        if isinstance(tail, str):
            tail = TailPolicy(tail)
        else:
            left, right = tail
            return float(left), float(right)
    s = math.sqrt(p.lam)
    left = u[0] / s if tail in (TailPolicy.CONSTANT_LEFT, TailPolicy.CONSTANT_BOTH) else 0.0
    right = u[-1] / s if tail is TailPolicy.CONSTANT_BOTH else 0.0
    return left, right


def cell_weights(z: float) -> tuple[float, float]:
    """Weights ``(near, far)`` of a linear cell integral against ``exp(-z(1 - tau))``.

    ``int_0^1 exp(-z (1 - tau)) [(1 - tau) u_far + tau u_near] dtau
    = near * u_near + far * u_far``.
    """
    if z < 1e-3:
        # series: far = 1/2 - z/3 + z^2/8 - z^3/30, near + far = (1 - e^-z)/z
        far = 0.5 - z / 3.0 + z * z / 8.0 - z ** 3 / 30.0
        total = 1.0 - z / 2.0 + z * z / 6.0 - z ** 3 / 24.0
    else:
        e = math.exp(-z)
        far = (-math.expm1(-z) - z * e) / (z * z)
        total = -math.expm1(-z) / z
    return total - far, far


def _one_sided(u: np.ndarray, p: ModelParams, h: float, tail) -> tuple[np.ndarray, np.ndarray]:
    s = math.sqrt(p.lam)
    decay = math.exp(-s * h)
    near, far = cell_weights(s * h)
    left0, rightN = tail_integrals(u, p, tail)

    # I_minus[i] = decay * I_minus[i-1] + h (near u[i] + far u[i-1])
    w = h * (near * u[1:] + far * u[:-1])
    i_minus = np.empty_like(u)
    i_minus[0] = left0
    i_minus[1:], _ = lfilter([1.0], [1.0, -decay], w, zi=[decay * left0])

    # mirror image for I_plus, swept from the right
    w = h * (near * u[:-1] + far * u[1:])
    i_plus = np.empty_like(u)
    i_plus[-1] = rightN
    rev, _ = lfilter([1.0], [1.0, -decay], w[::-1], zi=[decay * rightN])
    i_plus[:-1] = rev[::-1]
    return i_minus, i_plus


def _warn_negative(u):
    if u.size and u.min() < 0.0:
        warnings.warn("kernel input has negative values; positivity bounds do not apply",
                      RuntimeWarning, stacklevel=3)


def psi_fast(grid: Grid, u, p: ModelParams, tail=TailPolicy.ZERO):
    """Return ``(v, v_x)`` for density ``u`` in O(N)."""
    u = grid.check(u, "u")
    _warn_negative(u)
    s = math.sqrt(p.lam)
    i_minus, i_plus = _one_sided(u, p, grid.h, tail)
    v = (p.mu / (2.0 * s)) * (i_minus + i_plus)
    vx = 0.5 * p.mu * (i_plus - i_minus)
    return v, vx


def psi_direct(grid: Grid, u, p: ModelParams, tail=TailPolicy.ZERO, derivative=False):
    """O(N^2) evaluation of the kernel integral, node by node.

    Each cell contributes the exact integral of ``exp(-s|x - y|)`` times the
    linear interpolant, written with antiderivatives in the distance
    variable. Returns ``v`` or, with ``derivative=True``, ``(v, v_x)``.
    """
    u = grid.check(u, "u")
    _warn_negative(u)
    x = grid.x
    h = grid.h
    s = math.sqrt(p.lam)
    left0, rightN = tail_integrals(u, p, tail)

    # Cell [y0, y0 + h] with u = u0 + g (y - y0). Antiderivatives in y:
    #   left of x_i:  exp(-s (x_i - y)) (u(y)/s - g/s^2)
    #   right of x_i: -exp(-s (y - x_i)) (u(y)/s + g/s^2)
    y0 = x[:-1]
    u0 = u[:-1]
    g = (u[1:] - u[:-1]) / h
    xi = x[:, None]
    d_start = xi - y0[None, :]              # distance to the left end of the cell
    d_end = d_start - h                      # distance to the right end of the cell

    left_cells = d_end >= -1e-12 * h         # cell lies to the left of x_i
    right_cells = ~left_cells

    u_end = (u0 + g * h)[None, :]
    u_start = u0[None, :]
    gg = g[None, :]

    with np.errstate(over="ignore", invalid="ignore"):
        fl_end = np.exp(-s * np.clip(d_end, 0.0, None)) * (u_end / s - gg / s ** 2)
        fl_start = np.exp(-s * d_start) * (u_start / s - gg / s ** 2)
        left_int = np.where(left_cells, fl_end - fl_start, 0.0)
        e_start = -d_start                  # y0 - x_i >= 0 for right cells
        e_end = -d_end
        fr_end = -np.exp(-s * np.clip(e_end, 0.0, None)) * (u_end / s + gg / s ** 2)
        fr_start = -np.exp(-s * np.clip(e_start, 0.0, None)) * (u_start / s + gg / s ** 2)
        right_int = np.where(right_cells, fr_end - fr_start, 0.0)

    i_minus = left_int.sum(axis=1) + left0 * np.exp(-s * (x - x[0]))
    i_plus = right_int.sum(axis=1) + rightN * np.exp(-s * (x[-1] - x))
    v = (p.mu / (2.0 * s)) * (i_minus + i_plus)
    if derivative:
        return v, 0.5 * p.mu * (i_plus - i_minus)
    return v


def elliptic_residual(grid: Grid, u, v, p: ModelParams) -> float:
    """Max interior residual of ``v_xx - lam v + mu u`` with the 3-point Laplacian."""
    u = grid.check(u, "u")
    v = grid.check(v, "v")
    h = grid.h
    lap = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    res = lap - p.lam * v[1:-1] + p.mu * u[1:-1]
    return float(np.max(np.abs(res)))
