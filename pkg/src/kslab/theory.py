"""Model parameters and closed-form speed constants.

The system is

    u_t = u_xx - chi (u v_x)_x + u (a - b u),
    0   = v_xx - lam v + mu u,

on the whole line. Everything here is a pure function of the five
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ModelParams",
    "SpeedConstants",
    "global_existence",
    "hypothesis_H",
    "kappa_admissible",
    "a_star",
    "speed_constants",
    "c_kappa",
    "kappa_for_speed",
    "positive_part",
]


def positive_part(x: float) -> float:
    return x if x > 0.0 else 0.0


@dataclass(frozen=True)
class ModelParams:
    """Constants of the parabolic-elliptic Keller-Segel system.

    ``chi = 0`` is accepted and gives the scalar Fisher-KPP equation; the
    other four constants must be strictly positive.
    """

    chi: float
    a: float
    b: float
    lam: float
    mu: float

    def __post_init__(self):
        if not self.chi >= 0.0:
            raise ValueError(f"chi must be >= 0, got {self.chi}")
        for name in ("a", "b", "lam", "mu"):
            val = getattr(self, name)
            if not val > 0.0:
                raise ValueError(f"{name} must be > 0, got {val}")

    @property
    def chi_mu(self) -> float:
        return self.chi * self.mu

    @property
    def carrying_capacity(self) -> float:
        """Positive constant equilibrium a/b."""
        return self.a / self.b

    @property
    def sup_bound(self) -> float:
        """a/(b - chi mu), the eventual L-infinity bound on u."""
        if self.chi_mu >= self.b:
            return math.inf
        return self.a / (self.b - self.chi_mu)

    def replace(self, **changes) -> "ModelParams":
        fields = dict(chi=self.chi, a=self.a, b=self.b, lam=self.lam, mu=self.mu)
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class SpeedConstants:
    c0_star: float
    a_star: float
    c_star: float
    c_star_star: float


def global_existence(p: ModelParams) -> bool:
    """Solutions exist for all time when chi*mu < b (strict)."""
    return p.chi_mu < p.b


def hypothesis_H(p: ModelParams) -> bool:
    """Standing assumption under which the spreading speed is 2 sqrt(a)."""
    sa, sl = math.sqrt(p.a), math.sqrt(p.lam)
    factor = 1.0 + 0.5 * positive_part(sa - sl) / (sa + sl)
    return factor * p.chi_mu <= p.b


def kappa_admissible(p: ModelParams, kappa: float) -> bool:
    """Decay-rate constraint ``(k - sqrt(lam))_+ / (k + sqrt(lam)) <= 2(b - chi mu)/(chi mu)``."""
    if not kappa > 0.0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    sl = math.sqrt(p.lam)
    lhs = positive_part(kappa - sl) / (kappa + sl)
    if lhs == 0.0:
        return True
    if p.chi_mu == 0.0:
        return True
    return lhs <= 2.0 * (p.b - p.chi_mu) / p.chi_mu


def a_star(p: ModelParams) -> float:
    """Largest admissible decay rate in (0, sqrt(a)].

    The constraint's left side is increasing in kappa beyond sqrt(lam), so
    either sqrt(a) itself is admissible or the answer is the root of
    ``(k - s)/(k + s) = r``, i.e. ``k = s (1 + r)/(1 - r)``.
    """
    if not global_existence(p):
        raise ValueError(
            f"a* is undefined unless chi*mu < b (got chi*mu={p.chi_mu}, b={p.b})"
        )
    sa = math.sqrt(p.a)
    if kappa_admissible(p, sa):
        return sa
    s = math.sqrt(p.lam)
    r = 2.0 * (p.b - p.chi_mu) / p.chi_mu
    # r < 1 here, otherwise sqrt(a) would have been admissible
    return s * (1.0 + r) / (1.0 - r)


def c_kappa(p: ModelParams, kappa: float) -> float:
    """Speed (kappa^2 + a)/kappa of the exponential e^{-kappa (x - c t)}."""
    if not kappa > 0.0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    return (kappa * kappa + p.a) / kappa


def kappa_for_speed(p: ModelParams, c: float) -> float:
    """Smaller root of c_kappa = c; requires c >= 2 sqrt(a)."""
    disc = c * c - 4.0 * p.a
    if disc < 0.0:
        raise ValueError(f"no decay rate has speed {c} < 2 sqrt(a) = {2 * math.sqrt(p.a)}")
    return (c - math.sqrt(disc)) / 2.0


def speed_constants(p: ModelParams) -> SpeedConstants:
    ast = a_star(p)
    m = min(p.a, p.lam)
    return SpeedConstants(
        c0_star=2.0 * math.sqrt(p.a),
        a_star=ast,
        c_star=(p.a + ast * ast) / ast,
        c_star_star=(p.a + m) / math.sqrt(m),
    )
