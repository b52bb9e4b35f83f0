"""Strength-reduction functions for the associated and Davis A/B/C schemes.

Every scheme reduces cohesion and friction as ``c / q(lam)`` and
``tan(phi) / q(lam)``; the schemes differ only in ``q``.  Non-associativity
therefore never reaches the constitutive model, which stays associated.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class BracketError(ValueError):
    """Target value lies below ``q(0)``, so no preimage exists."""


class DegenerateReduction(ValueError):
    """Reduction factor is not strictly positive."""


class ReductionScheme(enum.Enum):
    ASSOCIATED = "associated"
    DAVIS_A = "davis-a"
    DAVIS_B = "davis-b"
    DAVIS_C = "davis-c"

    @classmethod
    def parse(cls, name: "str | ReductionScheme") -> "ReductionScheme":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"assoc": "associated", "a": "davis-a", "b": "davis-b", "c": "davis-c",
                   "davisa": "davis-a", "davisb": "davis-b", "davisc": "davis-c"}
        key = aliases.get(key.replace(" ", ""), key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown reduction scheme {name!r} (choose from {choices})") from None


@dataclass(frozen=True)
class Strength:
    """Effective cohesion (kPa), friction and dilatancy angles (radians)."""

    c: float
    phi: float
    psi: float

    def __post_init__(self):
        if self.c < 0.0:
            raise ValueError(f"cohesion must be non-negative, got {self.c}")
        if not 0.0 <= self.phi < math.pi / 2:
            raise ValueError(f"friction angle must lie in [0, 90) degrees, got {math.degrees(self.phi)}")
        if not 0.0 <= self.psi <= self.phi + 1e-12:
            raise ValueError(
                f"dilatancy angle must satisfy 0 <= psi <= phi, got psi={math.degrees(self.psi)} "
                f"phi={math.degrees(self.phi)} degrees")

    @classmethod
    def from_degrees(cls, c: float, phi: float, psi: float | None = None) -> "Strength":
        psi = phi if psi is None else psi
        return cls(c, math.radians(phi), math.radians(psi))

    @property
    def tan_phi(self) -> float:
        return math.tan(self.phi)

    @property
    def tan_psi(self) -> float:
        return math.tan(self.psi)


@dataclass(frozen=True)
class ReducedStrength:
    c_q: float
    tan_phi_q: float

    @property
    def sin_phi_q(self) -> float:
        return self.tan_phi_q / math.hypot(1.0, self.tan_phi_q)

    @property
    def cos_phi_q(self) -> float:
        return 1.0 / math.hypot(1.0, self.tan_phi_q)


def q_eval(scheme, s: Strength, lam):
    """Reduction factor ``q(lam)``; accepts scalars or arrays of ``lam``.

    The Davis B and C branches are written in rationalised form, which is
    free of the ``0/0`` at ``lam = 0`` present in the textbook expressions.
    """
    scheme = ReductionScheme.parse(scheme)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0.0):
        raise ValueError("lambda must be non-negative")
    a, b = s.tan_phi, s.tan_psi
    if scheme is ReductionScheme.ASSOCIATED or a == b:
        q = lam.copy()
    elif scheme is ReductionScheme.DAVIS_A:
        q = lam * (1.0 + (a - b) ** 2 / (math.sqrt((1.0 + a * a) * (1.0 + b * b)) + 1.0 + a * b))
    elif scheme is ReductionScheme.DAVIS_B:
        if b == 0.0:
            q = np.hypot(lam, a)
        else:
            # hypot keeps tiny lam and psi from underflowing to a zero root
            root = np.hypot(lam, a) * np.hypot(lam, b)
            den = root + lam * lam + a * b
            q = lam + np.divide(lam * (a - b) ** 2, den, out=np.zeros_like(lam), where=den > 0.0)
    else:
        root = np.hypot(lam, a) * math.hypot(1.0, b)
        den = root + a * b + lam
        excess = np.divide((a - lam * b) ** 2, den, out=np.zeros_like(lam), where=den > 0.0)
        q = np.where(a >= lam * b, lam + excess, lam)
    return float(q) if q.ndim == 0 else q


def q_inverse(scheme, s: Strength, target: float, rtol: float = 1e-10) -> float:
    """Smallest ``lam`` with ``q(lam) = target``, by bisection."""
    q0 = q_eval(scheme, s, 0.0)
    tol = rtol * max(1.0, abs(target))
    if target < q0 - tol:
        raise BracketError(f"target {target} is below q(0) = {q0}")
    if abs(q0 - target) <= tol:
        return 0.0
    lo, hi = 0.0, max(1.0, target)
    while q_eval(scheme, s, hi) < target:
        lo, hi = hi, 2.0 * hi
    # enough halvings to reach the smallest subnormal; q can rise over an
    # interval of width tan(psi) near zero when psi is tiny
    for _ in range(1100):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        val = q_eval(scheme, s, mid)
        if abs(val - target) <= tol:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def yield_mc(q: float, s: Strength, sig) -> float:
    """Mohr-Coulomb yield function at reduction level ``q`` (tension positive).

    ``sig`` is a :class:`~optssr.tensors.Spectral3` or principal values
    sorted descending; non-positive values mean plastically admissible.
    """
    vals = np.asarray(getattr(sig, "values", sig), dtype=float)
    s1, s3 = vals[..., 0], vals[..., -1]
    a = s.tan_phi
    return (s1 - s3) * np.sqrt(q * q + a * a) + (s1 + s3) * a - 2.0 * s.c


def reduce_strength(q: float, s: Strength) -> ReducedStrength:
    if not q > 0.0:
        raise DegenerateReduction(f"reduction factor must be positive, got {q}")
    return ReducedStrength(s.c / q, s.tan_phi / q)
