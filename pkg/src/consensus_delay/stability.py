"""Delay margins of the second-order disagreement factors.

Every disagreement eigenvalue ``lam`` contributes a scalar quasi-polynomial

    protocol A:  s^2 + (k2 s + k1) (1 - lam e^{-tau s})
    protocol B:  s^2 + lam (k2 s + k1) e^{-tau s}        (lam an eigenvalue of +L)

Both are stable at ``tau = 0``. A root reaches the imaginary axis at
``s = j omega`` only where the magnitude condition holds. The delay is then
read off the phase condition. The smallest such delay over all disagreement
eigenvalues is the delay margin of the topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import optimize

from .graph import ProtocolKind, Spectrum, SPECIAL_TOL, absolute_exigent_eigenvalue

DUPLICATE_TOL = 1e-10
UNIT_MODULUS_TOL = 1e-8


class InvalidGainsError(ValueError):
    pass


class DomainError(ValueError):
    """The special (centroid) eigenvalue was passed where a disagreement one is required."""


class CrossingError(ArithmeticError):
    """A supposed crossing frequency does not satisfy the magnitude condition."""


@dataclass(frozen=True)
class ProtocolParams:
    kind: ProtocolKind
    k1: float
    k2: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind.parse(self.kind))
        for name in ("k1", "k2"):
            value = float(getattr(self, name))
            if not (value > 0 and math.isfinite(value)):
                raise InvalidGainsError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class FactorCrossing:
    lam: float
    omega: float
    tau: float
    finite: bool

    @classmethod
    def none(cls, lam: float) -> "FactorCrossing":
        return cls(float(lam), math.nan, math.inf, False)


@dataclass(frozen=True)
class DelayMargin:
    per_factor: tuple
    margin: float
    exigent_lambda: float | None

    def argmin_set(self, tol: float = 1e-9) -> list[float]:
        """All eigenvalues whose factor margin ties the overall margin within ``tol``."""
        if math.isinf(self.margin):
            return [fc.lam for fc in self.per_factor]
        return [fc.lam for fc in self.per_factor if fc.tau <= self.margin + tol]


def _check_disagreement(lam: float, kind: ProtocolKind) -> None:
    if abs(lam - kind.special_eigenvalue) < SPECIAL_TOL:
        raise DomainError(
            f"lambda={lam!r} is the centroid eigenvalue of protocol {kind.name}; "
            "its factor is only marginally stable and carries no delay margin"
        )


def factor_char_value(s, lam: float, params: ProtocolParams, tau):
    """Value of the factor at ``s``; broadcasts over arrays of ``s`` and ``tau``."""
    s = np.asarray(s, dtype=complex)
    pd = params.k2 * s + params.k1
    delay = np.exp(-tau * s)
    if params.kind is ProtocolKind.A:
        out = s * s + pd * (1.0 - lam * delay)
    else:
        out = s * s + lam * pd * delay
    return out[()] if out.ndim == 0 else out


def crossing_frequencies(lam: float, params: ProtocolParams) -> list[float]:
    """Positive frequencies where the factor's magnitude condition holds, ascending."""
    _check_disagreement(lam, params.kind)
    k1, k2 = params.k1, params.k2
    if params.kind is ProtocolKind.B:
        a = k2 * k2 * lam * lam
        w2 = (a + math.sqrt(a * a + 4.0 * k1 * k1 * lam * lam)) / 2.0
        return [math.sqrt(w2)] if w2 > 0 else []

    # w^4 + b w^2 + c = 0 in w^2
    mu = 1.0 - lam * lam
    b = mu * k2 * k2 - 2.0 * k1
    c = mu * k1 * k1
    gamma = b * b - 4.0 * c
    if gamma < 0:
        return []
    big = k1 - 0.5 * mu * k2 * k2 + 0.5 * math.sqrt(gamma)
    roots = []
    if big > 0:
        roots.append(big)
        # Vieta avoids cancellation in the smaller root
        small = c / big
        if small > 0 and small != big:
            roots.append(small)
    elif big < 0 and c < 0:
        roots.append(c / big)
    return sorted(math.sqrt(r) for r in roots)


def crossing_delay(lam: float, params: ProtocolParams, omega: float) -> float:
    """Smallest positive delay at which ``j omega`` is a root of the factor.

    Solves ``exp(-j omega tau) = R(j omega)`` with R the ratio of the
    delay-free part to the delayed part.
    """
    k1, k2 = params.k1, params.k2
    den = complex(k1, k2 * omega) * lam
    if params.kind is ProtocolKind.A:
        num = complex(k1 - omega * omega, k2 * omega)
    else:
        num = complex(omega * omega, 0.0)
    modulus = abs(num) / abs(den)
    if abs(modulus - 1.0) > UNIT_MODULUS_TOL:
        raise CrossingError(f"|R(j{omega!r})| = {modulus!r} for lambda={lam!r}; not a crossing frequency")
    phase = math.atan2(num.imag, num.real) - math.atan2(den.imag, den.real)
    phase = math.remainder(phase, 2.0 * math.pi)  # (-pi, pi]
    return ((-phase) % (2.0 * math.pi)) / omega


def factor_margin(lam: float, params: ProtocolParams) -> FactorCrossing:
    lam = float(lam)
    omegas = crossing_frequencies(lam, params)
    if not omegas:
        return FactorCrossing.none(lam)
    best = min(((crossing_delay(lam, params, w), w) for w in omegas))
    return FactorCrossing(lam, best[1], best[0], True)


def topology_margin(spec: Spectrum, params: ProtocolParams) -> DelayMargin:
    if spec.kind is not params.kind:
        raise ValueError(f"spectrum is for protocol {spec.kind.name}, params for {params.kind.name}")
    cache: list[FactorCrossing] = []
    per_factor = []
    for lam in spec.disagreement_eigenvalues:
        hit = next((fc for fc in cache if abs(fc.lam - lam) <= DUPLICATE_TOL), None)
        if hit is None:
            hit = factor_margin(lam, params)
            cache.append(hit)
        per_factor.append(FactorCrossing(float(lam), hit.omega, hit.tau, hit.finite))
    margin = min((fc.tau for fc in per_factor), default=math.inf)
    exigent = None
    if math.isfinite(margin):
        exigent = next(fc.lam for fc in per_factor if fc.tau == margin)
    return DelayMargin(tuple(per_factor), margin, exigent)


def absolute_margin(params: ProtocolParams, n: int | None = None) -> FactorCrossing:
    """Margin that holds for every connected topology (on ``n`` agents for protocol B)."""
    return factor_margin(absolute_exigent_eigenvalue(params.kind, n), params)


@dataclass(frozen=True)
class BoundarySurface:
    kind: ProtocolKind
    n: int | None
    k1: np.ndarray
    k2: np.ndarray
    tau: np.ndarray  # shape (len(k1), len(k2))

    def rows(self):
        """(k1, k2, tau) triples, k1 outer."""
        for i, a in enumerate(self.k1):
            for j, b in enumerate(self.k2):
                yield float(a), float(b), float(self.tau[i, j])


def _grid_axis(rng: Sequence[float], count: int, name: str) -> np.ndarray:
    lo, hi = (float(v) for v in rng)
    if not (lo > 0 and hi > 0):
        raise ValueError(f"{name} range must be positive, got {lo}:{hi}")
    if hi < lo:
        raise ValueError(f"{name} range is reversed: {lo}:{hi}")
    if count < 1 or (count == 1 and hi != lo):
        raise ValueError(f"{name} grid needs at least 2 points for a non-degenerate range")
    return np.linspace(lo, hi, count)


def boundary_surface(kind, k1_range, k2_range, grid_counts=(50, 50), n=None) -> BoundarySurface:
    kind = ProtocolKind.parse(kind)
    k1s = _grid_axis(k1_range, int(grid_counts[0]), "k1")
    k2s = _grid_axis(k2_range, int(grid_counts[1]), "k2")
    lam = absolute_exigent_eigenvalue(kind, n)
    tau = np.empty((len(k1s), len(k2s)))
    for i, a in enumerate(k1s):
        for j, b in enumerate(k2s):
            tau[i, j] = factor_margin(lam, ProtocolParams(kind, a, b)).tau
    return BoundarySurface(kind, n, k1s, k2s, tau)


def fmt(x: float) -> str:
    """9 significant digits, ``inf`` for unbounded margins."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def write_surface_csv(surface: BoundarySurface, fh) -> None:
    fh.write("k1,k2,tau\n")
    for a, b, t in surface.rows():
        fh.write(f"{fmt(a)},{fmt(b)},{fmt(t)}\n")


def _split_factor(lam, params, omega):
    """Return P(j w), Q(j w) with factor = P + Q exp(-tau s), using two evaluations."""
    s = 1j * omega
    at_zero = factor_char_value(s, lam, params, 0.0)  # P + Q
    at_half = factor_char_value(s, lam, params, np.pi / omega)  # P - Q
    return 0.5 * (at_zero + at_half), 0.5 * (at_zero - at_half)


def oracle_margin(lam: float, params: ProtocolParams, samples: int = 20000) -> float:
    """Brute-force delay margin of one factor; test oracle only.

    Scans the magnitude residual ``|P|^2 - |Q|^2`` over a log grid, refines
    each sign change by bisection and converts it to a delay through the
    phase condition. Uses nothing but :func:`factor_char_value`.
    """
    _check_disagreement(lam, params.kind)
    w_hi = 10.0 * (1.0 + abs(lam)) * (params.k1 + params.k2 + 1.0)
    grid = np.geomspace(1e-4, w_hi, samples)
    P, Q = _split_factor(lam, params, grid)

    def residual(w):
        p, q = _split_factor(lam, params, w)
        return abs(p) ** 2 - abs(q) ** 2

    r = np.abs(P) ** 2 - np.abs(Q) ** 2
    best = math.inf
    for i in np.flatnonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0):
        w = optimize.bisect(residual, grid[i], grid[i + 1], xtol=1e-12, rtol=4 * np.finfo(float).eps)
        p, q = _split_factor(lam, params, w)
        phase = np.angle(-p / q)
        best = min(best, float(((-phase) % (2 * math.pi)) / w))
    return best


def _resultant_rows(lam1, lam2, params, num=float):
    rows = []
    for lam in (num(lam1), num(lam2)):
        a = -((num(params.k2) * lam) ** 2)
        b = -((num(params.k1) * lam) ** 2)
        rows.append([num(1), a, b, num(0)])
        rows.append([num(0), num(1), a, b])
    return rows


def resultant_matrix(lam1: float, lam2: float, params: ProtocolParams) -> np.ndarray:
    """Sylvester matrix of g^2 - (k2 lam)^2 g - (k1 lam)^2 for two eigenvalues."""
    return np.array(_resultant_rows(lam1, lam2, params))


def _exact_det(rows) -> Fraction:
    """Laplace expansion over exact rationals; fine for 4x4."""
    if len(rows) == 1:
        return rows[0][0]
    total = Fraction(0)
    for j, pivot in enumerate(rows[0]):
        if pivot:
            minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
            total += (-1) ** j * pivot * _exact_det(minor)
    return total


def sylvester_resultant_det(lam1: float, lam2: float, params: ProtocolParams) -> float:
    """Determinant of :func:`resultant_matrix`, evaluated in exact rationals.

    Floating-point entries already carry enough rounding to spoil the small
    difference the determinant is made of (~1e-9 relative), so the matrix is
    rebuilt from the exact inputs and rounded once at the end.
    """
    return float(_exact_det(_resultant_rows(lam1, lam2, params, num=Fraction)))
