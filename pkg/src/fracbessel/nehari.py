"""
Fiber maps t -> J_lambda(t v) and the Nehari decomposition.

For a field v write A = ||v||_alpha^2, B = int b|v|^p, C = int c|v|^q. Then

    phi(t)   = t^2 A / 2 - lambda t^p B / p - t^q C / q
    Dphi(t)  = t A - lambda t^{p-1} B - t^{q-1} C
    D2phi(t) = A - (p-1) lambda t^{p-2} B - (q-1) t^{q-2} C

Positive roots of Dphi are found from g(t) = Dphi(t)/t, a sum of three powers
of t. g has at most one interior critical point, so (0, inf) splits into at
most two monotone pieces and each piece holds at most one root.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .energy import ProblemSpec, best_constant_S
from .errors import ParameterError
from .grid import Field

__all__ = [
    "FiberCoefficients",
    "FiberValue",
    "FiberRoot",
    "NehariClass",
    "ThresholdInfo",
    "fiber_eval",
    "classify",
    "project_to_nehari",
    "t_star",
    "F_star",
    "lambda_threshold",
    "nehari_constraint_M",
]

ON_MANIFOLD_TOL = 1e-9
DEAD_BAND = 1e-10


class NehariClass(enum.Enum):
    NPLUS = "Nplus"
    NZERO = "Nzero"
    NMINUS = "Nminus"
    NOT_ON_MANIFOLD = "NotOnManifold"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class FiberCoefficients:
    A: float
    B: float
    C: float
    p: float
    q: float
    lam: float = 0.0

    def __post_init__(self):
        if self.A < 0:
            raise ParameterError(f"A must be nonnegative, got {self.A}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lam}")
        if not (self.p > 1 and self.q > 1):
            raise ParameterError("exponents must exceed 1")

    @classmethod
    def from_field(cls, spec: ProblemSpec, u) -> "FiberCoefficients":
        values = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
        A, B, C = spec.fiber_integrals(values)
        return cls(A, B, C, spec.p, spec.q, spec.lam)

    def scaled(self, t: float) -> "FiberCoefficients":
        """Coefficients of the field t v."""
        return FiberCoefficients(t * t * self.A, t**self.p * self.B, t**self.q * self.C, self.p, self.q, self.lam)

    def scale(self, t: float = 1.0) -> float:
        """Magnitude of the largest term in Dphi(t)/t; used for relative tolerances."""
        return max(self.A, abs(self.lam * self.B) * t ** (self.p - 2), abs(self.C) * t ** (self.q - 2))

    def _terms(self):
        """(coefficient, exponent) pairs of g(t) = Dphi(t)/t with like powers merged."""
        merged: dict[float, float] = {}
        for coef, e in ((self.A, 0.0), (-self.lam * self.B, self.p - 2), (-self.C, self.q - 2)):
            merged[e] = merged.get(e, 0.0) + coef
        return sorted((c, e) for e, c in merged.items() if c != 0.0)

    def g(self, t: float) -> float:
        return self.A - self.lam * self.B * t ** (self.p - 2) - self.C * t ** (self.q - 2)

    def dg(self, t: float) -> float:
        return -(self.p - 2) * self.lam * self.B * t ** (self.p - 3) - (self.q - 2) * self.C * t ** (self.q - 3)


@dataclass(frozen=True)
class FiberValue:
    phi: float
    dphi: float
    d2phi: float
    singular: bool = False

    def __iter__(self):
        return iter((self.phi, self.dphi, self.d2phi))


@dataclass(frozen=True)
class FiberRoot:
    t: float
    nehari_class: NehariClass
    phi: float
    d2phi: float


class RootList(list):
    """List of :class:`FiberRoot` with an optional explanatory ``note``."""

    note: str = ""


def fiber_eval(fc: FiberCoefficients, t: float) -> FiberValue:
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    p, q, lam = fc.p, fc.q, fc.lam
    if t == 0:
        if p < 2 and lam * fc.B != 0:
            return FiberValue(0.0, 0.0, -math.copysign(math.inf, lam * fc.B), singular=True)
        d2 = fc.A - (lam * fc.B if p == 2 else 0.0) - (fc.C if q == 2 else 0.0)
        return FiberValue(0.0, 0.0, d2)
    tp, tq = t**p, t**q
    phi = 0.5 * t * t * fc.A - lam * tp * fc.B / p - tq * fc.C / q
    dphi = t * fc.A - lam * tp / t * fc.B - tq / t * fc.C
    d2phi = fc.A - (p - 1) * lam * tp / (t * t) * fc.B - (q - 1) * tq / (t * t) * fc.C
    return FiberValue(phi, dphi, d2phi)


def _class_from_d2(d2: float, scale: float) -> NehariClass:
    if d2 > DEAD_BAND * scale:
        return NehariClass.NPLUS
    if d2 < -DEAD_BAND * scale:
        return NehariClass.NMINUS
    return NehariClass.NZERO


def classify(fc: FiberCoefficients) -> NehariClass:
    """Class of v itself (the fiber at t = 1)."""
    val = fiber_eval(fc, 1.0)
    scale = max(fc.A, abs(fc.lam * fc.B), abs(fc.C))
    if scale == 0 or abs(val.dphi) > ON_MANIFOLD_TOL * scale:
        return NehariClass.NOT_ON_MANIFOLD
    return _class_from_d2(val.d2phi, scale)


def _limit_sign(terms, at_zero: bool) -> float:
    c, _ = min(terms, key=lambda ce: ce[1]) if at_zero else max(terms, key=lambda ce: ce[1])
    return math.copysign(1.0, c)


def _edge(fc, start: float, sign: float, factor: float) -> float | None:
    """Walk from ``start`` by ``factor`` until g has the limiting ``sign``."""
    t = start
    for _ in range(2000):
        gt = fc.g(t)
        if gt != 0 and math.copysign(1.0, gt) == sign:
            return t
        t *= factor
        if not (1e-300 < t < 1e300):
            return None
    return None


def _root_in(fc, a: float, b: float) -> float:
    f = lambda s: fc.g(math.exp(s))
    s = brentq(f, math.log(a), math.log(b), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    t = math.exp(s)
    # one safeguarded Newton step in t
    d = fc.dg(t)
    if d != 0:
        t_new = t - fc.g(t) / d
        if a <= t_new <= b and abs(fc.g(t_new)) < abs(fc.g(t)):
            t = t_new
    return t


def _make_root(fc, t: float) -> FiberRoot:
    val = fiber_eval(fc, t)
    return FiberRoot(t, _class_from_d2(val.d2phi, fc.scale(t)), val.phi, val.d2phi)


def project_to_nehari(fc: FiberCoefficients) -> RootList:
    """All t > 0 with t v on the Nehari set, ordered by t, each with its class."""
    roots = RootList()
    terms = fc._terms()
    if not terms or all(c > 0 for c, _ in terms) or all(c < 0 for c, _ in terms):
        if fc.p < 2 < fc.q and fc.B > 0 and fc.C > 0:
            roots.note = "no root"
        return _annotate(fc, roots)

    # interior critical point of g
    pieces = []
    t_m = None
    num = -(fc.p - 2) * fc.lam * fc.B
    den = (fc.q - 2) * fc.C
    if fc.q != fc.p and num != 0 and den != 0 and num / den > 0:
        t_m = (num / den) ** (1.0 / (fc.q - fc.p))

    s0, s_inf = _limit_sign(terms, True), _limit_sign(terms, False)
    if t_m is None:
        pieces.append((s0, s_inf, None))
    else:
        g_m = fc.g(t_m)
        if abs(g_m) <= 1e-14 * fc.scale(t_m):
            roots.append(_make_root(fc, t_m))
            return _annotate(fc, roots)
        s_m = math.copysign(1.0, g_m)
        pieces.append((s0, s_m, (None, t_m)))
        pieces.append((s_m, s_inf, (t_m, None)))

    for sa, sb, span in pieces:
        if sa == sb:
            continue
        lo_hint, hi_hint = span if span else (None, None)
        anchor = t_m if t_m is not None else _anchor(fc)
        a = lo_hint if lo_hint is not None else _edge(fc, min(anchor, 1.0) * 0.5, sa, 0.5)
        b = hi_hint if hi_hint is not None else _edge(fc, max(anchor, 1.0) * 2.0, sb, 2.0)
        if a is None or b is None:
            continue
        roots.append(_make_root(fc, _root_in(fc, a, b)))
    roots.sort(key=lambda r: r.t)
    return _annotate(fc, roots)


def _anchor(fc) -> float:
    """Rough location of the balance point between the quadratic term and the others."""
    cands = [1.0]
    if fc.C != 0 and fc.q != 2:
        cands.append((fc.A / abs(fc.C)) ** (1.0 / (fc.q - 2)) if fc.A > 0 else 1.0)
    if fc.lam * fc.B != 0 and fc.p != 2:
        cands.append((fc.A / abs(fc.lam * fc.B)) ** (1.0 / (fc.p - 2)) if fc.A > 0 else 1.0)
    return float(np.exp(np.mean(np.log(cands))))


def _annotate(fc, roots: RootList) -> RootList:
    if not roots and fc.p < 2 < fc.q and fc.B > 0 and fc.C > 0:
        roots.note = "threshold exceeded: fiber map has no critical point"
    return roots


def t_star(A: float, C: float, q: float) -> float:
    """Maximizer (A/C)^{1/(q-2)} of F(t) = t^2 A/2 - t^q C/q."""
    if not (A > 0 and C > 0 and q > 2):
        raise ParameterError("t_star needs A > 0, C > 0, q > 2")
    return (A / C) ** (1.0 / (q - 2))


def F_star(A: float, C: float, q: float) -> float:
    """max_t (t^2 A/2 - t^q C/q) = (1/2 - 1/q) (A^q / C^2)^{1/(q-2)}."""
    if not (A > 0 and C > 0 and q > 2):
        raise ParameterError("F_star needs A > 0, C > 0, q > 2")
    return (0.5 - 1.0 / q) * math.exp((q * math.log(A) - 2 * math.log(C)) / (q - 2))


@dataclass(frozen=True)
class ThresholdInfo:
    """Energy gap delta, critical lambda_0 and the constant c of the B-term bound."""

    delta: float
    lambda0: float
    c_const: float
    S_p: float
    S_q: float
    p: float

    def __iter__(self):
        return iter((self.delta, self.lambda0))

    def delta1(self, lam: float) -> float:
        """Lower bound delta^{p/2} (delta^{(2-p)/2} - lambda c) for energies on N^-."""
        p = self.p
        return self.delta ** (p / 2) * (self.delta ** ((2 - p) / 2) - lam * self.c_const)


def lambda_threshold(spec: ProblemSpec, S_p: float | None = None, S_q: float | None = None, seed: int = 0) -> ThresholdInfo:
    """delta and lambda_0 for the concave-convex problem described by ``spec``.

    ``S_p`` and ``S_q`` are the quotient constants inf A/||u||_r^2 at r = p, q.
    When omitted they are computed; for p <= 2 the torus value V^{1-2/p}
    (attained by constants) is used.
    """
    p, q = spec.p, spec.q
    if q <= 2:
        raise ParameterError(f"threshold needs q > 2, got {q}")
    grid = spec.grid
    if S_p is None:
        S_p = grid.volume ** (1 - 2 / p) if p <= 2 else best_constant_S(grid, spec.alpha, p, seed=seed).value
    if S_q is None:
        S_q = best_constant_S(grid, spec.alpha, q, seed=seed).value
    c_plus = spec.c.positive_sup(grid)
    b_sup = spec.b.sup_norm(grid)
    if c_plus <= 0:
        raise ParameterError("threshold needs c to be positive somewhere")
    delta = (0.5 - 1.0 / q) * (S_q**q / c_plus) ** (1.0 / (q - 2))
    c_const = (b_sup / p) * S_p ** (-p / 2) * (2 * q / (q - 2)) ** (p / 2)
    lambda0 = delta ** ((2 - p) / 2) / c_const if c_const > 0 else math.inf
    return ThresholdInfo(delta, lambda0, c_const, S_p, S_q, p)


def nehari_constraint_M(spec: ProblemSpec, u) -> float:
    """DJ_lambda(u) u = A - lambda int b|u|^p - int c|u|^q."""
    values = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    if not np.any(values):
        raise ParameterError("the zero field is excluded from the Nehari set")
    A, B, C = spec.fiber_integrals(values)
    return A - spec.lam * B - C
