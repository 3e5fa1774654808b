"""
Potentials, nonlinearities and the energy functionals

    J_lambda(u) = 1/2 ||(I - Delta)^{alpha/2} u||^2 - lambda/p int b |u|^p - 1/q int c |u|^q
    J(u)        = 1/2 ||(I - Delta)^{alpha/2} u||^2 - int c F(u)

together with their L2 gradients and the best constants

    alpha_1 = S(p) = inf { ||(I - Delta)^{alpha/2} u||^2 : ||u||_p = 1 }.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ConvergenceError, ParameterError
from .grid import Field, Grid, _apply_power, _check_same_grid, _inner, _norm_sq

log = logging.getLogger(__name__)

__all__ = [
    "Potential",
    "Nonlinearity",
    "ProblemSpec",
    "ConstantResult",
    "critical_exponent",
    "make_condition_K_potential",
    "eval_J_lambda",
    "eval_J_general",
    "grad_J_lambda",
    "grad_J_general",
    "preconditioned_grad",
    "best_constant_alpha1",
    "best_constant_S",
    "check_threshold_13",
    "threshold_13_rhs",
    "H_diagnostic",
    "signed_power",
    "make_rng",
]

ENERGY_TOL = 1e-9
GRAD_TOL = 1e-7
MAX_ITER = 50_000


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; the 64-bit seed is what gets recorded in run outputs."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def critical_exponent(dim: int, alpha: float) -> float:
    """2N / (N - 2 alpha), or +inf when N <= 2 alpha."""
    return 2.0 * dim / (dim - 2.0 * alpha) if dim > 2.0 * alpha else math.inf


def signed_power(u: np.ndarray, r: float, truncated: bool = False) -> np.ndarray:
    """|u|^{r-2} u (continuous extension 0 at u = 0), or u_+^{r-1} when truncated."""
    if truncated:
        return np.maximum(u, 0.0) ** (r - 1)
    return np.sign(u) * np.abs(u) ** (r - 1)


def _abs_power(u: np.ndarray, r: float, truncated: bool = False) -> np.ndarray:
    if truncated:
        return np.maximum(u, 0.0) ** r
    return np.abs(u) ** r


# --- potentials --------------------------------------------------------------

_FAMILY_PARAMS = {
    "gaussian-decay": {"amplitude", "width", "center"},
    "power-decay": {"amplitude", "width", "center", "decay"},
    "compact-bump-mix": {"amplitude", "width", "center", "radius", "floor"},
    "sign-changing-bumps": {"positive", "negative", "shift", "width", "center"},
    "finite-limit": {"limit", "bump", "width", "center"},
}
_FAMILIES = tuple(_FAMILY_PARAMS)


@dataclass(frozen=True, eq=False)
class Potential:
    """Weight b(x) or c(x): a closed-form family or sampled values.

    ``sign_profile`` is one of ``positive``, ``sign-changing``,
    ``nonnegative-with-limit`` or ``constant``.
    """

    kind: str
    params: Mapping = field(default_factory=dict)
    sign_profile: str = "positive"
    limit: Optional[float] = None
    samples: Optional[Field] = None

    @classmethod
    def constant(cls, value: float) -> "Potential":
        profile = "positive" if value > 0 else ("sign-changing" if value < 0 else "constant")
        return cls("constant", {"value": float(value)}, sign_profile=profile, limit=float(value))

    @classmethod
    def sampled(cls, values: Field, sign_profile: str | None = None) -> "Potential":
        v = values.values
        if sign_profile is None:
            sign_profile = "sign-changing" if (v.min() < 0 < v.max()) else "positive"
        return cls("sampled", {}, sign_profile=sign_profile, samples=values)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.samples is not None:
            v = self.samples.values
            return bool(np.all(v == v.flat[0]))
        return False

    def sample(self, grid: Grid) -> np.ndarray:
        if self.samples is not None:
            _check_same_grid(self.samples.grid, grid)
            return np.array(self.samples.values)
        return _sample_family(self.kind, self.params, grid)

    def sup_norm(self, grid: Grid) -> float:
        return float(np.max(np.abs(self.sample(grid))))

    def positive_sup(self, grid: Grid) -> float:
        return float(max(np.max(self.sample(grid)), 0.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}}


def _shifted_sq(grid: Grid, center) -> np.ndarray:
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    return sum((x - c0) ** 2 for x, c0 in zip(grid.coords, center))


def _sample_family(kind: str, params: Mapping, grid: Grid) -> np.ndarray:
    if kind == "constant":
        return np.full(grid.shape, float(params["value"]))
    width = float(params.get("width", 1.0))
    center = params.get("center", 0.0)
    if kind == "gaussian-decay":
        return params.get("amplitude", 1.0) * np.exp(-_shifted_sq(grid, center) / width**2)
    if kind == "power-decay":
        return params.get("amplitude", 1.0) * (1.0 + _shifted_sq(grid, center) / width**2) ** (
            -0.5 * params.get("decay", 4.0)
        )
    if kind == "compact-bump-mix":
        radius = float(params.get("radius", 2.0))
        rho2 = _shifted_sq(grid, center) / radius**2
        bump = np.zeros(grid.shape)
        inside = rho2 < 1.0
        bump[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
        floor = params.get("floor", 0.1) * np.exp(-_shifted_sq(grid, 0.0) / width**2)
        return params.get("amplitude", 1.0) * bump + floor
    if kind == "sign-changing-bumps":
        shift = np.zeros(grid.dim)
        shift[0] = params.get("shift", 3.0)
        pos = params.get("positive", 1.0) * np.exp(-_shifted_sq(grid, center) / width**2)
        neg = params.get("negative", 0.5) * np.exp(-_shifted_sq(grid, np.asarray(center) + shift) / width**2)
        return pos - neg
    if kind == "finite-limit":
        return params.get("limit", 1.0) + params.get("bump", 2.0) * np.exp(-_shifted_sq(grid, center) / width**2)
    raise ParameterError(f"unknown potential family {kind!r}")


def make_condition_K_potential(family: str, **params) -> Potential:
    """Closed-form weight from a family that satisfies the tail condition by construction.

    Families: ``gaussian-decay`` (amplitude, width, center), ``power-decay``
    (amplitude, width, decay > 0), ``compact-bump-mix`` (amplitude, radius,
    floor > 0), ``sign-changing-bumps`` (positive, negative, shift, width) and
    ``finite-limit`` (limit, bump, width).
    """
    if family not in _FAMILIES:
        raise ParameterError(f"unknown potential family {family!r}; expected one of {_FAMILIES}")
    unknown = set(params) - _FAMILY_PARAMS[family]
    if unknown:
        raise ParameterError(f"{family} does not take parameters {sorted(unknown)}")
    params = dict(params)
    if "center" in params and not np.isscalar(params["center"]):
        params["center"] = tuple(float(c) for c in params["center"])
    width = params.get("width", 1.0)
    if width <= 0:
        raise ParameterError("width must be positive")
    if family == "gaussian-decay":
        amp = params.setdefault("amplitude", 1.0)
        return Potential(family, params, "positive" if amp > 0 else "sign-changing", limit=0.0)
    if family == "power-decay":
        if params.setdefault("decay", 4.0) <= 0:
            raise ParameterError("power-decay needs decay > 0")
        params.setdefault("amplitude", 1.0)
        return Potential(family, params, "positive", limit=0.0)
    if family == "compact-bump-mix":
        if params.setdefault("floor", 0.1) <= 0:
            raise ParameterError("compact-bump-mix needs a positive floor to stay positive everywhere")
        params.setdefault("amplitude", 1.0)
        params.setdefault("radius", 2.0)
        return Potential(family, params, "positive", limit=0.0)
    if family == "sign-changing-bumps":
        params.setdefault("positive", 1.0)
        params.setdefault("negative", 0.5)
        params.setdefault("shift", 3.0)
        return Potential(family, params, "sign-changing", limit=0.0)
    limit = params.setdefault("limit", 1.0)
    bump = params.setdefault("bump", 2.0)
    if limit < 0 or limit + min(bump, 0.0) < 0:
        raise ParameterError("finite-limit weight must stay nonnegative")
    return Potential(family, params, "nonnegative-with-limit", limit=float(limit))


# --- nonlinearities ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """f and its primitive F (F(0) = 0). ``exponent`` is set for pure powers."""

    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    exponent: Optional[float] = None
    truncated: bool = False
    df: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def power(cls, q: float, truncated: bool = False) -> "Nonlinearity":
        """f(s) = |s|^{q-2} s, or s_+^{q-1} with truncation."""
        if truncated:
            return cls(
                f=lambda s: np.maximum(s, 0.0) ** (q - 1),
                F=lambda s: np.maximum(s, 0.0) ** q / q,
                name=f"power{q:g}+",
                exponent=q,
                truncated=True,
                df=lambda s: (q - 1) * np.maximum(s, 0.0) ** (q - 2),
            )
        return cls(
            f=lambda s: np.sign(s) * np.abs(s) ** (q - 1),
            F=lambda s: np.abs(s) ** q / q,
            name=f"power{q:g}",
            exponent=q,
            df=lambda s: (q - 1) * np.abs(s) ** (q - 2),
        )

    @classmethod
    def power_sum(cls, exponents, weights=None, truncated: bool = True) -> "Nonlinearity":
        """f(s) = sum_i w_i s_+^{q_i - 1}."""
        exponents = tuple(float(e) for e in exponents)
        weights = tuple(float(w) for w in (weights or [1.0] * len(exponents)))
        parts = [cls.power(q, truncated) for q in exponents]
        return cls(
            f=lambda s: sum(w * n.f(s) for w, n in zip(weights, parts)),
            F=lambda s: sum(w * n.F(s) for w, n in zip(weights, parts)),
            name="+".join(n.name for n in parts),
            truncated=truncated,
            df=lambda s: sum(w * n.df(s) for w, n in zip(weights, parts)),
        )

    def with_truncation(self) -> "Nonlinearity":
        if self.truncated:
            return self
        f, F, df = self.f, self.F, self.df
        return Nonlinearity(
            f=lambda s: np.where(s > 0, f(np.maximum(s, 0.0)), 0.0),
            F=lambda s: np.where(s > 0, F(np.maximum(s, 0.0)), 0.0),
            name=self.name + "+",
            exponent=self.exponent,
            truncated=True,
            df=None if df is None else (lambda s: np.where(s > 0, df(np.maximum(s, 0.0)), 0.0)),
        )


def H_diagnostic(nonlinearity: Nonlinearity, s):
    """H(s) = s f(s) - 2 F(s); non-decreasing for nonlinearities with increasing f(s)/s."""
    s = np.asarray(s, dtype=float)
    out = s * nonlinearity.f(s) - 2.0 * nonlinearity.F(s)
    return float(out) if out.ndim == 0 else out


# --- problem -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """(I - Delta)^alpha u = lambda b |u|^{p-2} u + c |u|^{q-2} u on ``grid``.

    With ``truncated`` the nonlinear terms use the positive part of u.
    """

    grid: Grid
    alpha: float
    p: float
    q: float
    lam: float = 0.0
    b: Potential = field(default_factory=lambda: Potential.constant(0.0))
    c: Potential = field(default_factory=lambda: Potential.constant(1.0))
    truncated: bool = False

    def __post_init__(self):
        problems = []
        if not (0 < self.alpha <= 1):
            problems.append(f"alpha must lie in (0, 1], got {self.alpha}")
        crit = critical_exponent(self.grid.dim, self.alpha) if 0 < self.alpha else math.inf
        for name, r in (("p", self.p), ("q", self.q)):
            if not (1 < r < crit):
                problems.append(f"{name} must lie in (1, {crit:g}), got {r}")
        if not (self.lam >= 0):
            problems.append(f"lambda must be nonnegative, got {self.lam}")
        if problems:
            raise ParameterError("; ".join(problems))

    @functools.cached_property
    def b_values(self) -> np.ndarray:
        v = self.b.sample(self.grid)
        v.flags.writeable = False
        return v

    @functools.cached_property
    def c_values(self) -> np.ndarray:
        v = self.c.sample(self.grid)
        v.flags.writeable = False
        return v

    @property
    def autonomous(self) -> bool:
        return self.b.is_constant and self.c.is_constant

    def replace(self, **changes) -> "ProblemSpec":
        kw = dict(grid=self.grid, alpha=self.alpha, p=self.p, q=self.q, lam=self.lam,
                  b=self.b, c=self.c, truncated=self.truncated)
        kw.update(changes)
        return ProblemSpec(**kw)

    def fiber_integrals(self, u: np.ndarray) -> tuple[float, float, float]:
        """(A, B, C) = (||u||_alpha^2, int b|u|^p, int c|u|^q)."""
        dv = self.grid.cell_volume
        A = _norm_sq(self.grid, u, self.alpha)
        B = float(dv * np.sum(self.b_values * _abs_power(u, self.p, self.truncated))) if self.lam != 0 else 0.0
        C = float(dv * np.sum(self.c_values * _abs_power(u, self.q, self.truncated)))
        return A, B, C

    def energy(self, u: np.ndarray) -> float:
        A, B, C = self.fiber_integrals(u)
        return 0.5 * A - self.lam * B / self.p - C / self.q

    def reaction(self, u: np.ndarray) -> np.ndarray:
        out = self.c_values * signed_power(u, self.q, self.truncated)
        if self.lam != 0:
            out = out + self.lam * self.b_values * signed_power(u, self.p, self.truncated)
        return out

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return _apply_power(self.grid, u, self.alpha) - self.reaction(u)

    def reaction_derivative(self, u: np.ndarray) -> np.ndarray:
        """d/du of the reaction term (undefined at u = 0 for p < 2; set to 0 there)."""
        def dpow(r):
            base = np.maximum(u, 0.0) if self.truncated else np.abs(u)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = (r - 1) * np.where(base > 0, base ** (r - 2), 0.0 if r < 2 else (1.0 if r == 2 else 0.0))
            return out
        out = self.c_values * dpow(self.q)
        if self.lam != 0:
            out = out + self.lam * self.b_values * dpow(self.p)
        return out


def _as_array(spec_grid: Grid, u) -> np.ndarray:
    if isinstance(u, Field):
        _check_same_grid(u.grid, spec_grid)
        return u.values
    return np.asarray(u, dtype=float)


def eval_J_lambda(spec: ProblemSpec, u: Field) -> float:
    return spec.energy(_as_array(spec.grid, u))


def grad_J_lambda(spec: ProblemSpec, u: Field) -> Field:
    """L2 gradient (I - Delta)^alpha u - lambda b |u|^{p-2}u - c |u|^{q-2}u."""
    return Field(spec.grid, spec.gradient(_as_array(spec.grid, u)))


def preconditioned_grad(spec: ProblemSpec, u: Field) -> Field:
    """(I - Delta)^{-alpha} applied to the L2 gradient: the gradient in the Bessel inner product."""
    g = spec.gradient(_as_array(spec.grid, u))
    return Field(spec.grid, _apply_power(spec.grid, g, -spec.alpha))


def eval_J_general(spec: ProblemSpec, u: Field, nonlinearity: Nonlinearity) -> float:
    arr = _as_array(spec.grid, u)
    A = _norm_sq(spec.grid, arr, spec.alpha)
    return 0.5 * A - float(spec.grid.cell_volume * np.sum(spec.c_values * nonlinearity.F(arr)))


def grad_J_general(spec: ProblemSpec, u: Field, nonlinearity: Nonlinearity) -> Field:
    arr = _as_array(spec.grid, u)
    return Field(spec.grid, _apply_power(spec.grid, arr, spec.alpha) - spec.c_values * nonlinearity.f(arr))


def threshold_13_rhs(lam: float, b_limit: float, p: float, alpha1: float) -> float:
    """(p-2)/(2p) alpha_1^{p/(p-2)} (lambda b_bar)^{2/(2-p)}."""
    if not (p > 2 and lam > 0 and b_limit > 0 and alpha1 > 0):
        raise ParameterError("threshold needs p > 2, lambda > 0, b_bar > 0, alpha_1 > 0")
    return (p - 2) / (2 * p) * alpha1 ** (p / (p - 2)) * (lam * b_limit) ** (2 / (2 - p))


def check_threshold_13(I_lambda: float, lam: float, b_limit: float, p: float, alpha1: float) -> bool:
    return bool(I_lambda < threshold_13_rhs(lam, b_limit, p, alpha1))


# --- best constants ----------------------------------------------------------

@dataclass
class ConstantResult:
    value: float
    field: Field
    iterations: int
    grad_norm: float
    start_values: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _reflect(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Average over coordinate reflections x_i -> -x_i (and axis swaps when the box is cubic)."""
    out = np.array(u, dtype=float)
    for axis in range(grid.dim):
        flipped = np.roll(np.flip(out, axis=axis), 1, axis=axis)
        out = 0.5 * (out + flipped)
    if grid.dim > 1 and len(set(grid.points)) == 1 and len(set(grid.half_length)) == 1:
        import itertools

        perms = list(itertools.permutations(range(grid.dim)))
        out = sum(np.transpose(out, perm) for perm in perms) / len(perms)
    return out


def _normalize_p(grid: Grid, u: np.ndarray, p: float) -> np.ndarray:
    return u / (grid.cell_volume * np.sum(np.abs(u) ** p)) ** (1.0 / p)


def minimize_quotient(
    grid: Grid,
    alpha: float,
    p: float,
    seed: np.ndarray,
    radial: bool = False,
    tol: float = GRAD_TOL,
    energy_tol: float = 1e-14,
    max_iter: int = MAX_ITER,
) -> ConstantResult:
    """Preconditioned normalized descent for A(u) on {||u||_p = 1}.

    At ||u||_p = 1 the Bessel-metric gradient direction of A/||u||_p^2 is
    d = u - A (I - Delta)^{-alpha} (|u|^{p-2} u). Steps use Armijo
    backtracking from tau = 1 followed by renormalization.
    """
    u = _reflect(grid, seed) if radial else np.array(seed, dtype=float)
    u = _normalize_p(grid, u, p)
    A = _norm_sq(grid, u, alpha)
    history = []
    grad_norm = math.inf
    for it in range(1, max_iter + 1):
        phi = signed_power(u, p)
        d = u - A * _apply_power(grid, phi, -alpha)
        if radial:
            d = _reflect(grid, d)
        slope = 2.0 * _inner(grid, d, d, alpha)  # <grad Q, d> with grad Q = 2 B d
        grad_norm = math.sqrt(max(slope / 2.0, 0.0))
        history.append((it, A, grad_norm))
        if grad_norm < tol:
            return ConstantResult(A, Field(grid, u), it, grad_norm, history=history)
        tau = 1.0
        while True:
            v = _normalize_p(grid, u - tau * d, p)
            A_new = _norm_sq(grid, v, alpha)
            if A_new <= A - 1e-4 * tau * slope:
                break
            tau *= 0.5
            if tau < 1e-14:
                break
        if tau < 1e-14 or A - A_new < energy_tol * max(1.0, abs(A)) and grad_norm < 100 * tol:
            if A_new < A:
                u, A = v, A_new
            return ConstantResult(A, Field(grid, u), it, grad_norm, history=history)
        u, A = v, A_new
    raise ConvergenceError(
        f"quotient minimization did not converge in {max_iter} iterations (grad {grad_norm:.2e})",
        best=ConstantResult(A, Field(grid, u), max_iter, grad_norm, history=history),
        history=history,
    )


def _default_seeds(grid: Grid, p: float, starts: int, rng: np.random.Generator) -> list[np.ndarray]:
    seeds = [np.ones(grid.shape)]
    L = min(grid.half_length)
    for k in range(starts):
        width = rng.uniform(0.5, 2.0)
        center = np.zeros(grid.dim) if k == 0 else rng.uniform(-0.3 * L, 0.3 * L, size=grid.dim)
        bump = np.exp(-_shifted_sq(grid, center) / width**2)
        seeds.append(bump * rng.uniform(0.5, 2.0))
    return seeds


def best_constant_S(
    grid: Grid,
    alpha: float,
    p: float,
    radial: bool = False,
    starts: int = 3,
    seed: int = 0,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
    seeds: list | None = None,
) -> ConstantResult:
    """S = inf { ||(I-Delta)^{alpha/2} u||^2 : int |u|^p = 1 } by multi-start descent.

    Starts are the constant field plus ``starts`` Gaussian bumps (or the
    explicit ``seeds`` arrays when given); the smallest
    converged value wins and every start's value is kept as an upper-bound
    certificate in ``start_values``.
    """
    crit = critical_exponent(grid.dim, alpha)
    if not (1 < p < crit):
        raise ParameterError(f"p must lie in (1, {crit:g}), got {p}")
    rng = make_rng(seed)
    best = None
    values = []
    failures = []
    for s0 in seeds if seeds is not None else _default_seeds(grid, p, starts, rng):
        try:
            res = minimize_quotient(grid, alpha, p, s0, radial=radial, tol=tol, max_iter=max_iter)
        except ConvergenceError as exc:
            failures.append(exc)
            res = exc.best
        values.append(res.value)
        log.debug("start value %.12g after %d iterations", res.value, res.iterations)
        if best is None or res.value < best.value:
            best = res
    if best.grad_norm >= tol and failures:
        raise ConvergenceError("best start did not converge", best=best)
    best.start_values = values
    return best


def best_constant_alpha1(grid: Grid, alpha: float, p: float, **kw) -> ConstantResult:
    """alpha_1 = inf_{||u||_p = 1} ||(I-Delta)^{alpha/2} u||^2 for 2 <= p < 2*_alpha."""
    if p < 2:
        raise ParameterError(f"alpha_1 is defined here for p >= 2, got {p}")
    return best_constant_S(grid, alpha, p, **kw)
