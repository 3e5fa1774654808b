"""
Iterative solvers: Nehari-constrained descent, a discretized mountain-pass
path, pure-power ground states and the two-solution search.

All descent directions are preconditioned, i.e. the L2 residual is mapped by
(I - Delta)^{-alpha}, which is gradient descent in the Bessel inner product.
Gradient norms reported below are the matching dual norm
sqrt(<g, (I - Delta)^{-alpha} g>).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .energy import (
    ENERGY_TOL,
    GRAD_TOL,
    MAX_ITER,
    Nonlinearity,
    ProblemSpec,
    _shifted_sq,
    best_constant_S,
    critical_exponent,
    make_rng,
)
from .errors import ConvergenceError, NumericalError, ParameterError, ThresholdError
from .grid import Field, Grid, _apply_power, _inner, _norm_sq
from .nehari import (
    FiberCoefficients,
    NehariClass,
    ThresholdInfo,
    classify,
    lambda_threshold,
    project_to_nehari,
)

log = logging.getLogger(__name__)

__all__ = [
    "Solution",
    "minimize_nehari",
    "mountain_pass",
    "ground_state_pure_power",
    "two_solution_search",
    "center_peak",
    "random_bump",
]

ARMIJO = 1e-4
NONNEG_TOL = 1e-10


@dataclass
class Solution:
    field: Field
    energy: float
    grad_norm: float
    nehari_class: NehariClass
    iterations: int
    nonneg: bool
    residual_l2: float = math.nan
    identity_report: Optional[object] = None
    history: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "residual_l2": self.residual_l2,
            "nehari_class": str(self.nehari_class),
            "iterations": self.iterations,
            "nonneg": self.nonneg,
            "min": self.field.min(),
            "max": self.field.max(),
            "l2_norm": self.field.norm(2),
        }
        out.update(self.meta)
        if self.identity_report is not None:
            out["identities"] = self.identity_report.to_dict()
        return out


def _dual_norm(grid: Grid, g: np.ndarray, alpha: float) -> float:
    return math.sqrt(max(_inner(grid, g, g, -alpha), 0.0))


def _l2(grid: Grid, g: np.ndarray) -> float:
    return math.sqrt(grid.cell_volume * float(np.sum(g * g)))


def random_bump(grid: Grid, rng: np.random.Generator, center=0.0, positive: bool = True) -> np.ndarray:
    """Gaussian bump with randomized width and amplitude."""
    width = rng.uniform(0.7, 1.5)
    amp = rng.uniform(0.5, 1.5)
    bump = amp * np.exp(-_shifted_sq(grid, center) / width**2)
    return bump if positive else bump * rng.choice([-1.0, 1.0])


def center_peak(u: np.ndarray) -> np.ndarray:
    """Roll the largest |u| sample onto the center node (index n/2 on every axis)."""
    idx = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    shift = tuple(n // 2 - i for n, i in zip(u.shape, idx))
    return np.roll(u, shift, axis=tuple(range(u.ndim)))


def _pick_root(fc: FiberCoefficients, target: NehariClass):
    roots = project_to_nehari(fc)
    matches = [r for r in roots if r.nehari_class is target]
    if not matches:
        return None
    return matches[0] if target is NehariClass.NPLUS else matches[-1]


def _newton_polish(spec: ProblemSpec, u: np.ndarray, f_tol: float = 1e-12, maxiter: int = 40) -> np.ndarray:
    """Solve u = (I - Delta)^{-alpha} reaction(u) by Newton-Krylov starting at ``u``."""
    grid = spec.grid

    def residual(w):
        return w - _apply_power(grid, spec.reaction(w), -spec.alpha)

    try:
        return newton_krylov(residual, u, f_tol=f_tol, maxiter=maxiter, method="lgmres")
    except NoConvergence as exc:
        return np.asarray(exc.args[0])
    except (ValueError, FloatingPointError):
        return u


def _smooth_reaction(spec: ProblemSpec) -> bool:
    return (spec.lam == 0 or spec.p >= 2) and spec.q >= 2


def _finish(spec: ProblemSpec, u: np.ndarray, iterations: int, history: list, meta: dict) -> Solution:
    g = spec.gradient(u)
    fc = FiberCoefficients.from_field(spec, u)
    return Solution(
        field=Field(spec.grid, u),
        energy=spec.energy(u),
        grad_norm=_dual_norm(spec.grid, g, spec.alpha),
        nehari_class=classify(fc),
        iterations=iterations,
        nonneg=bool(u.min() >= -NONNEG_TOL),
        residual_l2=_l2(spec.grid, g),
        history=history,
        meta=meta,
    )


def _maybe_polish(spec: ProblemSpec, u: np.ndarray, target: NehariClass | None) -> np.ndarray:
    if not _smooth_reaction(spec):
        return u
    before = _dual_norm(spec.grid, spec.gradient(u), spec.alpha)
    v = _newton_polish(spec, u)
    if not np.all(np.isfinite(v)):
        return u
    after = _dual_norm(spec.grid, spec.gradient(v), spec.alpha)
    if after >= before:
        return u
    if target is not None and classify(FiberCoefficients.from_field(spec, v)) not in (target, NehariClass.NOT_ON_MANIFOLD):
        return u
    if abs(spec.energy(v) - spec.energy(u)) > 1e-6 * max(1.0, abs(spec.energy(u))):
        return u
    return v


_WHICH = {
    "Nplus": NehariClass.NPLUS,
    "Nminus": NehariClass.NMINUS,
    "M_lambda": NehariClass.NMINUS,
    "M_0": NehariClass.NMINUS,
}


def minimize_nehari(
    spec: ProblemSpec,
    which: str,
    seed: Field | np.ndarray | None = None,
    rng_seed: int = 0,
    tol: float = GRAD_TOL,
    energy_tol: float = ENERGY_TOL,
    max_iter: int = MAX_ITER,
    threshold: ThresholdInfo | None = None,
    polish: bool = True,
) -> Solution:
    """Minimize J_lambda over one branch of the Nehari set.

    Each iteration takes a preconditioned gradient step and rescales the trial
    field onto the requested fiber root; the step is accepted by Armijo
    backtracking on the projected energy. ``M_0`` drops the lambda term.
    """
    if which not in _WHICH:
        raise ParameterError(f"which must be one of {sorted(_WHICH)}, got {which!r}")
    target = _WHICH[which]
    if which == "M_0":
        spec = spec.replace(lam=0.0)
    meta = {"which": which, "rng_seed": int(rng_seed)}
    if which in ("Nplus", "Nminus"):
        if not (spec.p < 2 < spec.q):
            raise ParameterError(f"{which} needs 1 < p < 2 < q, got p={spec.p}, q={spec.q}")
        if threshold is None:
            threshold = lambda_threshold(spec, seed=rng_seed)
        meta.update(delta=threshold.delta, lambda0=threshold.lambda0, delta1=threshold.delta1(spec.lam))
        if spec.lam >= threshold.lambda0:
            raise ThresholdError(f"lambda = {spec.lam:g} is not below lambda_0 = {threshold.lambda0:g}")
    elif which == "M_lambda" and not (spec.p > 2 and spec.q > 2):
        raise ParameterError(f"M_lambda needs p, q > 2, got p={spec.p}, q={spec.q}")

    grid, alpha = spec.grid, spec.alpha
    if seed is None:
        u = random_bump(grid, make_rng(rng_seed))
    else:
        u = np.array(seed.values if isinstance(seed, Field) else seed, dtype=float)
    root = _pick_root(FiberCoefficients.from_field(spec, u), target)
    if root is None:
        raise ParameterError(f"seed has no multiple on the {target} branch; choose a seed with a different sign profile")
    u = root.t * u
    E = spec.energy(u)
    history = []
    dE = math.inf
    for it in range(1, max_iter + 1):
        g = spec.gradient(u)
        d = _apply_power(grid, g, -alpha)
        slope = grid.cell_volume * float(np.sum(g * d))
        gn = math.sqrt(max(slope, 0.0))
        history.append((it, E, gn))
        if gn < tol and dE < energy_tol:
            break
        tau = 1.0
        accepted = False
        while tau >= 1e-12:
            v = u - tau * d
            r = _pick_root(FiberCoefficients.from_field(spec, v), target)
            if r is not None:
                v = r.t * v
                E_v = spec.energy(v)
                if E_v <= E - ARMIJO * tau * slope:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            if gn < 100 * tol:
                break
            raise ConvergenceError(f"line search failed at iteration {it} (grad {gn:.3e})", best=u, history=history)
        dE = E - E_v
        u, E = v, E_v
    else:
        raise ConvergenceError(
            f"{which} descent did not converge in {max_iter} iterations (grad {gn:.3e})", best=u, history=history
        )
    if polish:
        u = _maybe_polish(spec, u, target)
    sol = _finish(spec, u, len(history), history, meta)
    if sol.nehari_class not in (target, NehariClass.NOT_ON_MANIFOLD):
        raise NumericalError(f"converged field classified {sol.nehari_class}, expected {target}")
    return sol


def _general_energy(spec: ProblemSpec, nonlinearity: Nonlinearity, u: np.ndarray) -> float:
    return 0.5 * _norm_sq(spec.grid, u, spec.alpha) - spec.grid.cell_volume * float(np.sum(spec.c_values * nonlinearity.F(u)))


def _general_gradient(spec: ProblemSpec, nonlinearity: Nonlinearity, u: np.ndarray) -> np.ndarray:
    return _apply_power(spec.grid, u, spec.alpha) - spec.c_values * nonlinearity.f(u)


def _redistribute(grid: Grid, alpha: float, nodes: list, energies: np.ndarray, lo: int, hi: int) -> None:
    """Move nodes lo+1..hi-1 to equal energy-weighted Bessel arc length between nodes lo and hi."""
    if hi - lo < 2:
        return
    seg = [math.sqrt(_norm_sq(grid, nodes[k + 1] - nodes[k], alpha)) for k in range(lo, hi)]
    e = energies[lo : hi + 1]
    span = float(e.max() - e.min()) or 1.0
    weight = 1.0 + 0.5 * ((e[:-1] + e[1:]) / 2 - e.min()) / span
    s = np.concatenate([[0.0], np.cumsum(np.asarray(seg) * weight)])
    if s[-1] == 0:
        return
    targets = np.linspace(0.0, s[-1], hi - lo + 1)[1:-1]
    old = nodes[lo : hi + 1]
    new = []
    for t in targets:
        j = min(int(np.searchsorted(s, t, side="right")) - 1, len(old) - 2)
        w = (t - s[j]) / (s[j + 1] - s[j]) if s[j + 1] > s[j] else 0.0
        new.append((1 - w) * old[j] + w * old[j + 1])
    nodes[lo + 1 : hi] = new


def mountain_pass(
    spec: ProblemSpec,
    nonlinearity: Nonlinearity,
    seed_far: Field | np.ndarray | None = None,
    nodes: int = 33,
    path_tol: float = 1e-4,
    tol: float = GRAD_TOL,
    max_iter: int = 20_000,
    step: float = 0.5,
) -> Solution:
    """Climbing-node string method for J(u) = ||u||_alpha^2 / 2 - int c F(u).

    The path starts as the segment from 0 to ``seed_far`` (which must have
    negative energy). The highest interior node moves along the preconditioned
    gradient with its tangential component reversed, the remaining nodes are
    re-spaced in energy-weighted arc length, and once the node's gradient norm
    drops below ``path_tol`` it is polished by Newton-Krylov.
    """
    grid, alpha = spec.grid, spec.alpha
    if nodes < 3:
        raise ParameterError("the path needs at least 3 nodes")
    if seed_far is None:
        base = np.exp(-_shifted_sq(grid, 0.0))
        amp = 1.0
        while _general_energy(spec, nonlinearity, amp * base) >= 0:
            amp *= 2.0
            if amp > 1e8:
                raise ParameterError("could not find a negative-energy endpoint by amplitude scaling")
        far = amp * base
    else:
        far = np.array(seed_far.values if isinstance(seed_far, Field) else seed_far, dtype=float)
    if not _general_energy(spec, nonlinearity, far) < 0:
        raise ParameterError("the path endpoint must have negative energy")

    path = [k / (nodes - 1) * far for k in range(nodes)]
    energies = np.array([_general_energy(spec, nonlinearity, w) for w in path])
    history = []
    h = step
    best_gn = math.inf
    stall = 0
    for it in range(1, max_iter + 1):
        k = int(np.argmax(energies[1:-1])) + 1
        u = path[k]
        g = _general_gradient(spec, nonlinearity, u)
        d = _apply_power(grid, g, -alpha)
        gn = math.sqrt(max(grid.cell_volume * float(np.sum(g * d)), 0.0))
        history.append((it, float(energies[k]), gn))
        if gn < path_tol:
            break
        tangent = path[k + 1] - path[k - 1]
        tnorm = math.sqrt(_norm_sq(grid, tangent, alpha))
        if tnorm > 0:
            tangent = tangent / tnorm
            along = grid.cell_volume * float(np.sum(g * tangent))
            d = d - 2.0 * along * tangent
        path[k] = u - h * d
        energies[k] = _general_energy(spec, nonlinearity, path[k])
        _redistribute(grid, alpha, path, energies, 0, k)
        _redistribute(grid, alpha, path, energies, k, nodes - 1)
        energies = np.array([_general_energy(spec, nonlinearity, w) for w in path])
        if gn < best_gn:
            best_gn, stall = gn, 0
        else:
            stall += 1
            if stall > 50:
                h *= 0.5
                stall = 0
                if h < 1e-6:
                    raise ConvergenceError(f"mountain-pass path stagnated (grad {gn:.3e})", best=u, history=history)
    else:
        raise ConvergenceError(f"mountain-pass path did not converge in {max_iter} iterations", best=path[k], history=history)

    level = float(energies[k])
    u = path[k]
    poly_spec = _NonlinearityProblem(spec, nonlinearity)
    v = _newton_polish(poly_spec, u)
    if np.all(np.isfinite(v)) and _dual_norm(grid, poly_spec.gradient(v), alpha) < gn:
        u = v
    g = poly_spec.gradient(u)
    gn = _dual_norm(grid, g, alpha)
    if gn >= tol:
        raise ConvergenceError(f"Newton polish left gradient norm {gn:.3e} above {tol:g}", best=u, history=history)
    meta = {"path_nodes": nodes, "path_level": level, "nonlinearity": nonlinearity.name}
    return Solution(
        field=Field(grid, u),
        energy=_general_energy(spec, nonlinearity, u),
        grad_norm=gn,
        nehari_class=NehariClass.NMINUS if poly_spec.d2(u) < 0 else NehariClass.NPLUS,
        iterations=len(history),
        nonneg=bool(u.min() >= -NONNEG_TOL),
        residual_l2=_l2(grid, g),
        history=history,
        meta=meta,
    )


class _NonlinearityProblem:
    """Adapter exposing ``grid``/``alpha``/``reaction``/``gradient`` for a general f."""

    def __init__(self, spec: ProblemSpec, nonlinearity: Nonlinearity):
        self.spec, self.nl = spec, nonlinearity
        self.grid, self.alpha = spec.grid, spec.alpha

    def reaction(self, u):
        return self.spec.c_values * self.nl.f(u)

    def gradient(self, u):
        return _apply_power(self.grid, u, self.alpha) - self.reaction(u)

    def d2(self, u) -> float:
        """Second derivative of t -> J(t u) at t = 1 (needs f')."""
        if self.nl.df is None:
            return math.nan
        A = _norm_sq(self.grid, u, self.alpha)
        return A - self.grid.cell_volume * float(np.sum(self.spec.c_values * self.nl.df(u) * u * u))


def ground_state_pure_power(
    alpha: float,
    p: float,
    grid: Grid,
    radial: bool = False,
    seed: int = 0,
    starts: int = 3,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
    polish: bool = True,
) -> Solution:
    """Ground state of (I - Delta)^alpha u = |u|^{p-2} u.

    Minimizes the quotient ||u||_alpha^2 / ||u||_p^2 from centered bumps of
    random width, then rescales by theta with theta^{p-2} = S. p = 2 is
    rejected; 1 < p < 2 runs but is marked experimental in the metadata.
    """
    crit = critical_exponent(grid.dim, alpha)
    if not (1 < p < crit) or p == 2:
        raise ParameterError(f"p must lie in (1, {crit:g}) and differ from 2, got {p}")
    rng = make_rng(seed)
    seeds = [np.exp(-_shifted_sq(grid, 0.0) / rng.uniform(0.5, 2.0) ** 2) for _ in range(max(starts, 1))]
    res = best_constant_S(grid, alpha, p, radial=radial, seed=seed, tol=tol, max_iter=max_iter, seeds=seeds)
    w = np.array(res.field.values)
    if w.sum() < 0:
        w = -w
    theta = res.value ** (1.0 / (p - 2))
    u = theta * w
    spec = ProblemSpec(grid, alpha, p, p, lam=0.0)
    if polish and p > 2:
        u = _maybe_polish(spec, u, NehariClass.NMINUS)
    meta = {"S": res.value, "theta": theta, "radial": radial, "rng_seed": int(seed), "start_values": res.start_values}
    if p < 2:
        meta["experimental"] = True
    return _finish(spec, u, res.iterations, res.history, meta)


def two_solution_search(
    spec: ProblemSpec,
    threshold: ThresholdInfo | None = None,
    seed: Field | np.ndarray | None = None,
    rng_seed: int = 0,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[Solution, Solution]:
    """Nonnegative minimizers on N^+ and N^- of the truncated functional."""
    if not (1 < spec.p < 2 < spec.q < critical_exponent(spec.grid.dim, spec.alpha)):
        raise ParameterError(f"need 1 < p < 2 < q < 2*, got p={spec.p}, q={spec.q}")
    tspec = spec.replace(truncated=True)
    if threshold is None:
        threshold = lambda_threshold(tspec, seed=rng_seed)
    if spec.lam >= threshold.lambda0:
        raise ThresholdError(f"lambda = {spec.lam:g} is not below lambda_0 = {threshold.lambda0:g}")
    if seed is None:
        seed = random_bump(spec.grid, make_rng(rng_seed))
    common = dict(seed=seed, rng_seed=rng_seed, tol=tol, max_iter=max_iter, threshold=threshold)
    u1 = minimize_nehari(tspec, "Nplus", **common)
    u2 = minimize_nehari(tspec, "Nminus", **common)
    diff = (u1.field - u2.field).norm(2)
    scale = max(u1.field.norm(2), u2.field.norm(2))
    if not diff > 1e-3 * scale:
        raise NumericalError(f"the two minimizers coincide (relative distance {diff / scale:.2e})")
    for sol in (u1, u2):
        sol.meta["relative_distance"] = diff / scale
        if not sol.nonneg:
            raise NumericalError(f"{sol.meta['which']} minimizer has negative values (min {sol.field.min():.3e})")
    return u1, u2
