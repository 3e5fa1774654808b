"""
Integral identities and inequalities used as solution-quality certificates.

* Pohozaev-type identity for autonomous equations (I - Delta)^alpha u = f(u):
      2 alpha <u, (I - Delta)^{alpha-1} u> = 2N int F(u) - (N - 2 alpha) int u f(u)
* dilation commutator, for rapidly decaying phi:
      (I-Delta)^a (x.grad phi) = x.grad (I-Delta)^a phi + 2a (I-Delta)^a phi - 2a (I-Delta)^{a-1} phi
* the rearrangement inequality ||u*||_alpha <= ||u||_alpha
* a report showing that no power law s^gamma intertwines (I-Delta)^alpha with dilations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import Nonlinearity, ProblemSpec, signed_power, _abs_power
from .errors import ParameterError
from .grid import Field, Grid, _apply_power, _gradient, _norm_sq
from .kernel import symmetric_decreasing_rearrangement

__all__ = [
    "IdentityRecord",
    "IdentityReport",
    "ScalingReport",
    "pohozaev_residual",
    "commutator_identity_residual",
    "rearrangement_gap",
    "scaling_noninvariance_report",
]

TINY = 1e-300
BOUNDARY_MASS_TOL = 1e-8


@dataclass
class IdentityRecord:
    name: str
    lhs: float
    rhs: float
    residual: float
    grid: dict = field(default_factory=dict)


@dataclass
class IdentityReport:
    records: list = field(default_factory=list)

    def add(self, record: IdentityRecord) -> None:
        self.records.append(record)

    def to_dict(self) -> dict:
        return {r.name: asdict(r) for r in self.records}


def _grid_meta(grid: Grid) -> dict:
    return {"dim": grid.dim, "half_length": list(grid.half_length), "points": list(grid.points)}


def _rel(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), TINY)


def pohozaev_residual(spec: ProblemSpec, u, nonlinearity: Nonlinearity | None = None) -> tuple[float, float, float]:
    """(lhs, rhs, relative residual) of the Pohozaev-type identity.

    Without ``nonlinearity`` the right-hand side is lambda b|u|^{p-2}u + c|u|^{q-2}u
    with the problem's constant weights; with it, f = c * nonlinearity.f.
    """
    if not spec.autonomous:
        raise ParameterError("the Pohozaev identity needs constant weights b and c")
    values = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    grid, alpha, N = spec.grid, spec.alpha, spec.grid.dim
    dv = grid.cell_volume
    c = float(spec.c_values.flat[0])
    if nonlinearity is None:
        b = float(spec.b_values.flat[0])
        tr = spec.truncated
        F = c * _abs_power(values, spec.q, tr) / spec.q
        uf = c * values * signed_power(values, spec.q, tr)
        if spec.lam != 0:
            F = F + spec.lam * b * _abs_power(values, spec.p, tr) / spec.p
            uf = uf + spec.lam * b * values * signed_power(values, spec.p, tr)
    else:
        F = c * nonlinearity.F(values)
        uf = c * values * nonlinearity.f(values)
    lhs = 2.0 * alpha * _norm_sq(grid, values, alpha - 1.0)
    rhs = 2.0 * N * dv * float(np.sum(F)) - (N - 2.0 * alpha) * dv * float(np.sum(uf))
    if lhs == 0 and rhs == 0:
        return 0.0, 0.0, 0.0
    return lhs, rhs, _rel(lhs, rhs)


def _centered_coords(grid: Grid) -> list[np.ndarray]:
    return list(grid.coords)


def _inner_mask(grid: Grid) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for x, L in zip(grid.coords, grid.half_length):
        mask &= np.abs(x) < 0.5 * L
    return mask


def _x_dot_grad(grid: Grid, values: np.ndarray) -> np.ndarray:
    return sum(x * g for x, g in zip(_centered_coords(grid), _gradient(grid, values)))


def commutator_identity_residual(phi: Field, alpha: float) -> float:
    """Relative L2 residual of the dilation commutator identity on the inner half-box."""
    grid, v = phi.grid, phi.values
    if not np.any(v):
        return 0.0
    mask = _inner_mask(grid)
    total = float(np.sum(v * v))
    if float(np.sum(v[~mask] ** 2)) > BOUNDARY_MASS_TOL * total:
        raise ParameterError("test field carries too much mass outside the inner half-box")
    Ba = _apply_power(grid, v, alpha)
    lhs = _apply_power(grid, _x_dot_grad(grid, v), alpha)
    rhs = _x_dot_grad(grid, Ba) + 2 * alpha * Ba - 2 * alpha * _apply_power(grid, v, alpha - 1.0)
    num = math.sqrt(float(np.sum((lhs - rhs)[mask] ** 2)))
    den = max(math.sqrt(float(np.sum(lhs[mask] ** 2))), math.sqrt(float(np.sum(rhs[mask] ** 2))), TINY)
    return num / den


def rearrangement_gap(u: Field, alpha: float) -> float:
    """||u||_alpha^2 - ||u*||_alpha^2 (nonnegative up to round-off)."""
    star = symmetric_decreasing_rearrangement(u)
    return _norm_sq(u.grid, u.values, alpha) - _norm_sq(u.grid, star.values, alpha)


@dataclass
class ScalingReport:
    s: float
    alpha: float
    best_gamma: float
    best_residual: float
    gammas: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    control_gamma: float = math.nan
    control_residual: float = math.nan

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "alpha": self.alpha,
            "best_gamma": self.best_gamma,
            "best_residual": self.best_residual,
            "control_gamma": self.control_gamma,
            "control_residual": self.control_residual,
        }


def _dtft_axis(values: np.ndarray, axis: int, x: np.ndarray, eta: np.ndarray, h: float, chunk: int = 256) -> np.ndarray:
    """h * sum_j values_j exp(-i eta_k x_j) along ``axis``."""
    values = np.moveaxis(values, axis, -1)
    out = np.empty(values.shape[:-1] + (eta.size,), dtype=complex)
    for start in range(0, eta.size, chunk):
        e = np.exp(-1j * np.outer(x, eta[start : start + chunk])) * h
        out[..., start : start + chunk] = values @ e
    return np.moveaxis(out, -1, axis)


def scaling_noninvariance_report(
    u: Field, alpha: float, s: float, gamma_range=(-3.0, 3.0), gamma_points: int = 601
) -> ScalingReport:
    """Best power-law fit of (I-Delta)^alpha [u(./s)] against s^gamma [(I-Delta)^alpha u](./s).

    Both sides are compared in frequency: with v = u(./s), v^(xi) = s^N u^(s xi),
    so the residual for a given gamma is the relative L2 distance between
    m(xi) u^(s xi) and s^gamma m(s xi) u^(s xi), m(xi) = (1+|xi|^2)^alpha. The
    same fit with the homogeneous symbol |xi|^{2 alpha} is the positive control.
    """
    if not s > 0:
        raise ParameterError(f"dilation factor must be positive, got {s}")
    grid = u.grid
    nyq = min(math.pi / h for h in grid.spacing)
    etas = []
    for xi in grid.freq_lattice:
        k = np.sort(xi)
        etas.append(k[np.abs(k) * max(s, 1.0) < nyq])
    U = np.asarray(u.values, dtype=complex)
    for axis, (x, eta, h) in enumerate(zip(grid.axes, etas, grid.spacing)):
        U = _dtft_axis(U, axis, x, s * eta, h)
    mesh = np.meshgrid(*etas, indexing="ij")
    xi2 = sum(m**2 for m in mesh)

    def fit(symbol):
        lhs = symbol(xi2) * U
        base = symbol(s * s * xi2) * U
        gammas = np.linspace(*gamma_range, gamma_points)
        norm = max(np.linalg.norm(lhs), TINY)
        res = np.array([np.linalg.norm(lhs - s**g * base) / norm for g in gammas])
        c = np.vdot(base, lhs).real / max(np.vdot(base, base).real, TINY)
        if c > 0 and s != 1:
            g_ls = math.log(c) / math.log(s)
            r_ls = np.linalg.norm(lhs - c * base) / norm
        else:
            g_ls, r_ls = 0.0, np.linalg.norm(lhs - base) / norm
        i = int(np.argmin(res))
        if r_ls <= res[i]:
            return g_ls, float(r_ls), gammas, res
        return float(gammas[i]), float(res[i]), gammas, res

    best_g, best_r, gammas, res = fit(lambda q: (1.0 + q) ** alpha)
    ctrl_g, ctrl_r, _, _ = fit(lambda q: q**alpha)
    return ScalingReport(s, alpha, best_g, best_r, gammas, res, ctrl_g, ctrl_r)
