"""
Periodic-box discretization and spectral Bessel operators.

The box is [-L, L) per axis with ``n`` uniform samples, so x_j = -L + j*h with
h = 2L/n, and the discrete frequencies are xi_k = pi*k/L. The operator
(I - Delta)^s acts by multiplying Fourier coefficients by (1 + |xi|^2)^s.

Normalization used throughout::

    U_k = sum_j u_j exp(-i xi_k . (x_j - x_0))        (scipy.fft convention)
    ||u||_2^2 = h^N sum_j |u_j|^2 = w sum_k |U_k|^2,    w = h^N / n_total

The Nyquist coefficient of a real field is real under this convention and the
symbol is applied to it like any other mode.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ParameterError

__all__ = [
    "Grid",
    "Field",
    "SpectralField",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "apply_bessel_power",
    "bessel_norm_sq",
    "bessel_inner",
    "l2_inner",
    "integrate",
    "spectral_gradient",
]


def _workers() -> int | None:
    value = os.environ.get("FRACBESSEL_THREADS")
    return int(value) if value else None


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box prod_i [-L_i, L_i)."""

    dim: int
    half_length: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.half_length) != self.dim or len(self.points) != self.dim:
            raise ParameterError("half_length and points need one entry per axis")
        for L in self.half_length:
            if not (np.isfinite(L) and L > 0):
                raise ParameterError(f"half_length must be positive and finite, got {L}")
        for n in self.points:
            if n < 4 or not _is_power_of_two(n):
                raise ParameterError(f"points per axis must be a power of two >= 4, got {n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2.0 * L / n for L, n in zip(self.half_length, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([2.0 * L for L in self.half_length]))

    @property
    def spectral_weight(self) -> float:
        """Quadrature weight w with ||u||_2^2 = w * sum |U_k|^2."""
        return self.cell_volume / self.size

    @functools.cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(-L + h * np.arange(n) for L, h, n in zip(self.half_length, self.spacing, self.points))

    @functools.cached_property
    def freq_lattice(self) -> tuple[np.ndarray, ...]:
        """Per-axis frequencies xi_k = pi k / L in FFT order (Nyquist stored as negative)."""
        return tuple(2.0 * np.pi * sfft.fftfreq(n, d=h) for n, h in zip(self.points, self.spacing))

    @functools.cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @functools.cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.coords))

    @functools.cached_property
    def xi_sq(self) -> np.ndarray:
        """|xi|^2 on the full FFT lattice."""
        grids = np.meshgrid(*self.freq_lattice, indexing="ij")
        return sum(g**2 for g in grids)

    @functools.cached_property
    def xi_sq_half(self) -> np.ndarray:
        """|xi|^2 on the rfftn lattice (last axis non-negative)."""
        freqs = list(self.freq_lattice)
        n_last, h_last = self.points[-1], self.spacing[-1]
        freqs[-1] = 2.0 * np.pi * sfft.rfftfreq(n_last, d=h_last)
        grids = np.meshgrid(*freqs, indexing="ij")
        return sum(g**2 for g in grids)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def field(self, values) -> "Field":
        return Field(self, values)

    def evaluate(self, fn) -> "Field":
        """Sample ``fn(*coords)`` on the grid."""
        return Field(self, np.broadcast_to(fn(*self.coords), self.shape).astype(float))


def make_grid(dim: int, half_length: float | Sequence[float], points: int | Sequence[int]) -> Grid:
    """Build a periodic grid; scalars are broadcast to every axis."""
    if np.isscalar(half_length):
        half_length = (float(half_length),) * dim
    if np.isscalar(points):
        points = (int(points),) * dim
    return Grid(int(dim), tuple(float(L) for L in half_length), tuple(int(n) for n in points))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a grid. Values are stored read-only."""

    grid: Grid
    values: np.ndarray
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise ParameterError(
                    f"field has {values.size} values, grid expects {self.grid.size}"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ParameterError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        return Field(self.grid, self.values + _values(other, self.grid))

    def __sub__(self, other):
        return Field(self.grid, self.values - _values(other, self.grid))

    def __mul__(self, scalar):
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def norm(self, p: float = 2.0) -> float:
        return float((self.grid.cell_volume * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def _values(other, grid: Grid) -> np.ndarray:
    if isinstance(other, Field):
        _check_same_grid(other.grid, grid)
        return other.values
    return np.asarray(other, dtype=float)


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ParameterError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Full (non-halved) discrete Fourier image of a real field."""

    grid: Grid
    coeffs: np.ndarray

    def l2_norm_sq(self) -> float:
        return float(self.grid.spectral_weight * np.sum(np.abs(self.coeffs) ** 2))


def forward_transform(u: Field) -> SpectralField:
    return SpectralField(u.grid, sfft.fftn(u.values, workers=_workers()))


def inverse_transform(U: SpectralField) -> Field:
    coeffs = np.asarray(U.coeffs)
    if not np.all(np.isfinite(coeffs)):
        raise ParameterError("spectral coefficients must be finite")
    return Field(U.grid, sfft.ifftn(coeffs, workers=_workers()).real)


@functools.lru_cache(maxsize=64)
def _half_symbol(grid: Grid, s: float) -> np.ndarray:
    return (1.0 + grid.xi_sq_half) ** s


def _apply_power(grid: Grid, values: np.ndarray, s: float) -> np.ndarray:
    """Array-level (I - Delta)^s; the public wrapper is :func:`apply_bessel_power`."""
    if s == 0:
        return np.array(values, dtype=float, copy=True)
    workers = _workers()
    U = sfft.rfftn(values, workers=workers)
    U *= _half_symbol(grid, float(s))
    return sfft.irfftn(U, s=grid.shape, workers=workers)


def apply_bessel_power(u: Field, s: float) -> Field:
    """Return (I - Delta)^s u for any finite real ``s``."""
    if not np.isfinite(s):
        raise ParameterError(f"exponent must be finite, got {s}")
    return Field(u.grid, _apply_power(u.grid, u.values, s))


def _half_weights(grid: Grid) -> np.ndarray:
    """Multiplicity of each rfft coefficient in the full Hermitian spectrum."""
    n = grid.points[-1]
    m = np.full(n // 2 + 1, 2.0)
    m[0] = 1.0
    m[-1] = 1.0
    return m


def _norm_sq(grid: Grid, values: np.ndarray, alpha: float) -> float:
    U = sfft.rfftn(values, workers=_workers())
    power = np.abs(U) ** 2 * _half_weights(grid)
    if alpha != 0:
        power = power * _half_symbol(grid, float(alpha))
    return float(grid.spectral_weight * power.sum())


def bessel_norm_sq(u: Field, alpha: float) -> float:
    """||(I - Delta)^{alpha/2} u||_2^2, evaluated spectrally."""
    return _norm_sq(u.grid, u.values, alpha)


def _inner(grid: Grid, a: np.ndarray, b: np.ndarray, alpha: float) -> float:
    if alpha == 0:
        return float(grid.cell_volume * np.sum(a * b))
    workers = _workers()
    A = sfft.rfftn(a, workers=workers)
    B = sfft.rfftn(b, workers=workers)
    terms = (A * np.conj(B)).real * _half_weights(grid) * _half_symbol(grid, float(alpha))
    return float(grid.spectral_weight * terms.sum())


def bessel_inner(u: Field, v: Field, alpha: float) -> float:
    """Bilinear form sum_k (1+|xi|^2)^alpha U_k conj(V_k) * w."""
    _check_same_grid(u.grid, v.grid)
    return _inner(u.grid, u.values, v.values, alpha)


def l2_inner(u: Field, v: Field) -> float:
    _check_same_grid(u.grid, v.grid)
    return float(u.grid.cell_volume * np.sum(u.values * v.values))


def integrate(u: Field | np.ndarray, grid: Grid | None = None) -> float:
    if isinstance(u, Field):
        return float(u.grid.cell_volume * u.values.sum())
    return float(grid.cell_volume * np.sum(u))


def _gradient(grid: Grid, values: np.ndarray) -> list[np.ndarray]:
    U = sfft.fftn(values, workers=_workers())
    out = []
    for axis, (xi, n) in enumerate(zip(grid.freq_lattice, grid.points)):
        k = xi.copy()
        k[n // 2] = 0.0  # odd derivative of the unpaired Nyquist mode
        shape = [1] * grid.dim
        shape[axis] = n
        out.append(sfft.ifftn(1j * k.reshape(shape) * U, workers=_workers()).real)
    return out


def spectral_gradient(u: Field) -> list[Field]:
    return [Field(u.grid, g) for g in _gradient(u.grid, u.values)]
