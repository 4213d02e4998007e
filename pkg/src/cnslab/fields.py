"""Periodic grids, field containers and Fourier pseudo-spectral calculus.

Fields are stored in physical space on a uniform collocated grid covering the
torus ``[0, L_1) x ... x [0, L_d)``.  Transforms are performed on demand with
real FFTs; no spectral state is kept between calls.

Conventions
-----------
* Arrays are indexed ``[x, y]`` / ``[x, y, z]`` (``indexing="ij"``).
* First derivatives drop the Nyquist mode (the derivative of the trigonometric
  interpolant is not real there); second derivatives keep it.
* Quadrature is the periodic rectangle rule, ``mean * volume``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np


class NonFiniteError(ValueError):
    """Raised when a field handed to an operator contains NaN or Inf."""


class GridMismatchError(ValueError):
    """Raised when two fields live on different grids."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid.

    Args:
        dim: spatial dimension, 2 or 3.
        n: points per axis, a power of two >= 8.
        length: box side, either one value for all axes or one per axis.
    """

    dim: int
    n: int
    length: Union[float, Sequence[float]] = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        lengths = (
            tuple(float(v) for v in self.length)
            if isinstance(self.length, (tuple, list, np.ndarray))
            else (float(self.length),) * self.dim
        )
        if len(lengths) != self.dim or any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ValueError(f"box length must be positive per axis, got {self.length}")
        object.__setattr__(self, "length", lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(v / self.n for v in self.length)

    @property
    def h(self) -> float:
        """Smallest grid spacing."""
        return min(self.spacing)

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @property
    def size(self) -> int:
        return self.n**self.dim

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, n, ..., n)``."""
        axes = [np.arange(self.n) * dx for dx in self.spacing]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int) -> "GridSpec":
        return GridSpec(self.dim, self.n * factor, self.length)

    # -- spectral tables -------------------------------------------------

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @cached_property
    def integer_modes(self) -> list[np.ndarray]:
        """Signed integer wavenumbers per axis, broadcastable to the rfft layout."""
        out = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                k = np.arange(self.n // 2 + 1)
            else:
                k = np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)
            shape = [1] * self.dim
            shape[axis] = k.size
            out.append(k.reshape(shape))
        return out

    @cached_property
    def wavevector(self) -> list[np.ndarray]:
        """Angular wavenumbers ``2 pi k / L`` per axis, Nyquist kept."""
        return [2 * np.pi * k / L for k, L in zip(self.integer_modes, self.length)]

    @cached_property
    def derivative_wavevector(self) -> list[np.ndarray]:
        """Wavenumbers for first derivatives, Nyquist mode zeroed."""
        out = []
        for k_int, k in zip(self.integer_modes, self.wavevector):
            out.append(np.where(np.abs(k_int) == self.n // 2, 0.0, k))
        return out

    @cached_property
    def k_squared(self) -> np.ndarray:
        total = np.zeros(self.spectral_shape)
        for k in self.wavevector:
            total = total + k**2
        return total

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep ``|k_i| <= n // 3`` on every axis."""
        kmax = self.n // 3
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.integer_modes:
            mask = mask & (np.abs(k) <= kmax)
        return mask

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(a, s=self.shape, axes=tuple(range(-self.dim, 0)))

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(a_hat, s=self.shape, axes=tuple(range(-self.dim, 0)))

    def manifest(self) -> dict:
        return {"dim": self.dim, "n": self.n, "length": list(self.length)}


def _check_finite(values: np.ndarray, what: str = "field"):
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{what} contains non-finite values")


def _same_grid(a: "ScalarField | VectorField", b: "ScalarField | VectorField"):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar on every grid node."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        return cls(grid, fn(*grid.coords()))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return other.values
        if isinstance(other, VectorField):
            return NotImplemented
        return other

    def __add__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else ScalarField(self.grid, self.values + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else ScalarField(self.grid, self.values - o)

    def __rsub__(self, other):
        return ScalarField(self.grid, other - self.values)

    def __mul__(self, other):
        if isinstance(other, VectorField):
            return other * self
        o = self._coerce(other)
        return ScalarField(self.grid, self.values * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else ScalarField(self.grid, self.values / o)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """``dim`` Cartesian components, ``values.shape == (dim, n, ..., n)``."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.grid.dim,) + self.grid.shape
        if values.shape != expected:
            raise ValueError(f"expected shape {expected}, got {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        grid = components[0].grid
        return cls(grid, np.array([c.values for c in components]))

    def __getitem__(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])

    def __len__(self):
        return self.grid.dim

    def __iter__(self):
        return (self[i] for i in range(self.grid.dim))

    def dot(self, other: "VectorField") -> ScalarField:
        _same_grid(self, other)
        return ScalarField(self.grid, np.sum(self.values * other.values, axis=0))

    def norm(self) -> ScalarField:
        """Pointwise Euclidean magnitude."""
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=0)))

    def _coerce(self, other):
        if isinstance(other, VectorField):
            _same_grid(self, other)
            return other.values
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return other.values[None]
        return other

    def __add__(self, other):
        return VectorField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return VectorField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return VectorField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return VectorField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return VectorField(self.grid, -self.values)


# -- differential operators ---------------------------------------------------


def _partial(grid: GridSpec, a_hat: np.ndarray, axis: int) -> np.ndarray:
    return grid.ifft(1j * grid.derivative_wavevector[axis] * a_hat)


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient of a scalar field."""
    _check_finite(f.values)
    grid = f.grid
    f_hat = grid.fft(f.values)
    return VectorField(grid, np.array([_partial(grid, f_hat, i) for i in range(grid.dim)]))


def jacobian(u: VectorField) -> np.ndarray:
    """Velocity gradient ``J[i, j] = d_j u_i`` as a raw array ``(dim, dim, ...)``."""
    _check_finite(u.values)
    grid = u.grid
    out = np.empty((grid.dim, grid.dim) + grid.shape)
    for i in range(grid.dim):
        u_hat = grid.fft(u.values[i])
        for j in range(grid.dim):
            out[i, j] = _partial(grid, u_hat, j)
    return out


def divergence(u: VectorField) -> ScalarField:
    _check_finite(u.values)
    grid = u.grid
    total = np.zeros(grid.spectral_shape, dtype=complex)
    for i in range(grid.dim):
        total += 1j * grid.derivative_wavevector[i] * grid.fft(u.values[i])
    return ScalarField(grid, grid.ifft(total))


def curl(u: VectorField) -> Union[VectorField, ScalarField]:
    """Vorticity: a vector in 3D, the scalar ``d_1 u_2 - d_2 u_1`` in 2D."""
    _check_finite(u.values)
    grid = u.grid
    k = grid.derivative_wavevector
    u_hat = [grid.fft(c) for c in u.values]
    if grid.dim == 2:
        return ScalarField(grid, grid.ifft(1j * (k[0] * u_hat[1] - k[1] * u_hat[0])))
    comps = [
        grid.ifft(1j * (k[1] * u_hat[2] - k[2] * u_hat[1])),
        grid.ifft(1j * (k[2] * u_hat[0] - k[0] * u_hat[2])),
        grid.ifft(1j * (k[0] * u_hat[1] - k[1] * u_hat[0])),
    ]
    return VectorField(grid, np.array(comps))


def curl_of(w: Union[VectorField, ScalarField]) -> VectorField:
    """Curl of a vorticity; in 2D the scalar ``w`` gives ``(d_2 w, -d_1 w)``."""
    if isinstance(w, ScalarField):
        g = gradient(w)
        return VectorField(w.grid, np.array([g.values[1], -g.values[0]]))
    return curl(w)


def laplacian(f: ScalarField) -> ScalarField:
    _check_finite(f.values)
    grid = f.grid
    return ScalarField(grid, grid.ifft(-grid.k_squared * grid.fft(f.values)))


def vector_laplacian(u: VectorField) -> VectorField:
    _check_finite(u.values)
    grid = u.grid
    return VectorField(grid, np.array([grid.ifft(-grid.k_squared * grid.fft(c)) for c in u.values]))


def grad_div(u: VectorField) -> VectorField:
    return gradient(divergence(u))


# -- quadrature and norms --------------------------------------------------------


def integrate(f: ScalarField) -> float:
    """Periodic rectangle rule; ``np.sum`` uses a fixed pairwise reduction order."""
    return float(np.sum(f.values) * np.prod(f.grid.spacing))


def lp_norm(f: Union[ScalarField, VectorField], p: float) -> float:
    """``L^p`` norm over the box; vector fields use the pointwise Euclidean magnitude."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = np.abs(f.values) if isinstance(f, ScalarField) else f.norm().values
    if np.isinf(p):
        return float(np.max(mag))
    cell = float(np.prod(f.grid.spacing))
    if p == 2:
        return float(np.sqrt(np.sum(mag * mag) * cell))
    return float((np.sum(mag**p) * cell) ** (1.0 / p))


def sup_norm(f: Union[ScalarField, VectorField]) -> float:
    return lp_norm(f, np.inf)


def tensor_lp_norm(grid: GridSpec, t: np.ndarray, p: float) -> float:
    """``L^p`` norm of a raw tensor array ``(..., n, ..., n)`` with Frobenius magnitude."""
    lead = t.ndim - grid.dim
    mag = np.sqrt(np.sum(t**2, axis=tuple(range(lead)))) if lead else np.abs(t)
    return lp_norm(ScalarField(grid, mag), p)


# -- dealiasing ------------------------------------------------------------------


def truncate(f: ScalarField) -> ScalarField:
    """Zero every Fourier mode outside the two-thirds band."""
    grid = f.grid
    return ScalarField(grid, grid.ifft(grid.dealias_mask * grid.fft(f.values)))


def dealias_product(a: ScalarField, b: ScalarField) -> ScalarField:
    """Alias-free product: both factors and the result are band-limited to ``|k| <= n//3``."""
    _same_grid(a, b)
    grid = a.grid
    mask = grid.dealias_mask
    a_t = grid.ifft(mask * grid.fft(a.values))
    b_t = grid.ifft(mask * grid.fft(b.values))
    return ScalarField(grid, grid.ifft(mask * grid.fft(a_t * b_t)))


def dealias_dot(a: VectorField, b: VectorField) -> ScalarField:
    total = dealias_product(a[0], b[0])
    for i in range(1, a.grid.dim):
        total = total + dealias_product(a[i], b[i])
    return total


def dealias_scale(u: VectorField, s: ScalarField) -> VectorField:
    """Componentwise dealiased ``s * u``."""
    return VectorField.from_components([dealias_product(c, s) for c in u])


def advective_derivative(u: VectorField, v: VectorField) -> VectorField:
    """Dealiased ``(u . grad) v``."""
    jac = jacobian(v)
    grid = u.grid
    comps = []
    for i in range(grid.dim):
        total = dealias_product(u[0], ScalarField(grid, jac[i, 0]))
        for j in range(1, grid.dim):
            total = total + dealias_product(u[j], ScalarField(grid, jac[i, j]))
        comps.append(total)
    return VectorField.from_components(comps)


def resample(f: ScalarField, grid: GridSpec) -> ScalarField:
    """Evaluate the trigonometric interpolant of ``f`` on another grid of the same box.

    The Nyquist mode of the source is dropped so the interpolant is real.
    """
    src = f.grid
    if src.length != grid.length or src.dim != grid.dim:
        raise GridMismatchError("resample needs the same box and dimension")
    f_hat = src.fft(f.values)
    nyq = np.zeros(src.spectral_shape, dtype=bool)
    for k in src.integer_modes:
        nyq = nyq | (np.abs(k) == src.n // 2)
    f_hat = np.where(nyq, 0.0, f_hat)
    out = np.zeros(grid.spectral_shape, dtype=complex)
    kmax = min(src.n, grid.n) // 2 - 1
    src_idx, dst_idx = [], []
    for axis in range(src.dim):
        if axis == src.dim - 1:
            src_idx.append(np.arange(kmax + 1))
            dst_idx.append(np.arange(kmax + 1))
        else:
            signed = np.concatenate([np.arange(kmax + 1), np.arange(-kmax, 0)])
            src_idx.append(signed % src.n)
            dst_idx.append(signed % grid.n)
    out[np.ix_(*dst_idx)] = f_hat[np.ix_(*src_idx)]
    scale = grid.size / src.size
    return ScalarField(grid, grid.ifft(out * scale))


def resample_vector(u: VectorField, grid: GridSpec) -> VectorField:
    return VectorField.from_components([resample(c, grid) for c in u])
