"""Dense-matrix reference implementations for small grids.

Every operator here is assembled as an explicit matrix from the DFT definition
and applied by matrix-vector products.  Nothing in this module calls an FFT or
reuses the spectral operators of :mod:`cnslab.fields`, so it can serve as an
independent check on them.  Sizes grow like ``n**(2*dim)``; keep ``n`` small.
"""

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def dft_matrix(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def _signed_modes(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


#: Entries and products are formed in extended precision so the reference sits
#: below the roundoff of the FFT path it checks.
WIDE = np.longdouble
_TWO_PI = WIDE("6.28318530717958647692528676655900577")


@lru_cache(maxsize=None)
def derivative_matrix_1d(n: int, length: float, order: int) -> np.ndarray:
    """Real ``n x n`` matrix differentiating the trigonometric interpolant ``order`` times.

    Entry ``(a, b)`` is ``(1/n) sum_k Re[(i k)^order exp(i k (x_a - x_b))]``; the
    phase is reduced modulo ``n`` in integers before the trigonometric call.
    For odd orders the Nyquist coefficient is discarded.
    """
    modes = _signed_modes(n)
    if order % 2:
        modes = modes[np.abs(modes) != n // 2]
    scale = (_TWO_PI / WIDE(length)) ** order
    diff = np.subtract.outer(np.arange(n), np.arange(n))
    out = np.zeros((n, n), dtype=WIDE)
    for k in modes:
        theta = _TWO_PI * WIDE(int(k) * diff % n) / WIDE(n) if k else np.zeros((n, n), dtype=WIDE)
        trig = (np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z), np.sin)[order % 4]
        out += scale * WIDE(int(k)) ** order * trig(theta)
    return out / WIDE(n)


@lru_cache(maxsize=None)
def _partial_matrix(dim: int, n: int, lengths: tuple, axis: int, order: int) -> np.ndarray:
    mats = [np.eye(n, dtype=WIDE) for _ in range(dim)]
    mats[axis] = derivative_matrix_1d(n, lengths[axis], order)
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _apply(D: np.ndarray, values: np.ndarray, shape) -> np.ndarray:
    return (D @ values.ravel().astype(WIDE)).reshape(shape)


def partial(grid, values: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    D = _partial_matrix(grid.dim, grid.n, tuple(grid.length), axis, order)
    return _apply(D, values, grid.shape).astype(float)


def gradient(grid, f: np.ndarray) -> np.ndarray:
    return np.array([partial(grid, f, i) for i in range(grid.dim)])


def divergence(grid, u: np.ndarray) -> np.ndarray:
    return sum(partial(grid, u[i], i) for i in range(grid.dim))


def curl(grid, u: np.ndarray) -> np.ndarray:
    d = lambda c, ax: partial(grid, u[c], ax)  # noqa: E731
    if grid.dim == 2:
        return d(1, 0) - d(0, 1)
    return np.array([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def laplacian(grid, f: np.ndarray) -> np.ndarray:
    D = sum(_partial_matrix(grid.dim, grid.n, tuple(grid.length), i, 2) for i in range(grid.dim))
    return _apply(D, f, grid.shape).astype(float)


@lru_cache(maxsize=None)
def _dealias_matrix(dim: int, n: int) -> np.ndarray:
    keep = (np.abs(_signed_modes(n)) <= n // 3).astype(float)
    F = dft_matrix(n)
    P1 = (np.conj(F).T @ np.diag(keep) @ F / n).real
    out = P1
    for _ in range(dim - 1):
        out = np.kron(out, P1)
    return out


def truncate(grid, f: np.ndarray) -> np.ndarray:
    return (_dealias_matrix(grid.dim, grid.n) @ f.ravel()).reshape(grid.shape)


def dealias_product(grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return truncate(grid, truncate(grid, a) * truncate(grid, b))


def convolution_product(grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-thirds-rule product computed by direct convolution of Fourier coefficients.

    Coefficients are obtained with explicit DFT sums, the band-limited factors are
    convolved mode by mode without wrap-around, and the result is truncated.
    """
    n, dim = grid.n, grid.dim
    F = dft_matrix(n)

    def coeffs(f):
        c = f.astype(complex)
        for axis in range(dim):
            c = np.moveaxis(np.tensordot(F, np.moveaxis(c, axis, 0), axes=1), 0, axis)
        return c / n**dim

    kmax = n // 3
    modes = _signed_modes(n)
    keep_idx = [i for i in range(n) if abs(modes[i]) <= kmax]
    ca, cb = coeffs(a), coeffs(b)
    out = np.zeros((n,) * dim, dtype=complex)
    for ia in itertools.product(keep_idx, repeat=dim):
        va = ca[ia]
        if va == 0:
            continue
        for ib in itertools.product(keep_idx, repeat=dim):
            ks = [modes[x] + modes[y] for x, y in zip(ia, ib)]
            if any(abs(k) > kmax for k in ks):
                continue
            out[tuple(k % n for k in ks)] += va * cb[ib]
    # synthesize
    x = out
    for axis in range(dim):
        x = np.moveaxis(np.tensordot(np.conj(F), np.moveaxis(x, axis, 0), axes=1), 0, axis)
    return x.real


# -- composite operators ---------------------------------------------------------


def velocity(rho, m, floor):
    safe = np.maximum(rho, floor)
    u = m / safe
    vac = (rho <= floor) & (np.sqrt(np.sum(m**2, axis=0)) <= floor)
    return np.where(vac[None], 0.0, u)


def rhs(grid, rho, m, P, mu, lam, floor=1e-10):
    """Right-hand side of the conserved system, term by term with dense operators."""
    dim = grid.dim
    u = velocity(rho, m, floor)
    prod = lambda a, b: dealias_product(grid, a, b)  # noqa: E731
    d_rho = -divergence(grid, np.array([m[i] for i in range(dim)]))
    J = np.array([[partial(grid, u[i], j) for j in range(dim)] for i in range(dim)])
    div_u = np.trace(J)
    flux = np.array([[prod(m[i], u[j]) for j in range(dim)] for i in range(dim)])
    grad_div = gradient(grid, div_u)
    grad_P = gradient(grid, P)
    d_m = np.array(
        [
            -sum(partial(grid, flux[i, j], j) for j in range(dim))
            + mu * laplacian(grid, u[i])
            + (mu + lam) * grad_div[i]
            - grad_P[i]
            for i in range(dim)
        ]
    )
    D = 0.5 * (J + J.transpose(1, 0, *range(2, J.ndim)))
    heat = 2 * mu * sum(prod(D[i, j], D[i, j]) for i in range(dim) for j in range(dim))
    heat = heat + lam * prod(div_u, div_u)
    Pu = np.array([prod(P, u[i]) for i in range(dim)])
    d_P = -divergence(grid, Pu) - prod(P, div_u) + heat
    return d_rho, d_m, d_P


def lame_operator_matrix(grid, mu, lam) -> np.ndarray:
    """Dense matrix of ``v -> -mu lap v - (mu + lam) grad div v`` on stacked components."""
    dim, size = grid.dim, grid.size
    lengths = tuple(grid.length)
    lap = sum(_partial_matrix(dim, grid.n, lengths, a, 2) for a in range(dim)).astype(float)
    D1 = [_partial_matrix(dim, grid.n, lengths, a, 1).astype(float) for a in range(dim)]
    A = np.zeros((dim * size, dim * size))
    for i in range(dim):
        A[i * size:(i + 1) * size, i * size:(i + 1) * size] -= mu * lap
        for j in range(dim):
            A[i * size:(i + 1) * size, j * size:(j + 1) * size] -= (mu + lam) * D1[i] @ D1[j]
    return A


def solve_lame(grid, f: np.ndarray, mu, lam) -> np.ndarray:
    """Minimum-norm least-squares solve; the null space is the constants, so ``v`` has zero mean."""
    A = lame_operator_matrix(grid, mu, lam)
    v, *_ = np.linalg.lstsq(A, f.reshape(-1), rcond=1e-12)
    return v.reshape((grid.dim,) + grid.shape)
