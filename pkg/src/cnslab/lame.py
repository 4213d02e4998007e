"""Periodic Lamé solver and the pressure/velocity splitting ``u = v + w``.

``-mu lap v - (mu + lam) grad div v = f`` is inverted mode by mode.  With
``a = mu |k|^2`` and first-derivative wavenumbers ``k'`` (Nyquist zeroed, as
in the discrete gradient) the symbol is ``a I + (mu + lam) k' k'^T``, whose
inverse follows from the Sherman-Morrison formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import fields as F
from .diagnostics import EPS, material_derivative
from .dynamics import rhs
from .estimates import InequalityReport
from .fields import ScalarField, VectorField
from .state import PhysParams, State, velocity


@dataclass(frozen=True, eq=False)
class LameSolution:
    """Zero-mean solution ``v`` with its relative operator residual."""

    v: VectorField
    residual: float
    mean_removed: bool


def apply_lame(v: VectorField, params: PhysParams) -> VectorField:
    """``-mu lap v - (mu + lam) grad div v``."""
    return F.vector_laplacian(v) * (-params.mu) - F.grad_div(v) * (params.mu + params.lam)


def solve_lame(f: VectorField, params: PhysParams) -> LameSolution:
    """Solve the periodic Lamé system for zero-mean ``v``.

    A nonzero mean of ``f`` is not in the range of the operator; it is removed
    and ``mean_removed`` reports that.

    Raises:
        ValueError: unless ``mu > 0`` and ``2 mu + lam > 0``.
        NonFiniteError: if ``f`` is not finite.
    """
    mu, lam = params.mu, params.lam
    if not mu > 0 or not 2 * mu + lam > 0:
        raise ValueError(f"Lamé operator needs mu > 0 and 2 mu + lam > 0, got mu={mu}, lam={lam}")
    if not np.all(np.isfinite(f.values)):
        raise F.NonFiniteError("Lamé source is not finite")
    grid = f.grid
    f_hat = np.array([grid.fft(c) for c in f.values])
    zero = (0,) * grid.dim
    mean_removed = bool(np.any(np.abs(f_hat[(slice(None),) + zero]) > 1e-14 * max(1.0, np.abs(f_hat).max())))
    f_hat[(slice(None),) + zero] = 0.0

    kd = grid.derivative_wavevector
    a = mu * grid.k_squared
    b = mu + lam
    kd2 = sum(k**2 for k in kd)
    a_safe = np.where(a == 0, 1.0, a)
    k_dot_f = sum(k * fh for k, fh in zip(kd, f_hat))
    coef = b * k_dot_f / (a_safe * (a_safe + b * kd2))
    v_hat = np.array([f_hat[i] / a_safe - coef * kd[i] for i in range(grid.dim)])
    v_hat[(slice(None),) + zero] = 0.0
    v = VectorField(grid, np.array([grid.ifft(c) for c in v_hat]))

    f0 = VectorField(grid, np.array([grid.ifft(c) for c in f_hat]))
    denom = F.lp_norm(f0, 2)
    res = F.lp_norm(apply_lame(v, params) - f0, 2)
    return LameSolution(v, res / denom if denom > 0 else res, mean_removed)


class Decomposition(NamedTuple):
    v: VectorField
    w: VectorField
    residual: float


def decompose_velocity(s: State) -> Decomposition:
    """Split ``u = v + w`` with ``mu lap v + (mu + lam) grad div v = grad P``.

    ``w`` then satisfies ``mu lap w + (mu + lam) grad div w = rho u_dot``; the
    returned residual is the relative L2 defect of that equation.
    """
    params = s.params
    P_centered = s.P - s.P.mean()
    v = solve_lame(F.gradient(P_centered) * -1.0, params).v
    w = velocity(s) - v
    rho_udot = material_derivative(s, rhs(s)).values * s.rho.values[None]
    lhs = -apply_lame(w, params).values
    num = F.tensor_lp_norm(s.grid, lhs - rho_udot, 2)
    den = F.tensor_lp_norm(s.grid, rho_udot, 2)
    return Decomposition(v, w, num / max(den, EPS))


def divergence_form_source(g: np.ndarray, grid) -> VectorField:
    """``f_i = sum_j d_j g_ij`` for a matrix field ``g`` of shape ``(dim, dim, ...)``."""
    return VectorField(grid, np.array([F.divergence(VectorField(grid, g[i])).values for i in range(grid.dim)]))


def estimate_b6_monitor(sol: LameSolution, g: np.ndarray, r: float = 2.0, q: float = 4.0, t=None) -> InequalityReport:
    """``||grad v||_r / ||g||_r`` for a source ``f = div g``, with the sup-norm variant's pieces.

    The sup-norm variant bounds ``||grad v||_inf`` by
    ``C (1 + ln(e + ||grad g||_q) ||g||_inf + ||g||_r)``; its smallest ``C`` is
    stored as ``log_bound_constant``.

    Raises:
        ValueError: if ``g`` vanishes but ``v`` does not.
    """
    grid = sol.v.grid
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.dim, grid.dim) + grid.shape:
        raise F.GridMismatchError(f"g must have shape {(grid.dim, grid.dim) + grid.shape}, got {g.shape}")
    jac_v = F.jacobian(sol.v)
    lhs = F.tensor_lp_norm(grid, jac_v, r)
    g_r = F.tensor_lp_norm(grid, g, r)
    if g_r == 0:
        if lhs > 0:
            raise ValueError("source g vanishes but the solution does not")
        return InequalityReport("lame_gradient", 0.0, {"g_lr": 0.0}, 0.0, 0.0, t)
    grad_g = np.array([[F.gradient(ScalarField(grid, g[i, j])).values for j in range(grid.dim)] for i in range(grid.dim)])
    grad_g_q = F.tensor_lp_norm(grid, grad_g, q)
    g_inf = float(np.max(np.sqrt(np.sum(g**2, axis=(0, 1)))))
    grad_v_inf = float(np.max(np.sqrt(np.sum(jac_v**2, axis=(0, 1)))))
    log_rhs = 1.0 + math.log(math.e + grad_g_q) * g_inf + g_r
    components = {
        "g_lr": g_r,
        "grad_v_inf": grad_v_inf,
        "g_inf": g_inf,
        "grad_g_lq": grad_g_q,
        "log_bound_constant": grad_v_inf / log_rhs,
    }
    ratio = lhs / g_r
    return InequalityReport("lame_gradient", lhs, components, ratio, ratio, t)

