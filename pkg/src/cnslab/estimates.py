"""Computable monitors for the analytic inequalities behind the blowup criterion.

Monitors report the smallest constant that makes an inequality hold for the
field at hand.  They never fail on magnitude; only algebraic facts such as the
sign of :func:`lemma31_coefficient` are hard checks.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Optional

import numpy as np

from . import fields as F
from .fields import ScalarField, VectorField

#: Regularization of ``|u|`` near zeros of ``u``.
MODULUS_DELTA = 1e-12


class UndefinedRatioError(ValueError):
    """Both sides of an inequality vanish, so no constant is determined."""


@dataclass(frozen=True)
class InequalityReport:
    """One evaluation of ``lhs <= C * rhs``.

    ``ratio`` is ``lhs / rhs`` for the assembled right-hand side and
    ``satisfied_for_constant`` the smallest admissible ``C``; they coincide for
    the linear inequalities monitored here.
    """

    name: str
    lhs: float
    rhs_components: Dict[str, float]
    ratio: float
    satisfied_for_constant: float
    t: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.ratio) and self.ratio >= 0):
            raise ValueError(f"{self.name}: ratio must be finite and nonnegative, got {self.ratio}")

    def to_dict(self) -> dict:
        return {
            "type": "monitor",
            "name": self.name,
            "t": self.t,
            "lhs": self.lhs,
            "rhs_components": dict(self.rhs_components),
            "ratio": self.ratio,
            "satisfied_for_constant": self.satisfied_for_constant,
        }


def _report(name: str, lhs: float, rhs: float, components: Dict[str, float], t=None) -> InequalityReport:
    if lhs == 0:
        return InequalityReport(name, 0.0, components, 0.0, 0.0, t)
    if not rhs > 0:
        raise UndefinedRatioError(f"{name}: right-hand side vanishes while lhs={lhs:.3e}")
    r = lhs / rhs
    return InequalityReport(name, lhs, components, r, r, t)


def lemma31_coefficient(mu, lam, q):
    """Coefficient ``q (mu (q - 1) - (lam + mu) (q - 2)^2 / 4)`` of the weighted energy estimate.

    It multiplies ``|u|^(q-2) |grad |u||^2`` after the cross term has been
    absorbed; at ``q = 6`` it is ``6 (mu - 4 lam)``.  Exact for ``Fraction`` or
    symbolic arguments.
    """
    if isinstance(q, numbers.Number) and q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    if isinstance(mu, numbers.Number) and not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return q * (mu * (q - 1) - (lam + mu) * (q - 2) ** 2 / 4)


def pointwise_gradient_inequality(u: VectorField, delta: float = MODULUS_DELTA) -> float:
    """Largest pointwise excess ``|grad |u|| - |grad u|``; at most roundoff for resolved ``u``.

    ``|u|`` is regularized as ``sqrt(|u|^2 + delta^2)``, whose gradient is
    ``grad(|u|^2) / (2 sqrt(|u|^2 + delta^2))``.  Only the smooth ``|u|^2`` is
    differentiated spectrally: the cone of ``|u|`` at a zero of ``u`` looks the
    same at every resolution, so differentiating ``|u|`` itself never converges
    in the max norm.
    """
    grid = u.grid
    speed2 = ScalarField(grid, np.sum(u.values**2, axis=0))
    modulus = np.sqrt(speed2.values + delta**2)
    grad_mod = F.gradient(speed2).norm().values / (2 * modulus)
    grad_u = np.sqrt(np.sum(F.jacobian(u) ** 2, axis=(0, 1)))
    return float(np.max(grad_mod - grad_u))


def sobolev_ratio(f: ScalarField, t=None) -> InequalityReport:
    """``||f - mean f||_6 / ||grad f||_2``, the torus (Poincare) form of the L6 Sobolev bound.

    Raises:
        UndefinedRatioError: for a constant field.
    """
    centered = f - f.mean()
    grad = F.lp_norm(F.gradient(f), 2)
    lhs = F.lp_norm(centered, 6)
    if grad == 0 or lhs == 0:
        raise UndefinedRatioError("sobolev ratio is undefined for a constant field")
    return _report("sobolev_l6", lhs, grad, {"grad_l2": grad}, t)


def sup_interpolation_ratio(g: ScalarField, p: float, q: float, t=None) -> InequalityReport:
    """``||g||_inf / (||g||_p + ||grad g||_q)``, reported only; no torus value of the constant exists."""
    lp = F.lp_norm(g, p)
    grad_q = F.lp_norm(F.gradient(g), q)
    return _report("sup_interpolation", F.sup_norm(g), lp + grad_q, {"g_lp": lp, "grad_g_lq": grad_q}, t)


def second_derivatives(u: VectorField) -> np.ndarray:
    """All ``d_j d_k u_i`` as an array ``(dim, dim, dim, ...)``."""
    grid = u.grid
    kv = grid.derivative_wavevector
    k2 = grid.wavevector
    out = np.empty((grid.dim,) * 3 + grid.shape)
    for i in range(grid.dim):
        uh = grid.fft(u.values[i])
        for j in range(grid.dim):
            for k in range(grid.dim):
                # diagonal second derivatives keep the Nyquist mode, like the Laplacian
                mult = -(k2[j] ** 2) if j == k else -kv[j] * kv[k]
                out[i, j, k] = grid.ifft(mult * uh)
    return out


def log_estimate_monitor(u: VectorField, q_tilde: float = 4.0, t=None) -> InequalityReport:
    """Smallest ``C`` with ``||grad u||_inf <= C (A log(e + B) + ||grad u||_2 + 1)``.

    ``A = ||div u||_inf + ||curl u||_inf`` and ``B = ||grad^2 u||_q``; every
    component is stored in the report.
    """
    if not 3 < q_tilde <= 6:
        raise ValueError(f"q_tilde must lie in (3, 6], got {q_tilde}")
    grid = u.grid
    jac = F.jacobian(u)
    lhs = float(np.max(np.sqrt(np.sum(jac**2, axis=(0, 1)))))
    div_inf = F.sup_norm(F.divergence(u))
    curl_inf = F.sup_norm(F.curl(u))
    hess_q = F.tensor_lp_norm(grid, second_derivatives(u), q_tilde)
    grad_l2 = F.tensor_lp_norm(grid, jac, 2)
    log_term = math.log(math.e + hess_q)
    rhs = (div_inf + curl_inf) * log_term + grad_l2 + 1.0
    components = {
        "div_inf": div_inf,
        "curl_inf": curl_inf,
        "hessian_lq": hess_q,
        "log_factor": log_term,
        "grad_l2": grad_l2,
    }
    return _report("log_gradient", lhs, rhs, components, t)


# -- Gronwall ledger --------------------------------------------------------------


@dataclass(frozen=True)
class GronwallLedger:
    """Samples of ``f = e + ||grad rho||_q + ||grad P||_q`` and ``g = 1 + ||grad u_dot||_2^2``."""

    t: np.ndarray
    f: np.ndarray
    g: np.ndarray
    meta: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        t, f, g = (np.asarray(a, dtype=float) for a in (self.t, self.f, self.g))
        if not (t.shape == f.shape == g.shape and t.ndim == 1):
            raise ValueError("t, f and g must be 1-D arrays of equal length")
        if np.any(f < math.e - 1e-12) or np.any(g < 1.0 - 1e-12):
            raise ValueError("ledger requires f >= e and g >= 1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_records(cls, records: Iterable) -> "GronwallLedger":
        recs = list(records)
        return cls(
            np.array([r.t for r in recs]),
            np.array([r.gronwall_f for r in recs]),
            np.array([r.gronwall_g for r in recs]),
        )

    def subsample(self, factor: int) -> "GronwallLedger":
        return GronwallLedger(self.t[::factor], self.f[::factor], self.g[::factor], dict(self.meta))

    @cached_property
    def C_fit(self) -> float:
        return gronwall_fit(self)


def time_derivative(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Second-order differences on a nonuniform grid (one-sided at the ends).

    Written in terms of successive slopes so that a constant series gives
    exactly zero.
    """
    h = np.diff(t)
    slope = np.diff(f) / h
    out = np.empty_like(f)
    out[1:-1] = (h[1:] * slope[:-1] + h[:-1] * slope[1:]) / (h[1:] + h[:-1])
    out[0] = slope[0] - h[0] / (h[0] + h[1]) * (slope[1] - slope[0])
    out[-1] = slope[-1] + h[-1] / (h[-1] + h[-2]) * (slope[-1] - slope[-2])
    return out


def gronwall_rates(ledger: GronwallLedger) -> np.ndarray:
    """Pointwise ``f' / (g f ln f)``."""
    t, f, g = ledger.t, ledger.f, ledger.g
    if t.size < 3:
        raise ValueError("gronwall fit needs at least 3 samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    return time_derivative(t, f) / (g * f * np.log(f))


def gronwall_fit(ledger: GronwallLedger) -> float:
    """Smallest ``C`` with ``f' <= C g f ln f`` at every sample, clipped below at zero."""
    return max(0.0, float(np.max(gronwall_rates(ledger))))
