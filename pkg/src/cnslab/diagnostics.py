"""Integral functionals, the effective viscous flux and the two conservation-law residuals."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Union

import numpy as np

from . import dynamics
from . import fields as F
from .fields import ScalarField, VectorField
from .state import State, compatibility_residual, temperature, velocity

#: Guard for residual denominators.
EPS = 1e-14
#: Above this vacuum fraction the energy-law residual is flagged unreliable.
VACUUM_RELIABILITY = 0.1
KINETIC_POWERS = (2, 4, 6)


def total_energy(s: State) -> float:
    """``int (rho |u|^2 / 2 + P) dx``; with unit heat capacity ``rho theta = P``."""
    u = velocity(s)
    return F.integrate(ScalarField(s.grid, 0.5 * np.sum(s.m.values * u.values, axis=0) + s.P.values))


def kinetic_energy(s: State) -> float:
    u = velocity(s)
    return F.integrate(ScalarField(s.grid, 0.5 * np.sum(s.m.values * u.values, axis=0)))


def weighted_kinetic(s: State, q: int) -> float:
    """``int rho |u|^q dx`` for ``q`` in {2, 4, 6}."""
    if q not in KINETIC_POWERS:
        raise ValueError(f"q must be one of {KINETIC_POWERS}, got {q}")
    speed2 = np.sum(velocity(s).values ** 2, axis=0)
    return F.integrate(ScalarField(s.grid, s.rho.values * speed2 ** (q // 2)))


def dissipation_functional(s: State) -> float:
    """``int |grad u|^2 (1 + |u|^2 + |u|^4) dx`` (Frobenius norm of the gradient)."""
    u = velocity(s)
    grad2 = np.sum(F.jacobian(u) ** 2, axis=(0, 1))
    speed2 = np.sum(u.values**2, axis=0)
    return F.integrate(ScalarField(s.grid, grad2 * (1 + speed2 + speed2**2)))


def effective_viscous_flux(s: State) -> ScalarField:
    """``G = (2 mu + lam) div u - P + mean(P)``; the mean correction makes ``int G = 0``."""
    div_u = F.divergence(velocity(s))
    return ScalarField(s.grid, s.params.bulk * div_u.values - s.P.values + s.P.mean())


def vorticity(s: State) -> Union[VectorField, ScalarField]:
    return F.curl(velocity(s))


def material_derivative(s: State, tend: "dynamics.Tendency") -> VectorField:
    """``u_t + (u . grad) u`` with ``u_t`` recovered from the conserved tendencies.

    Zero on the vacuum set, where ``u_t`` is not meaningful.
    """
    grid = s.grid
    u = velocity(s)
    floor = s.params.rho_floor
    u_drho = F.dealias_scale(u, tend.d_rho).values
    u_t = (tend.d_m.values - u_drho) / np.maximum(s.rho.values, floor)[None]
    udot = u_t + F.advective_derivative(u, u).values
    return VectorField(grid, np.where(s.vacuum_mask()[None], 0.0, udot))


def _relres(num: np.ndarray, den: np.ndarray, grid) -> float:
    n = F.tensor_lp_norm(grid, num, 2)
    d = F.tensor_lp_norm(grid, den, 2)
    return n / max(d, EPS)


def momentum_identity_residual(s: State, tend: Optional["dynamics.Tendency"] = None) -> float:
    """Relative L2 defect of ``rho u_dot = grad G - mu curl omega``."""
    if tend is None:
        tend = dynamics.rhs(s)
    udot = material_derivative(s, tend)
    rho_udot = s.rho.values[None] * udot.values
    grad_G = F.gradient(effective_viscous_flux(s)).values
    curl_w = F.curl_of(vorticity(s)).values
    return _relres(rho_udot - grad_G + s.params.mu * curl_w, rho_udot, s.grid)


def energy_flux(s: State) -> VectorField:
    """``F = (mu/2) grad |u|^2 + mu (u . grad) u + lam u div u - P u``."""
    mu, lam = s.params.mu, s.params.lam
    u = velocity(s)
    half_speed2 = 0.5 * F.dealias_dot(u, u)
    div_u = F.divergence(u)
    out = (
        mu * F.gradient(half_speed2)
        + mu * F.advective_derivative(u, u)
        + lam * F.dealias_scale(u, div_u)
        - F.dealias_scale(u, s.P)
    )
    return out


def energy_law_residual(s: State, tend: Optional["dynamics.Tendency"] = None) -> float:
    """Relative L2 defect of ``(rho E)_t + div(rho E u) = div F`` with ``E = theta + |u|^2/2``.

    The time derivative comes from the conserved tendencies through
    ``(rho E)_t = P_t + u . m_t - |u|^2 rho_t / 2``.  Meaningless on large vacuum
    sets; see :data:`VACUUM_RELIABILITY`.
    """
    if tend is None:
        tend = dynamics.rhs(s)
    u = velocity(s)
    half_speed2 = 0.5 * F.dealias_dot(u, u)
    d_rhoE = tend.d_P + F.dealias_dot(u, tend.d_m) - F.dealias_product(half_speed2, tend.d_rho)
    rhoE = s.P + 0.5 * F.dealias_dot(s.m, u)
    transport = F.divergence(F.dealias_scale(u, rhoE))
    div_flux = F.divergence(energy_flux(s))
    return _relres((d_rhoE + transport - div_flux).values, div_flux.values, s.grid)


# -- records ----------------------------------------------------------------------


@dataclass
class DiagnosticRecord:
    """All monitored functionals at one time.

    ``dt`` and the clip fields come from the run loop; offline recomputation
    leaves them ``None``.
    """

    t: float
    step: Optional[int]
    dt: Optional[float]
    mass: float
    total_energy: float
    kinetic_energy: float
    kinetic_q2: float
    kinetic_q4: float
    kinetic_q6: float
    dissipation: float
    sup_rho: float
    sup_theta: float
    min_rho: float
    min_theta: float
    min_P: float
    M: float
    grad_u_l2: float
    q_tilde: float
    grad_rho_lq: float
    grad_P_lq: float
    grad_udot_l2: float
    compat_g_l2: float
    momentum_relres: float
    energy_relres: float
    energy_reliable: bool
    vacuum_fraction: float
    clip_rho: Optional[float] = None
    clip_P: Optional[float] = None
    min_rho_preclip: Optional[float] = None
    min_P_preclip: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"type": "diagnostic"}
        for k, v in asdict(self).items():
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            out[k] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def gronwall_f(self) -> float:
        return math.e + self.grad_rho_lq + self.grad_P_lq

    @property
    def gronwall_g(self) -> float:
        return 1.0 + self.grad_udot_l2**2


#: Columns recomputable from a stored state alone.
LOOP_FIELDS = ("step", "dt", "clip_rho", "clip_P", "min_rho_preclip", "min_P_preclip")
CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticRecord))


def make_record(
    s: State,
    *,
    step: Optional[int] = None,
    dt: Optional[float] = None,
    clip: Optional["dynamics.ClipInfo"] = None,
    q_tilde: float = 4.0,
) -> DiagnosticRecord:
    grid = s.grid
    tend = dynamics.rhs(s)
    u = velocity(s)
    theta = temperature(s)
    udot = material_derivative(s, tend)
    grad_udot = F.jacobian(udot)
    rec = DiagnosticRecord(
        t=float(s.t),
        step=step,
        dt=dt,
        mass=F.integrate(s.rho),
        total_energy=total_energy(s),
        kinetic_energy=kinetic_energy(s),
        kinetic_q2=weighted_kinetic(s, 2),
        kinetic_q4=weighted_kinetic(s, 4),
        kinetic_q6=weighted_kinetic(s, 6),
        dissipation=dissipation_functional(s),
        sup_rho=F.sup_norm(s.rho),
        sup_theta=F.sup_norm(theta),
        min_rho=float(s.rho.values.min()),
        min_theta=float(theta.values.min()),
        min_P=float(s.P.values.min()),
        M=dynamics.blowup_monitor(s),
        grad_u_l2=F.tensor_lp_norm(grid, F.jacobian(u), 2),
        q_tilde=float(q_tilde),
        grad_rho_lq=F.lp_norm(F.gradient(s.rho), q_tilde),
        grad_P_lq=F.lp_norm(F.gradient(s.P), q_tilde),
        grad_udot_l2=F.tensor_lp_norm(grid, grad_udot, 2),
        compat_g_l2=compatibility_residual(s).norm_g,
        momentum_relres=momentum_identity_residual(s, tend),
        energy_relres=energy_law_residual(s, tend),
        energy_reliable=s.vacuum_fraction() <= VACUUM_RELIABILITY,
        vacuum_fraction=s.vacuum_fraction(),
    )
    if clip is not None:
        rec.clip_rho = clip.rho_mass
        rec.clip_P = clip.P_mass
        rec.min_rho_preclip = clip.min_rho_preclip
        rec.min_P_preclip = clip.min_P_preclip
    return rec


def records_to_csv(records, stream: Optional[io.TextIOBase] = None) -> str:
    """Write records with the fixed :data:`CSV_COLUMNS` order; returns the text."""
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        d = r.to_dict()
        writer.writerow(["" if d[c] is None else repr(d[c]) if isinstance(d[c], float) else d[c] for c in CSV_COLUMNS])
    return buf.getvalue() if stream is None else ""
