"""Semi-discrete right-hand side, SSP-RK3 stepping and the monitored run loop.

The evolved variables are ``(rho, m, P)`` with

    rho_t = -div m
    m_t   = -div(m (x) u) + mu lap u + (mu + lam) grad div u - grad P
    P_t   = -div(P u) - P div u + 2 mu |D(u)|^2 + lam (div u)^2

where ``D(u)`` is the symmetric velocity gradient.  Every nonlinear product is
formed with the two-thirds rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import diagnostics
from . import fields as F
from .fields import ScalarField, VectorField
from .state import State, temperature, velocity

log = logging.getLogger(__name__)

VERDICTS = ("completed", "suspected_blowup", "dt_collapse", "nonfinite_abort")


@dataclass(frozen=True, eq=False)
class Tendency:
    """Time derivatives of the conserved variables."""

    d_rho: ScalarField
    d_m: VectorField
    d_P: ScalarField

    def scaled(self, c: float) -> "Tendency":
        return Tendency(self.d_rho * c, self.d_m * c, self.d_P * c)


def _dealiased(grid, a: np.ndarray) -> np.ndarray:
    return grid.ifft(grid.dealias_mask * grid.fft(a))


def rhs(s: State, forcing: Optional[Tendency] = None) -> Tendency:
    """Evaluate the tendencies of ``s``; ``forcing`` is added verbatim when given.

    Raises:
        NonFiniteError: if the state or the result is not finite.
    """
    grid = s.grid
    dim = grid.dim
    mu, lam = s.params.mu, s.params.lam
    u = velocity(s)
    jac = F.jacobian(u)
    div_u = np.trace(jac)

    # band-limit each factor once; a product of two band-limited arrays is then
    # truncated again, which is exactly fields.dealias_product
    u_t = np.array([_dealiased(grid, c) for c in u.values])
    m_t = np.array([_dealiased(grid, c) for c in s.m.values])
    P_t = _dealiased(grid, s.P.values)
    div_t = _dealiased(grid, div_u)
    prod = lambda a, b: _dealiased(grid, a * b)  # noqa: E731

    d_rho = -F.divergence(s.m).values

    d_m = np.empty((dim,) + grid.shape)
    lap_u = F.vector_laplacian(u).values
    grad_div = F.gradient(ScalarField(grid, div_u)).values
    grad_P = F.gradient(s.P).values
    for i in range(dim):
        row = VectorField(grid, np.array([prod(m_t[i], u_t[j]) for j in range(dim)]))
        d_m[i] = -F.divergence(row).values + mu * lap_u[i] + (mu + lam) * grad_div[i] - grad_P[i]

    heat = lam * prod(div_t, div_t)
    for i in range(dim):
        for j in range(dim):
            d_ij = _dealiased(grid, 0.5 * (jac[i, j] + jac[j, i]))
            heat = heat + 2 * mu * prod(d_ij, d_ij)
    Pu = VectorField(grid, np.array([prod(P_t, u_t[i]) for i in range(dim)]))
    d_P = -F.divergence(Pu).values - prod(P_t, div_t) + heat

    if forcing is not None:
        d_rho = d_rho + forcing.d_rho.values
        d_m = d_m + forcing.d_m.values
        d_P = d_P + forcing.d_P.values
    for name, arr in (("d_rho", d_rho), ("d_m", d_m), ("d_P", d_P)):
        if not np.all(np.isfinite(arr)):
            raise F.NonFiniteError(f"tendency {name} is not finite")
    return Tendency(ScalarField(grid, d_rho), VectorField(grid, d_m), ScalarField(grid, d_P))


def compute_dt(s: State, cfl: float) -> float:
    """Advective-acoustic and viscous step limit.

    ``dt = cfl * min(h / (|u|_max + c_max), h^2 rho_eff / (2 d (2 mu + lam)))`` with
    ``c = sqrt(2 theta)`` and ``rho_eff = max(min rho, rho_floor)``.
    """
    grid = s.grid
    h = grid.h
    u_max = F.sup_norm(velocity(s))
    c_max = math.sqrt(2 * max(F.sup_norm(temperature(s)), 0.0))
    rho_eff = max(float(s.rho.values.min()), s.params.rho_floor)
    speed = u_max + c_max
    dt_adv = h / speed if speed > 0 else math.inf
    dt_visc = h**2 * rho_eff / (2 * grid.dim * s.params.bulk)
    return cfl * min(dt_adv, dt_visc)


@dataclass
class ClipInfo:
    """Negative density/pressure removed at the end of a step.

    ``rho_mass``/``P_mass`` are the integrals of the removed negative parts (>= 0),
    i.e. the amount added to the total by clipping.
    """

    rho_mass: float = 0.0
    P_mass: float = 0.0
    min_rho_preclip: float = math.inf
    min_P_preclip: float = math.inf

    def absorb(self, other: "ClipInfo"):
        self.rho_mass += other.rho_mass
        self.P_mass += other.P_mass
        self.min_rho_preclip = min(self.min_rho_preclip, other.min_rho_preclip)
        self.min_P_preclip = min(self.min_P_preclip, other.min_P_preclip)


def _stage(s: State, base: State, dt: float, a: float, forcing) -> State:
    """Shu-Osher stage ``a * base + (1 - a) * (s + dt L(s))``."""
    tend = rhs(s, forcing)
    b = 1.0 - a
    rho = a * base.rho.values + b * (s.rho.values + dt * tend.d_rho.values)
    m = a * base.m.values + b * (s.m.values + dt * tend.d_m.values)
    P = a * base.P.values + b * (s.P.values + dt * tend.d_P.values)
    return s.with_arrays(s.t, rho, m, P)


def advance(s: State, dt: float, forcing: Optional[Tendency] = None) -> tuple[State, ClipInfo]:
    """One SSP-RK3 step followed by clipping of negative density and pressure."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    s1 = _stage(s, s, dt, 0.0, forcing)
    s2 = _stage(s1, s, dt, 0.75, forcing)
    s3 = _stage(s2, s, dt, 1.0 / 3.0, forcing)
    rho, P = s3.rho.values, s3.P.values
    cell = float(np.prod(s.grid.spacing))
    info = ClipInfo(
        rho_mass=float(np.sum(np.maximum(-rho, 0.0)) * cell),
        P_mass=float(np.sum(np.maximum(-P, 0.0)) * cell),
        min_rho_preclip=float(rho.min()),
        min_P_preclip=float(P.min()),
    )
    if info.rho_mass or info.P_mass:
        rho = np.maximum(rho, 0.0)
        P = np.maximum(P, 0.0)
    return s3.with_arrays(s.t + dt, rho, s3.m.values, P), info


def step(s: State, dt: float, forcing: Optional[Tendency] = None) -> State:
    return advance(s, dt, forcing)[0]


def blowup_monitor(s: State) -> float:
    """``sup rho + sup theta``, the temperature sup taken off the vacuum set."""
    return F.sup_norm(s.rho) + F.sup_norm(temperature(s))


@dataclass(frozen=True)
class RunConfig:
    """Loop controls.

    ``dt_fixed`` bypasses the CFL rule (used for convergence studies);
    ``snapshot_every = 0`` disables snapshots.
    """

    t_end: float
    cfl: float = 0.4
    dt_min: float = 1e-9
    blowup_factor: float = 50.0
    output_every: int = 1
    snapshot_every: int = 0
    dt_fixed: Optional[float] = None
    max_steps: Optional[int] = None
    q_tilde: float = 4.0

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.output_every < 1 or self.snapshot_every < 0:
            raise ValueError("output_every >= 1 and snapshot_every >= 0 required")
        if self.dt_fixed is not None and not self.dt_fixed > 0:
            raise ValueError("dt_fixed must be positive")
        if not 3 < self.q_tilde <= 6:
            raise ValueError("q_tilde must lie in (3, 6]")


@dataclass
class Trajectory:
    records: List["diagnostics.DiagnosticRecord"] = field(default_factory=list)
    snapshots: List[State] = field(default_factory=list)
    verdict: Optional[str] = None
    steps: int = 0
    M0: float = math.nan
    M_sup: float = math.nan
    mass0: float = math.nan
    final: Optional[State] = None
    clip: ClipInfo = field(default_factory=ClipInfo)

    def set_verdict(self, verdict: str):
        if self.verdict is not None:
            raise RuntimeError(f"verdict already set to {self.verdict}")
        if verdict not in VERDICTS:
            raise ValueError(verdict)
        self.verdict = verdict

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def run(
    initial: State,
    rc: RunConfig,
    *,
    forcing: Optional[Tendency] = None,
    on_record: Optional[Callable[["diagnostics.DiagnosticRecord", State], None]] = None,
    on_snapshot: Optional[Callable[[int, State], None]] = None,
    keep_snapshots: bool = True,
) -> Trajectory:
    """Integrate to ``rc.t_end`` unless a termination criterion fires first.

    Termination: ``suspected_blowup`` once the running sup of the blowup monitor
    reaches ``blowup_factor`` times its initial value, ``dt_collapse`` when the
    step limit drops below ``dt_min``, ``nonfinite_abort`` on NaN/Inf.

    ``on_record(record, state)`` sees every emitted record together with the
    state it was computed from; ``on_snapshot(step, state)`` every snapshot.
    """
    s = initial.validate()
    traj = Trajectory()
    traj.M0 = traj.M_sup = blowup_monitor(s)
    traj.mass0 = F.integrate(s.rho)
    step_no = 0
    last_recorded = -1
    last_dt = 0.0

    def record(state: State, dt: float):
        nonlocal last_recorded
        if step_no == last_recorded:
            return
        rec = diagnostics.make_record(state, step=step_no, dt=dt, clip=traj.clip, q_tilde=rc.q_tilde)
        traj.records.append(rec)
        last_recorded = step_no
        if on_record is not None:
            on_record(rec, state)

    def snapshot(state: State):
        if keep_snapshots:
            traj.snapshots.append(state)
        if on_snapshot is not None:
            on_snapshot(step_no, state)

    record(s, 0.0)
    if rc.snapshot_every:
        snapshot(s)
    t_tol = 1e-12 * max(1.0, rc.t_end)
    while True:
        if s.t >= rc.t_end - t_tol:
            traj.set_verdict("completed")
            break
        if rc.max_steps is not None and step_no >= rc.max_steps:
            log.warning("max_steps=%d reached at t=%g", rc.max_steps, s.t)
            traj.set_verdict("completed")
            break
        dt = rc.dt_fixed if rc.dt_fixed is not None else compute_dt(s, rc.cfl)
        if dt < rc.dt_min:
            log.info("dt=%.3e below dt_min at t=%g", dt, s.t)
            traj.set_verdict("dt_collapse")
            break
        dt = min(dt, rc.t_end - s.t)
        try:
            # overflow on the way to a non-finite state is reported by advance itself
            with np.errstate(over="ignore", invalid="ignore"):
                s, info = advance(s, dt, forcing)
        except F.NonFiniteError as exc:
            log.error("non-finite values at t=%g: %s", s.t, exc)
            traj.set_verdict("nonfinite_abort")
            break
        step_no += 1
        last_dt = dt
        traj.clip.absorb(info)
        traj.M_sup = max(traj.M_sup, blowup_monitor(s))
        if step_no % rc.output_every == 0:
            record(s, dt)
        if rc.snapshot_every and step_no % rc.snapshot_every == 0:
            snapshot(s)
        if traj.M_sup >= rc.blowup_factor * traj.M0:
            traj.set_verdict("suspected_blowup")
            break
    if traj.verdict != "nonfinite_abort":
        record(s, last_dt)
    traj.steps = step_no
    traj.final = s
    return traj
