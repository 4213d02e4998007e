"""Particle paths through stored snapshots and the pressure path formula.

Along ``dX/dt = u(X, t)`` the pressure equation becomes
``dP/dt = -2 P div u + F_src`` with ``F_src = 2 mu |D(u)|^2 + lam (div u)^2``,
so with ``a(t) = int_0^t div u(X(s), s) ds``

    P(X(t), t) = exp(-2 a(t)) [P(x, 0) + int_0^t exp(2 a(s)) F_src(X(s), s) ds].

Every factor is nonnegative when ``P(x, 0) >= 0`` and ``F_src >= 0``.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import fields as F
from .fields import GridSpec
from .state import State, velocity

log = logging.getLogger(__name__)


def source_term(s: State) -> np.ndarray:
    """Pointwise ``2 mu |D(u)|^2 + lam (div u)^2`` (no dealiasing)."""
    jac = F.jacobian(velocity(s))
    D = 0.5 * (jac + np.swapaxes(jac, 0, 1))
    div = np.trace(jac)
    return 2 * s.params.mu * np.sum(D**2, axis=(0, 1)) + s.params.lam * div**2


class _Frame:
    """Grid arrays of one snapshot needed along paths."""

    def __init__(self, s: State):
        u = velocity(s)
        self.t = float(s.t)
        self.u = u.values
        self.div = F.divergence(u).values
        self.P = s.P.values
        self.src = source_term(s)
        self.rho = s.rho.values


INTERPOLATIONS = ("linear", "cubic")


def _weights(frac: np.ndarray, kind: str):
    """Stencil offsets and per-point weights along one axis."""
    if kind == "linear":
        return (0, 1), (1 - frac, frac)
    t = frac
    return (-1, 0, 1, 2), (
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    )


def interpolate(grid: GridSpec, arr: np.ndarray, X: np.ndarray, kind: str = "linear") -> np.ndarray:
    """Periodic interpolation of ``arr`` (shape ``(..., n, ..., n)``) at points ``X`` ``(m, dim)``.

    ``kind="linear"`` is multilinear; ``"cubic"`` is the tensor-product
    four-point Lagrange stencil.  Returns shape ``arr.shape[:-dim] + (m,)``.
    """
    if kind not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}, got {kind!r}")
    dim = grid.dim
    pos = X / np.asarray(grid.spacing)
    base = np.floor(pos).astype(int)
    frac = pos - base
    stencils = [_weights(frac[:, d], kind) for d in range(dim)]
    lead = arr.shape[: arr.ndim - dim]
    out = np.zeros(lead + (X.shape[0],))
    for taps in itertools.product(*(range(len(st[0])) for st in stencils)):
        idx = tuple((base[:, d] + stencils[d][0][taps[d]]) % grid.n for d in range(dim))
        weight = np.prod([stencils[d][1][taps[d]] for d in range(dim)], axis=0)
        out += arr[(Ellipsis,) + idx] * weight
    return out


@dataclass
class TracerSet:
    """Paths and samples, indexed ``[time, tracer]``.

    ``positions`` are wrapped into the box; ``a`` is the accumulated
    ``int div u ds``; ``in_vacuum`` marks tracers that ever sat where the
    interpolated density is at or below the vacuum threshold.
    """

    grid: GridSpec
    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    a: np.ndarray
    P: np.ndarray
    source: np.ndarray
    in_vacuum: np.ndarray

    @property
    def count(self) -> int:
        return self.seeds.shape[0]


def _wrap(grid: GridSpec, X: np.ndarray) -> np.ndarray:
    L = np.asarray(grid.length)
    return np.mod(X, L)


def advect(snapshots: Sequence[State], seeds, substeps: int = 1, interpolation: str = "linear") -> TracerSet:
    """Integrate tracers through ``snapshots`` with classical RK4.

    Fields are interpolated in space by ``interpolation`` (multilinear by
    default) and linearly in time between consecutive snapshots; ``a(t)`` is
    integrated alongside the positions.  Each snapshot interval is split into
    ``substeps`` RK4 steps.

    The multilinear interpolant has an O(h) gradient error, so paths that
    drift across cells see an O(h) gap in :func:`pressure_formula_check`;
    ``"cubic"`` removes that floor for convergence studies.

    Raises:
        ValueError: on an empty seed list, fewer than two snapshots or
            non-increasing snapshot times.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.size == 0:
        raise ValueError("advect needs at least one seed")
    if len(snapshots) < 2:
        raise ValueError("advect needs at least two snapshots")
    grid = snapshots[0].grid
    if seeds.shape[1] != grid.dim:
        raise ValueError(f"seeds must have {grid.dim} coordinates")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
    frames = [_Frame(s) for s in snapshots]
    times = np.array([f.t for f in frames])
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    threshold = snapshots[0].params.vacuum_threshold

    n_t, n_p = len(frames), seeds.shape[0]
    positions = np.empty((n_t, n_p, grid.dim))
    a = np.zeros((n_t, n_p))
    P = np.empty((n_t, n_p))
    src = np.empty((n_t, n_p))
    in_vacuum = np.zeros(n_p, dtype=bool)

    X = _wrap(grid, seeds.copy())
    acc = np.zeros(n_p)

    def interp(arr, Y):
        return interpolate(grid, arr, Y, interpolation)

    def sample(k: int, X: np.ndarray):
        fr = frames[k]
        positions[k] = X
        a[k] = acc
        P[k] = interp(fr.P, X)
        src[k] = interp(fr.src, X)
        in_vacuum[:] |= interp(fr.rho, X) <= threshold

    sample(0, X)
    for k in range(n_t - 1):
        f0, f1 = frames[k], frames[k + 1]
        span = f1.t - f0.t

        def rates(Y, t):
            w = (t - f0.t) / span
            Yw = _wrap(grid, Y)
            vel = (1 - w) * interp(f0.u, Yw) + w * interp(f1.u, Yw)
            div = (1 - w) * interp(f0.div, Yw) + w * interp(f1.div, Yw)
            return vel.T, div

        h = span / substeps
        t = f0.t
        for _ in range(substeps):
            k1, d1 = rates(X, t)
            k2, d2 = rates(X + 0.5 * h * k1, t + 0.5 * h)
            k3, d3 = rates(X + 0.5 * h * k2, t + 0.5 * h)
            k4, d4 = rates(X + h * k3, t + h)
            X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            acc = acc + h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
            t += h
        X = _wrap(grid, X)
        sample(k + 1, X)
    if np.any(in_vacuum):
        log.warning("%d of %d tracers entered the vacuum set and are excluded from checks", int(in_vacuum.sum()), n_p)
    return TracerSet(grid, seeds, times, positions, a, P, src, in_vacuum)


def pressure_formula(tr: TracerSet) -> np.ndarray:
    """Right-hand side of the path formula at every sample, trapezoidal in time.

    Raises:
        AssertionError: if it is negative anywhere although ``P(0) >= 0`` and
            ``F_src >= 0`` hold along that path.
    """
    growth = np.exp(2 * tr.a)
    integrand = growth * tr.source
    dt = np.diff(tr.times)[:, None]
    integral = np.concatenate([np.zeros((1, tr.count)), np.cumsum(0.5 * dt * (integrand[1:] + integrand[:-1]), axis=0)])
    rhs = (tr.P[0][None, :] + integral) / growth
    eligible = (tr.P[0] >= 0) & np.all(tr.source >= 0, axis=0)
    bad = eligible[None, :] & (rhs < 0)
    if np.any(bad):
        raise AssertionError(f"pressure path formula negative for {int(np.any(bad, axis=0).sum())} tracers")
    return rhs


def pressure_formula_check(tr: TracerSet) -> float:
    """Largest relative gap between sampled ``P(X(t), t)`` and the path formula.

    Tracers flagged ``in_vacuum`` are excluded; ``nan`` if none remain.
    """
    formula = pressure_formula(tr)
    keep = ~tr.in_vacuum
    if not np.any(keep):
        return math.nan
    sampled = tr.P[:, keep]
    scale = np.maximum(np.abs(sampled), 1e-300)
    return float(np.max(np.abs(sampled - formula[:, keep]) / scale))


def seed_layout(grid: GridSpec, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``count`` seeds: uniformly random when ``rng`` is given, else a regular lattice of cell centers."""
    L = np.asarray(grid.length)
    if rng is not None:
        return rng.random((count, grid.dim)) * L
    per_axis = max(1, int(math.ceil(count ** (1 / grid.dim))))
    axes = [(np.arange(per_axis) + 0.5) / per_axis * L[d] for d in range(grid.dim)]
    pts = np.array(list(itertools.product(*axes)))
    return pts[:count]


CSV_HEADER_BASE = ("tracer", "t")


def tracers_to_csv(tr: TracerSet, stream: Optional[io.TextIOBase] = None) -> str:
    """One row per (tracer, time): position, ``a(t)``, sampled and formula pressure."""
    try:
        formula = pressure_formula(tr)
    except AssertionError:
        log.error("pressure path formula failed nonnegativity; writing nan")
        formula = np.full_like(tr.P, np.nan)
    coords: List[str] = ["x", "y", "z"][: tr.grid.dim]
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(CSV_HEADER_BASE) + coords + ["a", "P_sampled", "P_formula", "in_vacuum"])
    for j in range(tr.count):
        for k, t in enumerate(tr.times):
            row = [j, repr(float(t))] + [repr(float(c)) for c in tr.positions[k, j]]
            row += [repr(float(tr.a[k, j])), repr(float(tr.P[k, j])), repr(float(formula[k, j])), int(tr.in_vacuum[j])]
            writer.writerow(row)
    return buf.getvalue() if stream is None else ""
