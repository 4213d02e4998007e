"""Flow states, vacuum-aware primitive recovery and initial-data generators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import fields as F
from .fields import GridSpec, ScalarField, VectorField

log = logging.getLogger(__name__)

#: Tolerance below zero still accepted for density and pressure.
NEGATIVE_TOLERANCE = 1e-12

SCENARIOS = ("uniform", "shear", "acoustic", "gaussian_bump_vacuum", "nonvacuum_farfield", "manufactured")


@dataclass(frozen=True)
class PhysParams:
    """Viscosities and floors.

    ``mu > 0`` and ``2 mu + 3 lam >= 0`` are enforced.  The blowup criterion is only
    established for ``mu > 4 lam``; violating it is allowed and merely reported.
    """

    mu: float
    lam: float = 0.0
    rho_floor: float = 1e-10
    vacuum_threshold: float = 1e-8

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if 2 * self.mu + 3 * self.lam < 0:
            raise ValueError(f"2 mu + 3 lambda must be >= 0, got mu={self.mu}, lambda={self.lam}")
        if self.rho_floor < 0 or self.vacuum_threshold < 0:
            raise ValueError("floors must be nonnegative")

    @property
    def bulk(self) -> float:
        """``2 mu + lambda``, the longitudinal viscosity."""
        return 2 * self.mu + self.lam

    def blowup_hypothesis_holds(self, dim: int = 3) -> bool:
        """Whether ``mu > 4 lambda`` holds; always true in 2D where no restriction is needed."""
        return dim == 2 or self.mu > 4 * self.lam

    def warn_if_outside_hypothesis(self, dim: int) -> bool:
        if self.blowup_hypothesis_holds(dim):
            return False
        log.warning(
            "mu=%g <= 4*lambda=%g: the density/temperature continuation principle is only "
            "established for mu > 4 lambda in 3D; the run proceeds unsupported by it",
            self.mu,
            4 * self.lam,
        )
        return True


@dataclass(frozen=True, eq=False)
class State:
    """Conserved variables ``(rho, m = rho u, P)`` at time ``t``."""

    t: float
    rho: ScalarField
    m: VectorField
    P: ScalarField
    params: PhysParams

    def __post_init__(self):
        if not (self.rho.grid == self.m.grid == self.P.grid):
            raise F.GridMismatchError("rho, m and P must share one grid")

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid

    @classmethod
    def from_primitive(
        cls, rho: ScalarField, u: VectorField, P: ScalarField, params: PhysParams, t: float = 0.0
    ) -> "State":
        return cls(t, rho, VectorField(rho.grid, rho.values[None] * u.values), P, params)

    def validate(self) -> "State":
        """Raise ``ValueError`` unless the state is finite and (almost) nonnegative."""
        for name, arr in (("rho", self.rho.values), ("m", self.m.values), ("P", self.P.values)):
            if not np.all(np.isfinite(arr)):
                raise F.NonFiniteError(f"{name} contains non-finite values")
        if self.rho.values.min() < -NEGATIVE_TOLERANCE:
            raise ValueError(f"negative density {self.rho.values.min():.3e}")
        if self.P.values.min() < -NEGATIVE_TOLERANCE:
            raise ValueError(f"negative pressure {self.P.values.min():.3e}")
        return self

    def with_arrays(self, t: float, rho: np.ndarray, m: np.ndarray, P: np.ndarray) -> "State":
        grid = self.grid
        return replace(self, t=t, rho=ScalarField(grid, rho), m=VectorField(grid, m), P=ScalarField(grid, P))

    def vacuum_mask(self) -> np.ndarray:
        return self.rho.values <= self.params.vacuum_threshold

    def vacuum_fraction(self) -> float:
        return float(np.mean(self.vacuum_mask()))


def velocity(s: State) -> VectorField:
    """``u = m / max(rho, rho_floor)``, set to zero where both rho and |m| are below the floor."""
    floor = s.params.rho_floor
    rho = s.rho.values
    u = s.m.values / np.maximum(rho, floor)[None]
    empty = (rho <= floor) & (np.sqrt(np.sum(s.m.values**2, axis=0)) <= floor)
    if np.any(empty):
        u = np.where(empty[None], 0.0, u)
    return VectorField(s.grid, u)


def momentum_in_vacuum(s: State) -> float:
    """Largest ``|m|`` where ``rho <= rho_floor``; a consistency violation when above the floor."""
    mask = s.rho.values <= s.params.rho_floor
    if not np.any(mask):
        return 0.0
    return float(np.max(s.m.norm().values[mask]))


def temperature(s: State) -> ScalarField:
    """``theta = P / rho`` off the vacuum set and zero on it."""
    rho = s.rho.values
    vac = s.vacuum_mask()
    theta = np.where(vac, 0.0, s.P.values / np.where(vac, 1.0, rho))
    return ScalarField(s.grid, theta)


# -- initial data ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Parameters of an initial-data family.

    ``amplitude`` is the shear/acoustic amplitude, the bump peak density, or the
    log-amplitude of the random ``manufactured`` state, whose ``modes`` kernels
    have spectral ratio ``decay``.  ``background`` is the
    vacuum-side density of ``gaussian_bump_vacuum``; ``rho0``/``p0`` are the
    uniform/far-field density and pressure.  ``inflow`` is the peak radial inward
    speed put on bumps (negative values push outward).
    """

    name: str
    rho0: float = 1.0
    p0: float = 1.0
    amplitude: float = 0.1
    width: float = 0.1
    radius: float = 0.4
    background: float = 1e-6
    temperature: float = 1.0
    inflow: float = 0.0
    modes: int = 4
    decay: float = 0.35
    seed: int = 0
    center: Optional[Sequence[float]] = field(default=None)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if self.width <= 0 or self.radius <= 0:
            raise ValueError("width and radius must be positive")
        if not 0 < self.decay < 1 or self.modes < 1:
            raise ValueError("decay must lie in (0, 1) and modes >= 1")


def smooth_cutoff(r: np.ndarray, radius: float, inner: float = 0.6) -> np.ndarray:
    """C-infinity cutoff equal to 1 for ``r <= inner*radius`` and 0 for ``r >= radius``."""
    s = np.clip((r - inner * radius) / ((1 - inner) * radius), 0.0, 1.0)

    def psi(t):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a, b = psi(1 - s), psi(s)
    return a / (a + b)


def _displacement(grid: GridSpec, center) -> np.ndarray:
    """Minimum-image displacement ``x - c`` on the torus, shape ``(dim, ...)``."""
    X = grid.coords()
    c = np.array(center if center is not None else [L / 2 for L in grid.length], dtype=float)
    L = np.array(grid.length)
    shape = (grid.dim,) + (1,) * grid.dim
    d = X - c.reshape(shape)
    return d - L.reshape(shape) * np.round(d / L.reshape(shape))


def random_smooth(grid: GridSpec, rng: np.random.Generator, terms: int, decay: float) -> np.ndarray:
    """Random analytic field, scaled to max-abs 1.

    A sum of ``terms`` Poisson kernels ``(1 - r^2) / (1 - 2 r cos(theta) + r^2) - 1``
    along random lattice directions; the Fourier coefficients fall off like ``r^|k|``,
    so dealiasing error decays geometrically with resolution instead of vanishing.
    """
    X = grid.coords()
    total = np.zeros(grid.shape)
    r = decay
    for _ in range(terms):
        k = np.zeros(grid.dim, dtype=int)
        while not np.any(k):
            k = rng.integers(-1, 2, size=grid.dim)
        theta = sum(2 * np.pi * k[i] * X[i] / grid.length[i] for i in range(grid.dim)) + rng.uniform(0, 2 * np.pi)
        total += rng.standard_normal() * ((1 - r * r) / (1 - 2 * r * np.cos(theta) + r * r) - 1)
    return total / np.max(np.abs(total))


def make_scenario(sc: Scenario, grid: GridSpec, params: PhysParams) -> State:
    """Build the ``t = 0`` state of a scenario."""
    X = grid.coords()
    shape = grid.shape
    zeros_u = np.zeros((grid.dim,) + shape)
    if sc.name == "uniform":
        rho = np.full(shape, sc.rho0)
        u = zeros_u
        P = np.full(shape, sc.p0)
    elif sc.name == "shear":
        rho = np.full(shape, sc.rho0)
        u = zeros_u.copy()
        u[0] = sc.amplitude * np.sin(2 * np.pi * X[1] / grid.length[1])
        P = np.full(shape, sc.p0)
    elif sc.name == "acoustic":
        s = np.sin(2 * np.pi * X[0] / grid.length[0])
        c = np.sqrt(2 * sc.p0 / sc.rho0)
        rho = sc.rho0 * (1 + sc.amplitude * s)
        u = zeros_u.copy()
        u[0] = sc.amplitude * c * s
        P = sc.p0 * (1 + 2 * sc.amplitude * s)
    elif sc.name in ("gaussian_bump_vacuum", "nonvacuum_farfield"):
        d = _displacement(grid, sc.center)
        r = np.sqrt(np.sum(d**2, axis=0))
        bump = np.exp(-(r**2) / sc.width**2) * smooth_cutoff(r, sc.radius)
        base = sc.background if sc.name == "gaussian_bump_vacuum" else sc.rho0
        rho = base + sc.amplitude * bump
        P = sc.temperature * rho
        u = -sc.inflow * d / sc.width * bump[None]
        if sc.name == "gaussian_bump_vacuum" and sc.background == 0:
            log.warning("exact-vacuum background: expect density floor activity")
    else:  # manufactured
        rng = np.random.default_rng(sc.seed)
        noise = lambda: random_smooth(grid, rng, sc.modes, sc.decay)  # noqa: E731
        rho = sc.rho0 * np.exp(sc.amplitude * noise())
        P = sc.p0 * np.exp(sc.amplitude * noise())
        u = np.array([sc.amplitude * noise() for _ in range(grid.dim)])
    if np.min(rho) < 0 or np.min(P) < 0:
        raise ValueError(f"scenario {sc.name!r} produces negative density or pressure")
    state = State.from_primitive(ScalarField(grid, rho), VectorField(grid, u), ScalarField(grid, P), params)
    return state.validate()


def gaussian_bump_mass(sc: Scenario, grid: GridSpec) -> float:
    """Closed-form mass of an uncut bump plus background (valid when the cutoff only trims tails)."""
    base = sc.background if sc.name == "gaussian_bump_vacuum" else sc.rho0
    return base * grid.volume + sc.amplitude * (np.pi * sc.width**2) ** (grid.dim / 2)


class Compatibility(NamedTuple):
    g: VectorField
    norm_g: float
    vacuum_residual: float


def compatibility_residual(s: State) -> Compatibility:
    """Evaluate ``-mu lap u - (mu+lam) grad div u + grad P = sqrt(rho) g`` for ``g``.

    ``g`` is set to zero on the vacuum set; the largest left-hand-side magnitude
    there is returned separately as ``vacuum_residual``.
    """
    mu, lam = s.params.mu, s.params.lam
    u = velocity(s)
    lhs = -mu * F.vector_laplacian(u).values - (mu + lam) * F.grad_div(u).values + F.gradient(s.P).values
    vac = s.vacuum_mask()
    sqrt_rho = np.sqrt(np.where(vac, 1.0, s.rho.values))
    g = np.where(vac[None], 0.0, lhs / sqrt_rho[None])
    g_field = VectorField(s.grid, g)
    vac_res = float(np.max(np.sqrt(np.sum(lhs**2, axis=0))[vac])) if np.any(vac) else 0.0
    return Compatibility(g_field, F.lp_norm(g_field, 2), vac_res)
