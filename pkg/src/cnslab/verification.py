"""Self-checks behind ``cnslab verify``: dense oracles, algebra, and a manufactured-solution study."""

from __future__ import annotations

import logging
import time
from unittest import mock
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Sequence

import numpy as np

from . import dynamics as D
from . import fields as F
from . import lame, oracles
from .estimates import lemma31_coefficient
from .fields import GridSpec, ScalarField, VectorField
from .state import PhysParams, Scenario, State, make_scenario

log = logging.getLogger(__name__)

ORACLE_TOL = 1e-12
RHS_TOL = 1e-10
LAME_TOL = 1e-10
MMS_TOL = 1e-7


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name:<28} value={self.value:.3e} tol={self.tolerance:.1e} ({self.seconds:.2f}s){extra}"

    def to_dict(self) -> dict:
        return {
            "type": "check",
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "tolerance": self.tolerance,
            "seconds": self.seconds,
            "detail": self.detail,
        }


def _random_fields(grid: GridSpec, seed: int):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(grid.shape), rng.standard_normal((grid.dim,) + grid.shape)


def operator_oracle_error(dim: int = 2, n: int = 8, seed: int = 0) -> float:
    """Max-abs gap between the spectral operators and dense DFT-matrix application."""
    g = GridSpec(dim, n)
    f, u = _random_fields(g, seed)
    fs, us = ScalarField(g, f), VectorField(g, u)
    lap_ref = oracles.laplacian(g, f)
    pairs = [
        (F.gradient(fs).values, oracles.gradient(g, f)),
        (F.divergence(us).values, oracles.divergence(g, u)),
        (F.curl(us).values, oracles.curl(g, u)),
        (F.laplacian(fs).values, lap_ref),
        (F.vector_laplacian(us).values, np.array([oracles.laplacian(g, c) for c in u])),
    ]
    return max(float(np.max(np.abs(a - b))) for a, b in pairs)


def dealias_oracle_error(dim: int = 2, n: int = 8, seed: int = 1) -> float:
    g = GridSpec(dim, n)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    got = F.dealias_product(ScalarField(g, a), ScalarField(g, b)).values
    return float(np.max(np.abs(got - oracles.convolution_product(g, a, b))))


def parseval_error(dim: int = 2, n: int = 16, seed: int = 2) -> float:
    """Relative gap between ``int f^2`` and the Fourier-coefficient sum."""
    g = GridSpec(dim, n)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    coeffs = np.fft.fftn(f) / f.size
    parseval = float(np.sum(np.abs(coeffs) ** 2)) * g.volume
    direct = F.integrate(ScalarField(g, f * f))
    return abs(direct - parseval) / parseval


def _smooth_state(grid: GridSpec, seed: int, params: PhysParams, amplitude: float = 0.3) -> State:
    return make_scenario(Scenario("manufactured", amplitude=amplitude, seed=seed), grid, params)


def rhs_oracle_error(dim: int = 2, n: int = 8, seed: int = 3) -> float:
    """Max-abs gap between :func:`dynamics.rhs` and the dense term-by-term evaluation."""
    params = PhysParams(mu=0.05, lam=0.01)
    s = _smooth_state(GridSpec(dim, n), seed, params)
    tend = D.rhs(s)
    ref = oracles.rhs(s.grid, s.rho.values, s.m.values, s.P.values, params.mu, params.lam, params.rho_floor)
    got = (tend.d_rho.values, tend.d_m.values, tend.d_P.values)
    return max(float(np.max(np.abs(a - b))) for a, b in zip(got, ref))


def lame_oracle_error(dim: int = 2, n: int = 8, seed: int = 4) -> float:
    """Largest of the dense-solve mismatch and the operator residual."""
    params = PhysParams(mu=0.7, lam=0.2)
    g = GridSpec(dim, n)
    _, f = _random_fields(g, seed)
    f = f - f.mean(axis=tuple(range(1, dim + 1)), keepdims=True)
    sol = lame.solve_lame(VectorField(g, f), params)
    ref = oracles.solve_lame(g, f, params.mu, params.lam)
    return max(float(np.max(np.abs(sol.v.values - ref))), sol.residual)


def lemma31_sweep_error(count: int = 100, seed: int = 0) -> float:
    """Number of sweep points where the q = 6 coefficient differs from ``6 (mu - 4 lam)`` or its sign test fails."""
    rng = np.random.default_rng(seed)
    bad = 0
    pairs = [(Fraction(5), Fraction(1))]
    for _ in range(count):
        mu = Fraction(int(rng.integers(1, 200)), int(rng.integers(1, 50)))
        pairs.append((mu, Fraction(int(rng.integers(-66, 100)), 100) * mu))
    for mu, lam in pairs:
        c = lemma31_coefficient(mu, lam, 6)
        bad += int(c != 6 * (mu - 4 * lam) or (c > 0) != (mu > 4 * lam))
    bad += int(lemma31_coefficient(Fraction(5), Fraction(1), 6) != 6)
    return float(bad)


@dataclass
class ConvergenceStudy:
    resolutions: List[int]
    errors: List[float]

    @property
    def orders(self) -> List[float]:
        e = self.errors
        return [float(np.log2(e[k] / e[k + 1])) for k in range(len(e) - 1)]

    @property
    def monotone(self) -> bool:
        return all(a > b for a, b in zip(self.errors, self.errors[1:]))


def manufactured_convergence(
    resolutions: Sequence[int] = (16, 32, 64),
    reference: int = 256,
    t_end: float = 0.02,
    seed: int = 7,
    amplitude: float = 0.3,
) -> ConvergenceStudy:
    """Spatial convergence with a forced steady solution.

    A smooth state ``s*`` is built on the ``reference`` grid and the forcing
    ``-rhs(s*)`` is computed there, so ``s*`` is steady for the reference
    discretization.  Both are restricted to each coarse grid and integrated to
    ``t_end``; the drift away from the restricted ``s*`` measures the spatial
    truncation error, which must fall under refinement.
    """
    params = PhysParams(mu=0.05, lam=0.01)
    ref_grid = GridSpec(2, reference)
    star = _smooth_state(ref_grid, seed, params, amplitude)
    forcing = D.rhs(star).scaled(-1.0)
    errors = []
    for n in resolutions:
        g = GridSpec(2, n)
        s0 = State(
            0.0,
            F.resample(star.rho, g),
            F.resample_vector(star.m, g),
            F.resample(star.P, g),
            params,
        )
        fg = D.Tendency(F.resample(forcing.d_rho, g), F.resample_vector(forcing.d_m, g), F.resample(forcing.d_P, g))
        dt = 0.25 * D.compute_dt(s0, 1.0)
        n_steps = max(1, int(np.ceil(t_end / dt)))
        s = s0
        for _ in range(n_steps):
            s = D.step(s, t_end / n_steps, fg)
        err = max(
            F.sup_norm(s.rho - s0.rho),
            float(np.max(np.abs(s.m.values - s0.m.values))),
            F.sup_norm(s.P - s0.P),
        )
        errors.append(err)
    return ConvergenceStudy(list(resolutions), errors)


def mutation_detected() -> float:
    """Flip the sign of the viscous Laplacian inside the solver and return the rhs oracle gap it causes."""
    original = F.vector_laplacian
    with mock.patch.object(F, "vector_laplacian", lambda u: original(u) * -1.0):
        return rhs_oracle_error(2)


def _timed(name: str, fn: Callable[[], float], tol: float) -> CheckResult:
    t0 = time.perf_counter()
    value = fn()
    return CheckResult(name, bool(value <= tol), float(value), tol, time.perf_counter() - t0)


def run_checks(quick: bool = False) -> List[CheckResult]:
    """Run the full oracle suite; ``quick`` skips 3D dense checks and the convergence study."""
    results = [
        _timed("operators_dense_2d", lambda: operator_oracle_error(2), ORACLE_TOL),
        _timed("dealias_convolution_2d", lambda: dealias_oracle_error(2), ORACLE_TOL),
        _timed("parseval_quadrature", parseval_error, ORACLE_TOL),
        _timed("rhs_dense_2d", lambda: rhs_oracle_error(2), RHS_TOL),
        _timed("lame_dense_2d", lambda: lame_oracle_error(2), LAME_TOL),
        _timed("lemma31_sweep", lemma31_sweep_error, 0.0),
    ]
    t0 = time.perf_counter()
    gap = mutation_detected()
    results.append(
        CheckResult("mutation_detected", gap > RHS_TOL, gap, RHS_TOL, time.perf_counter() - t0, "viscous sign flip must exceed tol")
    )
    if not quick:
        results += [
            _timed("operators_dense_3d", lambda: operator_oracle_error(3), ORACLE_TOL),
            _timed("rhs_dense_3d", lambda: rhs_oracle_error(3), RHS_TOL),
            _timed("lame_dense_3d", lambda: lame_oracle_error(3), LAME_TOL),
        ]
        t0 = time.perf_counter()
        study = manufactured_convergence()
        ok = study.monotone and study.errors[-1] <= MMS_TOL
        detail = "errors=" + ",".join(f"{e:.2e}" for e in study.errors)
        results.append(
            CheckResult("manufactured_convergence", ok, study.errors[-1], MMS_TOL, time.perf_counter() - t0, detail)
        )
    return results
