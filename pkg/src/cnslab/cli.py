"""Command line entry point: ``cnslab run | verify | analyze``.

Exit codes: 0 success (including ``suspected_blowup`` and ``dt_collapse``
verdicts), 1 failed verification checks, 2 invalid configuration or manifest,
3 non-finite abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, TextIO

import numpy as np

from . import __version__
from . import diagnostics as G
from . import dynamics as D
from . import estimates as E
from . import fields as F
from . import lagrangian, lame, snapshots, verification
from .config import Config, ConfigError, load_config, reference
from .state import State, make_scenario, velocity

log = logging.getLogger("cnslab")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NONFINITE, EXIT_IO = 0, 1, 2, 3, 4

NDJSON = "diagnostics.ndjson"
CSV = "diagnostics.csv"
VERDICT = "verdict.json"
TRACERS = "tracers.csv"
SNAPSHOT_DIR = "snapshots"
ANALYSIS = "analysis.ndjson"


def _finite(obj: Any) -> Any:
    """Replace non-finite floats by ``None`` so every line is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


class NdjsonWriter:
    """One JSON object per line, flushed immediately so a crash leaves whole lines."""

    def __init__(self, stream: TextIO):
        self.stream = stream

    def emit(self, obj: dict) -> None:
        self.stream.write(json.dumps(_finite(obj), allow_nan=False) + "\n")
        self.stream.flush()


# -- monitors -------------------------------------------------------------------


def monitor_reports(s: State, enabled: Iterable[str], q_tilde: float) -> List[E.InequalityReport]:
    """Evaluate the selected inequality monitors on ``s``; undefined ratios are skipped."""
    out = []
    grid = s.grid
    u = velocity(s)
    for name in enabled:
        try:
            if name == "sobolev":
                reps = []
                for comp in u:
                    try:
                        reps.append(E.sobolev_ratio(comp, t=s.t))
                    except E.UndefinedRatioError:
                        pass
                if reps:
                    out.append(max(reps, key=lambda r: r.ratio))
            elif name == "log_gradient":
                out.append(E.log_estimate_monitor(u, q_tilde, t=s.t))
            elif name == "sup_interpolation":
                out.append(E.sup_interpolation_ratio(s.rho, 2.0, q_tilde, t=s.t))
            elif name == "lame_b6":
                excess = (s.P - s.P.mean()).values
                g = -np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim) * excess
                sol = lame.solve_lame(lame.divergence_form_source(g, grid), s.params)
                out.append(lame.estimate_b6_monitor(sol, g, r=2.0, q=q_tilde, t=s.t))
        except E.UndefinedRatioError as exc:
            log.debug("monitor %s skipped at t=%g: %s", name, s.t, exc)
    return out


def _monitor_line(rep: E.InequalityReport, step: Optional[int]) -> dict:
    d = rep.to_dict()
    d["step"] = step
    return d


# -- run --------------------------------------------------------------------------


def _header(cfg: Config) -> dict:
    tree = {k: v for k, v in cfg.raw.items() if k != "output"}
    return {"type": "header", "format": "cnslab-diagnostics", "version": __version__, "config": tree}


def summarize(traj: D.Trajectory) -> dict:
    """Verdict document: outcome, blowup-monitor history and conservation budget."""
    M = traj.series("M")
    t = traj.times
    k_max = int(np.argmax(M))
    # length of the trailing run where M does not decrease
    tail = 1
    while tail < len(M) and M[-tail - 1] <= M[-tail]:
        tail += 1
    mass = traj.series("mass")
    energy = traj.series("total_energy")
    mass0 = traj.mass0
    clip_rho = traj.clip.rho_mass
    final = traj.final
    P_mass = F.integrate(final.P) if final is not None else math.nan
    doc = {
        "verdict": traj.verdict,
        "t_final": float(final.t) if final is not None else math.nan,
        "steps": traj.steps,
        "M_history_summary": {
            "M0": traj.M0,
            "M_final": float(M[-1]),
            "M_max_recorded": float(M[k_max]),
            "t_at_max": float(t[k_max]),
            "M_sup_all_steps": traj.M_sup,
            "growth_factor": traj.M_sup / traj.M0 if traj.M0 > 0 else math.nan,
            "nondecreasing_tail_records": tail,
            "records": len(M),
        },
        "conservation_budget": {
            "mass_initial": mass0,
            "mass_final": float(mass[-1]),
            "mass_rel_drift": abs(mass[-1] - mass0) / mass0 if mass0 else math.nan,
            "mass_rel_drift_net_of_clip": abs(mass[-1] - clip_rho - mass0) / mass0 if mass0 else math.nan,
            "clip_rho_total": clip_rho,
            "clip_P_total": traj.clip.P_mass,
            "clip_P_fraction": traj.clip.P_mass / P_mass if P_mass > 0 else math.nan,
            "energy_initial": float(energy[0]),
            "energy_final": float(energy[-1]),
            "energy_rel_drift": abs(energy[-1] - energy[0]) / abs(energy[0]) if energy[0] else math.nan,
            "min_rho_preclip": traj.clip.min_rho_preclip,
            "min_P_preclip": traj.clip.min_P_preclip,
        },
    }
    recs = traj.records
    if len(recs) >= 3 and np.all(np.diff(t) > 0):
        doc["gronwall_C_fit"] = E.GronwallLedger.from_records(recs).C_fit
    return doc


def run_simulation(cfg: Config) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    initial = make_scenario(cfg.scenario, cfg.grid, cfg.params)
    writer = None
    if cfg.run.snapshot_every and cfg.write_snapshots:
        writer = snapshots.SnapshotWriter(
            out / SNAPSHOT_DIR, cfg.grid, cfg.params, extra={"q_tilde": cfg.q_tilde, "config": _header(cfg)["config"]}
        )
    n_records = 0
    last: Dict[str, Any] = {}

    with open(out / NDJSON, "w") as fh:
        nd = NdjsonWriter(fh)
        nd.emit(_header(cfg))

        def on_record(rec: G.DiagnosticRecord, state: State):
            nonlocal n_records
            nd.emit(rec.to_dict())
            last["record"] = rec
            if cfg.monitor_every and n_records % cfg.monitor_every == 0:
                for rep in monitor_reports(state, cfg.monitors, cfg.q_tilde):
                    nd.emit(_monitor_line(rep, rec.step))
            n_records += 1

        def on_snapshot(step: int, state: State):
            if writer is None:
                return
            rec = last.get("record")
            loop = None
            if rec is not None and rec.step == step:
                d = rec.to_dict()
                loop = {k: d[k] for k in G.LOOP_FIELDS}
            writer.write(state, step, loop)

        traj = D.run(
            initial,
            cfg.run,
            on_record=on_record,
            on_snapshot=on_snapshot,
            keep_snapshots=cfg.tracer_count > 0,
        )
        doc = summarize(traj)

        if cfg.tracer_count > 0:
            doc["tracers"] = _trace(cfg, traj, out)
        nd.emit({"type": "verdict", **doc})

    if cfg.write_csv:
        with open(out / CSV, "w") as fh:
            G.records_to_csv(traj.records, fh)
    (out / VERDICT).write_text(json.dumps(_finite(doc), indent=2, allow_nan=False) + "\n")
    log.info("verdict %s at t=%.6g after %d steps; outputs in %s", traj.verdict, doc["t_final"], traj.steps, out)
    print(f"verdict: {traj.verdict}  t_final={doc['t_final']:.6g}  steps={traj.steps}")
    return EXIT_NONFINITE if traj.verdict == "nonfinite_abort" else EXIT_OK


def _trace(cfg: Config, traj: D.Trajectory, out: Path) -> dict:
    snaps = traj.snapshots
    if len(snaps) < 2:
        log.warning("tracers skipped: only %d snapshot(s) stored", len(snaps))
        return {"skipped": True}
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0]) if cfg.tracer_layout == "random" else None
    seeds = lagrangian.seed_layout(cfg.grid, cfg.tracer_count, rng)
    tr = lagrangian.advect(snaps, seeds, cfg.tracer_substeps, cfg.tracer_interpolation)
    with open(out / TRACERS, "w") as fh:
        lagrangian.tracers_to_csv(tr, fh)
    try:
        err = lagrangian.pressure_formula_check(tr)
        nonneg = True
    except AssertionError as exc:
        log.error("%s", exc)
        err, nonneg = math.nan, False
    return {
        "count": tr.count,
        "excluded_vacuum": int(tr.in_vacuum.sum()),
        "pressure_formula_max_rel_error": err,
        "formula_nonnegative": nonneg,
    }


# -- analyze ----------------------------------------------------------------------


def _snapshot_dir(path: Path) -> Path:
    return path / SNAPSHOT_DIR if (path / SNAPSHOT_DIR / snapshots.MANIFEST).exists() else path


def analyze(path: Path, q_tilde: Optional[float] = None, output: Optional[Path] = None,
            monitors: Optional[Iterable[str]] = None) -> List[G.DiagnosticRecord]:
    """Recompute records (and optionally monitors) from stored snapshots.

    Loop-only fields (step size, clipping totals) are copied from the
    manifest, so with the run's ``q_tilde`` each record reproduces the one
    written during the run.  Damaged trailing snapshots end the analysis with
    whatever was readable.
    """
    snap = snapshots.open_snapshots(_snapshot_dir(Path(path)))
    q = float(snap.manifest.get("q_tilde", 4.0)) if q_tilde is None else float(q_tilde)
    records = []
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
    stream = open(output, "w") if output is not None else None
    try:
        nd = NdjsonWriter(stream) if stream is not None else None
        if nd is not None:
            nd.emit({"type": "header", "format": "cnslab-analysis", "version": __version__, "source": str(path), "q_tilde": q})
        for entry, state in snap.states():
            rec = G.make_record(state, step=entry["step"], q_tilde=q)
            for k, v in entry.get("loop", {}).items():
                setattr(rec, k, math.inf if v is None and k.startswith("min_") else v)
            records.append(rec)
            if nd is not None:
                nd.emit(rec.to_dict())
                for rep in monitor_reports(state, monitors or (), q):
                    nd.emit(_monitor_line(rep, entry["step"]))
        if nd is not None:
            nd.emit({"type": "summary", "snapshots_listed": len(snap.entries), "snapshots_analyzed": len(records)})
    finally:
        if stream is not None:
            stream.close()
    return records


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cnslab {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--output", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="seed for every random choice")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config key, e.g. run.t_end=0.1 (repeatable)")

    p_run = sub.add_parser("run", help="evolve a scenario and write diagnostics")
    common(p_run)
    p_run.add_argument("--print-config", action="store_true", help="print the configuration reference and exit")

    p_ver = sub.add_parser("verify", help="run the oracle and convergence checks")
    common(p_ver)
    p_ver.add_argument("--quick", action="store_true", help="skip 3D dense checks and the convergence study")

    p_an = sub.add_parser("analyze", help="recompute diagnostics from a snapshot directory")
    p_an.add_argument("directory", type=Path, help="run output or snapshots directory")
    common(p_an)
    p_an.add_argument("--q-tilde", type=float, help="exponent for the gradient norms (default: the run's)")
    return parser


def _configure_logging(args) -> None:
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        if args.command == "run" and args.print_config:
            sys.stdout.write(reference())
            return EXIT_OK
        if args.command == "analyze":
            cfg_monitors: Iterable[str] = ()
            if args.config is not None or args.override:
                cfg = load_config(args.config, args.override, args.seed, args.output)
                cfg_monitors = cfg.monitors
            out_dir = args.output or args.directory
            records = analyze(args.directory, args.q_tilde, out_dir / ANALYSIS, cfg_monitors)
            print(f"analyzed {len(records)} snapshot(s); wrote {out_dir / ANALYSIS}")
            return EXIT_OK
        cfg = load_config(args.config, args.override, args.seed, args.output)
        if args.command == "verify":
            results = verification.run_checks(quick=args.quick)
            for r in results:
                print(r.line())
            cfg.output_dir.mkdir(parents=True, exist_ok=True)
            with open(cfg.output_dir / "verify.ndjson", "w") as fh:
                nd = NdjsonWriter(fh)
                for r in results:
                    nd.emit(r.to_dict())
            failed = [r.name for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return EXIT_CHECKS if failed else EXIT_OK
        return run_simulation(cfg)
    except (ConfigError, snapshots.ManifestError, F.GridMismatchError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except F.NonFiniteError as exc:
        log.error("non-finite values: %s", exc)
        return EXIT_NONFINITE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
