"""On-disk snapshots: raw little-endian float64 arrays plus a JSON manifest.

Layout of a snapshot directory::

    manifest.json
    000000_rho.bin  000000_m.bin  000000_P.bin
    000001_rho.bin  ...

Arrays are written in C (axis-major) order; ``m`` carries its component axis
first.  Every file is written to a temporary name and renamed, and the manifest
is rewritten after each snapshot, so an interrupted run leaves a readable
prefix.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import numpy as np

from .fields import GridSpec, GridMismatchError, ScalarField, VectorField
from .state import PhysParams, State

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT = "cnslab-snapshots"
VERSION = 1
FIELDS = ("rho", "m", "P")
DTYPE = np.dtype("<f8")


class ManifestError(ValueError):
    """Manifest is not valid JSON or describes an invalid grid, parameter set or layout."""


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _grid_dict(grid: GridSpec) -> dict:
    return {"dim": grid.dim, "n": grid.n, "length": list(grid.length)}


def _params_dict(p: PhysParams) -> dict:
    return {"mu": p.mu, "lam": p.lam, "rho_floor": p.rho_floor, "vacuum_threshold": p.vacuum_threshold}


@dataclass
class SnapshotWriter:
    """Appends states to ``directory``; ``extra`` is copied into the manifest."""

    directory: Path
    grid: GridSpec
    params: PhysParams
    extra: Dict = field(default_factory=dict)
    entries: List[dict] = field(default_factory=list)

    def __post_init__(self):
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._flush()

    def write(self, state: State, step: int, loop: Optional[dict] = None) -> dict:
        """Store ``state``; ``loop`` holds run-loop record fields (dt, clip totals) for replay."""
        if state.grid != self.grid:
            raise GridMismatchError("snapshot grid differs from the writer grid")
        index = len(self.entries)
        files = {}
        for name in FIELDS:
            arr = np.ascontiguousarray(getattr(state, name).values, dtype=DTYPE)
            fname = f"{index:06d}_{name}.bin"
            _atomic_write(self.directory / fname, arr.tobytes(order="C"))
            files[name] = fname
        entry = {"index": index, "step": int(step), "t": float(state.t), "files": files}
        if loop:
            entry["loop"] = dict(loop)
        self.entries.append(entry)
        self._flush()
        return entry

    def _flush(self):
        manifest = {
            "format": FORMAT,
            "version": VERSION,
            "grid": _grid_dict(self.grid),
            "params": _params_dict(self.params),
            "fields": list(FIELDS),
            "dtype": DTYPE.str,
            "order": "C",
            "times": [e["t"] for e in self.entries],
            "snapshots": self.entries,
        }
        manifest.update(self.extra)
        text = json.dumps(manifest, indent=1, sort_keys=True)
        _atomic_write(self.directory / MANIFEST, text.encode())


@dataclass
class SnapshotSet:
    """Parsed manifest; iterate :meth:`states` to load the readable snapshots."""

    directory: Path
    grid: GridSpec
    params: PhysParams
    entries: List[dict]
    manifest: dict

    @property
    def times(self) -> List[float]:
        return [e["t"] for e in self.entries]

    def _load(self, entry: dict) -> Optional[State]:
        grid = self.grid
        arrays = {}
        for name in FIELDS:
            shape = ((grid.dim,) if name == "m" else ()) + grid.shape
            path = self.directory / entry["files"][name]
            try:
                raw = np.fromfile(path, dtype=DTYPE)
            except OSError as exc:
                log.warning("snapshot %d: cannot read %s (%s)", entry["index"], path.name, exc)
                return None
            if raw.size != int(np.prod(shape)):
                log.warning("snapshot %d: %s holds %d values, expected %d", entry["index"], path.name, raw.size, int(np.prod(shape)))
                return None
            arrays[name] = raw.reshape(shape).astype(float)
        return State(
            entry["t"],
            ScalarField(grid, arrays["rho"]),
            VectorField(grid, arrays["m"]),
            ScalarField(grid, arrays["P"]),
            self.params,
        )

    def states(self) -> Iterator[tuple[dict, State]]:
        """Yield ``(entry, state)`` for each readable snapshot, stopping at the first damaged one."""
        for entry in self.entries:
            s = self._load(entry)
            if s is None:
                log.warning("stopping at damaged snapshot %d of %d", entry["index"], len(self.entries))
                return
            yield entry, s


def open_snapshots(directory) -> SnapshotSet:
    """Read and validate the manifest in ``directory``.

    Raises:
        OSError: if the manifest cannot be read.
        ManifestError: if it is not JSON or describes an invalid grid or
            parameter set.
    """
    directory = Path(directory)
    path = directory / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise ManifestError(f"{path} is not a {FORMAT} manifest")
    if manifest.get("dtype", DTYPE.str) != DTYPE.str or manifest.get("order", "C") != "C":
        raise ManifestError("only little-endian float64 C-order snapshots are supported")
    try:
        g = manifest["grid"]
        grid = GridSpec(int(g["dim"]), int(g["n"]), tuple(g["length"]))
        params = PhysParams(**manifest["params"])
        entries = list(manifest["snapshots"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid manifest {path}: {exc}") from exc
    if list(manifest.get("fields", FIELDS)) != list(FIELDS):
        raise ManifestError(f"unexpected field list {manifest.get('fields')}")
    return SnapshotSet(directory, grid, params, entries, manifest)
