"""Snapshots, checkpoints, and the CSV tables the experiment drivers emit.

Field snapshot (binary): a fixed 32-byte header

    bytes 0-3    magic  b"MNDG"
    bytes 4-7    format version, little-endian uint32 (currently 1)
    bytes 8-11   component count (1 scalar / 2 vector), uint32
    bytes 12-15  grid size n, uint32
    bytes 16-23  domain length, float64
    bytes 24-31  field time, float64

followed by ncomp * n * n float64 grid values in C order.  Values are
stored, not coefficients, and reload through the value-seeded
constructors, so a save/load cycle is bit-exact.

Checkpoints are a one-line JSON header (scheme parameters plus the
current time) followed by the same binary field payload.

All CSV output uses a single header line and %.17g number formatting,
which round-trips float64 exactly: rerunning a deterministic experiment
reproduces its CSVs byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .condlab import SweepRow
from .predictability import HorizonReport
from .spectral import Field, ScalarField, SpectralVectorField, get_grid
from .stepping import ForecastState, SchemeConfig

MAGIC = b"MNDG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII dd")

LEDGER_COLUMNS = (
    "n",
    "t",
    "err_l2",
    "errtilde_l2",
    "grad_err_l2",
    "grad_errtilde_l2",
    "polarization_res",
    "formb_res",
    "gradmono_res",
)

HORIZON_COLUMNS = ("run", "T1", "T2", "epsilon", "lam", "doubling", "doubling_label",
                   "epsilon_horizon")

CONVERGENCE_COLUMNS = ("scheme", "k", "error", "rate")

CONDLAB_COLUMNS = ("n", "m", "space_kind", "k_chi", "cond", "cond_ratio", "deviation")


def _field_payload(field: Field) -> tuple[int, np.ndarray]:
    vals = np.ascontiguousarray(field.values, dtype=np.float64)
    ncomp = 1 if vals.ndim == 2 else vals.shape[0]
    return ncomp, vals


def save_field(path, field: Field):
    ncomp, vals = _field_payload(field)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, ncomp, field.grid.n,
                          field.grid.length, field.time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(vals.tobytes(order="C"))


def _read_header(fh) -> tuple[int, int, float, float]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, version, ncomp, n, length, time = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError("not a field snapshot (bad magic)")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    if ncomp not in (1, 2):
        raise ValueError(f"unsupported component count {ncomp}")
    return ncomp, n, length, time


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        ncomp, n, length, time = _read_header(fh)
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if data.size != ncomp * n * n:
        raise ValueError("snapshot payload size does not match its header")
    grid = get_grid(n, length)
    if ncomp == 1:
        return ScalarField.from_grid(grid, data.reshape(n, n), time)
    return SpectralVectorField.from_grid(grid, data.reshape(ncomp, n, n), time)


def save_field_csv(path, field: Field):
    """Plain-text snapshot: one sample per row, for plotting tools."""
    ncomp, vals = _field_payload(field)
    flat = vals.reshape(ncomp, -1)
    with open(path, "w") as fh:
        fh.write(f"# n={field.grid.n} length={field.grid.length!r} "
                 f"time={field.time!r} ncomp={ncomp}\n")
        fh.write("i,j," + ",".join(f"v{c + 1}" for c in range(ncomp)) + "\n")
        n = field.grid.n
        for idx in range(n * n):
            i, j = divmod(idx, n)
            nums = ",".join("%.17g" % flat[c, idx] for c in range(ncomp))
            fh.write(f"{i},{j},{nums}\n")


def load_field_csv(path) -> Field:
    with open(path) as fh:
        meta = fh.readline()
        if not meta.startswith("# "):
            raise ValueError("missing snapshot metadata line")
        kv = dict(item.split("=", 1) for item in meta[2:].split())
        n, length = int(kv["n"]), float(kv["length"])
        time, ncomp = float(kv["time"]), int(kv["ncomp"])
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    vals = np.empty((ncomp, n, n))
    ii = data[:, 0].astype(int)
    jj = data[:, 1].astype(int)
    for c in range(ncomp):
        vals[c, ii, jj] = data[:, 2 + c]
    grid = get_grid(n, length)
    if ncomp == 1:
        return ScalarField.from_grid(grid, vals[0], time)
    return SpectralVectorField.from_grid(grid, vals, time)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, state: ForecastState):
    cfg = state.config
    meta = {
        "kind": "checkpoint",
        "version": FORMAT_VERSION,
        "time": state.time,
        "scheme": cfg.scheme,
        "k": cfg.k,
        "nu": cfg.nu,
        "chi": cfg.chi,
        "solver_tol": cfg.solver_tol,
        "solver_maxit": cfg.solver_maxit,
        "analysis_tol": cfg.analysis_tol,
    }
    ncomp, vals = _field_payload(state.velocity)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, ncomp, state.velocity.grid.n,
                          state.velocity.grid.length, state.velocity.time)
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        fh.write(header)
        fh.write(vals.tobytes(order="C"))


def load_checkpoint(path) -> ForecastState:
    with open(path, "rb") as fh:
        meta = json.loads(fh.readline())
        if meta.get("kind") != "checkpoint":
            raise ValueError("not a checkpoint file")
        ncomp, n, length, time = _read_header(fh)
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if ncomp != 2:
        raise ValueError("checkpoints store a velocity field (two components)")
    if data.size != ncomp * n * n:
        raise ValueError("checkpoint payload size does not match its header")
    grid = get_grid(n, length)
    velocity = SpectralVectorField.from_grid(grid, data.reshape(2, n, n), time)
    cfg = SchemeConfig(
        k=meta["k"],
        nu=meta["nu"],
        chi=meta["chi"],
        scheme=meta["scheme"],
        solver_tol=meta["solver_tol"],
        solver_maxit=meta["solver_maxit"],
        analysis_tol=meta["analysis_tol"],
    )
    return ForecastState(time=meta["time"], velocity=velocity, config=cfg)


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


class CsvAppender:
    """Row-at-a-time CSV writer; the header goes out with the first row."""

    def __init__(self, path, header: Sequence[str]):
        self.path = Path(path)
        self.header = tuple(header)
        self._started = False

    def append(self, row: Sequence):
        if len(row) != len(self.header):
            raise ValueError(f"expected {len(self.header)} cells, got {len(row)}")
        mode = "a" if self._started else "w"
        with open(self.path, mode) as fh:
            if not self._started:
                fh.write(",".join(self.header) + "\n")
                self._started = True
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def identity_ledger(path) -> CsvAppender:
    return CsvAppender(path, LEDGER_COLUMNS)


def write_horizon_csv(path, rows: Iterable[tuple[str, HorizonReport]]):
    def cells():
        for run, rep in rows:
            yield (run, rep.window[0], rep.window[1], rep.epsilon, rep.lam,
                   rep.doubling, rep.doubling_label, rep.epsilon_horizon)

    write_csv(path, HORIZON_COLUMNS, cells())


def write_convergence_csv(path, tables: dict[str, list[tuple[float, float, float]]]):
    """tables: scheme -> rows of (k, error, rate); rate nan on the first row."""

    def cells():
        for scheme, rows in tables.items():
            for k, err, rate in rows:
                yield (scheme, k, err, rate)

    write_csv(path, CONVERGENCE_COLUMNS, cells())


def write_condlab_csv(path, rows: Iterable[SweepRow]):
    write_csv(
        path,
        CONDLAB_COLUMNS,
        ((r.fine_n, r.coarse_m, r.coarse_kind, r.k_chi, r.cond, r.cond_ratio, r.deviation)
         for r in rows),
    )


def write_plot_xy(path, xs, ys, comment: str | None = None):
    """Two-column plot-ready file, one curve per file."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("plot data must be two equal-length 1-d sequences")
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for x, y in zip(xs, ys):
            fh.write("%.17g %.17g\n" % (x, y))
