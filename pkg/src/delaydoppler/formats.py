"""On-disk formats: CTF1 frame files and the CSV tables.

CTF1 layout (little endian)::

    magic "CTF1" | u32 K | u32 L | f64 delta_f | f64 delta_t | u32 frame_count
    frame_count * K * L samples of (f32 real, f32 imag), k-major within a frame

All CSV files may start with ``#`` comment lines, which readers skip.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .signal_model import GroundTruth, RadarGrid

MAGIC = b"CTF1"
_HEADER = struct.Struct("<4sIIddI")
HEADER_SIZE = _HEADER.size

GROUND_TRUTH_FIELDS = ("frame", "sphere", "tau_s", "alpha_hz")
ESTIMATE_FIELDS = ("frame", "tau_s", "alpha_hz", "weight_re", "weight_im", "runtime_s")
RESULT_FIELDS = (
    "angle_deg",
    "algorithm",
    "det_prob",
    "delay_rmse_s",
    "doppler_rmse_hz",
    "mean_runtime_s",
    "los_gain_db",
    "frames",
    "matches",
    "false_detections",
)
DETAIL_FIELDS = ("frame", "sphere", "matched", "tau_err_s", "alpha_err_hz")
SPECTRUM_FIELDS = ("delay_bin", "doppler_bin", "power")
BENCH_FIELDS = ("algorithm", "frames", "mean_s", "min_s", "max_s")


def ctf1_size(K: int, L: int, frames: int) -> int:
    return HEADER_SIZE + frames * K * L * 8


def write_ctf1(path, grid: RadarGrid, frames) -> None:
    """Write frames (iterable of ``ChannelFrame`` or ``K x L`` arrays) to ``path``."""
    frames = list(frames)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.K, grid.L, grid.delta_f, grid.delta_t, len(frames)))
        for f in frames:
            data = getattr(f, "data", f)
            data = np.asarray(data)
            if data.shape != (grid.K, grid.L):
                raise ValueError(f"frame shape {data.shape} does not match grid {(grid.K, grid.L)}")
            fh.write(np.ascontiguousarray(data, dtype="<c8").tobytes())


def read_ctf1(path):
    """Read a CTF1 file.

    Returns
    -------
    grid : RadarGrid
    data : numpy.ndarray
        Complex array of shape ``(frame_count, K, L)``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ParseError(f"{path}: truncated header ({len(raw)} of {HEADER_SIZE} bytes)", len(raw))
    magic, K, L, delta_f, delta_t, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r} at byte offset 0", 0)
    try:
        grid = RadarGrid(K, L, delta_f, delta_t)
    except ValueError as exc:
        raise ParseError(f"{path}: invalid grid in header at byte offset 4: {exc}", 4) from exc
    expected = ctf1_size(K, L, count)
    if len(raw) < expected:
        done = (len(raw) - HEADER_SIZE) // (K * L * 8)
        offset = HEADER_SIZE + done * K * L * 8
        raise ParseError(
            f"{path}: truncated at byte offset {len(raw)}; frame {done} starting at byte "
            f"offset {offset} is incomplete ({expected} bytes expected)",
            len(raw),
        )
    if len(raw) > expected:
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes after offset {expected}", expected)
    data = np.frombuffer(raw, dtype="<c8", count=count * K * L, offset=HEADER_SIZE)
    return grid, data.astype(np.complex128).reshape(count, K, L)


# ---------------------------------------------------------------- CSV helpers


def fmt(value) -> str:
    """Deterministic text form; NaN and ``None`` become empty fields."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def write_csv(path, fields, rows, comments=()) -> None:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or str(path) == "-":
        import sys

        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_csv(path, fields):
    """Rows as dicts plus the ``#`` comment lines (without the marker)."""
    text = Path(path).read_text()
    comments = []
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    if not body:
        raise ParseError(f"{path}: missing header row")
    reader = csv.DictReader(body)
    missing = [f for f in fields if f not in (reader.fieldnames or [])]
    if missing:
        raise ParseError(f"{path}: header lacks columns {missing}")
    return list(reader), comments


def _float(text, path, line):
    try:
        return float(text) if text != "" else math.nan
    except ValueError as exc:
        raise ParseError(f"{path}: bad number {text!r} in data row {line}") from exc


def write_ground_truth(path, truth: GroundTruth, comments=()) -> None:
    rows = []
    for r, n in enumerate(truth.frames):
        for s in range(truth.delays.shape[1]):
            rows.append((int(n), s, float(truth.delays[r, s]), float(truth.dopplers[r, s])))
    write_csv(path, GROUND_TRUTH_FIELDS, rows, comments)


def read_ground_truth(path) -> GroundTruth:
    rows, _ = read_csv(path, GROUND_TRUTH_FIELDS)
    table = {}
    for i, row in enumerate(rows):
        try:
            n, s = int(row["frame"]), int(row["sphere"])
        except ValueError as exc:
            raise ParseError(f"{path}: bad index in data row {i}") from exc
        table[(n, s)] = (_float(row["tau_s"], path, i), _float(row["alpha_hz"], path, i))
    frames = sorted({n for n, _ in table})
    spheres = sorted({s for _, s in table})
    try:
        delays = np.array([[table[(n, s)][0] for s in spheres] for n in frames]).reshape(len(frames), -1)
        dopplers = np.array([[table[(n, s)][1] for s in spheres] for n in frames]).reshape(len(frames), -1)
    except KeyError as exc:
        raise ParseError(f"{path}: missing sphere entry {exc.args[0]}") from exc
    return GroundTruth(np.array(frames, dtype=int), delays, dopplers)


def read_estimates(path):
    """``({frame: [(tau, alpha), ...]}, comments)``."""
    rows, comments = read_csv(path, ESTIMATE_FIELDS)
    out = {}
    for i, row in enumerate(rows):
        try:
            n = int(row["frame"])
        except ValueError as exc:
            raise ParseError(f"{path}: bad frame index in data row {i}") from exc
        out.setdefault(n, []).append((_float(row["tau_s"], path, i), _float(row["alpha_hz"], path, i)))
    return out, comments


def write_spectrum(path, spectrum, comments=()) -> None:
    n_i, n_j = spectrum.shape
    rows = ((i, j, float(spectrum.power[i, j])) for i in range(n_i) for j in range(n_j))
    write_csv(path, SPECTRUM_FIELDS, rows, comments)
