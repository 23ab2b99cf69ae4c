"""File formats: schedule and trace CSV, JSON reports, atomic writes.

Schedule CSV
    header ``code,channel``; one row per slot in playback order.
Trace CSV
    header ``time,<node>:<channel>``; one ``time,value`` row per sample.
    :func:`read_trace_csv` also ingests plain two-column oscilloscope exports
    (any or no header, comma or whitespace separated).
Reports
    JSON with sorted keys and a trailing newline, so identical inputs give
    identical bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .chain import Trace
from .compiler import TdmSchedule


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps_report(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, dumps_report(obj))


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def schedule_csv(schedule: TdmSchedule) -> str:
    buf = io.StringIO()
    buf.write("code,channel\n")
    for code, ch in schedule.entries:
        buf.write(f"{code},{ch}\n")
    return buf.getvalue()


def write_schedule_csv(path: str | Path, schedule: TdmSchedule) -> Path:
    return atomic_write_text(path, schedule_csv(schedule))


def read_schedule_csv(path: str | Path, frame_period: float, bits: int = 14,
                      encoding: str = "one-hot") -> TdmSchedule:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    channels = data[:, 1]
    n = int(channels.max()) + 1
    return TdmSchedule.from_dict({
        "n_channels": n, "frame_period": frame_period, "bits": bits,
        "select_encoding": encoding, "entries": data.tolist(),
    })


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    buf.write(f"time,{trace.node}:{trace.channel}\n")
    for t, v in zip(trace.times.tolist(), trace.samples.tolist()):
        buf.write(f"{t!r},{v!r}\n")
    return buf.getvalue()


def write_trace_csv(path: str | Path, trace: Trace) -> Path:
    return atomic_write_text(path, trace_csv(trace))


def read_trace_csv(path: str | Path, node: str | None = None, channel: int | None = None) -> Trace:
    """Load a ``(time, volts)`` record; the time axis must be uniform to 1e-6 relative."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = None
    rows = []
    for line in lines:
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.replace(",", " ").replace(";", " ").split()
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            if rows:
                raise ValueError(f"unparseable row in {path}: {line!r}") from None
            header = s
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    data = np.array(rows)
    t, v = data[:, 0], data[:, 1]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValueError(f"{path}: time axis is not uniform")
    if header is not None and ":" in header.split(",")[-1]:
        tag_node, _, tag_ch = header.split(",")[-1].partition(":")
        node = node or tag_node
        channel = int(tag_ch) if channel is None else channel
    return Trace(node or "amp_out", 0 if channel is None else channel, float(t[0]), dt, v)


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
