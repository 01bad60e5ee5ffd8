"""On-disk formats: metrics CSV, JSON run summaries, binary weight checkpoints."""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, MetricsParseError, TruncationError
from .network import Architecture, check_weights
from .optim import EpochRecord, Metrics

CSV_HEADER = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "wall_ms")
CHECKPOINT_MAGIC = b"GSGD"
CHECKPOINT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_metrics(path, metrics: Metrics) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(CSV_HEADER)
            for r in metrics.records:
                out.writerow([r.epoch] + [_fmt(x) for x in r.values()[1:]])
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc.strerror}") from exc


def read_metrics(path) -> Metrics:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read metrics from {path}: {exc.strerror}") from exc
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise MetricsParseError(path, 1, f"expected header {','.join(CSV_HEADER)}")
    records = []
    for line_no, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise MetricsParseError(path, line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            records.append(EpochRecord(int(row[0]), *(float(x) for x in row[1:])))
        except ValueError as exc:
            raise MetricsParseError(path, line_no, str(exc)) from exc
    return Metrics(records)


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):  # enums
        return obj.value
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


def write_checkpoint(path, arch: Architecture, w) -> None:
    """``GSGD`` magic, u32 version, u32 L, (L+1) u32 widths, m float64; little-endian."""
    w = check_weights(arch, w)
    header = CHECKPOINT_MAGIC + struct.pack(f"<II{arch.L + 1}I", CHECKPOINT_VERSION, arch.L, *arch.widths)
    Path(path).write_bytes(header + w.astype("<f8").tobytes())


def read_checkpoint(path) -> tuple[Architecture, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a GSGD checkpoint")
    if len(raw) < 12:
        raise TruncationError(f"{path}: header truncated")
    version, L = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    end = 12 + 4 * (L + 1)
    if len(raw) < end:
        raise TruncationError(f"{path}: widths truncated")
    arch = Architecture(struct.unpack(f"<{L + 1}I", raw[12:end]))
    payload = raw[end:]
    if len(payload) != 8 * arch.m:
        raise TruncationError(f"{path}: expected {arch.m} weights, found {len(payload) / 8:g}")
    return arch, np.frombuffer(payload, dtype="<f8").astype(np.float64)
