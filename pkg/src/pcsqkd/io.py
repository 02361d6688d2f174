"""Waveform and symbol files: one-line JSON header, then little-endian float64 Ix,Qx,Iy,Qy."""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import DimensionMismatchError
from .txframe import IQWaveform

__all__ = ["write_waveform", "read_waveform", "write_csv"]


def _interleave(samples):
    s = np.asarray(samples)
    if s.ndim != 2 or s.shape[0] != 2:
        raise DimensionMismatchError(f"expected (2, n) samples, got {s.shape}")
    return np.stack([s[0].real, s[0].imag, s[1].real, s[1].imag], axis=1).astype("<f8")


def write_waveform(path, wave):
    header = {
        "sample_rate": wave.sample_rate,
        "symbol_rate": wave.symbol_rate,
        "center_frequency": wave.center_frequency,
        "lead_symbols": wave.lead_symbols,
        "layout_digest": wave.layout_digest,
        "n_samples": len(wave),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        _interleave(wave.samples).tofile(fh)


def read_waveform(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.fromfile(fh, dtype="<f8")
    n = header.pop("n_samples")
    if data.size != 4 * n:
        raise DimensionMismatchError(f"file holds {data.size // 4} samples, header says {n}")
    data = data.reshape(n, 4)
    samples = np.vstack([data[:, 0] + 1j * data[:, 1], data[:, 2] + 1j * data[:, 3]])
    return IQWaveform(samples=samples, **header)


def write_csv(path, rows, columns, comment=None):
    """Write dict rows with a fixed column order; floats use repr for exact round trips."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
