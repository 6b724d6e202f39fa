"""Baseband IQ file I/O: interleaved little-endian float32 with JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nprs import SampleBuffer

_CF32 = np.dtype("<c8")  # float32 I, float32 Q per sample


def sidecar_path(iq_path) -> Path:
    return Path(iq_path).with_suffix(".json")


def write_cf32(path, buf: SampleBuffer, meta: dict | None = None) -> Path:
    """Write samples as .cf32 plus a JSON metadata sidecar.

    The sidecar always records sampling rate and length; extra metadata
    (seed, cell shift, ...) is merged in.
    """
    path = Path(path)
    buf.samples.astype(_CF32).tofile(path)
    sidecar = {
        "format": "cf32",
        "sampling_rate_hz": buf.sampling_rate_hz,
        "length": len(buf),
    }
    if meta:
        sidecar.update(meta)
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return path


def read_cf32(path, sidecar: dict | None = None) -> tuple[SampleBuffer, dict]:
    """Read a .cf32 file; the sidecar supplies the sampling rate."""
    path = Path(path)
    if sidecar is None:
        meta_file = sidecar_path(path)
        if not meta_file.exists():
            raise FileNotFoundError(f"missing metadata sidecar {meta_file}")
        sidecar = json.loads(meta_file.read_text(encoding="utf-8"))
    samples = np.fromfile(path, dtype=_CF32).astype(np.complex128)
    if samples.size == 0:
        raise ValueError(f"empty IQ file {path}")
    if "length" in sidecar and sidecar["length"] != samples.size:
        raise ValueError(
            f"{path}: sidecar says {sidecar['length']} samples, file holds {samples.size}"
        )
    return SampleBuffer(samples, float(sidecar["sampling_rate_hz"])), sidecar
