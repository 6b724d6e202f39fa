"""Sliding cross-correlation, presence statistics and the threshold baseline.

The correlation trace R[d] = sum_{k=d}^{d+S-1} y[k] s*[k-d] over a search
window of D candidate delays is the shared input of every estimator in this
package. Presence of the pilot signal is decided on the trace's peak-to-
average ratio, either as-is or after cancelling the autocorrelation lobe
centered on the peak, which stops the wide one-PRB lobe from inflating the
average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nprs import Acf, SampleBuffer


@dataclass(frozen=True, eq=False)
class Correlation:
    """Cross-correlation trace over delays 0..window_len_D-1."""

    values: np.ndarray
    window_len_D: int
    nprs_len_S: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("correlation trace must be a nonempty vector")
        if values.size != self.window_len_D:
            raise ValueError("window_len_D must match the trace length")
        if self.nprs_len_S < 1:
            raise ValueError("reference length must be positive")
        if not np.isfinite(values.view(np.float64)).all():
            raise ValueError("correlation values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class DetectionResult:
    """Presence decision plus the threshold delay estimate when detected."""

    papr: float
    detected: bool
    toa_estimate: int | None = None

    def __post_init__(self):
        if self.detected != (self.toa_estimate is not None):
            raise ValueError("toa_estimate must be present exactly when detected")


def cross_correlate(y: SampleBuffer, s: SampleBuffer, window_len: int) -> Correlation:
    """Correlate the received buffer against the reference over a delay window.

    Produces R[d] = sum_{k=d}^{d+S-1} y[k] s*[k-d] for d in [0, window_len).
    The received buffer must cover window_len + len(s) - 1 samples.
    """
    if window_len < 1:
        raise ValueError("window_len must be at least 1")
    if y.sampling_rate_hz != s.sampling_rate_hz:
        raise ValueError("received and reference buffers must share a sampling rate")
    need = window_len + len(s) - 1
    if len(y) < need:
        raise ValueError(f"received buffer too short: {len(y)} < {need}")
    values = np.correlate(y.samples[:need], s.samples, mode="valid")
    return Correlation(values, window_len, len(s))


def papr_traditional(corr: Correlation) -> float:
    """Peak magnitude over mean magnitude of the trace."""
    if corr.window_len_D < 2:
        raise ValueError("need at least 2 delay bins")
    mags = np.abs(corr.values)
    mean = float(mags.mean())
    if mean == 0.0:
        raise ValueError("all-zero correlation trace")
    return float(mags.max()) / mean


def papr_acf_removed(corr: Correlation, acf: Acf) -> float:
    """Peak-to-average ratio with the peak's correlation lobe cancelled.

    The denominator averages |R[d] - R[p] acf(d - p)| with p the peak
    position, so a genuine pilot contributes almost nothing to the average
    and the ratio grows; pure noise is barely affected.
    """
    if corr.window_len_D < 2:
        raise ValueError("need at least 2 delay bins")
    mags = np.abs(corr.values)
    peak = float(mags.max())
    if peak == 0.0:
        raise ValueError("all-zero correlation trace")
    p = int(np.argmax(mags))
    resid = corr.values - corr.values[p] * acf.kernel(p, corr.window_len_D)
    mean = float(np.abs(resid).mean())
    if mean == 0.0:
        return float("inf")
    return peak / mean


def threshold_toa(corr: Correlation, eta2: float) -> int:
    """First delay whose magnitude exceeds eta2 times the trace maximum."""
    if not 0.0 < eta2 < 1.0:
        raise ValueError("eta2 must be in (0, 1)")
    mags = np.abs(corr.values)
    above = np.nonzero(mags > eta2 * mags.max())[0]
    return int(above[0]) if above.size else 0


def detect_nprs(
    corr: Correlation,
    eta1: float,
    eta2: float,
    acf: Acf | None = None,
) -> DetectionResult:
    """Presence test at threshold eta1, then the threshold delay estimate.

    Uses the lobe-cancelled statistic when an autocorrelation is supplied,
    the plain one otherwise.
    """
    papr = papr_traditional(corr) if acf is None else papr_acf_removed(corr, acf)
    if papr > eta1:
        return DetectionResult(papr, True, threshold_toa(corr, eta2))
    return DetectionResult(papr, False, None)
