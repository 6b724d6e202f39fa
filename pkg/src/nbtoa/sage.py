"""Successive-cancellation channel estimation on the correlation trace.

With the tap count fixed, taps are re-estimated one at a time: all other
taps' correlation lobes are subtracted from the trace, the tap's delay is
re-detected as the residual peak, and its coefficient is re-fit by averaging
the residual against the autocorrelation over a small window around that
peak, followed by an LMMSE-style shrinkage h / (1 + noise_var / |h|^2) that
damps coefficients the current noise estimate cannot support. Sweeping all
taps for several rounds decomposes overlapping lobes that a plain peak
picker cannot separate.

Everything operates on the unnormalized trace, so coefficient estimates
carry the reference-signal energy as a scale factor; delay decisions and all
the thresholds downstream are ratios and do not see it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlate import Correlation
from .nprs import Acf


@dataclass(frozen=True)
class SageParams:
    """Tuning knobs for the successive-cancellation sweeps.

    sweeps: full passes over all taps per run.
    avg_halfwidth: half-window (in delay bins) for the coefficient re-fit.
    initial_taps: starting model order when no warm start is given.
    unbiased_divisor: divide the coefficient average by the actual term
        count (2*avg_halfwidth + 1) instead of 2*avg_halfwidth. Off by
        default; the small constant bias is absorbed by the shrinkage step
        and by delay-based decisions downstream.
    """

    sweeps: int = 8
    avg_halfwidth: int = 4
    initial_taps: int = 5
    unbiased_divisor: bool = False

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.avg_halfwidth < 0:
            raise ValueError("avg_halfwidth must be >= 0")
        if self.initial_taps < 1:
            raise ValueError("initial_taps must be >= 1")


@dataclass(frozen=True, eq=False)
class TapEstimate:
    """Estimated delays, complex coefficients and residual noise power."""

    delays: np.ndarray
    coeffs: np.ndarray
    noise_var: float

    def __post_init__(self):
        delays = np.array(self.delays, dtype=np.int64)
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if delays.ndim != 1 or delays.size < 1 or delays.shape != coeffs.shape:
            raise ValueError("delays and coeffs must be matching nonempty vectors")
        if not np.isfinite(coeffs.view(np.float64)).all():
            raise ValueError("coefficients must be finite")
        if not (np.isfinite(self.noise_var) and self.noise_var >= 0):
            raise ValueError("noise_var must be finite and nonnegative")
        delays.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def num_taps(self) -> int:
        return self.delays.size


def initialize_taps(corr: Correlation, num_taps: int) -> TapEstimate:
    """Seed an estimate from the strongest trace bins.

    Delays are the positions of the num_taps largest magnitudes in
    descending order (ties to the smaller delay); coefficients are the raw
    trace values there. noise_var starts at zero.
    """
    if not 1 <= num_taps <= corr.window_len_D:
        raise ValueError("num_taps must be in 1..window length")
    mags = np.abs(corr.values)
    order = np.argsort(-mags, kind="stable")[:num_taps]
    return TapEstimate(order, corr.values[order], 0.0)


def residual_trace(
    corr: Correlation,
    acf: Acf,
    est: TapEstimate,
    exclude: int | None = None,
) -> Correlation:
    """Trace minus every estimated tap's lobe, optionally keeping one tap in.

    ``exclude`` names the tap whose contribution is NOT subtracted, so the
    returned trace isolates that tap plus noise.
    """
    if exclude is not None and not 0 <= exclude < est.num_taps:
        raise ValueError("exclude must name an existing tap")
    resid = corr.values.copy()
    for i, (d, h) in enumerate(zip(est.delays, est.coeffs)):
        if i == exclude:
            continue
        resid -= h * acf.kernel(int(d), corr.window_len_D)
    return Correlation(resid, corr.window_len_D, corr.nprs_len_S)


def estimate_noise(resid: Correlation, acf: Acf, h: complex, d: int) -> float:
    """Mean squared magnitude of the trace after cancelling tap (h, d)."""
    if not 0 <= d < resid.window_len_D:
        raise ValueError("delay outside the trace window")
    left = resid.values - h * acf.kernel(int(d), resid.window_len_D)
    return float(np.mean(np.abs(left) ** 2))


def update_tap(
    resid: Correlation,
    acf: Acf,
    noise_var: float,
    params: SageParams,
) -> tuple[int, complex]:
    """Re-detect one tap on its isolated residual trace.

    The delay moves to the residual's magnitude peak (ties to the smaller
    delay). The coefficient is the autocorrelation-weighted average of the
    residual over +-avg_halfwidth bins around that peak (missing bins count
    as zero), then shrunk by 1 / (1 + noise_var / |h|^2). A zero average
    stays zero.
    """
    mags = np.abs(resid.values)
    d_new = int(np.argmax(mags))
    half = params.avg_halfwidth
    offsets = np.arange(-half, half + 1)
    positions = d_new + offsets
    inside = (positions >= 0) & (positions < resid.window_len_D)
    weights = np.conj(acf.at(offsets[inside]))
    divisor = 2 * half + 1 if params.unbiased_divisor else max(2 * half, 1)
    h_new = complex(np.sum(weights * resid.values[positions[inside]]) / divisor)
    if h_new == 0:
        return d_new, 0j
    h_new /= 1.0 + noise_var / abs(h_new) ** 2
    return d_new, h_new


def run_sage(
    corr: Correlation,
    acf: Acf,
    num_taps: int,
    params: SageParams,
    init: TapEstimate | None = None,
    sweep_objective: list[float] | None = None,
) -> TapEstimate:
    """Estimate num_taps (delay, coefficient) pairs by successive cancellation.

    Starts from ``init`` when given (a warm start from a previous, pruned
    run), otherwise from the strongest trace bins. A single-tap model skips
    the sweeps entirely: the initialization is already the peak pick, and
    only its residual noise power is evaluated. Otherwise runs
    ``params.sweeps`` passes; each pass revisits every tap in stored order
    (strongest first after a cold start): add the tap's lobe back into the
    running residual, estimate the noise power from the fully-cancelled
    trace, re-detect the tap, and cancel its updated lobe.

    When ``sweep_objective`` is a list, the mean squared residual magnitude
    after each completed sweep is appended to it (the per-sweep value of the
    least-squares objective the sweeps chip away at, divided by the window
    length).

    Returns the final estimate; its noise_var is the last in-sweep noise
    evaluation.
    """
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    est = initialize_taps(corr, num_taps) if init is None else init
    if est.num_taps != num_taps:
        raise ValueError("warm start must carry exactly num_taps taps")
    delays = est.delays.copy()
    coeffs = est.coeffs.copy()
    window = corr.window_len_D

    if num_taps == 1:
        noise = estimate_noise(corr, acf, complex(coeffs[0]), int(delays[0]))
        return TapEstimate(delays, coeffs, noise)

    resid = corr.values.copy()
    for d, h in zip(delays, coeffs):
        resid -= h * acf.kernel(int(d), window)

    noise = 0.0
    for _ in range(params.sweeps):
        for tap in range(num_taps):
            isolated = Correlation(
                resid + coeffs[tap] * acf.kernel(int(delays[tap]), window),
                window,
                corr.nprs_len_S,
            )
            noise = estimate_noise(isolated, acf, complex(coeffs[tap]), int(delays[tap]))
            d_new, h_new = update_tap(isolated, acf, noise, params)
            delays[tap] = d_new
            coeffs[tap] = h_new
            resid = isolated.values - h_new * acf.kernel(d_new, window)
        if sweep_objective is not None:
            sweep_objective.append(float(np.mean(np.abs(resid) ** 2)))
    return TapEstimate(delays, coeffs, noise)
