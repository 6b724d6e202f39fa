"""First-path delay estimation with model-order refinement.

Wraps the successive-cancellation core with the two heuristics that turn a
fixed-order channel estimate into a time-of-arrival decision: taps too far
from the trace peak are dropped (the first path cannot lag the peak by more
than the channel's delay spread), and taps carrying less than a set fraction
of the total estimated power are recursively dropped. Whenever pruning
reduced the model order, the core is re-run warm-started from the survivors
until the order is stable. A final guard compares the multi-tap fit against
the plain single-peak fit and falls back to the peak when the extra taps do
not actually explain the trace better, which protects the single-path case.
The reported arrival is the smallest surviving delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correlate import Correlation
from .nprs import Acf
from .sage import SageParams, TapEstimate, estimate_noise, residual_trace, run_sage

# (max_peak_distance, initial_taps) that cover the widest built-in profile
# spread at each supported sampling rate.
_RATE_DEFAULTS = {30.72e6: (160, 9), 1.92e6: (10, 5), 240e3: (2, 2)}


@dataclass(frozen=True)
class ToaParams:
    """Arrival-estimation settings.

    max_peak_distance: taps farther than this from the trace peak are
        invalid (largest plausible delay spread in samples).
    weak_tap_fraction: taps with |h|^2 below this fraction of the total
        estimated power are invalid.
    outer_cap: safety bound on re-run rounds of the estimation core.
    true_toa_hint: not used by the estimator; carried so test and
        diagnostic tooling can tag results with the ground truth.
    """

    max_peak_distance: int = 10
    weak_tap_fraction: float = 0.1
    sage: SageParams = field(default_factory=SageParams)
    outer_cap: int = 10
    true_toa_hint: int | None = None

    def __post_init__(self):
        if self.max_peak_distance < 0:
            raise ValueError("max_peak_distance must be >= 0")
        if not 0.0 < self.weak_tap_fraction < 1.0:
            raise ValueError("weak_tap_fraction must be in (0, 1)")
        if self.outer_cap < 1:
            raise ValueError("outer_cap must be >= 1")

    @classmethod
    def for_rate(cls, sampling_rate_hz: float, **overrides) -> "ToaParams":
        """Defaults with the rate-dependent fields filled in."""
        for rate, (dist, taps) in _RATE_DEFAULTS.items():
            if math.isclose(rate, sampling_rate_hz, rel_tol=1e-9):
                sage = overrides.pop("sage", SageParams(initial_taps=taps))
                return cls(max_peak_distance=dist, sage=sage, **overrides)
        raise ValueError(f"no defaults for sampling rate {sampling_rate_hz!r}")


@dataclass(frozen=True, eq=False)
class ToaResult:
    """Arrival estimate plus the surviving channel-tap model."""

    toa: int
    taps: TapEstimate
    used_fallback: bool
    outer_iterations: int
    hit_outer_cap: bool = False

    def __post_init__(self):
        if self.toa != int(self.taps.delays.min()):
            raise ValueError("toa must be the smallest surviving delay")


def ml_single_path(corr: Correlation) -> tuple[int, complex]:
    """Single-path fit: the trace's magnitude peak and its value.

    Ties go to the smaller delay. This is the exact maximum-likelihood
    answer when exactly one path exists.
    """
    mags = np.abs(corr.values)
    peak = int(np.argmax(mags))
    return peak, complex(corr.values[peak])


def prune_far(est: TapEstimate, d_peak: int, max_distance: int) -> TapEstimate:
    """Drop taps farther than max_distance delay bins from the peak.

    Never empties: if everything is too far, the single tap nearest the
    peak is kept. Order is preserved.
    """
    dist = np.abs(est.delays - d_peak)
    keep = dist <= max_distance
    if not keep.any():
        keep = np.zeros(est.num_taps, dtype=bool)
        keep[int(np.argmin(dist))] = True
    return TapEstimate(est.delays[keep], est.coeffs[keep], est.noise_var)


def prune_weak(est: TapEstimate, weak_fraction: float) -> TapEstimate:
    """Recursively drop the weakest tap while it falls below the power floor.

    One tap is removed per pass (the weakest; ties to the earlier-stored
    tap) whenever its power is below weak_fraction times the current total;
    the total is recomputed after every removal. The last tap is never
    removed.
    """
    if not 0.0 < weak_fraction < 1.0:
        raise ValueError("weak_fraction must be in (0, 1)")
    delays = est.delays
    coeffs = est.coeffs
    while delays.size > 1:
        powers = np.abs(coeffs) ** 2
        weakest = int(np.argmin(powers))
        if powers[weakest] < weak_fraction * powers.sum():
            delays = np.delete(delays, weakest)
            coeffs = np.delete(coeffs, weakest)
        else:
            break
    return TapEstimate(delays, coeffs, est.noise_var)


def estimate_toa(corr: Correlation, acf: Acf, params: ToaParams) -> ToaResult:
    """Joint tap-count/coefficient/delay estimate of the first arrival.

    Runs the successive-cancellation core at the initial model order, prunes
    invalid taps, and re-runs warm-started while pruning keeps shrinking the
    order (each re-run uses the survivors as its initialization). Afterwards
    the surviving model's residual noise power is recomputed from scratch
    and compared against the single-peak fit's; if the multi-tap model is no
    better, the estimate collapses to the peak. The arrival is the smallest
    surviving delay.
    """
    d_peak, h_peak = ml_single_path(corr)

    est = run_sage(corr, acf, params.sage.initial_taps, params.sage)
    est = prune_weak(prune_far(est, d_peak, params.max_peak_distance),
                     params.weak_tap_fraction)
    runs = 1
    target = params.sage.initial_taps
    hit_cap = False
    while est.num_taps < target:
        if runs > params.outer_cap:
            hit_cap = True
            break
        target = est.num_taps
        est = run_sage(corr, acf, target, params.sage, init=est)
        est = prune_weak(prune_far(est, d_peak, params.max_peak_distance),
                         params.weak_tap_fraction)
        runs += 1

    sigma_multi = float(np.mean(np.abs(residual_trace(corr, acf, est).values) ** 2))
    sigma_peak = estimate_noise(corr, acf, h_peak, d_peak)
    if sigma_multi >= sigma_peak:
        final = TapEstimate(np.array([d_peak]), np.array([h_peak]), sigma_peak)
        return ToaResult(d_peak, final, True, runs, hit_cap)
    final = TapEstimate(est.delays, est.coeffs, sigma_multi)
    return ToaResult(int(final.delays.min()), final, False, runs, hit_cap)
