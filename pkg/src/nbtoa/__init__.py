"""Narrowband first-path time-of-arrival estimation toolkit.

Link-level simulation of a one-PRB positioning subframe, multipath fading
channels, the sliding correlator with its presence statistics, a
successive-cancellation joint estimator of tap count, coefficients and
delays, threshold and single-peak baselines, and a Monte-Carlo experiment
harness.
"""

__version__ = "0.1.0"

from .channel import (
    ChannelProfile,
    ChannelRealization,
    add_awgn,
    apply_channel,
    builtin_profile,
    custom_profile,
    realize_channel,
    trial_seed,
)
from .correlate import (
    Correlation,
    DetectionResult,
    cross_correlate,
    detect_nprs,
    papr_acf_removed,
    papr_traditional,
    threshold_toa,
)
from .estimator import (
    ToaParams,
    ToaResult,
    estimate_toa,
    ml_single_path,
    prune_far,
    prune_weak,
)
from .experiments import (
    DetectionRecord,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    run_convergence_experiment,
    run_detection_experiment,
    run_experiment,
    run_papr_experiment,
    verify_manifest,
    write_manifest,
)
from .iqfile import read_cf32, write_cf32
from .nprs import (
    Acf,
    Numerology,
    ResourceGrid,
    SampleBuffer,
    compute_acf,
    generate_nprs_grid,
    nprs_positions,
    ofdm_modulate,
)
from .sage import (
    SageParams,
    TapEstimate,
    estimate_noise,
    initialize_taps,
    residual_trace,
    run_sage,
    update_tap,
)

__all__ = [name for name in dir() if not name.startswith("_")]
