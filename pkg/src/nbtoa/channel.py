"""Tapped-delay-line multipath channel and receiver noise.

Built-in profiles are the LTE EPA/EVA/ETU power-delay profiles quantized to
integer sample delays at 30.72 MHz, 1.92 MHz and 240 kHz. Fading is block
fading: one i.i.d. circular-Gaussian draw per tap per realization, scaled so
the expected total tap power is one. The channel is held constant over a
subframe, so trial-to-trial decorrelation is all the Doppler model has to
provide and independent draws suffice.

Monte-Carlo seeding rule: ``trial_seed(master_seed, trial_index)`` returns a
``SeedSequence`` with entropy (master_seed, trial_index); its first spawned
child drives the channel draw and the second the noise draw. This keeps every
trial reproducible independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nprs import SampleBuffer

PROFILE_NAMES = ("AWGN", "EPA", "EVA", "ETU", "CUSTOM")

SUPPORTED_RATES = (30.72e6, 1.92e6, 240e3)

# (delays in samples, relative powers in dB) per (profile, sampling rate).
# The 30.72 MHz EPA delay list is padded to seven entries to match its seven
# power levels (standard EPA is a 7-tap profile).
_TABLE = {
    ("EPA", 30.72e6): ((0, 1, 2, 3, 6, 13, 16),
                       (0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8)),
    ("EPA", 1.92e6): ((0, 1), (0.0, -25.7)),
    ("EPA", 240e3): ((0,), (0.0,)),
    ("EVA", 30.72e6): ((0, 1, 5, 10, 11, 22, 33, 53, 77),
                       (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)),
    ("EVA", 1.92e6): ((0, 1, 2, 3, 5), (0.0, -2.3, -10.9, -15.9, -20.8)),
    ("EVA", 240e3): ((0, 1), (0.0, -23.1)),
    ("ETU", 30.72e6): ((0, 2, 4, 6, 7, 15, 49, 71, 154),
                       (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0)),
    ("ETU", 1.92e6): ((0, 1, 3, 4, 10), (0.0, -6.4, -9.4, -11.4, -13.4)),
    ("ETU", 240e3): ((0, 1), (0.0, -14.9)),
}


@dataclass(frozen=True)
class ChannelProfile:
    """Power-delay profile; optionally fixed complex gains for CUSTOM."""

    name: str
    tap_delays_samples: tuple[int, ...]
    tap_powers_db: tuple[float, ...]
    fixed_gains: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.name not in PROFILE_NAMES:
            raise ValueError(f"unknown profile name {self.name!r}")
        d = self.tap_delays_samples
        if len(d) == 0 or len(d) != len(self.tap_powers_db):
            raise ValueError("delay and power vectors must be nonempty and equal length")
        if d[0] != 0:
            raise ValueError("first tap delay must be 0")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("tap delays must be strictly increasing")
        if self.name == "AWGN" and (len(d) != 1 or self.tap_powers_db[0] != 0.0):
            raise ValueError("AWGN profile is a single tap at 0 dB")
        if self.fixed_gains is not None:
            if self.name != "CUSTOM":
                raise ValueError("fixed gains are only valid for CUSTOM profiles")
            if len(self.fixed_gains) != len(d):
                raise ValueError("need one fixed gain per tap")

    @property
    def num_taps(self) -> int:
        return len(self.tap_delays_samples)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """A drawn set of complex tap gains at integer sample delays."""

    coefficients: np.ndarray
    delays: np.ndarray
    normalized: bool

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=np.complex128)
        delays = np.array(self.delays, dtype=np.int64)
        if coeffs.ndim != 1 or coeffs.size == 0 or coeffs.shape != delays.shape:
            raise ValueError("coefficients and delays must be matching nonempty vectors")
        coeffs.setflags(write=False)
        delays.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "delays", delays)

    @property
    def num_taps(self) -> int:
        return self.coefficients.size


def builtin_profile(name: str, sampling_rate_hz: float) -> ChannelProfile:
    """Look up a built-in profile row for one of the supported rates."""
    rate = None
    for candidate in SUPPORTED_RATES:
        if math.isclose(candidate, sampling_rate_hz, rel_tol=1e-9):
            rate = candidate
    if rate is None:
        raise ValueError(f"unsupported sampling rate {sampling_rate_hz!r}")
    if name == "AWGN":
        return ChannelProfile("AWGN", (0,), (0.0,))
    try:
        delays, powers = _TABLE[(name, rate)]
    except KeyError:
        raise ValueError(f"no built-in profile for ({name!r}, {rate!r})") from None
    return ChannelProfile(name, delays, powers)


def custom_profile(
    delays: tuple[int, ...],
    powers_db: tuple[float, ...] | None = None,
    gains: tuple[complex, ...] | None = None,
) -> ChannelProfile:
    """Build a CUSTOM profile from either relative powers or fixed gains."""
    if (powers_db is None) == (gains is None):
        raise ValueError("give exactly one of powers_db or gains")
    if gains is not None:
        gains = tuple(complex(g) for g in gains)
        if any(g == 0 for g in gains):
            raise ValueError("fixed gains must be nonzero")
        powers_db = tuple(20.0 * math.log10(abs(g)) for g in gains)
        return ChannelProfile("CUSTOM", tuple(delays), powers_db, gains)
    return ChannelProfile("CUSTOM", tuple(delays), tuple(powers_db))


def realize_channel(profile: ChannelProfile, seed) -> ChannelRealization:
    """Draw one block-fading realization of a profile.

    Each tap is circular complex Gaussian with variance equal to its linear
    power after scaling the profile so total linear power is one. CUSTOM
    profiles with fixed gains pass through untouched.
    """
    delays = np.array(profile.tap_delays_samples, dtype=np.int64)
    if profile.fixed_gains is not None:
        return ChannelRealization(np.array(profile.fixed_gains), delays, normalized=False)
    powers = 10.0 ** (np.array(profile.tap_powers_db, dtype=np.float64) / 10.0)
    powers /= powers.sum()
    rng = np.random.default_rng(seed)
    n = powers.size
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(powers / 2.0)
    return ChannelRealization(gains, delays, normalized=True)


def apply_channel(
    s: SampleBuffer,
    chan: ChannelRealization,
    toa_offset: int,
    total_len: int,
) -> SampleBuffer:
    """Delay-and-sum the transmit buffer through a channel realization.

    y[n] = sum_i h_i s[n - toa_offset - d_i], zero elsewhere; the output is
    padded/truncated to exactly ``total_len`` samples (which must fit the
    latest echo completely).
    """
    if toa_offset < 0:
        raise ValueError("toa_offset must be nonnegative")
    span = toa_offset + int(chan.delays.max()) + len(s)
    if total_len < span:
        raise ValueError(f"total_len {total_len} too short; need at least {span}")
    y = np.zeros(total_len, dtype=np.complex128)
    for h, d in zip(chan.coefficients, chan.delays):
        start = toa_offset + int(d)
        y[start:start + len(s)] += h * s.samples
    return SampleBuffer(y, s.sampling_rate_hz)


def add_awgn(y: SampleBuffer, snr_db: float, sigma_s_sq: float, seed) -> SampleBuffer:
    """Add circular complex Gaussian noise at a target SNR.

    The per-sample noise variance is sigma_s_sq / 10^(snr_db/10), with
    sigma_s_sq the average transmit power the SNR is referenced to. Real and
    imaginary parts are drawn as two consecutive blocks from one generator.
    """
    if sigma_s_sq <= 0:
        raise ValueError("sigma_s_sq must be positive")
    noise_var = sigma_s_sq / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    n = len(y)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(noise_var / 2.0)
    return SampleBuffer(y.samples + noise, y.sampling_rate_hz)


def trial_seed(master_seed: int, trial_index: int) -> np.random.SeedSequence:
    """Per-trial seed: entropy (master_seed, trial_index); spawn children per draw."""
    return np.random.SeedSequence((master_seed, trial_index))
