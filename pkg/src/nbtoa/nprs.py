"""Narrowband positioning subframe synthesis and its autocorrelation.

A positioning subframe occupies one physical resource block: 12 subcarriers
by 14 OFDM symbols with normal cyclic prefix. Pilot cells sit on a diagonal
pattern, two per pilot-bearing symbol, with the frequency position cycling
with the symbol index and a cell-dependent shift (mod 6). Every other cell
is left empty; a positioning subframe carries no data.

Pilot values are seeded pseudo-random QPSK rather than the standardized
Gold-sequence construction. All downstream estimators depend only on the
autocorrelation shape induced by the one-PRB occupancy, so the generator is
swappable behind the same grid interface.

Inverse-DFT scaling is unitary (1/sqrt(fft_size)): the energy of each OFDM
symbol body equals the energy of its mapped subcarriers, so total time-domain
energy equals total grid energy plus the cyclic-prefix surplus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_SUBCARRIERS = 12
SYMBOLS_PER_SUBFRAME = 14

# Pilot-bearing OFDM symbols within the subframe. Symbols 0-2 are reserved
# for control, and the cell-reference symbols keep their resource elements
# free, which leaves this fixed set.
NPRS_SYMBOLS = (3, 5, 6, 8, 9, 10, 11, 12, 13)

# QPSK alphabet with phases {+pi/4, +3pi/4, -3pi/4, -pi/4}.
_QPSK = np.exp(1j * np.pi * np.array([1.0, 3.0, 5.0, 7.0]) / 4.0)

# fft size and (first, remaining) cyclic-prefix lengths per slot for the
# three supported sampling rates. Each slot holds 7 symbols; a subframe is
# two slots, so sum(cp) + 14 * fft_size == sampling_rate * 1 ms.
_STANDARD = {
    30.72e6: (2048, (160, 144)),
    1.92e6: (128, (10, 9)),
    240e3: (16, (2, 1)),
}


@dataclass(frozen=True)
class Numerology:
    """OFDM timing parameters for one 1 ms subframe.

    Attributes
    ----------
    sampling_rate_hz : float
        Output sample rate; fft_size * subcarrier_spacing_hz.
    fft_size : int
        Inverse-DFT length per OFDM symbol.
    cp_lengths : tuple[int, ...]
        Cyclic-prefix length in samples for each of the 14 symbols.
    """

    sampling_rate_hz: float
    fft_size: int
    cp_lengths: tuple[int, ...]
    subcarrier_spacing_hz: float = 15e3
    symbols_per_subframe: int = SYMBOLS_PER_SUBFRAME

    def __post_init__(self):
        if self.sampling_rate_hz <= 0 or self.fft_size <= 0:
            raise ValueError("sampling rate and fft size must be positive")
        if not math.isclose(
            self.fft_size * self.subcarrier_spacing_hz,
            self.sampling_rate_hz,
            rel_tol=1e-9,
        ):
            raise ValueError(
                "fft_size * subcarrier_spacing must equal the sampling rate"
            )
        if len(self.cp_lengths) != self.symbols_per_subframe:
            raise ValueError("need one cyclic-prefix length per OFDM symbol")
        subframe = round(self.sampling_rate_hz * 1e-3)
        if sum(self.cp_lengths) + self.symbols_per_subframe * self.fft_size != subframe:
            raise ValueError("cyclic prefixes and symbol bodies must fill 1 ms exactly")

    @property
    def samples_per_subframe(self) -> int:
        return round(self.sampling_rate_hz * 1e-3)

    @classmethod
    def for_rate(cls, sampling_rate_hz: float) -> "Numerology":
        """Standard numerology for 30.72 MHz, 1.92 MHz or 240 kHz."""
        for rate, (fft, (cp0, cp)) in _STANDARD.items():
            if math.isclose(rate, sampling_rate_hz, rel_tol=1e-9):
                slot = (cp0,) + (cp,) * 6
                return cls(rate, fft, slot + slot)
        raise ValueError(
            f"unsupported sampling rate {sampling_rate_hz!r}; "
            f"expected one of {sorted(_STANDARD)}"
        )


@dataclass(frozen=True, eq=False)
class ResourceGrid:
    """One PRB of subcarrier values plus the pilot-position mask."""

    cells: np.ndarray       # (12, 14) complex
    nprs_mask: np.ndarray   # (12, 14) bool
    cell_id_shift: int

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.complex128)
        mask = np.array(self.nprs_mask, dtype=bool)
        shape = (N_SUBCARRIERS, SYMBOLS_PER_SUBFRAME)
        if cells.shape != shape or mask.shape != shape:
            raise ValueError(f"grid arrays must have shape {shape}")
        if not 0 <= self.cell_id_shift <= 5:
            raise ValueError("cell_id_shift must be in 0..5")
        if np.any(cells[~mask] != 0):
            raise ValueError("cells outside the pilot mask must be zero")
        if mask.any() and not np.allclose(np.abs(cells[mask]), 1.0, atol=1e-12):
            raise ValueError("pilot cells must have unit magnitude")
        cells.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "nprs_mask", mask)


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    """Complex baseband samples at a stated sampling rate."""

    samples: np.ndarray
    sampling_rate_hz: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-d vector")
        if not np.isfinite(samples.view(np.float64)).all():
            raise ValueError("samples must be finite")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def mean_power(self) -> float:
        """Average |sample|^2 over the whole buffer."""
        return float(np.mean(np.abs(self.samples) ** 2))

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


@dataclass(frozen=True, eq=False)
class Acf:
    """Normalized autocorrelation on lags -max_lag..max_lag.

    values[i] is the correlation at lag i - max_lag, scaled so the zero-lag
    value is exactly one; ``normalization`` is the energy divisor that was
    applied. Lags outside the stored support evaluate to zero.
    """

    values: np.ndarray
    max_lag: int
    normalization: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.ndim != 1 or values.size != 2 * self.max_lag + 1:
            raise ValueError("values must cover lags -max_lag..max_lag")
        if abs(values[self.max_lag] - 1.0) > 1e-12:
            raise ValueError("zero-lag value must be 1")
        if np.any(np.abs(values) > 1.0 + 1e-12):
            raise ValueError("normalized correlation cannot exceed 1 in magnitude")
        if not np.allclose(values[::-1].conj(), values, atol=1e-9):
            raise ValueError("autocorrelation must be conjugate-symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def at(self, lags) -> np.ndarray:
        """Correlation evaluated at integer lags, zero outside support."""
        lags = np.asarray(lags, dtype=np.int64)
        out = np.zeros(lags.shape, dtype=np.complex128)
        inside = np.abs(lags) <= self.max_lag
        out[inside] = self.values[lags[inside] + self.max_lag]
        return out

    def kernel(self, center: int, length: int) -> np.ndarray:
        """Correlation at lags (0 - center)..(length - 1 - center).

        This is the lobe a unit tap at delay ``center`` contributes to a
        correlation window of ``length`` bins.
        """
        if -center >= -self.max_lag and length - 1 - center <= self.max_lag:
            start = self.max_lag - center
            return self.values[start:start + length]
        return self.at(np.arange(length) - center)

    @property
    def half_power_width(self) -> float:
        """Width in lags from the peak to where |acf| first drops below 1/sqrt(2)."""
        mags = np.abs(self.values[self.max_lag:])
        below = np.nonzero(mags < 1.0 / math.sqrt(2.0))[0]
        return float(below[0]) if below.size else float(self.max_lag)


def nprs_positions(cell_id_shift: int) -> list[tuple[int, int]]:
    """(subcarrier, symbol) pilot positions for a given cell shift.

    Two resource elements per pilot symbol, six subcarriers apart, with the
    base position (6 - symbol + shift) mod 6.
    """
    if not 0 <= cell_id_shift <= 5:
        raise ValueError("cell_id_shift must be in 0..5")
    positions = []
    for sym in NPRS_SYMBOLS:
        base = (6 - sym + cell_id_shift) % 6
        positions.append((base, sym))
        positions.append((base + 6, sym))
    return positions


def generate_nprs_grid(cell_id_shift: int, seed: int) -> ResourceGrid:
    """Populate one PRB with seeded pseudo-random QPSK pilots.

    Deterministic for a fixed (cell_id_shift, seed) pair: pilot positions are
    enumerated symbol-major and values drawn from one generator in that order.
    """
    positions = nprs_positions(cell_id_shift)
    rng = np.random.default_rng(seed)
    symbols = _QPSK[rng.integers(0, 4, size=len(positions))]
    cells = np.zeros((N_SUBCARRIERS, SYMBOLS_PER_SUBFRAME), dtype=np.complex128)
    mask = np.zeros((N_SUBCARRIERS, SYMBOLS_PER_SUBFRAME), dtype=bool)
    for (k, sym), value in zip(positions, symbols):
        cells[k, sym] = value
        mask[k, sym] = True
    return ResourceGrid(cells, mask, cell_id_shift)


def ofdm_modulate(grid: ResourceGrid, num: Numerology) -> SampleBuffer:
    """Synthesize the time-domain subframe for a resource grid.

    The 12 subcarriers are centered on DC (bins -6..5 of the inverse DFT);
    each symbol body is prefixed with its cyclic prefix. Unitary scaling
    keeps per-symbol body energy equal to mapped subcarrier energy.
    """
    if num.fft_size < N_SUBCARRIERS:
        raise ValueError("fft size too small for 12 active subcarriers")
    if num.symbols_per_subframe != SYMBOLS_PER_SUBFRAME:
        raise ValueError("numerology must describe a 14-symbol subframe")
    bins = (np.arange(N_SUBCARRIERS) - N_SUBCARRIERS // 2) % num.fft_size
    out = np.empty(num.samples_per_subframe, dtype=np.complex128)
    scale = math.sqrt(num.fft_size)
    pos = 0
    for sym in range(SYMBOLS_PER_SUBFRAME):
        freq = np.zeros(num.fft_size, dtype=np.complex128)
        freq[bins] = grid.cells[:, sym]
        body = np.fft.ifft(freq) * scale
        cp = num.cp_lengths[sym]
        out[pos:pos + cp] = body[num.fft_size - cp:]
        out[pos + cp:pos + cp + num.fft_size] = body
        pos += cp + num.fft_size
    return SampleBuffer(out, num.sampling_rate_hz)


def compute_acf(s: SampleBuffer, max_lag: int) -> Acf:
    """Normalized autocorrelation of a buffer up to +-max_lag.

    acf(d) = sum_k s[k] s*[k-d] / sum_k |s[k]|^2, with the sum running over
    the overlap (zero padding outside the signal support).
    """
    x = s.samples
    n = x.size
    if n == 0:
        raise ValueError("empty buffer")
    if not 0 <= max_lag < n:
        raise ValueError("max_lag must satisfy 0 <= max_lag < len(s)")
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.fft(x, nfft)
    corr = np.fft.ifft(spec * np.conj(spec))
    energy = float(corr[0].real)
    if energy <= 0.0:
        raise ValueError("buffer has zero energy; autocorrelation undefined")
    if max_lag > 0:
        values = np.concatenate([corr[nfft - max_lag:], corr[:max_lag + 1]])
    else:
        values = corr[:1].copy()
    return Acf(values / energy, max_lag, energy)
