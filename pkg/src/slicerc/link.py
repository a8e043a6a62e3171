"""PAM4 intensity-modulated direct-detection link with spectral slicing.

Simulated chain:

    bits -> Gray PAM4 levels -> RRC pulse shaping -> MZM optical field
         -> chromatic dispersion -> brick-wall spectral slices
         -> per-slice photodetection -> per-slice AWGN loading

The frame is treated as circular. Pulse shaping and dispersion are both
applied as FFT-based circular operators, so the wrap-around error is
confined to a guard region at the frame edges whose width follows from
the dispersion memory; downstream consumers exclude that guard.

Everything here is a pure function of the configuration, including its
seed. Bit generation and each slice's noise use separate named
substreams, so the transmitted data does not change when the number of
slices changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, pi

import numpy as np

from .rng import STREAM_BITS, STREAM_SLICE_NOISE, substream

SPEED_OF_LIGHT = 299_792_458.0  # m/s

PAM4_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])

# Gray labeling: adjacent amplitude levels differ in exactly one bit.
# Bit pair (b0, b1) maps to index 2*b0 + b1 in this table.
_LEVEL_BY_GRAY_INDEX = np.array([-3.0, -1.0, 3.0, 1.0])
# Inverse: level index (-3, -1, +1, +3) -> bit pair.
_BITS_BY_LEVEL_INDEX = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)


@dataclass(frozen=True, slots=True)
class LinkConfig:
    """Physical and numerical parameters of one simulated link frame."""

    fiber_length_km: float
    snr_db: float
    n_symbols: int
    baud_rate: float = 32e9
    sps: int = 2
    rolloff: float = 0.1
    rrc_span_symbols: int = 64
    dispersion_ps_nm_km: float = 16.4
    wavelength_nm: float = 1550.0
    num_slices: int = 4
    mzm_mod_index: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.fiber_length_km < 0:
            raise ValueError("fiber_length_km must be >= 0")
        if self.baud_rate <= 0:
            raise ValueError("baud_rate must be > 0")
        if int(self.sps) != self.sps or self.sps < 1:
            raise ValueError("sps must be a positive integer")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.rrc_span_symbols < 8:
            raise ValueError("rrc_span_symbols must be >= 8 to hold the main lobe")
        if int(self.num_slices) != self.num_slices or self.num_slices < 1:
            raise ValueError("num_slices must be a positive integer")
        if not 0 < self.mzm_mod_index <= 1:
            raise ValueError("mzm_mod_index must lie in (0, 1]")
        if int(self.n_symbols) != self.n_symbols or self.n_symbols < 1:
            raise ValueError("n_symbols must be a positive integer")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength_nm must be > 0")
        if self.occupied_bandwidth > self.sample_rate:
            raise ValueError(
                "occupied bandwidth exceeds the sampling rate; raise sps"
            )

    @property
    def sample_rate(self) -> float:
        return self.baud_rate * self.sps

    @property
    def occupied_bandwidth(self) -> float:
        """Two-sided width of the shaped signal spectrum in Hz."""
        return (1.0 + self.rolloff) * self.baud_rate

    @property
    def beta2_s2_per_m(self) -> float:
        """Group velocity dispersion derived from the D parameter."""
        d_si = self.dispersion_ps_nm_km * 1e-6  # s/m^2
        lam = self.wavelength_nm * 1e-9
        return -d_si * lam**2 / (2.0 * pi * SPEED_OF_LIGHT)

    @property
    def cd_memory_symbols(self) -> float:
        """Dispersion-induced temporal spread across the occupied band,
        expressed in symbol periods."""
        spread_s = (
            abs(self.beta2_s2_per_m)
            * 2.0
            * pi
            * self.occupied_bandwidth
            * self.fiber_length_km
            * 1e3
        )
        return spread_s * self.baud_rate

    @property
    def guard_symbols(self) -> int:
        """Symbols to discard at each frame edge so retained symbols never
        see circular wrap-around: four times the dispersion memory."""
        return ceil(4.0 * self.cd_memory_symbols)


@dataclass(eq=False, slots=True)
class SymbolFrame:
    """Transmitted bits and their PAM4 levels."""

    bits: np.ndarray
    levels: np.ndarray

    @property
    def n_symbols(self) -> int:
        return self.levels.size

    def __post_init__(self) -> None:
        if self.bits.size != 2 * self.levels.size:
            raise ValueError("frame must hold exactly two bits per symbol")


@dataclass(eq=False, slots=True)
class Waveform:
    """Sampled waveform with its sampling rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(np.abs(self.samples))):
            raise ValueError("waveform samples must be finite")


@dataclass(eq=False, slots=True)
class SlicedObservation:
    """Photodetected, noise-loaded outputs of every spectral slice.

    ``data[i, j]`` is slice i at sample j. Sample ``i * sps + p`` of any
    row belongs to symbol i of the frame (p < sps). ``guard_symbols`` is
    the per-edge discard count inherited from the link configuration.
    """

    data: np.ndarray
    sample_rate: float
    sps: int
    guard_symbols: int

    @property
    def num_slices(self) -> int:
        return self.data.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.data.shape[1] // self.sps


def generate_frame(n_symbols: int, rng: np.random.Generator) -> SymbolFrame:
    """Draw 2*n_symbols uniform bits and Gray-map them to PAM4 levels."""
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    bits = rng.integers(0, 2, size=2 * n_symbols, dtype=np.uint8)
    return SymbolFrame(bits=bits, levels=map_gray_pam4(bits))


def map_gray_pam4(bits: np.ndarray) -> np.ndarray:
    """Map a flat bit vector (two bits per symbol) to PAM4 levels.

    Gray labeling: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
    """
    bits = np.asarray(bits)
    if bits.size % 2 != 0:
        raise ValueError("bit vector length must be even")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    idx = 2 * bits[0::2].astype(np.intp) + bits[1::2].astype(np.intp)
    return _LEVEL_BY_GRAY_INDEX[idx]


def demap_gray_pam4(levels: np.ndarray) -> np.ndarray:
    """Inverse of :func:`map_gray_pam4` for exact level values."""
    levels = np.asarray(levels, dtype=float)
    idx = np.searchsorted(PAM4_LEVELS, levels)
    if np.any(idx >= 4) or not np.all(PAM4_LEVELS[np.minimum(idx, 3)] == levels):
        raise ValueError("levels must be drawn from {-3, -1, +1, +3}")
    return _BITS_BY_LEVEL_INDEX[idx].reshape(-1)


def rrc_taps(rolloff: float, sps: int, span_symbols: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps.

    Parameters
    ----------
    rolloff : float
        Excess bandwidth factor in [0, 1]. Zero gives sinc taps.
    sps : int
        Samples per symbol.
    span_symbols : int
        Half support of the filter in symbols. The returned filter has
        ``2 * span_symbols * sps + 1`` taps, an odd count, so the group
        delay is an integer number of samples.

    Returns
    -------
    np.ndarray
        Taps normalized to unit energy (sum of squares equals one).
    """
    if not 0 <= rolloff <= 1:
        raise ValueError("rolloff must lie in [0, 1]")
    if span_symbols < 8:
        raise ValueError("span_symbols must be >= 8 to hold the main lobe")
    if sps < 1:
        raise ValueError("sps must be >= 1")
    n = 2 * span_symbols * sps + 1
    t = (np.arange(n) - span_symbols * sps) / sps  # in symbol periods
    if rolloff == 0:
        h = np.sinc(t)
    else:
        h = np.empty(n)
        at_zero = t == 0
        # Removable singularity where the denominator 1 - (4*rolloff*t)^2
        # vanishes.
        at_edge = np.abs(np.abs(4.0 * rolloff * t) - 1.0) < 1e-12
        regular = ~(at_zero | at_edge)
        tr = t[regular]
        h[regular] = (
            np.sin(pi * tr * (1.0 - rolloff))
            + 4.0 * rolloff * tr * np.cos(pi * tr * (1.0 + rolloff))
        ) / (pi * tr * (1.0 - (4.0 * rolloff * tr) ** 2))
        h[at_zero] = 1.0 - rolloff + 4.0 * rolloff / pi
        h[at_edge] = (rolloff / np.sqrt(2.0)) * (
            (1.0 + 2.0 / pi) * np.sin(pi / (4.0 * rolloff))
            + (1.0 - 2.0 / pi) * np.cos(pi / (4.0 * rolloff))
        )
    return h / np.sqrt(np.sum(h**2))


def pulse_shape(frame: SymbolFrame, cfg: LinkConfig) -> Waveform:
    """Upsample the frame by zero insertion and apply the RRC filter.

    The convolution is circular over the frame and the filter group
    delay is compensated, so sample ``i * sps`` of the output aligns
    with symbol i. Output length is ``n_symbols * sps``.
    """
    taps = rrc_taps(cfg.rolloff, cfg.sps, cfg.rrc_span_symbols)
    n = frame.n_symbols * cfg.sps
    if taps.size > n:
        raise ValueError(
            "frame too short for the filter span; need at least "
            f"{taps.size} samples, got {n}"
        )
    up = np.zeros(n)
    up[:: cfg.sps] = frame.levels
    # Roll the centered taps so the center tap sits at lag zero, which
    # bakes the group-delay compensation into the kernel.
    half = cfg.rrc_span_symbols * cfg.sps
    kernel = np.zeros(n)
    kernel[: half + 1] = taps[half:]
    kernel[-half:] = taps[:half]
    shaped = np.fft.irfft(np.fft.rfft(up) * np.fft.rfft(kernel), n)
    return Waveform(samples=shaped, sample_rate=cfg.sample_rate)


def mzm_modulate(wave: Waveform, cfg: LinkConfig) -> Waveform:
    """Quadrature-biased Mach-Zehnder intensity modulator.

    Field transfer ``E = cos((pi / 4) * (1 - m * v))`` with modulation
    index m. The drive must already be normalized to peak |v| <= 1.
    """
    v = wave.samples
    if np.max(np.abs(v)) > 1.0 + 1e-9:
        raise ValueError("drive must be normalized to peak |v| <= 1")
    field = np.cos((pi / 4.0) * (1.0 - cfg.mzm_mod_index * v))
    return Waveform(samples=field, sample_rate=wave.sample_rate)


def propagate_cd(wave: Waveform, cfg: LinkConfig) -> Waveform:
    """Apply chromatic dispersion as a circular all-pass filter.

    The transfer function is ``H(f) = exp(+1j * (beta2 / 2) * (2 pi f)^2
    * L)``, which preserves energy exactly and composes additively in
    fiber length.
    """
    x = np.asarray(wave.samples, dtype=complex)
    f = np.fft.fftfreq(x.size, d=1.0 / wave.sample_rate)
    phase = 0.5 * cfg.beta2_s2_per_m * (2.0 * pi * f) ** 2 * cfg.fiber_length_km * 1e3
    out = np.fft.ifft(np.exp(1j * phase) * np.fft.fft(x))
    return Waveform(samples=out, sample_rate=wave.sample_rate)


def slice_spectrum(wave: Waveform, cfg: LinkConfig) -> np.ndarray:
    """Split the occupied band into equal brick-wall slices.

    The band ``[-B/2, +B/2]`` with ``B = (1 + rolloff) * baud_rate`` is
    partitioned into ``num_slices`` equal half-open intervals, the last
    one closed on top. Each slice keeps its interval of the spectrum and
    zeroes everything else, so the slice fields sum to the in-band part
    of the input exactly.

    Returns
    -------
    np.ndarray
        Complex array of shape ``(num_slices, n_samples)``.
    """
    b = cfg.occupied_bandwidth
    fs = wave.sample_rate
    if b > fs:
        raise ValueError("occupied bandwidth exceeds the sampling rate")
    x = np.asarray(wave.samples, dtype=complex)
    spectrum = np.fft.fft(x)
    f = np.fft.fftfreq(x.size, d=1.0 / fs)
    edges = -b / 2.0 + b * np.arange(cfg.num_slices + 1) / cfg.num_slices
    fields = np.empty((cfg.num_slices, x.size), dtype=complex)
    for i in range(cfg.num_slices):
        if i < cfg.num_slices - 1:
            mask = (f >= edges[i]) & (f < edges[i + 1])
        else:
            mask = (f >= edges[i]) & (f <= edges[i + 1])
        fields[i] = np.fft.ifft(spectrum * mask)
    return fields


def photodetect_and_load_noise(
    fields: np.ndarray, cfg: LinkConfig, seed: int | None = None
) -> SlicedObservation:
    """Square-law detect each slice and add white Gaussian noise.

    Detection is carrier-distributed: the receiver taps the carrier line
    (the sum of the slice means, untouched by dispersion) and feeds it to
    every branch, so branch i squares its sub-band riding on the common
    carrier. Without this a slice that lacks the carrier line only sees
    its own envelope squared and the band's phase content is gone. With a
    single slice the formula reduces to plain square-law detection of the
    full field.

    Noise power for slice i is set from that slice's own photodetected
    signal: ``sigma_i^2 = var(rows[i]) / 10^(snr_db / 10)``, where the
    variance removes the mean, so a constant row stays noiseless. Each
    slice draws from its own named substream of the master seed.
    """
    fields = np.atleast_2d(np.asarray(fields))
    if fields.shape[0] != cfg.num_slices:
        raise ValueError("field row count must equal num_slices")
    if seed is None:
        seed = cfg.seed
    means = fields.mean(axis=1, keepdims=True)
    carrier = means.sum()
    rows = np.abs(fields - means + carrier) ** 2
    scale = 10.0 ** (cfg.snr_db / 10.0)
    for i in range(cfg.num_slices):
        sigma = np.sqrt(rows[i].var() / scale)
        noise_rng = substream(seed, STREAM_SLICE_NOISE, i)
        rows[i] += noise_rng.normal(0.0, sigma, rows.shape[1])
    return SlicedObservation(
        data=rows,
        sample_rate=cfg.sample_rate,
        sps=cfg.sps,
        guard_symbols=cfg.guard_symbols,
    )


def simulate_link(cfg: LinkConfig) -> tuple[SlicedObservation, SymbolFrame]:
    """Run the full chain for one frame.

    Deterministic in (cfg, cfg.seed). The MZM drive is the shaped
    waveform normalized by its own peak, which keeps |v| <= 1 for any
    frame content.
    """
    frame = generate_frame(cfg.n_symbols, substream(cfg.seed, STREAM_BITS))
    shaped = pulse_shape(frame, cfg)
    peak = np.max(np.abs(shaped.samples))
    drive = Waveform(samples=shaped.samples / peak, sample_rate=shaped.sample_rate)
    field = mzm_modulate(drive, cfg)
    dispersed = propagate_cd(field, cfg)
    fields = slice_spectrum(dispersed, cfg)
    obs = photodetect_and_load_noise(fields, cfg)
    return obs, frame
