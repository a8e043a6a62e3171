"""Decision, error counting, FEC-threshold SNR reading, and complexity.

BER curves are read at a FEC threshold by interpolating log10(BER)
linearly in SNR. Zero-error measurements are stored at the floor
1 / (2 n_bits) and flagged, so curves stay interpolable without
pretending the floor is a measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .esn import EsnConfig
from .link import PAM4_LEVELS, demap_gray_pam4

KP4_BER = 2.26e-4


class NotBracketed(Exception):
    """The curve never crosses the threshold; widen the SNR sweep."""


class NonMonotone(Exception):
    """The threshold is crossed but on no monotone-decreasing segment."""


@dataclass(frozen=True, slots=True)
class FecThreshold:
    """Pre-FEC BER below which the outer code is taken as error free."""

    ber_threshold: float = KP4_BER

    def __post_init__(self) -> None:
        if not 0 < self.ber_threshold < 1:
            raise ValueError("ber_threshold must lie in (0, 1)")


@dataclass(eq=False, slots=True)
class BerReport:
    """Error counts for one equalized region."""

    ber: float
    ser: float
    n_bits: int
    n_bit_errors: int
    n_symbols: int
    n_symbol_errors: int
    per_position_ber: np.ndarray

    @property
    def ber_floor(self) -> float:
        """Smallest resolvable BER for this measurement size."""
        return 1.0 / (2.0 * self.n_bits)


@dataclass(eq=False, slots=True)
class BerSnrCurve:
    """BER versus SNR points, floor-flagged where no errors were seen."""

    snr_db: np.ndarray
    ber: np.ndarray
    floored: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        self.ber = np.asarray(self.ber, dtype=float)
        if self.floored is None:
            self.floored = np.zeros(self.snr_db.shape, dtype=bool)
        self.floored = np.asarray(self.floored, dtype=bool)
        if self.snr_db.size < 2:
            raise ValueError("curve needs at least two points")
        if self.snr_db.shape != self.ber.shape or self.snr_db.shape != self.floored.shape:
            raise ValueError("curve arrays must share one shape")
        if not np.all(np.diff(self.snr_db) > 0):
            raise ValueError("snr_db must be strictly increasing")
        if np.any(self.ber <= 0) or np.any(self.ber > 1):
            raise ValueError("ber values must lie in (0, 1]")


def curve_from_points(
    snr_db: np.ndarray, ber: np.ndarray, n_bits: np.ndarray | int
) -> BerSnrCurve:
    """Build a curve, replacing zero-error points with the flagged floor."""
    snr_db = np.asarray(snr_db, dtype=float)
    ber = np.asarray(ber, dtype=float)
    n_bits = np.broadcast_to(np.asarray(n_bits), ber.shape)
    floored = ber == 0
    ber = np.where(floored, 1.0 / (2.0 * n_bits), ber)
    return BerSnrCurve(snr_db=snr_db, ber=ber, floored=floored)


def hard_decision(estimates: np.ndarray) -> np.ndarray:
    """Nearest PAM4 level with thresholds {-2, 0, +2}.

    An estimate exactly on a threshold rounds toward the lower level.
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size and not np.all(np.isfinite(estimates)):
        raise ValueError("estimates must be finite")
    idx = (estimates > -2.0).astype(np.intp)
    idx += estimates > 0.0
    idx += estimates > 2.0
    return PAM4_LEVELS[idx]


def count_errors(
    pred_levels: np.ndarray, true_levels: np.ndarray, n_out: int = 1
) -> BerReport:
    """Count bit and symbol errors between aligned level sequences.

    Both sequences must already exclude guard symbols. Symbol i is
    attributed to position i mod n_out for the per-position breakdown,
    matching the stride of the multi-symbol readout.
    """
    pred_levels = np.asarray(pred_levels, dtype=float)
    true_levels = np.asarray(true_levels, dtype=float)
    if pred_levels.shape != true_levels.shape:
        raise ValueError("sequences must have equal length")
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    n_symbols = pred_levels.size
    bit_errors_per_symbol = (
        demap_gray_pam4(pred_levels) != demap_gray_pam4(true_levels)
    ).reshape(-1, 2).sum(axis=1)
    symbol_errors = pred_levels != true_levels
    positions = np.arange(n_symbols) % n_out
    per_position = np.zeros(n_out)
    for p in range(n_out):
        sel = positions == p
        bits_at_p = 2 * int(sel.sum())
        if bits_at_p:
            per_position[p] = bit_errors_per_symbol[sel].sum() / bits_at_p
    n_bits = 2 * n_symbols
    n_bit_errors = int(bit_errors_per_symbol.sum())
    return BerReport(
        ber=n_bit_errors / n_bits if n_bits else 0.0,
        ser=float(symbol_errors.mean()) if n_symbols else 0.0,
        n_bits=n_bits,
        n_bit_errors=n_bit_errors,
        n_symbols=n_symbols,
        n_symbol_errors=int(symbol_errors.sum()),
        per_position_ber=per_position,
    )


def snr_at_threshold(curve: BerSnrCurve, fec: FecThreshold | float) -> float:
    """SNR in dB where the curve crosses the FEC threshold.

    Interpolates linearly in (snr_db, log10 ber) on the first
    monotone-decreasing segment that brackets the threshold, scanning
    from low SNR. A point whose BER equals the threshold is returned
    directly. Segments whose endpoints are both floor flags carry no
    information and are skipped.
    """
    thr = fec.ber_threshold if isinstance(fec, FecThreshold) else float(fec)
    ber = curve.ber
    exact = np.flatnonzero(ber == thr)
    if exact.size:
        return float(curve.snr_db[exact[0]])
    bracketing = False
    for i in range(ber.size - 1):
        if not (ber[i] > thr > ber[i + 1]):
            continue
        bracketing = True
        if curve.floored[i] and curve.floored[i + 1]:
            continue
        lo, hi = np.log10(ber[i]), np.log10(ber[i + 1])
        t = (np.log10(thr) - lo) / (hi - lo)
        return float(curve.snr_db[i] + t * (curve.snr_db[i + 1] - curve.snr_db[i]))
    if bracketing or ber.min() < thr < ber.max():
        raise NonMonotone(
            "threshold lies inside the curve range but no usable "
            "decreasing segment brackets it"
        )
    raise NotBracketed(
        f"curve spans [{ber.min():.3g}, {ber.max():.3g}] and never crosses "
        f"{thr:.3g}; widen the SNR sweep"
    )


def snr_penalty(
    curve: BerSnrCurve, reference: BerSnrCurve, fec: FecThreshold | float
) -> float:
    """Extra SNR the curve needs over the reference at the threshold."""
    return snr_at_threshold(curve, fec) - snr_at_threshold(reference, fec)


def complexity_rmps(cfg: EsnConfig) -> float:
    """Real multiplications per equalized symbol of one equalizer variant.

    Evaluates, verbatim,

        [n_in n_res s_in + n_res^2 s_res + n_res n_out s_out
         + 2 n_res + n_out (1 + n_res)] / n_out

    Note the readout appears both in the sparse n_res n_out s_out term
    and in the dense-looking n_out (1 + n_res) term; the formula is kept
    as stated rather than corrected, so reported numbers stay comparable.
    """
    total = (
        cfg.n_in * cfg.n_res * cfg.s_in
        + cfg.n_res**2 * cfg.s_res
        + cfg.n_res * cfg.n_out * cfg.s_out
        + 2 * cfg.n_res
        + cfg.n_out * (1 + cfg.n_res)
    )
    return total / cfg.n_out
