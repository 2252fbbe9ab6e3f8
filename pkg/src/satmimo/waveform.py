"""Symbol-level QPSK waveform, AWGN injection, and MER/EVM measurement.

The data path is simulated at symbol level; symbol rate and roll-off are
metadata used only for occupied-bandwidth reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import MER_CAP_DB

# Gray-mapped unit-power QPSK: bit pairs 00, 01, 11, 10 traverse the quadrants
_QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


@dataclass
class SymbolStream:
    symbols: np.ndarray
    constellation: str = "qpsk"
    gray_map: str = "standard"
    bits: np.ndarray | None = None

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)


@dataclass
class MerMeasurement:
    mer_db: float
    evm_rms_pct: float
    n_symbols: int
    reference: str = "known-sequence"


def qpsk_modulate(bits) -> SymbolStream:
    """Gray-mapped unit-power QPSK symbols from a bit array."""
    bits = np.asarray(bits, dtype=int).ravel()
    if bits.size % 2 != 0:
        raise ValueError("bit count must be even")
    if bits.size == 0:
        return SymbolStream(symbols=np.array([], dtype=complex), bits=bits)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    b0, b1 = bits[0::2], bits[1::2]
    idx = 2 * b0 + (b0 ^ b1)
    return SymbolStream(symbols=_QPSK_POINTS[idx], bits=bits)


def random_qpsk(n_symbols: int, rng: np.random.Generator) -> SymbolStream:
    """Random unit-power QPSK symbols (random source bits)."""
    bits = rng.integers(0, 2, size=2 * n_symbols)
    return qpsk_modulate(bits)


def random_gaussian(n_symbols: int, rng: np.random.Generator) -> SymbolStream:
    """Unit-variance circular Gaussian symbols, the capacity-analysis source."""
    symbols = (rng.standard_normal(n_symbols) + 1j * rng.standard_normal(n_symbols)) / np.sqrt(2.0)
    return SymbolStream(symbols=symbols, constellation="gaussian")


def add_awgn(stream, snr_db, rng: np.random.Generator):
    """Add circular complex Gaussian noise at the given SNR (dB, signal power 1).

    ``snr_db = None`` or ``inf`` returns the input unchanged.  The draw
    order is fixed, so output is deterministic per generator state.
    """
    symbols = stream.symbols if isinstance(stream, SymbolStream) else np.asarray(stream, dtype=complex)
    if snr_db is None or np.isinf(snr_db):
        noisy = symbols.copy()
    else:
        sigma2 = 10.0 ** (-float(snr_db) / 10.0)
        noise = rng.standard_normal(symbols.shape) + 1j * rng.standard_normal(symbols.shape)
        noisy = symbols + np.sqrt(sigma2 / 2.0) * noise
    if isinstance(stream, SymbolStream):
        return SymbolStream(symbols=noisy, constellation=stream.constellation,
                            gray_map=stream.gray_map, bits=stream.bits)
    return noisy


def measure_mer(received, reference, mode: str = "known-sequence") -> MerMeasurement:
    """MER after fitting one complex scalar gain to the known reference.

    mer = 10 log10( sum|g*ref|^2 / sum|g*ref - rx|^2 ) with g the
    least-squares complex gain, i.e. fitted signal power over error
    power; invariant to common phase rotation and amplitude scaling of
    the received stream.  Zero error power reports the capped sentinel.
    """
    rx = received.symbols if isinstance(received, SymbolStream) else np.asarray(received, dtype=complex)
    if mode == "known-sequence":
        ref = reference.symbols if isinstance(reference, SymbolStream) else np.asarray(reference, dtype=complex)
        if rx.shape != ref.shape:
            raise ValueError("received and reference must have equal length")
        if rx.size == 0:
            raise ValueError("cannot measure MER on empty streams")
    elif mode == "decision-directed":
        if rx.size == 0:
            raise ValueError("cannot measure MER on empty streams")
        scale = np.sqrt(np.mean(np.abs(rx) ** 2))
        norm = rx / scale if scale > 0 else rx
        ref = _QPSK_POINTS[np.argmin(np.abs(norm[:, None] - _QPSK_POINTS[None, :]), axis=1)]
    else:
        raise ValueError("mode must be 'known-sequence' or 'decision-directed'")

    ref_power = np.sum(np.abs(ref) ** 2)
    g = np.vdot(ref, rx) / ref_power
    signal_power = np.abs(g) ** 2 * ref_power
    err_power = np.sum(np.abs(ref * g - rx) ** 2)
    if err_power == 0.0 or signal_power == 0.0:
        mer_db = MER_CAP_DB if err_power == 0.0 else -MER_CAP_DB
    else:
        mer_db = float(np.clip(10.0 * np.log10(signal_power / err_power),
                               -MER_CAP_DB, MER_CAP_DB))
    evm = float(100.0 * 10.0 ** (-mer_db / 20.0))
    return MerMeasurement(mer_db=mer_db, evm_rms_pct=evm, n_symbols=rx.size, reference=mode)


def snr_to_rate(snr_db: float) -> float:
    """Shannon rate log2(1 + SNR) [bit/s/Hz] for an SNR in dB."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return float(np.log2(1.0 + 10.0 ** (snr_db / 10.0)))


def constellation_snapshot(symbols, max_points: int = 2000) -> np.ndarray:
    """First max_points received symbols for scatter export."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    return symbols[:max_points]
