"""Frequency-flat LOS channel matrix and its time-variant composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import C0
from .scenario import Scenario, slant_range


@dataclass
class ChannelMatrix:
    """Complex K x N channel with provenance.

    ``source`` is "geometric" for matrices built from the scenario and
    "estimated" for CSI measurements.
    """

    entries: np.ndarray
    carrier_freq_hz: float
    timestamp_s: float = 0.0
    source: str = "geometric"

    def __post_init__(self):
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if self.source not in ("geometric", "estimated"):
            raise ValueError("source must be 'geometric' or 'estimated'")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("channel entries must be finite")

    @property
    def shape(self):
        return self.entries.shape

    def to_json_dict(self) -> dict:
        """Row-major re/im pairs for logging and CSI-feedback replay."""
        k, n = self.entries.shape
        return {
            "shape": [k, n],
            "carrier_freq_hz": self.carrier_freq_hz,
            "timestamp_s": self.timestamp_s,
            "source": self.source,
            "entries_re_im": [
                [float(v.real), float(v.imag)] for v in self.entries.ravel()
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ChannelMatrix":
        k, n = d["shape"]
        flat = np.array([complex(re, im) for re, im in d["entries_re_im"]])
        return cls(
            entries=flat.reshape(k, n),
            carrier_freq_hz=d["carrier_freq_hz"],
            timestamp_s=d.get("timestamp_s", 0.0),
            source=d.get("source", "geometric"),
        )


def los_coefficient(d, f: float):
    """Free-space LOS coefficient (c0 / (4 pi f d)) * exp(-j 2 pi f d / c0)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    if f <= 0:
        raise ValueError("frequency must be > 0")
    out = (C0 / (4.0 * np.pi * f * d)) * np.exp(-2j * np.pi * f * d / C0)
    return out if out.ndim else complex(out)


def build_channel_matrix(scenario: Scenario, t: float) -> ChannelMatrix:
    """Geometric downlink channel snapshot at time t, entry (k, n) from UT k to satellite n."""
    f_d = scenario.carriers.downlink_freq_hz
    uts = scenario.user_terminals
    h = np.empty((len(uts), len(scenario.satellites)), dtype=complex)
    for k, ut in enumerate(uts):
        for n, sat in enumerate(scenario.satellites):
            h[k, n] = los_coefficient(slant_range(ut, sat, t), f_d)
    return ChannelMatrix(entries=h, carrier_freq_hz=f_d, timestamp_s=float(t), source="geometric")


def effective_channel(H, T, R) -> np.ndarray:
    """Compose the time-variant channel R * H * T.

    T and R may be given as square diagonal matrices or as 1-D arrays of
    diagonal entries.  Unit-modulus diagonals leave the singular values
    of H unchanged.
    """
    h = H.entries if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    k, n = h.shape
    t_diag = _as_diag(T, n, "T")
    r_diag = _as_diag(R, k, "R")
    return (r_diag[:, None] * h) * t_diag[None, :]


def _as_diag(m, size: int, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        diag = m
    elif m.ndim == 2:
        if m.shape != (size, size):
            raise ValueError(f"{name} must be {size}x{size}, got {m.shape}")
        if np.any(m - np.diag(np.diag(m)) != 0):
            raise ValueError(f"{name} must be diagonal")
        diag = np.diag(m)
    else:
        raise ValueError(f"{name} must be 1-D or 2-D")
    if len(diag) != size:
        raise ValueError(f"{name} diagonal must have length {size}")
    return diag
