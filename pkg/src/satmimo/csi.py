"""Common-reference-signal pilots, BLUE channel estimation, and feedback.

Pilots are cyclic shifts of one even-length Zadoff-Chu root sequence.
Zadoff-Chu autocorrelation is zero at every nonzero cyclic lag, so
distinct shifts are exactly orthogonal in the aligned, frequency-flat
setting simulated here, and per-satellite correlation is the BLUE.

Delivered snapshots serialize to a JSON replay file; replaying one
drives the precoder directly, with no estimation in the loop (the
regression interface).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix


@dataclass
class PilotBook:
    """N constant-modulus pilot sequences of length L with zero cross-correlation."""

    sequences: np.ndarray
    bandwidth_hz: float = 200e3
    root: int = 1
    shifts: tuple = ()

    @property
    def n_sequences(self) -> int:
        return self.sequences.shape[0]

    @property
    def length(self) -> int:
        return self.sequences.shape[1]


def make_pilot_book(n_sequences: int, length: int = 2000, bandwidth_hz: float = 200e3,
                    root: int = 1) -> PilotBook:
    """Build the pilot book from cyclic shifts (spacing L // N) of one ZC root."""
    if length % 2 != 0:
        raise ValueError("pilot length must be even")
    if n_sequences < 1 or n_sequences > length:
        raise ValueError("need 1 <= N <= L pilot sequences")
    n = np.arange(length)
    base = np.exp(-1j * np.pi * root * n**2 / length)
    step = length // n_sequences
    shifts = tuple(i * step for i in range(n_sequences))
    seqs = np.stack([np.roll(base, -s) for s in shifts])
    return PilotBook(sequences=seqs, bandwidth_hz=bandwidth_hz, root=root, shifts=shifts)


def blue_estimate(received, pilots: PilotBook, noise_var: float):
    """Per-satellite channel estimates from one non-precoded pilot slot.

    With orthogonal unit-modulus pilots the correlator h_n = <s_n, r>/L
    is the best linear unbiased estimator; the per-entry error variance
    is noise_var / L.  Returns (row estimate, error variance).
    """
    r = np.asarray(received, dtype=complex)
    if r.shape != (pilots.length,):
        raise ValueError(f"received slot must have length {pilots.length}")
    h_row = pilots.sequences.conj() @ r / pilots.length
    return h_row, float(noise_var) / pilots.length


@dataclass
class CsiSnapshot:
    """One (possibly averaged) channel estimate from a user terminal."""

    h_est: ChannelMatrix
    measurement_times: tuple
    n_averaged: int = 1
    ut_id: str = ""

    def __post_init__(self):
        self.measurement_times = tuple(float(t) for t in self.measurement_times)
        if self.n_averaged < 1:
            raise ValueError("n_averaged must be >= 1")
        if any(b < a for a, b in zip(self.measurement_times, self.measurement_times[1:])):
            raise ValueError("measurement_times must be nondecreasing")
        if self.h_est.source != "estimated":
            raise ValueError("snapshot channel source must be 'estimated'")

    @property
    def measurement_end(self) -> float:
        return self.measurement_times[-1]

    def to_json_dict(self) -> dict:
        return {
            "ut_id": self.ut_id,
            "n_averaged": self.n_averaged,
            "measurement_times": list(self.measurement_times),
            "h_est": self.h_est.to_json_dict(),
        }


def average_snapshots(snapshots) -> CsiSnapshot:
    """Entry-wise complex mean of equally shaped snapshots."""
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("cannot average an empty snapshot list")
    shape = snapshots[0].h_est.shape
    if any(s.h_est.shape != shape for s in snapshots):
        raise ValueError("snapshots must have equal shapes")
    mean = np.mean([s.h_est.entries for s in snapshots], axis=0)
    times = tuple(sorted(t for s in snapshots for t in s.measurement_times))
    return CsiSnapshot(
        h_est=ChannelMatrix(
            entries=mean,
            carrier_freq_hz=snapshots[0].h_est.carrier_freq_hz,
            timestamp_s=times[-1],
            source="estimated",
        ),
        measurement_times=times,
        n_averaged=sum(s.n_averaged for s in snapshots),
        ut_id=snapshots[0].ut_id,
    )


def feedback_link(snapshots, latency_s: float, update_period_s: float):
    """Delivery schedule: each snapshot arrives at measurement end + latency.

    Between deliveries the gateway holds the previous snapshot
    (zero-order hold, see CsiFeed).
    """
    if latency_s < 0:
        raise ValueError("latency must be >= 0")
    if update_period_s <= 0:
        raise ValueError("update period must be > 0")
    single = isinstance(snapshots, CsiSnapshot)
    items = [snapshots] if single else list(snapshots)
    schedule = [(s.measurement_end + latency_s, s) for s in items]
    schedule.sort(key=lambda pair: pair[0])
    return schedule


def snapshot_from_json_dict(d: dict) -> CsiSnapshot:
    return CsiSnapshot(
        h_est=ChannelMatrix.from_json_dict({**d["h_est"], "source": "estimated"}),
        measurement_times=tuple(d["measurement_times"]),
        n_averaged=d.get("n_averaged", 1),
        ut_id=d.get("ut_id", ""),
    )


def write_replay(path: str, snapshots) -> None:
    """Serialize delivered snapshots to a JSON replay file."""
    doc = {"snapshots": [s.to_json_dict() for s in snapshots]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_replay(path: str) -> list:
    """Load a replay file; the snapshots can drive the precoder directly."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [snapshot_from_json_dict(d) for d in doc["snapshots"]]


class CsiFeed:
    """Zero-order-hold view of delivered snapshots, per user terminal."""

    def __init__(self):
        self._delivered = {}

    def deliver(self, ut_index: int, time_s: float, snapshot: CsiSnapshot) -> None:
        self._delivered.setdefault(ut_index, []).append((time_s, snapshot))

    def latest(self, ut_index: int, now_s: float):
        """Most recent snapshot delivered at or before now, else None."""
        best = None
        for time_s, snap in self._delivered.get(ut_index, []):
            if time_s <= now_s and (best is None or time_s >= best[0]):
                best = (time_s, snap)
        return None if best is None else best[1]
