"""Reference tones, ADPLL tracking, precompensation, and residual phase.

The ADPLL is a second-order type-II loop: an atan2 phase detector, a
proportional-integral correction, and an NCO.  Loop gains follow from
(loop bandwidth, damping, sample rate) via the standard noise-bandwidth
relation.  Because a 7 Hz loop pulls a 100 Hz initial offset in far too
slowly (the type-II pull-in rate at that bandwidth is a few Hz/s), the
loop starts at a wider acquisition bandwidth and narrows to the target
bandwidth once the lock detector trips; the integrator carries over, so
the hand-off is transient-free.

The residual-phase metric asks: had a signal observed now been
precompensated with the loop state from tau seconds ago, what phase
error would remain?  The compensation phase is the loop's replica
extrapolated forward by tau at its estimated frequency, which is what a
free-running compensation NCO does between updates.  Gateway converter
phase noise enters both satellite references identically and cancels in
the pairwise product exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

# Lock detector: exponentially averaged |phase error| below the threshold
# for the dwell time.
LOCK_THRESHOLD_RAD = 0.1
LOCK_DWELL_S = 0.5
LOCK_EMA_TIME_CONST_S = 0.1

# Acquisition bandwidth multiplier applied until first lock
ACQUISITION_BW_MULT = 10.0

# Histogram export granularity for residual-phase statistics [deg]
RESIDUAL_HIST_BIN_DEG = 0.546
RESIDUAL_HIST_RANGE_DEG = 30.0


class AliasingError(ValueError):
    """Requested tone frequency is not below the Nyquist rate."""


class PllUnlockedError(RuntimeError):
    """Operation requires a locked loop."""


@dataclass
class IqBuffer:
    """Uniformly sampled complex baseband segment."""

    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)

    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(len(self.samples)) / self.sample_rate_hz


def generate_reference_tone(f_ref_hz: float, t_grid) -> IqBuffer:
    """Unit-amplitude complex exponential exp(j 2 pi f t) on the grid.

    Phase is referenced to t = 0, so consecutive segments of one
    absolute time axis are phase-continuous.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) > 1:
        fs = 1.0 / (t_grid[1] - t_grid[0])
        if abs(f_ref_hz) >= fs / 2.0:
            raise AliasingError(f"tone at {f_ref_hz} Hz aliases at fs={fs} Hz")
    else:
        fs = 0.0
    samples = np.exp(2j * np.pi * f_ref_hz * t_grid)
    return IqBuffer(samples=samples, sample_rate_hz=fs, start_time_s=float(t_grid[0]))


@dataclass
class AdpllConfig:
    sample_rate_hz: float
    loop_bandwidth_hz: float = 7.0
    damping: float = 0.707
    nco_initial_freq_hz: float = 0.0
    acquisition_bandwidth_hz: float | None = None

    def __post_init__(self):
        if self.loop_bandwidth_hz <= 0 or self.loop_bandwidth_hz > self.sample_rate_hz / 10.0:
            raise ValueError("need 0 < loop_bandwidth << sample_rate/10")
        if self.damping <= 0:
            raise ValueError("damping must be > 0")
        if self.acquisition_bandwidth_hz is None:
            self.acquisition_bandwidth_hz = min(
                ACQUISITION_BW_MULT * self.loop_bandwidth_hz, self.sample_rate_hz / 20.0
            )

    def gains(self, bandwidth_hz: float):
        """(kp, ki) in rad/sample for a one-sided noise bandwidth."""
        wn = 2.0 * bandwidth_hz / (self.damping + 1.0 / (4.0 * self.damping))
        kp = 2.0 * self.damping * wn / self.sample_rate_hz
        ki = (wn / self.sample_rate_hz) ** 2
        return kp, ki


@dataclass
class AdpllState:
    config: AdpllConfig
    nco_phase: float = 0.0
    integrator: float = 0.0  # rad/sample frequency correction
    err_ema: float = float(np.pi)
    below_count: int = 0
    narrowed: bool = False
    sample_index: int = 0

    @property
    def nco_freq_hz(self) -> float:
        w0 = 2.0 * np.pi * self.config.nco_initial_freq_hz / self.config.sample_rate_hz
        return (w0 + self.integrator) * self.config.sample_rate_hz / (2.0 * np.pi)

    @property
    def locked(self) -> bool:
        return self.below_count >= int(LOCK_DWELL_S * self.config.sample_rate_hz)

    @property
    def lock_confidence(self) -> float:
        """1 when the error average sits well under the lock threshold."""
        return float(np.clip(1.0 - self.err_ema / LOCK_THRESHOLD_RAD, 0.0, 1.0))


def _adpll_core(x, out, freq_hz, th, w0, integ, kp, ki, kp_t, ki_t,
                narrowed, err_ema, below, ema_alpha, thresh, dwell, fs):
    two_pi = 2.0 * math.pi
    for i in range(x.shape[0]):
        c = math.cos(th)
        s = math.sin(th)
        out[i] = complex(c, s)
        xr = x[i].real
        xi = x[i].imag
        pr = xr * c + xi * s
        pim = xi * c - xr * s
        e = math.atan2(pim, pr)
        integ += ki * e
        th += w0 + integ + kp * e
        th = (th + math.pi) % two_pi - math.pi
        err_ema += ema_alpha * (abs(e) - err_ema)
        if err_ema < thresh:
            below += 1
        else:
            below = 0
        if narrowed == 0 and below >= dwell:
            kp = kp_t
            ki = ki_t
            narrowed = 1
        freq_hz[i] = (w0 + integ) * fs / two_pi
    return th, integ, kp, ki, narrowed, err_ema, below


if njit is not None:
    _adpll_core_jit = njit(cache=True)(_adpll_core)
else:  # pragma: no cover
    _adpll_core_jit = _adpll_core


def adpll_process(state: AdpllState, samples) -> tuple:
    """Track a block of samples; returns (nco outputs, freq estimates [Hz]).

    The state is advanced in place and returned NCO samples are the
    unit-modulus replicas used by the phase detector at each step.
    """
    x = np.ascontiguousarray(np.asarray(samples, dtype=np.complex128))
    out = np.empty(len(x), dtype=np.complex128)
    freq = np.empty(len(x), dtype=np.float64)
    cfg = state.config
    fs = cfg.sample_rate_hz
    kp_t, ki_t = cfg.gains(cfg.loop_bandwidth_hz)
    if state.narrowed:
        kp, ki = kp_t, ki_t
    else:
        kp, ki = cfg.gains(cfg.acquisition_bandwidth_hz)
    w0 = 2.0 * np.pi * cfg.nco_initial_freq_hz / fs
    th, integ, kp, ki, narrowed, ema, below = _adpll_core_jit(
        x, out, freq,
        state.nco_phase, w0, state.integrator, kp, ki, kp_t, ki_t,
        1 if state.narrowed else 0, state.err_ema, state.below_count,
        1.0 / (LOCK_EMA_TIME_CONST_S * fs), LOCK_THRESHOLD_RAD,
        int(LOCK_DWELL_S * fs), fs,
    )
    state.nco_phase = th
    state.integrator = integ
    state.narrowed = bool(narrowed)
    state.err_ema = ema
    state.below_count = below
    state.sample_index += len(x)
    return out, freq


def adpll_step(state: AdpllState, sample: complex) -> tuple:
    """Single-sample loop update; returns (state, output sample)."""
    out, _ = adpll_process(state, np.array([sample], dtype=complex))
    return state, complex(out[0])


def precompensation_entry(pll_output: complex, f_ref_hz: float, t: float,
                          locked: bool = True) -> complex:
    """One diagonal entry of the transmit precompensation matrix.

    Removes the known reference-tone rotation from the loop replica and
    conjugates, leaving the counter-rotation of the estimated chain
    offset.  Unit modulus by construction.
    """
    if not locked:
        raise PllUnlockedError("precompensation requires a locked loop")
    return complex(np.exp(2j * np.pi * f_ref_hz * t) * np.conj(pll_output))


def phase_error_from_freq_error(df_hz: float, tau_s: float) -> float:
    """Phase error [deg] accumulated by a frequency error over a staleness tau."""
    return 360.0 * df_hz * tau_s


@dataclass
class PllTrace:
    """Loop replica and frequency-estimate series for one satellite tone."""

    output: np.ndarray
    freq_hz: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0
    f_ref_hz: float = 0.0

    def __post_init__(self):
        self.output = np.asarray(self.output, dtype=complex)
        self.freq_hz = np.asarray(self.freq_hz, dtype=float)
        if self.output.shape != self.freq_hz.shape:
            raise ValueError("output and freq_hz must have equal length")


def compensation_series(trace: PllTrace, tau_s: float) -> np.ndarray:
    """Replica extrapolated forward by tau at the estimated frequency."""
    return trace.output * np.exp(2j * np.pi * trace.freq_hz * tau_s)


def residual_samples_deg(comp_a, ref_a, comp_b, ref_b) -> np.ndarray:
    """Pairwise residual phase [deg] of two precompensated reference paths.

    All arrays must already be time-aligned: compensation values built
    from loop state tau seconds older than the reference samples.
    """
    delta_a = comp_a * np.conj(ref_a)
    delta_b = comp_b * np.conj(ref_b)
    return np.degrees(np.angle(delta_a * np.conj(delta_b)))


@dataclass
class ResidualPhaseStats:
    """Summary of a residual-phase series; samples_deg may be decimated."""

    n: int
    mean_deg: float
    std_deg: float
    skewness: float
    excess_kurtosis: float
    jarque_bera: float
    n_decimated: int
    hist_edges_deg: np.ndarray
    hist_probs: np.ndarray
    samples_deg: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_deg": self.mean_deg,
            "std_deg": self.std_deg,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "jarque_bera": self.jarque_bera,
            "n_decimated": self.n_decimated,
        }


class ResidualPhaseAccumulator:
    """Streaming moments, histogram, and decimated series of residual phase."""

    def __init__(self, bin_width_deg: float = RESIDUAL_HIST_BIN_DEG,
                 range_deg: float = RESIDUAL_HIST_RANGE_DEG, decimate_stride: int = 1):
        n_bins = int(np.ceil(2.0 * range_deg / bin_width_deg))
        self.edges = -range_deg + bin_width_deg * np.arange(n_bins + 1)
        self.counts = np.zeros(n_bins, dtype=np.int64)
        self.stride = max(1, int(decimate_stride))
        self._n = 0
        self._sums = np.zeros(4)
        self._decimated = []
        self._next_pick = 0

    def add(self, samples_deg) -> None:
        x = np.asarray(samples_deg, dtype=float).ravel()
        if x.size == 0:
            return
        first = self._next_pick - self._n
        if first < x.size:
            self._decimated.append(x[first::self.stride].copy())
            picked = len(self._decimated[-1])
            self._next_pick += picked * self.stride
        self._n += x.size
        for p in range(4):
            self._sums[p] += np.sum(x ** (p + 1))
        clipped = np.clip(x, self.edges[0], self.edges[-1] - 1e-12)
        idx = np.minimum(
            ((clipped - self.edges[0]) / (self.edges[1] - self.edges[0])).astype(int),
            len(self.counts) - 1,
        )
        np.add.at(self.counts, idx, 1)

    def finalize(self) -> ResidualPhaseStats:
        if self._n == 0:
            raise ValueError("no residual samples accumulated")
        n = self._n
        mean = self._sums[0] / n
        m2 = self._sums[1] / n - mean**2
        m3 = self._sums[2] / n - 3 * mean * self._sums[1] / n + 2 * mean**3
        m4 = (
            self._sums[3] / n
            - 4 * mean * self._sums[2] / n
            + 6 * mean**2 * self._sums[1] / n
            - 3 * mean**4
        )
        std = math.sqrt(max(m2, 0.0))
        skew = m3 / std**3 if std > 0 else 0.0
        exkurt = m4 / std**4 - 3.0 if std > 0 else 0.0
        dec = np.concatenate(self._decimated) if self._decimated else np.array([])
        jb = _jarque_bera(dec)
        return ResidualPhaseStats(
            n=n,
            mean_deg=float(mean),
            std_deg=float(std),
            skewness=float(skew),
            excess_kurtosis=float(exkurt),
            jarque_bera=float(jb),
            n_decimated=len(dec),
            hist_edges_deg=self.edges.copy(),
            hist_probs=self.counts / n,
            samples_deg=dec,
        )


def _jarque_bera(samples: np.ndarray) -> float:
    """JB statistic on (roughly independent) samples; chi2(2) under normality."""
    n = len(samples)
    if n < 8:
        return float("nan")
    mean = samples.mean()
    m2 = np.mean((samples - mean) ** 2)
    if m2 == 0:
        return 0.0
    skew = np.mean((samples - mean) ** 3) / m2**1.5
    kurt = np.mean((samples - mean) ** 4) / m2**2
    return n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)


def residual_phase(pll_traces, references, tau_s: float,
                   decimate_stride: int = 1) -> ResidualPhaseStats:
    """Residual phase statistics for a pair of tracked reference tones.

    ``pll_traces`` are PllTrace objects and ``references`` the received
    tone series (IqBuffer or arrays) on the same sample grid.  tau must
    be a nonnegative integer number of samples and shorter than the
    series.  The result is frame-invariant: rotating a trace/reference
    pair into any common frequency frame leaves the statistic unchanged.
    """
    if len(pll_traces) != 2 or len(references) != 2:
        raise ValueError("residual phase is defined for exactly two satellite paths")
    refs = [r.samples if isinstance(r, IqBuffer) else np.asarray(r, dtype=complex)
            for r in references]
    fs = pll_traces[0].sample_rate_hz
    if pll_traces[1].sample_rate_hz != fs:
        raise ValueError("traces must share one sample rate")
    lengths = {len(t.output) for t in pll_traces} | {len(r) for r in refs}
    if len(lengths) != 1:
        raise ValueError("series lengths differ")
    n = lengths.pop()
    if tau_s < 0:
        raise ValueError("tau must be >= 0")
    m_float = tau_s * fs
    m = int(round(m_float))
    if abs(m_float - m) > 1e-6:
        raise ValueError("tau must be an integer number of samples")
    if m >= n:
        raise ValueError("tau exceeds the series duration")
    comp = [compensation_series(t, tau_s) for t in pll_traces]
    sl_new = slice(m, n)
    sl_old = slice(0, n - m)
    deg = residual_samples_deg(
        comp[0][sl_old], refs[0][sl_new], comp[1][sl_old], refs[1][sl_new]
    )
    acc = ResidualPhaseAccumulator(decimate_stride=decimate_stride)
    acc.add(deg)
    return acc.finalize()
