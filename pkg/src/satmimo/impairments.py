"""Oscillator trajectories and the diagonal offset matrices T(t) and R(t).

Each conversion chain (satellite converter, user-terminal LNB, gateway
up/down converter) is modeled as a deterministic frequency law (static
offset + linear drift) plus two Wiener processes: a random walk on the
frequency and Brownian phase noise.  The composite accumulated phase is

    phi(t) = 2*pi * integral_0^t f(tau) dtau  +  phase noise(t)

which is the well-defined replacement for writing exp(-j*2*pi*f(t)*t)
with a time-varying f.  Wiener components live on a fixed 1 ms internal
grid and are linearly interpolated between grid points, decoupling the
statistical processes from caller sample rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Internal sampling grid for the Wiener components [s]
WIENER_GRID_STEP_S = 1e-3

# Grid points generated per extension chunk; value only affects caching
_CHUNK = 32768


class NonUniformGridError(ValueError):
    """Raised when a phase-sampling grid is not uniformly spaced."""


@dataclass
class OscillatorTrajectory:
    """Frequency-offset and phase-noise state for one conversion chain.

    ``random_walk_coeff`` is the Wiener frequency-noise intensity in
    Hz^2/s; ``phase_noise_linewidth_hz`` parameterizes Brownian phase
    noise with increment variance 2*pi*linewidth*dt.  Realizations are
    deterministic given ``seed``.
    """

    static_offset_hz: float = 0.0
    drift_rate_hz_per_s: float = 0.0
    random_walk_coeff: float = 0.0
    phase_noise_linewidth_hz: float = 0.0
    seed: int | tuple = 0

    def __post_init__(self):
        if self.random_walk_coeff < 0:
            raise ValueError("random_walk_coeff must be >= 0")
        if self.phase_noise_linewidth_hz < 0:
            raise ValueError("phase_noise_linewidth_hz must be >= 0")
        # Wiener grid caches: values at t = k * WIENER_GRID_STEP_S
        self._freq_walk = np.zeros(1)     # Wiener frequency noise [Hz]
        self._phase_walk = np.zeros(1)    # Wiener phase noise [rad]
        self._freq_integral = np.zeros(1) # cumulative trapezoid of _freq_walk [Hz*s]

    def _extend_grid(self, t_max: float) -> None:
        needed = int(np.ceil(t_max / WIENER_GRID_STEP_S)) + 2
        while len(self._freq_walk) < needed:
            chunk_index = (len(self._freq_walk) - 1) // _CHUNK
            rng = np.random.default_rng(
                np.random.SeedSequence((_entropy(self.seed), chunk_index))
            )
            dt = WIENER_GRID_STEP_S
            df = rng.standard_normal(_CHUNK) * np.sqrt(self.random_walk_coeff * dt)
            dp = rng.standard_normal(_CHUNK) * np.sqrt(
                2.0 * np.pi * self.phase_noise_linewidth_hz * dt
            )
            f_new = self._freq_walk[-1] + np.cumsum(df)
            p_new = self._phase_walk[-1] + np.cumsum(dp)
            # trapezoidal integral of the piecewise-linear frequency walk
            mids = 0.5 * (np.concatenate(([self._freq_walk[-1]], f_new[:-1])) + f_new)
            i_new = self._freq_integral[-1] + np.cumsum(mids) * dt
            self._freq_walk = np.concatenate((self._freq_walk, f_new))
            self._phase_walk = np.concatenate((self._phase_walk, p_new))
            self._freq_integral = np.concatenate((self._freq_integral, i_new))

    def _grid_times(self) -> np.ndarray:
        return np.arange(len(self._freq_walk)) * WIENER_GRID_STEP_S

    def offset_at(self, t):
        """Instantaneous frequency offset [Hz] at time(s) t >= 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be >= 0")
        out = self.static_offset_hz + self.drift_rate_hz_per_s * t
        if self.random_walk_coeff > 0:
            self._extend_grid(float(np.max(t)))
            out = out + np.interp(t, self._grid_times(), self._freq_walk)
        return out if out.ndim else float(out)

    def phase_at(self, t):
        """Accumulated phase [rad] from time 0 up to time(s) t.

        2*pi * (static*t + drift*t^2/2 + integral of frequency walk)
        plus the Brownian phase-noise sample.  Additive over contiguous
        segments by construction.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be >= 0")
        cycles = self.static_offset_hz * t + 0.5 * self.drift_rate_hz_per_s * t**2
        noise = 0.0
        if self.random_walk_coeff > 0 or self.phase_noise_linewidth_hz > 0:
            self._extend_grid(float(np.max(t)))
            grid = self._grid_times()
            if self.random_walk_coeff > 0:
                # exact integral of the piecewise-linear frequency walk
                idx = np.minimum(
                    np.searchsorted(grid, t, side="right") - 1, len(grid) - 2
                )
                frac = t - grid[idx]
                f_lo = self._freq_walk[idx]
                f_at = np.interp(t, grid, self._freq_walk)
                cycles = cycles + self._freq_integral[idx] + 0.5 * (f_lo + f_at) * frac
            if self.phase_noise_linewidth_hz > 0:
                noise = np.interp(t, grid, self._phase_walk)
        out = 2.0 * np.pi * cycles + noise
        return out if out.ndim else float(out)


def _entropy(seed) -> int:
    """Collapse an int or tuple seed into one integer entropy word."""
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    ss = np.random.SeedSequence(tuple(int(s) for s in seed))
    return int(ss.generate_state(1, np.uint64)[0])


def instantaneous_offset(traj: OscillatorTrajectory, t) -> float:
    """Frequency offset [Hz] of a chain at time t; deterministic per seed."""
    return traj.offset_at(t)


def phase_sample(traj: OscillatorTrajectory, t_grid) -> np.ndarray:
    """Accumulated phase [rad] on a uniform, increasing sample grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1:
        raise ValueError("t_grid must be a 1-D array")
    if len(t_grid) > 2:
        steps = np.diff(t_grid)
        if steps[0] <= 0 or np.any(np.abs(steps - steps[0]) > 1e-9 * abs(steps[0])):
            raise NonUniformGridError("t_grid must be uniform and increasing")
    elif len(t_grid) == 2 and t_grid[1] <= t_grid[0]:
        raise NonUniformGridError("t_grid must be increasing")
    return np.atleast_1d(traj.phase_at(t_grid))


@dataclass
class OscillatorParams:
    """Scenario-file parameters for one oscillator chain."""

    static_offset_hz: float = 0.0
    drift_rate_hz_per_s: float = 0.0
    random_walk_coeff: float = 0.0
    phase_noise_linewidth_hz: float = 0.0


@dataclass
class ImpairmentConfig:
    """Per-chain oscillator parameters for a scenario.

    ``converters`` has one entry per satellite, ``lnbs`` one per user
    terminal.  The gateway's up/downconverter contributes phase noise
    only (it is locked to the station reference clock).
    """

    converters: list[OscillatorParams] = field(default_factory=list)
    lnbs: list[OscillatorParams] = field(default_factory=list)
    gateway_phase_noise_linewidth_hz: float = 0.0


# Seed-derivation domains; stable across runs for a given scenario seed
_DOMAIN_CONVERTER = 1
_DOMAIN_LNB = 2
_DOMAIN_GATEWAY = 3


@dataclass
class ImpairmentState:
    """Realized oscillator trajectories plus Doppler phase integrators."""

    converters: list[OscillatorTrajectory]
    lnbs: list[OscillatorTrajectory]
    gateway: OscillatorTrajectory
    _dop_time: list = field(default_factory=list)
    _dop_freq: list = field(default_factory=list)
    _dop_phase: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.converters)
        if not self._dop_time:
            self._dop_time = [0.0] * n
            self._dop_freq = [None] * n
            self._dop_phase = [0.0] * n

    @classmethod
    def from_config(cls, config: ImpairmentConfig, seed: int) -> "ImpairmentState":
        def mk(params: OscillatorParams, domain: int, index: int):
            return OscillatorTrajectory(
                static_offset_hz=params.static_offset_hz,
                drift_rate_hz_per_s=params.drift_rate_hz_per_s,
                random_walk_coeff=params.random_walk_coeff,
                phase_noise_linewidth_hz=params.phase_noise_linewidth_hz,
                seed=(seed, domain, index),
            )

        return cls(
            converters=[mk(p, _DOMAIN_CONVERTER, i) for i, p in enumerate(config.converters)],
            lnbs=[mk(p, _DOMAIN_LNB, i) for i, p in enumerate(config.lnbs)],
            gateway=OscillatorTrajectory(
                phase_noise_linewidth_hz=config.gateway_phase_noise_linewidth_hz,
                seed=(seed, _DOMAIN_GATEWAY, 0),
            ),
        )

    def doppler_phase(self, sat_index: int, doppler_hz: float, t: float) -> float:
        """Advance the per-satellite Doppler integrator to time t [rad].

        Trapezoidal accumulation of 2*pi*doppler over the calls made so
        far; calls must not go backwards in time (single writer).
        """
        t_prev = self._dop_time[sat_index]
        if t < t_prev - 1e-12:
            raise ValueError("doppler integration time must be nondecreasing")
        f_prev = self._dop_freq[sat_index]
        if f_prev is None:
            f_prev = doppler_hz
        if t > t_prev:
            self._dop_phase[sat_index] += np.pi * (f_prev + doppler_hz) * (t - t_prev)
            self._dop_time[sat_index] = t
        self._dop_freq[sat_index] = doppler_hz
        return self._dop_phase[sat_index]


def build_T(state: ImpairmentState, doppler_hz, t: float) -> np.ndarray:
    """Diagonal satellite-chain matrix T(t), unit modulus by construction.

    Entry n is exp(-j*phi_n) with phi_n the accumulated phase from
    Doppler (integrated trapezoidally over the call history), converter
    offset and converter phase noise.
    """
    doppler_hz = np.atleast_1d(np.asarray(doppler_hz, dtype=float))
    n = len(state.converters)
    if len(doppler_hz) != n:
        raise ValueError(f"expected {n} doppler entries, got {len(doppler_hz)}")
    phases = np.array(
        [
            state.doppler_phase(i, doppler_hz[i], t) + state.converters[i].phase_at(t)
            for i in range(n)
        ]
    )
    return np.diag(np.exp(-1j * phases))


def build_R(state: ImpairmentState, t: float) -> np.ndarray:
    """Diagonal receiver-side LNB matrix R(t), unit modulus by construction."""
    phases = np.array([traj.phase_at(t) for traj in state.lnbs])
    return np.diag(np.exp(-1j * phases))
