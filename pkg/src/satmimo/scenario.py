"""Scenario definition: geometry, carriers, motion, and derived kinematics.

Satellite motion is a parametric stand-in for ephemeris data: a
single-axis radial oscillation around the nominal geostationary radius
at fixed longitude, which reproduces the ~24 h sinusoidal Doppler
signature of station-kept spacecraft without external data files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import C0, EARTH_RADIUS_M, GEO_RADIUS_M
from .impairments import ImpairmentConfig


def geodetic_to_ecef(latitude_deg: float, longitude_deg: float, altitude_m: float = 0.0) -> np.ndarray:
    """Geodetic coordinates to ECEF on a spherical Earth [m]."""
    lat = math.radians(latitude_deg)
    lon = math.radians(longitude_deg)
    r = EARTH_RADIUS_M + altitude_m
    return np.array(
        [r * math.cos(lat) * math.cos(lon), r * math.cos(lat) * math.sin(lon), r * math.sin(lat)]
    )


@dataclass(frozen=True)
class GroundStation:
    id: str
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0
    role: str = "user-terminal"
    noise_variance: float = 1.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"{self.id}: latitude must be in [-90, 90]")
        if not -180.0 <= self.longitude_deg <= 180.0:
            raise ValueError(f"{self.id}: longitude must be in [-180, 180]")
        if self.role not in ("gateway", "user-terminal"):
            raise ValueError(f"{self.id}: role must be 'gateway' or 'user-terminal'")
        if self.noise_variance <= 0:
            raise ValueError(f"{self.id}: noise_variance must be > 0")

    def ecef(self) -> np.ndarray:
        return geodetic_to_ecef(self.latitude_deg, self.longitude_deg, self.altitude_m)


@dataclass(frozen=True)
class SatelliteMotion:
    id: str
    nominal_longitude_deg: float
    mean_radius_m: float = GEO_RADIUS_M
    radial_oscillation_amplitude_m: float = 0.0
    oscillation_period_s: float = 86400.0
    oscillation_phase_rad: float = 0.0

    def __post_init__(self):
        if self.mean_radius_m <= EARTH_RADIUS_M:
            raise ValueError(f"{self.id}: mean_radius_m must exceed the Earth radius")
        if self.oscillation_period_s <= 0:
            raise ValueError(f"{self.id}: oscillation_period_s must be > 0")
        if self.radial_oscillation_amplitude_m < 0:
            raise ValueError(f"{self.id}: amplitude must be >= 0")


@dataclass(frozen=True)
class CarrierPlan:
    uplink_freqs_hz: tuple
    downlink_freq_hz: float
    reference_tone_freqs_hz: tuple
    symbol_rate_baud: float = 1.25e6
    rolloff: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "uplink_freqs_hz", tuple(self.uplink_freqs_hz))
        object.__setattr__(self, "reference_tone_freqs_hz", tuple(self.reference_tone_freqs_hz))
        freqs = (*self.uplink_freqs_hz, self.downlink_freq_hz, *self.reference_tone_freqs_hz)
        if any(f <= 0 for f in freqs):
            raise ValueError("all carrier frequencies must be > 0")
        if len(set(self.uplink_freqs_hz)) != len(self.uplink_freqs_hz):
            raise ValueError("uplink frequencies must be pairwise distinct")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must be in [0, 1]")
        if self.symbol_rate_baud <= 0:
            raise ValueError("symbol_rate_baud must be > 0")


@dataclass(frozen=True)
class LinkConfig:
    """Receive-quality targets; CNRs are per user terminal, in listed order.

    ``cnr_db = None`` disables data-path noise injection entirely;
    ``sync_cnr_db = None`` does the same for the reference tones.
    """

    cnr_db: tuple | None = (16.5, 10.9)
    sync_cnr_db: float | None = 30.0
    reference_satellite: int = 0

    def __post_init__(self):
        if self.cnr_db is not None:
            object.__setattr__(self, "cnr_db", tuple(float(c) for c in self.cnr_db))


@dataclass(frozen=True)
class TimingConfig:
    """Engine rates and delays; all seconds unless suffixed otherwise."""

    rtt_s: float = 0.25
    propagation_s: float = 0.125
    csi_update_period_s: float = 5.0
    csi_latency_s: float = 0.1
    n_csi_average: int = 5
    sync_sample_rate_hz: float = 200e3
    sync_block_s: float = 0.01
    pilot_length: int = 2000
    metric_window_s: float = 0.01
    metric_period_s: float = 0.25
    warmup_s: float = 10.0
    pll_loop_bandwidth_hz: float = 7.0
    pll_damping: float = 0.707
    pll_acquisition_error_hz: float = 2.0

    def __post_init__(self):
        if self.rtt_s < 0 or self.propagation_s < 0 or self.csi_latency_s < 0:
            raise ValueError("delays must be >= 0")
        if self.csi_update_period_s <= 0:
            raise ValueError("csi_update_period_s must be > 0")
        if self.n_csi_average < 1:
            raise ValueError("n_csi_average must be >= 1")


@dataclass
class Scenario:
    stations: list
    satellites: list
    carriers: CarrierPlan
    impairments: ImpairmentConfig = field(default_factory=ImpairmentConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    duration_s: float = 120.0
    seed: int = 0
    name: str = "scenario"

    @property
    def gateway(self) -> GroundStation:
        return next(s for s in self.stations if s.role == "gateway")

    @property
    def user_terminals(self) -> list:
        return [s for s in self.stations if s.role == "user-terminal"]

    @property
    def n_satellites(self) -> int:
        return len(self.satellites)

    @property
    def n_users(self) -> int:
        return len(self.user_terminals)

    def validate(self, mimo: bool = True) -> list:
        """Collect all structural violations; empty list means valid."""
        errors = []
        gateways = [s for s in self.stations if s.role == "gateway"]
        uts = self.user_terminals
        if len(gateways) != 1:
            errors.append(f"exactly one gateway station required, found {len(gateways)}")
        if not uts:
            errors.append("at least one user terminal required")
        if not self.satellites:
            errors.append("at least one satellite required")
        if mimo and self.satellites and uts and len(uts) > len(self.satellites):
            errors.append(
                f"K <= N required for MIMO: {len(uts)} user terminals but "
                f"{len(self.satellites)} satellites"
            )
        if len(self.carriers.uplink_freqs_hz) != len(self.satellites):
            errors.append("one uplink frequency per satellite required")
        if len(self.carriers.reference_tone_freqs_hz) != len(self.satellites):
            errors.append("one reference tone frequency per satellite required")
        nyquist = self.timing.sync_sample_rate_hz / 2.0
        for f in self.carriers.reference_tone_freqs_hz:
            if f >= nyquist:
                errors.append(f"reference tone {f} Hz is not below sync Nyquist {nyquist} Hz")
        if self.impairments.converters and len(self.impairments.converters) != len(self.satellites):
            errors.append("impairments.converters must match the satellite count")
        if self.impairments.lnbs and len(self.impairments.lnbs) != len(uts):
            errors.append("impairments.lnbs must match the user-terminal count")
        if self.link.cnr_db is not None and len(self.link.cnr_db) != len(uts):
            errors.append("link.cnr_db must provide one CNR per user terminal")
        if self.duration_s <= 0:
            errors.append("duration_s must be > 0")
        ids = [s.id for s in self.stations] + [s.id for s in self.satellites]
        if len(set(ids)) != len(ids):
            errors.append("station and satellite ids must be unique")
        return errors


def satellite_radius(sat: SatelliteMotion, t):
    """Orbit radius [m] at time t: mean + A*sin(2*pi*t/T + phase)."""
    omega = 2.0 * np.pi / sat.oscillation_period_s
    return sat.mean_radius_m + sat.radial_oscillation_amplitude_m * np.sin(
        omega * np.asarray(t, dtype=float) + sat.oscillation_phase_rad
    )


def satellite_position(sat: SatelliteMotion, t):
    """ECEF position [m] at time t; equatorial, fixed nominal longitude.

    Returns shape (3,) for scalar t and (3, len(t)) for array t.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    r = satellite_radius(sat, t)
    lon = math.radians(sat.nominal_longitude_deg)
    return np.stack([r * math.cos(lon), r * math.sin(lon), np.zeros_like(r)], axis=0)


def slant_range(station: GroundStation, sat: SatelliteMotion, t):
    """Euclidean station-to-satellite distance [m] at time t."""
    t = np.asarray(t, dtype=float)
    p_st = station.ecef()
    pos = satellite_position(sat, t)
    if t.ndim:
        d = np.linalg.norm(pos - p_st[:, None], axis=0)
    else:
        d = float(np.linalg.norm(pos - p_st))
    return d


def radial_velocity(station: GroundStation, sat: SatelliteMotion, t):
    """Time derivative of slant range [m/s]; positive means receding.

    Analytic: the satellite velocity is purely radial (r_hat * dr/dt), so
    d|p_sat - p_st|/dt = (p_sat - p_st) . v_sat / |p_sat - p_st|.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    omega = 2.0 * np.pi / sat.oscillation_period_s
    rdot = sat.radial_oscillation_amplitude_m * omega * np.cos(
        omega * t + sat.oscillation_phase_rad
    )
    lon = math.radians(sat.nominal_longitude_deg)
    r_hat = np.array([math.cos(lon), math.sin(lon), 0.0])
    p_st = station.ecef()
    pos = satellite_position(sat, t)
    if t.ndim:
        delta = pos - p_st[:, None]
        d = np.linalg.norm(delta, axis=0)
        v = (delta * (r_hat[:, None] * rdot)).sum(axis=0) / d
    else:
        delta = pos - p_st
        v = float(np.dot(delta, r_hat) * rdot / np.linalg.norm(delta))
    return v


def doppler_offset(f: float, v):
    """Relativistic Doppler frequency offset [Hz] from nominal.

    v is the range rate (positive = receding).  Returns
    f * (sqrt((c - v)/(c + v)) - 1), i.e. the offset, which for |v| << c
    equals -f*v/c to first order.
    """
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(v) >= C0):
        raise ValueError("|v| must be below the speed of light")
    # expm1/log1p form of sqrt((c-v)/(c+v)) - 1; plain evaluation loses
    # ~6 digits to cancellation at m/s velocities
    out = f * np.expm1(0.5 * np.log1p(-2.0 * v / (C0 + v)))
    return out if out.ndim else float(out)


def chain_doppler(scenario: Scenario, sat_index: int, t, station: GroundStation | None = None):
    """Total uplink+downlink Doppler offset [Hz] for one satellite chain.

    The relaying payload shifts the carrier at f_up + f_down; the range
    rate is taken towards ``station`` (default: the gateway, which is
    what the reference-tone loop observes).
    """
    if station is None:
        station = scenario.gateway
    f_chain = scenario.carriers.uplink_freqs_hz[sat_index] + scenario.carriers.downlink_freq_hz
    v = radial_velocity(station, scenario.satellites[sat_index], t)
    return doppler_offset(f_chain, v)
