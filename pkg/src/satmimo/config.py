"""Scenario file parsing, validation, canonical emission, and presets.

Scenario files are YAML with one section per component.  Numeric fields
are coerced with float()/int() so exponent spellings like ``13.0e9``
work regardless of the YAML 1.1 resolver quirks.  Parsing collects all
violations and reports them together instead of stopping at the first.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources

import yaml

from .impairments import ImpairmentConfig, OscillatorParams
from .scenario import (
    CarrierPlan,
    GroundStation,
    LinkConfig,
    SatelliteMotion,
    Scenario,
    TimingConfig,
)

PRESET_NAMES = ("paper-trial", "ideal", "stress")


class ScenarioValidationError(ValueError):
    """Carries every violation found while parsing a scenario."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_SENTINEL = object()


def _get(section: dict, key: str, kind, errors: list, path: str, default=_SENTINEL):
    if key not in section:
        if default is _SENTINEL:
            errors.append(f"{path}.{key}: missing required key")
            return None
        return default
    value = section[key]
    try:
        if kind is float:
            return float(value)
        if kind is int:
            out = int(value)
            if out != float(value):
                raise ValueError
            return out
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        errors.append(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
        return None
    return value


def _float_list(section: dict, key: str, errors: list, path: str, default=None):
    value = section.get(key, default)
    if value is None:
        return default
    if not isinstance(value, (list, tuple)):
        errors.append(f"{path}.{key}: expected a list")
        return default
    out = []
    for i, v in enumerate(value):
        try:
            out.append(float(v))
        except (TypeError, ValueError):
            errors.append(f"{path}.{key}[{i}]: expected number, got {v!r}")
    return tuple(out)


def parse_scenario_dict(data: dict) -> Scenario:
    """Build and validate a Scenario from a plain dict; raises with all errors."""
    errors: list = []
    if not isinstance(data, dict) or not data:
        raise ScenarioValidationError(
            ["scenario file is empty or not a mapping; required sections: "
             "stations, satellites, carriers (optional: impairments, link, "
             "timing, duration_s, seed, name)"]
        )

    stations = []
    for i, item in enumerate(data.get("stations", []) or []):
        path = f"stations[{i}]"
        kwargs = {
            "id": _get(item, "id", str, errors, path),
            "latitude_deg": _get(item, "latitude_deg", float, errors, path),
            "longitude_deg": _get(item, "longitude_deg", float, errors, path),
            "altitude_m": _get(item, "altitude_m", float, errors, path, 0.0),
            "role": _get(item, "role", str, errors, path, "user-terminal"),
            "noise_variance": _get(item, "noise_variance", float, errors, path, 1.0),
        }
        if all(v is not None for v in kwargs.values()):
            try:
                stations.append(GroundStation(**kwargs))
            except ValueError as exc:
                errors.append(f"{path}: {exc}")
    if "stations" not in data:
        errors.append("stations: missing required section")

    satellites = []
    for i, item in enumerate(data.get("satellites", []) or []):
        path = f"satellites[{i}]"
        kwargs = {
            "id": _get(item, "id", str, errors, path),
            "nominal_longitude_deg": _get(item, "nominal_longitude_deg", float, errors, path),
            "mean_radius_m": _get(item, "mean_radius_m", float, errors, path, 42164000.0),
            "radial_oscillation_amplitude_m": _get(
                item, "radial_oscillation_amplitude_m", float, errors, path, 0.0),
            "oscillation_period_s": _get(item, "oscillation_period_s", float, errors, path, 86400.0),
            "oscillation_phase_rad": _get(item, "oscillation_phase_rad", float, errors, path, 0.0),
        }
        if all(v is not None for v in kwargs.values()):
            try:
                satellites.append(SatelliteMotion(**kwargs))
            except ValueError as exc:
                errors.append(f"{path}: {exc}")
    if "satellites" not in data:
        errors.append("satellites: missing required section")

    carriers = None
    if "carriers" in data:
        c = data["carriers"] or {}
        kwargs = {
            "uplink_freqs_hz": _float_list(c, "uplink_freqs_hz", errors, "carriers", ()),
            "downlink_freq_hz": _get(c, "downlink_freq_hz", float, errors, "carriers"),
            "reference_tone_freqs_hz": _float_list(
                c, "reference_tone_freqs_hz", errors, "carriers", ()),
            "symbol_rate_baud": _get(c, "symbol_rate_baud", float, errors, "carriers", 1.25e6),
            "rolloff": _get(c, "rolloff", float, errors, "carriers", 0.2),
        }
        if all(v is not None for v in kwargs.values()):
            try:
                carriers = CarrierPlan(**kwargs)
            except ValueError as exc:
                errors.append(f"carriers: {exc}")
    else:
        errors.append("carriers: missing required section")

    impairments = ImpairmentConfig()
    if "impairments" in data:
        imp = data["impairments"] or {}

        def osc_list(key: str) -> list:
            out = []
            for i, item in enumerate(imp.get(key, []) or []):
                path = f"impairments.{key}[{i}]"
                kwargs = {
                    "static_offset_hz": _get(item, "static_offset_hz", float, errors, path, 0.0),
                    "drift_rate_hz_per_s": _get(
                        item, "drift_rate_hz_per_s", float, errors, path, 0.0),
                    "random_walk_coeff": _get(
                        item, "random_walk_coeff", float, errors, path, 0.0),
                    "phase_noise_linewidth_hz": _get(
                        item, "phase_noise_linewidth_hz", float, errors, path, 0.0),
                }
                if all(v is not None for v in kwargs.values()):
                    out.append(OscillatorParams(**kwargs))
            return out

        impairments = ImpairmentConfig(
            converters=osc_list("converters"),
            lnbs=osc_list("lnbs"),
            gateway_phase_noise_linewidth_hz=_get(
                imp, "gateway_phase_noise_linewidth_hz", float, errors, "impairments", 0.0),
        )

    link = LinkConfig()
    if "link" in data:
        li = data["link"] or {}
        cnr = None
        if li.get("cnr_db") is not None:
            cnr = _float_list(li, "cnr_db", errors, "link")
        sync_cnr = li.get("sync_cnr_db", 30.0)
        if sync_cnr is not None:
            sync_cnr = _get(li, "sync_cnr_db", float, errors, "link", 30.0)
        ref_sat = _get(li, "reference_satellite", int, errors, "link", 0)
        if ref_sat is not None:
            link = LinkConfig(cnr_db=cnr, sync_cnr_db=sync_cnr, reference_satellite=ref_sat)

    timing = TimingConfig()
    if "timing" in data:
        ti = data["timing"] or {}
        fields = {
            "rtt_s": float, "propagation_s": float, "csi_update_period_s": float,
            "csi_latency_s": float, "n_csi_average": int, "sync_sample_rate_hz": float,
            "sync_block_s": float, "pilot_length": int, "metric_window_s": float,
            "metric_period_s": float, "warmup_s": float, "pll_loop_bandwidth_hz": float,
            "pll_damping": float, "pll_acquisition_error_hz": float,
        }
        kwargs = {}
        for key, kind in fields.items():
            if key in ti:
                value = _get(ti, key, kind, errors, "timing")
                if value is not None:
                    kwargs[key] = value
        unknown = set(ti) - set(fields)
        for key in sorted(unknown):
            errors.append(f"timing.{key}: unknown key")
        try:
            timing = TimingConfig(**kwargs)
        except ValueError as exc:
            errors.append(f"timing: {exc}")

    duration = _get(data, "duration_s", float, errors, "scenario", 120.0)
    seed = _get(data, "seed", int, errors, "scenario", 0)
    name = _get(data, "name", str, errors, "scenario", "scenario")

    if errors:
        raise ScenarioValidationError(errors)

    scenario = Scenario(
        stations=stations, satellites=satellites, carriers=carriers,
        impairments=impairments, link=link, timing=timing,
        duration_s=duration, seed=seed, name=name,
    )
    structural = scenario.validate(mimo=True)
    if structural:
        raise ScenarioValidationError(structural)
    return scenario


def parse_scenario(path_or_preset: str) -> Scenario:
    """Load a scenario from a YAML file path or a bundled preset name."""
    if str(path_or_preset) in PRESET_NAMES:
        return load_preset(str(path_or_preset))
    with open(path_or_preset, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return parse_scenario_dict(data)


def load_preset(name: str) -> Scenario:
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    text = resources.files("satmimo").joinpath(f"presets/{name}.yaml").read_text()
    return parse_scenario_dict(yaml.safe_load(text))


def emit_scenario(scenario: Scenario) -> dict:
    """Canonical plain-dict form; parse(emit(s)) == s for valid scenarios."""
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "duration_s": scenario.duration_s,
        "stations": [
            {
                "id": s.id, "latitude_deg": s.latitude_deg, "longitude_deg": s.longitude_deg,
                "altitude_m": s.altitude_m, "role": s.role, "noise_variance": s.noise_variance,
            }
            for s in scenario.stations
        ],
        "satellites": [
            {
                "id": s.id, "nominal_longitude_deg": s.nominal_longitude_deg,
                "mean_radius_m": s.mean_radius_m,
                "radial_oscillation_amplitude_m": s.radial_oscillation_amplitude_m,
                "oscillation_period_s": s.oscillation_period_s,
                "oscillation_phase_rad": s.oscillation_phase_rad,
            }
            for s in scenario.satellites
        ],
        "carriers": {
            "uplink_freqs_hz": list(scenario.carriers.uplink_freqs_hz),
            "downlink_freq_hz": scenario.carriers.downlink_freq_hz,
            "reference_tone_freqs_hz": list(scenario.carriers.reference_tone_freqs_hz),
            "symbol_rate_baud": scenario.carriers.symbol_rate_baud,
            "rolloff": scenario.carriers.rolloff,
        },
        "impairments": {
            "converters": [
                {
                    "static_offset_hz": p.static_offset_hz,
                    "drift_rate_hz_per_s": p.drift_rate_hz_per_s,
                    "random_walk_coeff": p.random_walk_coeff,
                    "phase_noise_linewidth_hz": p.phase_noise_linewidth_hz,
                }
                for p in scenario.impairments.converters
            ],
            "lnbs": [
                {
                    "static_offset_hz": p.static_offset_hz,
                    "drift_rate_hz_per_s": p.drift_rate_hz_per_s,
                    "random_walk_coeff": p.random_walk_coeff,
                    "phase_noise_linewidth_hz": p.phase_noise_linewidth_hz,
                }
                for p in scenario.impairments.lnbs
            ],
            "gateway_phase_noise_linewidth_hz":
                scenario.impairments.gateway_phase_noise_linewidth_hz,
        },
        "link": {
            "cnr_db": list(scenario.link.cnr_db) if scenario.link.cnr_db is not None else None,
            "sync_cnr_db": scenario.link.sync_cnr_db,
            "reference_satellite": scenario.link.reference_satellite,
        },
        "timing": {
            "rtt_s": scenario.timing.rtt_s,
            "propagation_s": scenario.timing.propagation_s,
            "csi_update_period_s": scenario.timing.csi_update_period_s,
            "csi_latency_s": scenario.timing.csi_latency_s,
            "n_csi_average": scenario.timing.n_csi_average,
            "sync_sample_rate_hz": scenario.timing.sync_sample_rate_hz,
            "sync_block_s": scenario.timing.sync_block_s,
            "pilot_length": scenario.timing.pilot_length,
            "metric_window_s": scenario.timing.metric_window_s,
            "metric_period_s": scenario.timing.metric_period_s,
            "warmup_s": scenario.timing.warmup_s,
            "pll_loop_bandwidth_hz": scenario.timing.pll_loop_bandwidth_hz,
            "pll_damping": scenario.timing.pll_damping,
            "pll_acquisition_error_hz": scenario.timing.pll_acquisition_error_hz,
        },
    }


def scenario_to_yaml(scenario: Scenario) -> str:
    return yaml.safe_dump(emit_scenario(scenario), sort_keys=True)


def scenario_hash(scenario: Scenario) -> str:
    """Stable hash of the canonicalized configuration."""
    return hashlib.sha256(scenario_to_yaml(scenario).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    scenario: str
    modes: tuple
    seed: int
    out_dir: str
    tool_version: str
    config_hash: str

    def to_json_dict(self) -> dict:
        # out_dir intentionally omitted: embedding the destination path
        # would make otherwise identical runs hash-differ
        return {
            "scenario": self.scenario,
            "modes": list(self.modes),
            "seed": self.seed,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
        }
