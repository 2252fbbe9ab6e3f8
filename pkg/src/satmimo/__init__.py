"""satmimo: multi-satellite full-frequency-reuse MU-MIMO downlink simulator."""

__version__ = "0.1.0"

from .channel import ChannelMatrix, build_channel_matrix, effective_channel, los_coefficient
from .precoding import PrecodingMatrix, siso_baseline, sum_rate, zf_precoder
from .scenario import (
    CarrierPlan,
    GroundStation,
    SatelliteMotion,
    Scenario,
    doppler_offset,
    radial_velocity,
    satellite_position,
    slant_range,
)

__all__ = [
    "__version__",
    "CarrierPlan",
    "ChannelMatrix",
    "GroundStation",
    "PrecodingMatrix",
    "SatelliteMotion",
    "Scenario",
    "build_channel_matrix",
    "doppler_offset",
    "effective_channel",
    "los_coefficient",
    "radial_velocity",
    "satellite_position",
    "siso_baseline",
    "slant_range",
    "sum_rate",
    "zf_precoder",
]
