"""Physical constants and fixed model parameters (SI units)."""

# Speed of light [m/s]
C0 = 299_792_458.0

# Spherical Earth radius used for geodetic->ECEF conversion [m].
# No flattening: sub-0.5% range error, irrelevant at phase-model level
# because absolute phase is estimated, not predicted.
EARTH_RADIUS_M = 6_378_137.0

# Nominal geostationary orbit radius from Earth's center [m]
GEO_RADIUS_M = 42_164_000.0

# MER threshold for quasi-error-free QPSK 5/6 decode.  Standard DVB-S2
# planning figure, used as the decode-indicator threshold; this is an
# external constant, not a measured value.
QPSK_56_DECODE_THRESHOLD_DB = 9.0

# Cap applied to MER values written to file outputs when the error power
# is exactly zero (infinite MER sentinel).
MER_CAP_DB = 80.0
