"""satlink: GEO satellite link-quality prediction for fast-moving aircraft.

Synthesizes physically grounded flight logs, trains gradient-boosted
CNR-category models (with optional weather augmentation at low altitude),
and simulates proactive satellite handover from the predictions.
"""

__version__ = "0.1.0"

from .geometry import (
    EARTH_RADIUS_M,
    GEO_ALTITUDE_M,
    GeoPosition,
    GeoSatellite,
    LookAngles,
    geo_look_angles,
    haversine_m,
)
from .ingest import CnrCategory, FlightLogRecord, bin_cnr

__all__ = [
    "EARTH_RADIUS_M",
    "GEO_ALTITUDE_M",
    "GeoPosition",
    "GeoSatellite",
    "LookAngles",
    "geo_look_angles",
    "haversine_m",
    "CnrCategory",
    "FlightLogRecord",
    "bin_cnr",
    "__version__",
]
