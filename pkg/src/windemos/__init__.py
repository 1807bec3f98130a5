"""Calibration of wind-speed ensemble forecasts with EMOS."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("windemos")
except _metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"
