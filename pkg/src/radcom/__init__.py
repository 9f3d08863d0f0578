"""FMCW radar interference simulator with a joint radar/communication scheduling protocol."""

from .config import ConfigError, RadarConfig, load_config

__version__ = "0.1.0"

__all__ = ["ConfigError", "RadarConfig", "load_config", "__version__"]
