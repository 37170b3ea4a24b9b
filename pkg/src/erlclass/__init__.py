"""Earthwork-related location (ERL) extraction and classification from
construction-truck GPS traces."""

from .errors import ConfigError, DataError, ErlError, ModelError
from .features import CLASSES, FEATURE_NAMES

__version__ = "0.1.0"
__all__ = ["CLASSES", "FEATURE_NAMES", "ErlError", "ConfigError", "DataError", "ModelError"]
