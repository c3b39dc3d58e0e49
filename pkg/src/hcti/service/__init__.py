"""Platform shell: configuration, persistent state wiring, HTTP API."""

from .config import PlatformConfig, load_config
from .state import PlatformState

__all__ = ["PlatformConfig", "PlatformState", "load_config"]
