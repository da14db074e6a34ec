"""Coordinator service: HTTP API, run control, and round driving."""

from .app import create_app
from .state import Coordinator, CoordinatorConfig, RoundDriver

__all__ = ["Coordinator", "CoordinatorConfig", "RoundDriver", "create_app"]
