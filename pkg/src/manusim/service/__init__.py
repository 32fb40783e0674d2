"""HTTP/WebSocket service wrapping the simulator."""

from .app import create_app

__all__ = ["create_app"]
