from .app import build_app
from .sessions import AgentSpec, SessionManager

__all__ = ["build_app", "AgentSpec", "SessionManager"]
