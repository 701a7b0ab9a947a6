"""coopconv: modular policies that separate what a task forces from what a
partner's conventions decide, for two-player cooperative games."""

__version__ = "0.1.0"
