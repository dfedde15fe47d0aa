"""Bi-level market dispatch and steady-state stability for future-grid scenarios."""

__version__ = "0.1.0"
