"""Steady-state security checks on dispatched operating points."""
