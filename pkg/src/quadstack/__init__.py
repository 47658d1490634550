"""Quadruped locomotion stack: terrain, planning, control, a simulated plant and robot interface."""

__version__ = "0.1.0"
