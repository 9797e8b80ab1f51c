"""Trace-driven simulator for real-time video bitrate control.

Pairs a packet-level bottleneck and a parametric encoder with two control
stacks: a GCC-style baseline and three cooperating learned agents that set
rate factor, resolution, and frame rate.
"""

__version__ = "0.1.0"
