"""Cooperative multi-user adaptive-bitrate streaming toolkit.

Modules:
  model    domain types and welfare accounting
  traces   capacity/encounter traces, ingestion, synthetic generators
  offline  slotted bound solvers and the sandwich certificate
  online   real-time schedulers (drift-plus-penalty and baselines)
  sim      deterministic discrete-event simulator
  cli      experiment runner
"""
from . import cli, model, offline, online, sim, traces

__all__ = ["cli", "model", "offline", "online", "sim", "traces"]
__version__ = "0.1.0"
