"""Simulator services, one module per protocol layer."""
