"""Simulation harness, report writers and the command-line interface."""
