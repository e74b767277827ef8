"""Experiment harness: configs, sweeps, figures and the command line."""
