"""Bias of snooping versus blinded covariate adjustment, by simulation."""

__version__ = "0.1.0"
