"""Consensus-based optimization driven by jump-diffusion particle systems."""

__version__ = "0.1.0"
