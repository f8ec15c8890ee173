"""Counterfactual graph generation with classifier-free guided discrete diffusion."""

__version__ = "0.1.0"
