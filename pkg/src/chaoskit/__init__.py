"""Bimolecular reaction-diffusion particle systems and their mean-field limit."""

__version__ = "0.1.0"
