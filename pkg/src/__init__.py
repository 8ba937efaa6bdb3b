"""PruferLab - locality experiments for the Prufer tree code."""

__version__ = "1.0.0"
__author__ = "PruferLab Team"
