"""Models package for PruferLab."""
