"""Fourier spectra of decision trees, set-family partitions, and rorrelation experiments."""

__version__ = "0.1.0"
