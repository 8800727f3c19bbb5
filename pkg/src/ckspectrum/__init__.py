"""Limiting spectral moments of conjugate kernel matrices with heavy-tailed
first-layer weights, plus a finite-size Monte Carlo simulator to match."""

__version__ = "0.1.0"
