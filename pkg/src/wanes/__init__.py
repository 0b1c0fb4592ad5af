"""Stochastic congestion games: mirror-descent dynamics, equilibria and attacks."""
__version__ = "0.1.0"
