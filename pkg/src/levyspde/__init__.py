"""Simulation and verification toolkit for stochastic evolution equations
with Levy noise on spectral Gelfand triples."""
__version__ = "0.1.0"
