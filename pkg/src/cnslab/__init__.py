"""Compressible Navier-Stokes laboratory: heat-conduction-free flow with vacuum on the torus."""

__version__ = "0.1.0"
