"""BB84 link simulation and key-rate analysis for sub-Poissonian photon sources."""

__version__ = "0.1.0"
