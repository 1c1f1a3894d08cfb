"""Internal distributed control of the 1D Schrödinger equation with a Hartree term."""

__version__ = "0.1.0"
