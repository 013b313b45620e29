"""Moisture transport, salt crystallization and porosity evolution in
porous building materials: explicit 1D finite differences, P1 finite
elements in 1D/2D/3D, and the batch studies built on them."""

__version__ = "0.1.0"
