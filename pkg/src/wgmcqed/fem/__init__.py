"""Finite-element eigenmode solver for axisymmetric dielectric resonators."""
