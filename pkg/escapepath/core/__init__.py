"""Numerical core: models, Euler-Lagrange systems, collocation, corrections, simulation."""
