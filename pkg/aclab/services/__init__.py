"""Numerical services: lattice, energy, projections, Gaussians, samplers, experiments."""
