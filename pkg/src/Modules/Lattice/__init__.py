"""Torus geometry and the toppling matrix Δ_L."""
