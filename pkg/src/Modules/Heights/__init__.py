"""Determinantal height probabilities P₀, P₀₀ and the correlation C₀₀."""
