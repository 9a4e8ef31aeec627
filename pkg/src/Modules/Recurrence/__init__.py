"""Burning algorithm, forbidden subconfigurations and recurrent-state counts."""
