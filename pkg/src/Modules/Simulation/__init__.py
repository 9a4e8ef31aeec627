"""
Simulation module for sandlab

Motor de avalanches (engine.py) e amostragem Monte Carlo com estimadores
por médias de lotes (montecarlo.py).
"""
