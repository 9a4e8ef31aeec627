"""
Avalanche propagators

Funções de Bessel escaladas e a função de Green G(x) em volume finito e infinito.
"""
