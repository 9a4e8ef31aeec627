"""
sandlab - Test Suite

Testes do modelo de pilha de areia dissipativo em toro d-dimensional:
rede, dinâmica de tombamento, recorrência, propagadores, alturas,
Monte Carlo, escala e a interface de linha de comando.
"""

__version__ = "1.0.0"
__author__ = "sandlab developers"
