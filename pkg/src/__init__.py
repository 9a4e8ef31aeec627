"""
sandlab

Ferramentas para o modelo de pilha de areia abeliano dissipativo (DASM)
em d dimensões sobre um toro de período ímpar.

Módulos principais:
- Modules.Lattice: geometria do toro e operador Δ_L
- Modules.Simulation: dinâmica de avalanches e amostragem Monte Carlo
- Modules.Recurrence: algoritmo de queima e contagem de recorrentes
- Modules.Propagators: funções de Green (volume finito e infinito)
- Modules.Heights: fórmulas determinantais de probabilidades de altura
- Modules.Scaling: varreduras em a e funções de escala
- Modules.CLI: subcomandos da linha de comando
- data/: defaults JSON
"""

__version__ = "1.0.0"
__author__ = "sandlab developers"
__description__ = "Dissipative abelian sandpile toolkit"
