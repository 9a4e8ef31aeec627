"""
sandlab - Dissipative Abelian Sandpile Toolkit

Ponto de entrada da linha de comando:
- simulate: amostragem Monte Carlo do estado estacionário
- exact: grandezas exatas no toro finito (G_L, det Δ_L, P₀)
- green: tabela do propagador de avalanches
- heights: probabilidades e correlações de alturas (P₀, P₀₀, C₀₀)
- enumerate: contagem exaustiva de configurações permitidas
- scaling: expoente ν_a e funções de escala

Uso: python main.py <subcomando> [flags]
"""

import os
import sys

# Add project root to path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from src.Modules.CLI.commands import cli_main


def main():
    """Main function"""
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
