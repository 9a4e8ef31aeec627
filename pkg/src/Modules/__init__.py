"""
Library modules for sandlab

Cada subpacote cobre uma área do modelo; erros e configuração são
compartilhados em errors.py e config.py.
"""
