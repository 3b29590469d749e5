"""Deterministic equivalents and Monte Carlo checks for non-Hermitian random
matrices with a variance profile: the resolvent-product kernel, the matrix
Dyson equation of the Hermitized linearization, and the linear dynamics
``du/dt = -u + gXu``.
"""

__version__ = "0.1.0"
