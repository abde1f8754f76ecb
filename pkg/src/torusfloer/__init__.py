"""Numerical chain complexes of Hamiltonian dynamics on tori.

Builds the Morse complex of the loop-space action functional, the Floer
complex of the same Hamiltonian, and the hybrid chain map between them,
then verifies the structural identities (boundary squared zero, chain-map
identity, triangularity, homology ranks) on trigonometric Hamiltonians.
"""

__version__ = "0.1.0"
