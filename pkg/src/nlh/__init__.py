"""Numerical toolkit for Hamiltonian identities of nonlocal Euler-Lagrange equations."""
