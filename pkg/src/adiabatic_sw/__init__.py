"""Lattice tools for Seiberg-Witten equations on circle bundles in the adiabatic limit.

Modules: geometry (closed-form invariants), spinors (pointwise Clifford
algebra), lattice (sheared lattice, gauge fields, Dirac blocks), forms
(1-forms, Coulomb gauge), spectral (eigenvalues, kernels, gap tracking),
solver (functional, critical points, classifier, fixed point step),
harness (sweeps and reports), acceptance (the check suite), cli.
"""
__version__ = "0.1.0"
