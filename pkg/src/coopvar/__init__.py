"""Coexistence states of a cooperative elliptic system with a degenerate logistic weight.

Modules: ``grid`` (tagged grids, weights), ``linops`` (shifted Dirichlet
Laplacian), ``spectra`` (principal eigenvalues, spectral bound), ``nonlocal_solver``
(reduced problem), ``continuation`` (branch tracing), ``altsys`` (two-component
formulation) and ``cli``.
"""

__version__ = "0.1.0"
