"""Numerical laboratory for energy-flux-dissipation triples.

Submodules:
    grids        domains, fields, ball and sphere reductions, snapshots
    specfun      the h_N family and the moving-radius special functions
    models       scalar dissipative models and their energy triples
    vorticity    the cylinder vorticity system and its windowed budgets
    diagnostics  recorded histories, bound reports, sparsity, occupancy
    config       scenario files and their validator
    runner       scenario execution, checkpoints, CSV output, manifests
    plots        vector plots rendered from emitted CSVs
    cli          the command-line surface
"""

__version__ = "0.1.0"
