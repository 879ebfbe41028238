"""Numerical workbench for partial-data Calderon problems.

Subpackages cover the forward solvers, Dirichlet-to-Neumann maps on
subboundaries, Carleman-weight analysis, complex geometric optics (CGO)
solutions, and the Radon / Funk / stationary-phase transform pipeline
behind the uniqueness demos.
"""

__version__ = "0.1.0"

TOL_EXACT = 1e-12
