"""Forward Dirichlet solvers for the Schrodinger, conductivity, and
first-order-perturbed operators, plus manufactured-solution residuals.

The discrete systems are volume-weighted so that the interior block of the
Schrodinger/conductivity operators is symmetric; symmetric real problems go
through MINRES, complex or first-order-perturbed ones through BiCGSTAB.
Dirichlet values are injected exactly at boundary nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridError

__all__ = ["EllipticProblem", "Solution", "SolverConfig", "solve",
           "manufactured_residual", "operator_rows"]


@dataclass
class SolverConfig:
    tolerance: float = 1e-8
    max_iters: int = 20000
    preconditioner: str = "jacobi"   # none | jacobi

    def validate(self):
        if not (0 < self.tolerance <= 1e-4):
            raise ValueError("solver tolerance must lie in (0, 1e-4]")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError("preconditioner must be 'none' or 'jacobi'")


@dataclass
class EllipticProblem:
    """Dirichlet problem for one of the catalog operators.

    operator: 'schrodinger' (Lap + q), 'conductivity' (div(gamma grad)),
    or 'magnetic' (Lap + (A, grad) + q).  ``dirichlet`` holds one value per
    boundary node (ordered like grid.boundary_indices); ``source`` is an
    optional interior right-hand side over all nodes.
    """

    grid: Grid
    operator: str
    q: np.ndarray | None = None
    gamma: np.ndarray | None = None
    A: np.ndarray | None = None
    dirichlet: np.ndarray | None = None
    source: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.num_nodes
        if self.operator not in ("schrodinger", "conductivity", "magnetic"):
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.operator == "conductivity":
            if self.gamma is None or self.gamma.shape != (n,):
                raise ValueError("conductivity problem needs nodal gamma")
            if np.min(self.gamma) <= 0:
                raise ValueError("gamma must be strictly positive")
        else:
            if self.q is None:
                self.q = np.zeros(n)
            if self.q.shape != (n,):
                raise ValueError("q must be nodal")
        if self.operator == "magnetic":
            if self.A is None or self.A.shape != (n, self.grid.dimension):
                raise ValueError("magnetic problem needs nodal vector field A")
        nb = self.grid.boundary_indices.size
        if self.dirichlet is None:
            self.dirichlet = np.zeros(nb)
        if self.dirichlet.shape != (nb,):
            raise ValueError("dirichlet data must cover all boundary nodes")

    @property
    def min_gamma(self) -> float:
        return float(np.min(self.gamma)) if self.gamma is not None else float("nan")

    def is_complex(self) -> bool:
        parts = [self.q, self.dirichlet, self.source, self.A]
        return any(p is not None and np.iscomplexobj(p) for p in parts)


@dataclass
class Solution:
    field: np.ndarray                 # all nodes, boundary data injected
    residual: float                   # relative linear-system residual
    iterations: int
    zero_eigenvalue_suspected: bool = False
    meta: dict = field(default_factory=dict)


def _conductivity_rows(grid: Grid, gamma: np.ndarray) -> sp.csr_matrix:
    """Conservative flux-form div(gamma grad) on interior rows (N x N)."""
    rows, cols, vals = [], [], []

    def add(row, col, v):
        rows.append(row)
        cols.append(col)
        vals.append(v)

    def couple(row, other, coeff):
        add(row, other, coeff)
        add(row, row, -coeff)

    gm = gamma
    if grid.chart == "cartesian":
        shape = grid.meta["axis_nodes"]
        hs = grid.spacing
        idx = np.unravel_index(np.arange(grid.num_nodes), shape)
        strides = np.array([int(np.prod(shape[a + 1:])) for a in range(grid.dimension)])
        interior = grid.interior_indices
        for node in interior:
            for a in range(grid.dimension):
                st = strides[a]
                up, dn = node + st, node - st
                gp = 0.5 * (gm[node] + gm[up])
                gmn = 0.5 * (gm[node] + gm[dn])
                couple(node, up, gp / hs[a] ** 2)
                couple(node, dn, gmn / hs[a] ** 2)
    elif grid.chart == "polar":
        mr, mt = grid.meta["m_r"], grid.meta["m_theta"]
        dr, dt = grid.spacing
        grid.laplacian_op()
        alpha_t = grid.meta["alpha_theta"]
        r = grid.meta["node_r"]
        for i in range(mr):
            ri = r[grid._polar_index(i, 0)]
            rp, rm = ri + dr / 2, ri - dr / 2
            for j in range(mt):
                row = grid._polar_index(i, j)
                up = grid._polar_index(i + 1, j)
                gp = 0.5 * (gm[row] + gm[up])
                couple(row, up, rp * gp / (ri * dr * dr))
                if i > 0:
                    dn = grid._polar_index(i - 1, j)
                    gmn = 0.5 * (gm[row] + gm[dn])
                    couple(row, dn, rm * gmn / (ri * dr * dr))
                for pj in (j + 1, j - 1):
                    nb = grid._polar_index(i, pj)
                    gf = 0.5 * (gm[row] + gm[nb])
                    couple(row, nb, alpha_t * gf / (ri * ri * dt * dt))
    elif grid.chart == "spherical":
        mr, mt, mp = grid.meta["m_r"], grid.meta["m_theta"], grid.meta["m_phi"]
        dr, dt, dp = grid.spacing
        grid.laplacian_op()
        alpha_t = grid.meta["alpha_theta"]
        alpha_p = grid.meta["alpha_phi"]
        r = grid.meta["node_r"]
        theta_axis = grid.meta["theta_axis"]
        for i in range(mr):
            ri = r[grid._sph_index(i, 0, 0)]
            rp, rm = ri + dr / 2, ri - dr / 2
            vol_r = (rp**3 - rm**3) / 3.0
            for j in range(mt):
                tj = theta_axis[j]
                sj = np.sin(tj)
                sjp, sjm = np.sin(tj + dt / 2), np.sin(tj - dt / 2)
                for k in range(mp):
                    row = grid._sph_index(i, j, k)
                    up = grid._sph_index(i + 1, j, k)
                    gp = 0.5 * (gm[row] + gm[up])
                    couple(row, up, rp**2 * gp / (vol_r * dr))
                    if i > 0:
                        dn = grid._sph_index(i - 1, j, k)
                        gmn = 0.5 * (gm[row] + gm[dn])
                        couple(row, dn, rm**2 * gmn / (vol_r * dr))
                    if j < mt - 1:
                        nb = grid._sph_index(i, j + 1, k)
                        gf = 0.5 * (gm[row] + gm[nb])
                        couple(row, nb, alpha_t * sjp * gf / (sj * (ri * dt) ** 2))
                    if j > 0:
                        nb = grid._sph_index(i, j - 1, k)
                        gf = 0.5 * (gm[row] + gm[nb])
                        couple(row, nb, alpha_t * sjm * gf / (sj * (ri * dt) ** 2))
                    for pk in (k + 1, k - 1):
                        nb = grid._sph_index(i, j, pk)
                        gf = 0.5 * (gm[row] + gm[nb])
                        couple(row, nb, alpha_p * gf / ((ri * sj * dp) ** 2))
    else:  # pragma: no cover
        raise GridError(f"unsupported chart {grid.chart}")
    n = grid.num_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def operator_rows(problem: EllipticProblem) -> sp.csr_matrix:
    """Sparse N x N matrix whose interior rows realize the operator."""
    grid = problem.grid
    if problem.operator == "conductivity":
        return _conductivity_rows(grid, np.asarray(problem.gamma, dtype=float))
    L = grid.laplacian_op().astype(
        complex if problem.is_complex() else float).tolil(copy=True).tocsr()
    L = L + sp.diags(problem.q)
    if problem.operator == "magnetic":
        grads = grid.gradient_ops()
        for a in range(grid.dimension):
            L = L + sp.diags(problem.A[:, a]) @ grads[a]
    return L.tocsr()


def _krylov(A, b, config: SolverConfig, symmetric: bool):
    diag = A.diagonal()
    M = None
    if config.preconditioner == "jacobi":
        d = np.abs(diag)
        d[d == 0] = 1.0
        M = sp.diags(1.0 / d)
    iters = [0]

    def cb(_):
        iters[0] += 1

    if symmetric and not np.iscomplexobj(b) and not np.iscomplexobj(A.data):
        # minres's stopping rule lags the plain relative residual by an
        # order of magnitude or two on these systems
        x, info = spla.minres(A, b, rtol=config.tolerance / 200,
                              maxiter=config.max_iters, M=M, callback=cb)
    else:
        x, info = spla.bicgstab(A.astype(complex), b.astype(complex),
                                rtol=config.tolerance / 10, atol=0.0,
                                maxiter=config.max_iters, M=M, callback=cb)
    return x, info, iters[0]


def solve(problem: EllipticProblem, tolerance: float | None = None,
          config: SolverConfig | None = None) -> Solution:
    """Solve the Dirichlet problem; returns the full nodal field.

    Non-convergence within the iteration cap is flagged (a near-eigenvalue
    potential is the usual culprit) and the achieved residual is reported.
    """
    config = config or SolverConfig()
    if tolerance is not None:
        config = SolverConfig(tolerance, config.max_iters, config.preconditioner)
    config.validate()
    grid = problem.grid
    L = operator_rows(problem)
    ii, bb = grid.interior_indices, grid.boundary_indices
    W = sp.diags(grid.interior_weights[ii])
    A = (W @ L[ii][:, ii]).tocsr()
    B = (W @ L[ii][:, bb]).tocsr()
    g = np.asarray(problem.dirichlet)
    f = problem.source[ii] if problem.source is not None else np.zeros(ii.size)
    b = grid.interior_weights[ii] * f - B @ g

    symmetric = problem.operator in ("schrodinger", "conductivity") and \
        not (problem.q is not None and np.iscomplexobj(problem.q))
    complex_rhs = np.iscomplexobj(b)
    if symmetric and complex_rhs:
        xr, info_r, it_r = _krylov(A, b.real, config, True)
        xi, info_i, it_i = _krylov(A, b.imag, config, True)
        x, info, iters = xr + 1j * xi, max(info_r, info_i), it_r + it_i
    else:
        x, info, iters = _krylov(A, b, config, symmetric)

    scale = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b) / scale if scale > 0 else np.linalg.norm(A @ x)
    u = np.zeros(grid.num_nodes, dtype=complex if (complex_rhs or np.iscomplexobj(x)) else float)
    u[ii] = x
    u[bb] = g
    flagged = bool(info != 0 or res > config.tolerance)
    return Solution(field=u, residual=float(res), iterations=iters,
                    zero_eigenvalue_suspected=flagged,
                    meta={"operator": problem.operator,
                          "tolerance": config.tolerance})


def manufactured_residual(u: np.ndarray, problem: EllipticProblem) -> float:
    """Weighted norm of the interior equation residual, relative to the
    source scale (or the boundary-coupling scale for homogeneous sources)."""
    grid = problem.grid
    L = operator_rows(problem)
    ii = grid.interior_indices
    w = grid.interior_weights[ii]
    f = problem.source[ii] if problem.source is not None else np.zeros(ii.size)
    r = (L[ii] @ u) - f
    num = np.sqrt(np.sum(w * np.abs(r) ** 2))
    den = np.sqrt(np.sum(w * np.abs(f) ** 2))
    if den == 0:
        bb = grid.boundary_indices
        den = np.sqrt(np.sum(w)) * max(np.max(np.abs(u[bb])), 1e-300) * \
            np.max(np.abs(L.diagonal()[ii]))
    return float(num / den)
