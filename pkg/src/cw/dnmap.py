"""Discrete Dirichlet-to-Neumann maps on subboundaries and their comparison.

A DN matrix column is one forward solve: Dirichlet data from a basis element
supported on the input subboundary (the complement of Gamma_minus), zero on
Gamma_minus, with the normal derivative (times gamma for the conductivity
operator) sampled on the output rows (the complement of Gamma_plus) by the
grid's one-sided boundary stencils along the analytic normal.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticProblem, SolverConfig, solve
from .grid import Grid, SubboundaryMask

__all__ = ["BoundaryBasis", "DNMatrix", "hat_basis", "fourier_basis",
           "assemble_dn", "dn_distance", "normal_derivative", "gram_projection"]


@dataclass
class BoundaryBasis:
    """Ordered boundary input functions, one column per element.

    ``columns`` has shape (num boundary nodes, size); every element vanishes
    on the Gamma_minus nodes of ``mask``.
    """

    mask: SubboundaryMask
    columns: np.ndarray
    kind: str
    labels: list = field(default_factory=list)

    def __post_init__(self):
        gm = self.mask.local("Gamma_minus")
        if gm.size and np.max(np.abs(self.columns[gm, :])) > 1e-14:
            raise ValueError("basis elements must vanish on Gamma_minus")
        gram = self.columns.conj().T @ self.columns
        if np.linalg.matrix_rank(gram) < self.columns.shape[1]:
            raise ValueError("basis elements are linearly dependent")

    @property
    def size(self) -> int:
        return self.columns.shape[1]

    def descriptor(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.columns).tobytes()).hexdigest()[:12]
        return f"{self.kind}:{self.size}:{h}"


def hat_basis(mask: SubboundaryMask, stride: int = 1) -> BoundaryBasis:
    """Nodal hats on the input subboundary (complement of Gamma_minus).

    ``stride`` keeps every stride-th input node (cheap sub-bases for
    verification sweeps; stride=1 is the full hat family).
    """
    grid = mask.grid
    nb = grid.boundary_indices.size
    support = mask.complement_local("Gamma_minus")[::max(stride, 1)]
    cols = np.zeros((nb, support.size))
    for k, j in enumerate(support):
        cols[j, k] = 1.0
    return BoundaryBasis(mask, cols, "hat", labels=[int(j) for j in support])


def fourier_basis(mask: SubboundaryMask, n_max: int) -> BoundaryBasis:
    """Modes e^{i n theta}, |n| <= n_max, on a full disk boundary."""
    grid = mask.grid
    if grid.chart != "polar":
        raise ValueError("fourier basis is available on disks only")
    if mask.local("Gamma_minus").size:
        raise ValueError("fourier basis requires an empty Gamma_minus")
    th = grid.meta["node_theta"][grid.boundary_indices]
    orders = list(range(-n_max, n_max + 1))
    cols = np.stack([np.exp(1j * n * th) for n in orders], axis=1)
    return BoundaryBasis(mask, cols, "fourier", labels=orders)


def normal_derivative(grid: Grid, u: np.ndarray) -> np.ndarray:
    """du/dnu at all boundary nodes via the one-sided boundary stencils."""
    bidx = grid.boundary_indices
    nu = grid.boundary_normals
    grads = grid.gradient_ops()
    out = np.zeros(bidx.size, dtype=complex if np.iscomplexobj(u) else float)
    for a in range(grid.dimension):
        out = out + nu[:, a] * (grads[a] @ u)[bidx]
    return out


@dataclass
class DNMatrix:
    values: np.ndarray             # (rows, basis size)
    row_nodes: np.ndarray          # global node indices of output rows
    row_weights: np.ndarray        # boundary quadrature weights of the rows
    basis_descriptor: str
    provenance: dict
    column_ok: np.ndarray
    column_residuals: np.ndarray

    def compatible(self, other: "DNMatrix") -> bool:
        return (self.basis_descriptor == other.basis_descriptor
                and np.array_equal(self.row_nodes, other.row_nodes)
                and self.provenance.get("grid") == other.provenance.get("grid")
                and self.provenance.get("masks") == other.provenance.get("masks"))

    def to_csv(self, path: str) -> None:
        cplx = np.iscomplexobj(self.values)
        with open(path, "w") as f:
            f.write("row_node,col_index,value_re,value_im\n" if cplx
                    else "row_node,col_index,value\n")
            for r, node in enumerate(self.row_nodes):
                for c in range(self.values.shape[1]):
                    v = self.values[r, c]
                    if cplx:
                        f.write(f"{node},{c},{float(v.real)!r},{float(v.imag)!r}\n")
                    else:
                        f.write(f"{node},{c},{float(v)!r}\n")

    def sidecar(self) -> dict:
        return {"basis": self.basis_descriptor, **self.provenance,
                "columns_ok": [bool(b) for b in self.column_ok],
                "column_residuals": [float(x) for x in self.column_residuals]}

    def write(self, csv_path: str) -> None:
        self.to_csv(csv_path)
        with open(csv_path + ".json", "w") as f:
            json.dump(self.sidecar(), f, indent=1, sort_keys=True)


def _coeff_hash(coeffs: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(coeffs):
        v = coeffs[k]
        h.update(k.encode())
        if v is not None:
            h.update(np.ascontiguousarray(v).tobytes())
    return h.hexdigest()[:12]


def assemble_dn(grid: Grid, operator: str, coeffs: dict, mask: SubboundaryMask,
                basis: BoundaryBasis, tolerance: float = 1e-8,
                threads: int = 1, config: SolverConfig | None = None,
                input_factor: np.ndarray | None = None) -> DNMatrix:
    """Assemble the DN matrix Lambda(coeffs, Gamma_minus, Gamma_plus).

    One forward solve per basis element; rows restricted to the complement
    of Gamma_plus.  ``input_factor`` optionally multiplies every Dirichlet
    input pointwise on the boundary (used by the gauge-invariance check).
    Failed columns are flagged, never silently zeroed.
    """
    if basis.mask.grid is not grid:
        raise ValueError("basis and grid mismatch")
    out_local = mask.complement_local("Gamma_plus")
    row_nodes = grid.boundary_indices[out_local]
    row_w = grid.boundary_weights[out_local]
    gamma = coeffs.get("gamma")

    def one_column(k):
        g = basis.columns[:, k].copy()
        if input_factor is not None:
            g = g * input_factor
        prob = EllipticProblem(grid, operator, q=coeffs.get("q"),
                               gamma=gamma, A=coeffs.get("A"), dirichlet=g)
        sol = solve(prob, tolerance, config)
        flux = normal_derivative(grid, sol.field)
        if operator == "conductivity":
            flux = flux * gamma[grid.boundary_indices]
        return flux[out_local], sol.residual, not sol.zero_eigenvalue_suspected

    cols, resids, oks = [None] * basis.size, np.zeros(basis.size), np.zeros(basis.size, bool)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one_column, range(basis.size)))
    else:
        results = [one_column(k) for k in range(basis.size)]
    for k, (col, res, ok) in enumerate(results):
        cols[k], resids[k], oks[k] = col, res, ok
    values = np.stack(cols, axis=1)
    prov = {"operator": operator, "coeffs": _coeff_hash(coeffs),
            "grid": grid.signature(), "tolerance": tolerance,
            "masks": {lbl: int(np.sum(m)) for lbl, m in mask.labels.items()}}
    return DNMatrix(values=values, row_nodes=row_nodes, row_weights=row_w,
                    basis_descriptor=basis.descriptor(), provenance=prov,
                    column_ok=oks, column_residuals=resids)


def dn_distance(lam1: DNMatrix, lam2: DNMatrix) -> float:
    """Boundary-quadrature-weighted Frobenius distance, relative to |lam1|."""
    if not lam1.compatible(lam2):
        raise ValueError("DN matrices have incompatible provenance")
    w = lam1.row_weights[:, None]
    num = np.sqrt(np.sum(w * np.abs(lam1.values - lam2.values) ** 2))
    den = np.sqrt(np.sum(w * np.abs(lam1.values) ** 2))
    return float(num / den) if den > 0 else float(num)


def gram_projection(lam: DNMatrix, basis: BoundaryBasis, mask: SubboundaryMask) -> np.ndarray:
    """Weighted Gram projection <Lambda f_m, f_n> over the output rows."""
    grid = mask.grid
    out_local = mask.complement_local("Gamma_plus")
    test = basis.columns[out_local, :]
    w = lam.row_weights[:, None]
    return test.conj().T @ (w * lam.values)
