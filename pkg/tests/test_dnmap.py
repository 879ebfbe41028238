import numpy as np
import pytest

from cw.dnmap import (assemble_dn, dn_distance, fourier_basis, gram_projection,
                      hat_basis)
from cw.grid import SubboundaryMask, discretize_domain


def full_mask(grid):
    nb = grid.boundary_indices.size
    return SubboundaryMask(grid, {"Gamma_minus": np.zeros(nb, bool),
                                  "Gamma_plus": np.zeros(nb, bool)})


@pytest.fixture(scope="module")
def disk_dn(disk_64):
    mask = full_mask(disk_64)
    basis = fourier_basis(mask, 8)
    lam = assemble_dn(disk_64, "schrodinger",
                      {"q": np.zeros(disk_64.num_nodes)}, mask, basis, 1e-9)
    return disk_64, mask, basis, lam


def test_fourier_spectrum(disk_dn):
    g, mask, basis, lam = disk_dn
    th = g.meta["node_theta"][g.boundary_indices]
    for k, n in enumerate(basis.labels):
        mode = np.exp(1j * n * th)
        num = np.vdot(mode, lam.row_weights * lam.values[:, k])
        den = np.vdot(mode, lam.row_weights * mode)
        eig = num / den
        if n == 0:
            assert abs(eig) <= 1e-6
        else:
            assert abs(eig - abs(n)) / abs(n) <= 0.02


def test_constant_input_zero_flux(disk_dn):
    g, mask, basis, lam = disk_dn
    k0 = basis.labels.index(0)
    assert np.max(np.abs(lam.values[:, k0])) <= 1e-8


def test_gram_hermitian(disk_dn):
    g, mask, basis, lam = disk_dn
    G = gram_projection(lam, basis, mask)
    assert np.max(np.abs(G - G.conj().T)) <= 1e-9 * np.max(np.abs(G))


def test_reassembly_and_self_distance(disk_dn):
    g, mask, basis, lam = disk_dn
    assert dn_distance(lam, lam) == 0.0
    lam2 = assemble_dn(g, "schrodinger", {"q": np.zeros(g.num_nodes)},
                       mask, basis, 1e-9)
    assert dn_distance(lam, lam2) <= 1e-8


def test_distinguishes_potentials(disk_dn):
    g, mask, basis, lam = disk_dn
    q = 5.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.3**2))
    lam_q = assemble_dn(g, "schrodinger", {"q": q}, mask, basis, 1e-9)
    lam_q.provenance["coeffs"] = lam.provenance["coeffs"]
    assert dn_distance(lam, lam_q) >= 1e-3


def test_incompatible_provenance(disk_dn, disk_32):
    g, mask, basis, lam = disk_dn
    m2 = full_mask(disk_32)
    b2 = fourier_basis(m2, 8)
    lam2 = assemble_dn(disk_32, "schrodinger",
                       {"q": np.zeros(disk_32.num_nodes)}, m2, b2, 1e-8)
    with pytest.raises(ValueError):
        dn_distance(lam, lam2)


def test_linearity(disk_64):
    # column of alpha f1 + beta f2 equals the combination of the columns
    g = disk_64
    mask = full_mask(g)
    th = g.meta["node_theta"][g.boundary_indices]
    from cw.dnmap import BoundaryBasis
    pair = BoundaryBasis(mask, np.stack([np.cos(th), np.sin(2 * th)], axis=1), "pair")
    combo_col = (2.0 * np.cos(th) - 0.5 * np.sin(2 * th))[:, None]
    combo = BoundaryBasis(mask, combo_col, "combo")
    q = np.exp(-np.sum(g.coords**2, axis=1))
    lam_p = assemble_dn(g, "schrodinger", {"q": q}, mask, pair, 1e-9)
    lam_c = assemble_dn(g, "schrodinger", {"q": q}, mask, combo, 1e-9)
    expect = 2.0 * lam_p.values[:, 0] - 0.5 * lam_p.values[:, 1]
    err = np.max(np.abs(lam_c.values[:, 0] - expect))
    assert err <= 1e-7 * max(1.0, np.max(np.abs(expect)))


def test_gamma_plus_restricts_rows(disk_64):
    g = disk_64
    th = g.meta["node_theta"][g.boundary_indices]
    nb = th.size
    gm = np.zeros(nb, bool)
    small = SubboundaryMask(g, {"Gamma_minus": gm, "Gamma_plus": np.sin(th) > 0.5})
    large = SubboundaryMask(g, {"Gamma_minus": gm, "Gamma_plus": np.sin(th) > 0.0})
    basis_s = fourier_basis(small, 3)
    basis_l = type(basis_s)(large, basis_s.columns, basis_s.kind, basis_s.labels)
    q = np.zeros(g.num_nodes)
    lam_s = assemble_dn(g, "schrodinger", {"q": q}, small, basis_s, 1e-8)
    lam_l = assemble_dn(g, "schrodinger", {"q": q}, large, basis_l, 1e-8)
    # the larger Gamma_plus keeps a subset of rows, values bit-exact
    sel = np.isin(lam_s.row_nodes, lam_l.row_nodes)
    sub = lam_s.values[sel]
    assert np.array_equal(sub, lam_l.values)


def test_refinement_consistency():
    gs = [discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0}, n)
          for n in (32, 64, 128)]
    diffs = []
    for g in gs:
        mask = full_mask(g)
        basis = fourier_basis(mask, 4)
        q = 2.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.4**2))
        lam = assemble_dn(g, "schrodinger", {"q": q}, mask, basis, 1e-10)
        th = g.meta["node_theta"][g.boundary_indices]
        # project columns on shared Fourier rows for grid-independent markers
        proj = np.stack([np.exp(-1j * m * th) @ (lam.row_weights * lam.values[:, k])
                         for m in range(-4, 5) for k in range(basis.size)])
        diffs.append(proj)
    e1 = np.max(np.abs(diffs[0] - diffs[1]))
    e2 = np.max(np.abs(diffs[1] - diffs[2]))
    assert 2.5 <= e1 / e2 <= 6.5


def test_basis_validation(disk_64):
    mask = full_mask(disk_64)
    nb = disk_64.boundary_indices.size
    with pytest.raises(ValueError):
        cols = np.zeros((nb, 2))
        cols[:, 0] = 1.0
        cols[:, 1] = 1.0
        type(fourier_basis(mask, 1))(mask, cols, "dup")
    th = disk_64.meta["node_theta"][disk_64.boundary_indices]
    m2 = SubboundaryMask(disk_64, {"Gamma_minus": np.sin(th) < 0,
                                   "Gamma_plus": np.zeros(nb, bool)})
    with pytest.raises(ValueError):
        fourier_basis(m2, 3)
    hats = hat_basis(m2, stride=4)
    assert np.max(np.abs(hats.columns[m2.local("Gamma_minus"), :])) == 0.0
