import numpy as np
import pytest

from cw.errors import Refusal
from cw.grid import discretize_domain
from cw.transforms import (find_critical_points, oscillatory_boundary_decay,
                           stationary_phase)


def gaussian_setup():
    g = lambda p: np.exp(-np.sum(p**2, axis=1))
    phi = lambda p: np.sum(p**2, axis=1)
    grad = lambda p: 2 * p
    hess = lambda p: np.broadcast_to(2 * np.eye(2), (p.shape[0], 2, 2))
    dom = {"shape": "rectangle", "extents": [(-5, 5), (-5, 5)]}
    return g, phi, grad, hess, dom


def run_gaussian(lam):
    g, phi, grad, hess, dom = gaussian_setup()
    return stationary_phase(g, phi, grad, hess, lam, dom,
                            critical_seeds=[(0.1, 0.1)],
                            resolution=int(max(512, 22 * lam)))


def test_gaussian_family_oracle():
    # exact integral pi/(1 - i lam); leading term i pi / lam
    prev = None
    for lam in (50.0, 100.0, 200.0):
        res = run_gaussian(lam)
        exact = np.pi / (1 - 1j * lam)
        assert abs(res.direct - exact) <= 10 * res.quad_error_est + 1e-10
        assert abs(res.prediction - 1j * np.pi / lam) <= 1e-12
        bound = np.pi / (lam * np.sqrt(1 + lam**2))
        assert res.discrepancy <= bound + 2 * res.quad_error_est
        assert res.signatures == [2]
        if prev is not None and lam >= 100:
            assert res.discrepancy / prev <= 0.75
        prev = res.discrepancy


def test_holomorphic_phase_signature_zero():
    # phi = Re z^2 = x^2 - y^2: trace-free Hessian, sgn = 0
    g = lambda p: np.exp(-np.sum(p**2, axis=1))
    phi = lambda p: p[:, 0] ** 2 - p[:, 1] ** 2
    grad = lambda p: np.stack([2 * p[:, 0], -2 * p[:, 1]], axis=1)
    hess = lambda p: np.broadcast_to(np.diag([2.0, -2.0]), (p.shape[0], 2, 2))
    dom = {"shape": "rectangle", "extents": [(-5, 5), (-5, 5)]}
    res = stationary_phase(g, phi, grad, hess, 60.0, dom,
                           critical_seeds=[(0.2, 0.2)], resolution=1500)
    assert res.signatures == [0]
    assert abs(res.prediction - 2 * np.pi / (60.0 * 2.0)) <= 1e-12


def test_annulus_boundary_term_oracle():
    # G = annulus 1 < r < 2, g = 1, phi = |x|^2: no interior critical
    # points and the boundary term reproduces I(lam) exactly:
    # I = pi (e^{4 i lam} - e^{i lam}) / (i lam)
    g = lambda p: np.ones(p.shape[0])
    phi = lambda p: np.sum(p**2, axis=1)
    grad = lambda p: 2 * p
    hess = lambda p: np.broadcast_to(2 * np.eye(2), (p.shape[0], 2, 2))
    dom = {"shape": "annulus", "inner_radius": 1.0, "outer_radius": 2.0}
    lam = 40.0
    res = stationary_phase(g, phi, grad, hess, lam, dom,
                           include_boundary_term=True, resolution=1600)
    exact = np.pi * (np.exp(4j * lam) - np.exp(1j * lam)) / (1j * lam)
    assert abs(res.direct - exact) <= 200 * res.quad_error_est + 1e-8
    assert res.critical_points == []
    assert abs(res.boundary_term - exact) <= 5e-4
    assert res.discrepancy <= 1e-3


def test_no_critical_point_decay_bound():
    # |I(lam)| <= C / lam on the annulus family: lam |I| stays bounded
    g = lambda p: np.ones(p.shape[0])
    phi = lambda p: np.sum(p**2, axis=1)
    grad = lambda p: 2 * p
    hess = lambda p: np.broadcast_to(2 * np.eye(2), (p.shape[0], 2, 2))
    dom = {"shape": "annulus", "inner_radius": 1.0, "outer_radius": 2.0}
    vals = []
    for lam in (40.0, 80.0, 160.0):
        res = stationary_phase(g, phi, grad, hess, lam, dom, resolution=1600)
        vals.append(lam * abs(res.direct))
    assert max(vals) <= 2.5 * np.pi   # C = 2 pi for this family


def test_degenerate_refusal():
    g = lambda p: np.exp(-np.sum(p**2, axis=1))
    phi = lambda p: p[:, 0] ** 4 + p[:, 1] ** 4
    grad = lambda p: np.stack([4 * p[:, 0] ** 3, 4 * p[:, 1] ** 3], axis=1)
    hess = lambda p: np.stack([
        np.stack([12 * p[:, 0] ** 2, 0 * p[:, 0]], axis=1),
        np.stack([0 * p[:, 0], 12 * p[:, 1] ** 2], axis=1)], axis=1)
    dom = {"shape": "rectangle", "extents": [(-2, 2), (-2, 2)]}
    with pytest.raises(Refusal):
        stationary_phase(g, phi, grad, hess, 50.0, dom,
                         critical_seeds=[(0.0, 0.0)], resolution=256)


def test_newton_polish():
    phi_grad = lambda p: 2 * (p - np.array([0.3, -0.2]))
    phi_hess = lambda p: np.broadcast_to(2 * np.eye(2), (p.shape[0], 2, 2))
    dom = {"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}
    pts = find_critical_points(phi_grad, phi_hess, dom, seeds=[(0.9, 0.9)])
    assert len(pts) == 1
    assert np.linalg.norm(pts[0] - np.array([0.3, -0.2])) <= 1e-10


@pytest.fixture(scope="module")
def circle_grid():
    # tau up to 256 needs an angular resolution that still samples the
    # boundary oscillation e^{2 i tau psi}
    return discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0,
                              "angular_nodes": 8192}, 16)


def boundary_fields(grid, arc=(0.9, 1.4)):
    thb = grid.meta["node_theta"][grid.boundary_indices]
    mid, half = (arc[0] + arc[1]) / 2, (arc[1] - arc[0]) / 2
    t = np.clip((thb - mid) / half, -1, 1)
    g = np.where(np.abs(thb - mid) < half, np.exp(-1 / np.maximum(1e-9, 1 - t**2)), 0.0)
    return g


def test_oscillatory_decay_pass(circle_grid):
    g = circle_grid
    thb = g.meta["node_theta"][g.boundary_indices]
    psi = np.sin(2 * thb)       # Im(z^2) on the unit circle
    gb = boundary_fields(g)     # supported away from the stationary angles
    rep = oscillatory_boundary_decay(g, gb, psi, [8, 16, 32, 64, 128, 256])
    assert rep["pass"], rep
    assert rep["stationary_fraction"] <= 0.02


def test_oscillatory_decay_negative_control(circle_grid):
    # psi constant on a small arc carrying g (just under the 2% gate)
    g = circle_grid
    thb = g.meta["node_theta"][g.boundary_indices]
    nb = thb.size
    m = max(1, int(0.015 * nb))
    k0 = int(1.1 / (2 * np.pi) * nb)
    psi = np.sin(2 * thb)
    psi[k0:k0 + m] = psi[k0]
    gb = np.zeros(nb)
    gb[k0:k0 + m] = 1.0
    rep = oscillatory_boundary_decay(g, gb, psi, [8, 16, 32, 64, 128, 256])
    assert not rep["pass"]


def test_oscillatory_gate_refusal(circle_grid):
    g = circle_grid
    thb = g.meta["node_theta"][g.boundary_indices]
    psi = np.sin(2 * thb)
    nb = thb.size
    psi[: int(0.1 * nb)] = psi[0]   # 10% stationary arc
    with pytest.raises(Refusal):
        oscillatory_boundary_decay(g, np.ones(nb), psi, [8, 256])
