import numpy as np
import pytest

from cw.cgo import (Profile, build_cgo, intertwining_residual, make_phase,
                    overflow_guard, r_tau, residual_decay, solve_remainder,
                    transport_amplitude, transport_residual)
from cw.elliptic import EllipticProblem, manufactured_residual
from cw.errors import Refusal
from cw.grid import ComplexField, discretize_domain, halfspace_mask


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="module")
def square96():
    return discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}, 96)


@pytest.fixture(scope="module")
def square96_mask(square96):
    return halfspace_mask(square96, np.array([0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))


def test_linear_phase(rng):
    ph = make_phase("linear3d", theta=0.0)
    X = rng.uniform(-1, 1, (30, 3))
    assert ph.check_eikonal(X) == 0.0
    Phi = ph.Phi(X)
    assert np.max(np.abs(Phi - (X[:, 2] + 1j * X[:, 0]))) <= 1e-14


def test_log_spherical_phase_and_separation(ball_12):
    ph = make_phase("log_spherical", grid=ball_12, sign=1.0)
    assert ph.check_eikonal(ball_12.coords) <= 1e-12
    bad = discretize_domain({"shape": "ball", "center": (0, 0, 0.5), "radius": 1.0}, 12)
    with pytest.raises(Refusal):
        make_phase("log_spherical", grid=bad)


def test_two_d_phase_critical_points():
    z0 = 0.2 + 0.1j
    ph = make_phase("two_d", f=lambda z: (z - z0) ** 2 / 2, df=lambda z: z - z0,
                    d2f=lambda z: 1 + 0 * z, critical_points=[z0])
    assert ph.critical_points == [z0]


def test_transport_linear_profile_b_s(rng):
    ph = make_phase("linear3d", theta=0.3)
    amp = transport_amplitude(ph, Profile.linear(), check_points=rng.uniform(-1, 1, (40, 3)))
    assert amp.meta["transport_residual"] == 0.0


def test_transport_spherical():
    ball = discretize_domain({"shape": "ball", "center": (1.6, 0, 0), "radius": 0.8}, 12)
    ph = make_phase("log_spherical", grid=ball, sign=1.0)
    amp = transport_amplitude(ph, Profile.constant(1.0), grid=ball,
                              check_points=ball.coords)
    assert amp.meta["transport_residual"] <= 1e-8
    # the shipped closed-form formula matches its definition pointwise
    X = ball.coords
    r = np.linalg.norm(X, axis=1)
    s = np.hypot(X[:, 0], X[:, 1]) / r
    assert np.max(np.abs(amp.a(X) - r**-0.5 * s**-0.5)) <= 1e-12
    # spherical amplitude singular on the axis -> refusal
    on_axis = discretize_domain({"shape": "ball", "center": (0, 0, 2.0), "radius": 1.0}, 12)
    ph2 = make_phase("log_spherical", grid=on_axis, sign=1.0)
    with pytest.raises(Refusal):
        transport_amplitude(ph2, Profile.constant(1.0), grid=on_axis)


def test_transport_magnetic_constant_A():
    g = discretize_domain({"shape": "box",
                           "extents": [(-1, 1), (-1, 1), (-1, 1)],
                           "resolutions": [16, 16, 16]}, 8)
    ph = make_phase("linear3d", theta=0.0)
    A = np.zeros((g.num_nodes, 3))
    A[:, 0] = 1.0
    amp = transport_amplitude(ph, Profile.constant(1.0), A=A, grid=g)
    # defining equation 4 d_{z_theta}(script) = -(A, grad Phi), checked by
    # applying the discrete derivative (z_theta = x3 + i x1 at theta = 0)
    Dx, Dy, Dz = g.gradient_ops()
    script = amp.mag_phase
    # (grad Phi, grad) = 2 d/d(zbar_theta); zbar_theta = x3 - i x1 at theta=0
    d_zbtheta = 0.5 * (Dz @ script + 1j * (Dx @ script))
    gPhi = ph.grad_Phi(g.coords)
    rhs = -np.sum(A * gPhi, axis=1)
    ii = g.interior_indices
    assert np.max(np.abs(4 * d_zbtheta[ii] - rhs[ii])) <= 1e-6
    res = transport_residual(ph, amp, g.coords, A=A)
    assert res <= 1e-6


def test_trivial_cgo_zero_remainder(square96):
    g = square96
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    sol = build_cgo(g, ph, amp, tau=8.0, q=np.zeros(g.num_nodes))
    assert sol.remainder_norm == 0.0
    assert sol.weighted_residual == 0.0


def test_manufactured_remainder_recovery(square96):
    # P w* = g with known w*; the Tikhonov solve recovers it up to the
    # regularization-limited error
    g = square96
    ph = make_phase("linear2d")
    tau = 16.0
    x, y = g.coords[:, 0], g.coords[:, 1]
    wstar = np.sin(np.pi * x) * np.sin(np.pi * y) * 0.1
    from cw.cgo import conjugated_operator
    P = conjugated_operator(g, ph, tau, 0.0, np.zeros(g.num_nodes), None)
    rhs = np.zeros(g.num_nodes, complex)
    res = solve_remainder(g, ph, tau, 0.0, amplitude_values=np.zeros(g.num_nodes),
                          q=np.zeros(g.num_nodes),
                          rhs_extra=-(P @ wstar),
                          vanish_nodes=g.boundary_indices,
                          boundary_values=wstar[g.boundary_indices].astype(complex),
                          mu=1e6)
    num = np.sqrt(np.sum(g.interior_weights * np.abs(res.w_hat - wstar) ** 2))
    den = np.sqrt(np.sum(g.interior_weights * np.abs(wstar) ** 2))
    # mu large enough that recovery sits within 10x the regularization bias
    assert num / den <= 0.05, num / den


def test_conjugation_consistency(square96, square96_mask):
    # the recorded weighted residual equals the manufactured residual of
    # the conjugated problem (same arithmetic, two routes)
    g = square96
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    q = 10.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.4**2))
    tau = 16.0
    sol = build_cgo(g, ph, amp, tau=tau, q=q, vanish_label="Gamma_minus",
                    mask=square96_mask)
    gPhi = ph.grad_Phi(g.coords)
    prob = EllipticProblem(g, "magnetic",
                           q=(tau * ph.lap_Phi(g.coords) + q).astype(complex),
                           A=(2 * tau * gPhi).astype(complex),
                           dirichlet=np.zeros(g.boundary_indices.size))
    from cw.elliptic import operator_rows
    L = operator_rows(prob)
    ii = g.interior_indices
    r = L[ii] @ sol.gauge_values()
    route2 = float(np.sqrt(np.sum(g.interior_weights[ii] * np.abs(r) ** 2)))
    assert abs(route2 - sol.weighted_residual) <= 1e-10 * max(route2, 1e-30)


def test_boundary_vanishing(square96, square96_mask):
    g = square96
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    q = 10.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.4**2))
    sol = build_cgo(g, ph, amp, tau=16.0, q=q, vanish_label="Gamma_minus",
                    mask=square96_mask)
    assert sol.boundary_vanishing_defect(square96_mask) <= 1e-8


def test_decay_sweep_and_negative_control():
    g = discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}, 128)
    mask = halfspace_mask(g, np.array([0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    q = 60.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.5**2))
    taus = (8.0, 16.0, 32.0, 64.0)
    sols = [build_cgo(g, ph, amp, tau=t, q=q, vanish_label="Gamma_minus",
                      mask=mask) for t in taus]
    rep = residual_decay(sols)
    assert rep["pass"], rep
    # wrong-sign family: boundary data rides the growth direction
    phn = ph.negated()
    bad = [build_cgo(g, phn, amp, tau=t, q=q, vanish_label="Gamma_minus",
                     mask=mask) for t in taus]
    rep2 = residual_decay(bad)
    assert not rep2["pass"]


def test_decay_all_zero_sentinel(square96):
    g = square96
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    sols = [build_cgo(g, ph, amp, tau=t, q=np.zeros(g.num_nodes))
            for t in (8.0, 16.0, 32.0, 64.0)]
    rep = residual_decay(sols)
    assert rep["pass"] and rep["slope"] == float("-inf")


def test_decay_validation(square96):
    g = square96
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    sols = [build_cgo(g, ph, amp, tau=t, q=np.zeros(g.num_nodes))
            for t in (8.0, 16.0, 32.0)]
    with pytest.raises(ValueError):
        residual_decay(sols)
    sols = [build_cgo(g, ph, amp, tau=t, q=np.zeros(g.num_nodes))
            for t in (8.0, 16.0, 24.0, 40.0)]
    with pytest.raises(ValueError):
        residual_decay(sols)


def test_spherical_decay_small():
    # same decay trend as the linear family; the tau range stays below the
    # resolution ceiling (layer width ~ r/tau vs the radial spacing)
    ball = discretize_domain({"shape": "ball", "center": (1.6, 0, 0), "radius": 0.8}, 16)
    ph = make_phase("log_spherical", grid=ball, sign=1.0)
    amp = transport_amplitude(ph, Profile.constant(1.0), grid=ball)
    mask = halfspace_mask(ball, None, reference=np.zeros(3))
    q = 40.0 * np.exp(-np.sum((ball.coords - np.array([1.6, 0, 0]))**2, axis=1)
                      / (2 * 0.35**2))
    sols = [build_cgo(ball, ph, amp, tau=t, q=q, vanish_label="Gamma_minus",
                      mask=mask) for t in (4.0, 8.0, 16.0, 32.0)]
    norms = [s.remainder_norm for s in sols]
    assert norms[-1] <= 0.5 * norms[0]
    assert all(n1 <= 1.05 * n0 for n0, n1 in zip(norms, norms[1:]))


def test_r_tau_and_intertwining(rng):
    g = discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}, 192)
    z0 = 0.15 + 0.1j
    ph = make_phase("two_d", f=lambda z: (z - z0) ** 2 / 2, df=lambda z: z - z0,
                    d2f=lambda z: 1 + 0 * z, critical_points=[z0])
    zz = g.coords[:, 0] + 1j * g.coords[:, 1]
    r2 = np.abs(zz - (0.5 + 0.4j)) ** 2
    cut = np.clip((0.3**2 - r2) / (0.3**2 - 0.2**2), 0, 1)
    gf = ComplexField(g, (np.exp(-r2 / (2 * 0.1**2)) * cut * cut * (3 - 2 * cut)).astype(complex))
    zero = ComplexField(g, np.zeros(g.num_nodes, complex))
    assert np.max(np.abs(r_tau(zero, ph, 16.0, "R").values)) == 0.0
    for tau in (8.0, 16.0, 32.0, 64.0):
        assert intertwining_residual(gf, ph, tau) <= 1e-5
    norms = []
    for tau in (4.0, 8.0, 16.0, 32.0):
        R = r_tau(gf, ph, tau, "R")
        norms.append(np.sqrt(np.sum(g.interior_weights * np.abs(R.values) ** 2)))
    assert all(n1 <= 1.02 * n0 for n0, n1 in zip(norms, norms[1:]))
    assert norms[-1] <= 0.5 * norms[0]


def test_overflow_guard(square96):
    ph = make_phase("linear2d")
    with pytest.raises(Refusal):
        overflow_guard(ph, square96, 1e4)
    amp = transport_amplitude(ph, Profile.constant(1.0))
    sol = build_cgo(square96, ph, amp, tau=8.0, q=np.zeros(square96.num_nodes))
    raw = sol.raw_values()   # tau max|phi| = 8, fine
    assert np.isfinite(raw).all()


def test_linear3d_decay_small():
    # the 3-D family on a small box; tau kept under the resolution ceiling
    g = discretize_domain({"shape": "box", "extents": [(-1, 1), (-1, 1), (-1, 1)],
                           "resolutions": [20, 20, 20]}, 8)
    mask = halfspace_mask(g, np.array([0.0, 0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))
    ph = make_phase("linear3d", theta=0.5)
    amp = transport_amplitude(ph, Profile.gaussian(0.0, 0.5, 1.0))
    q = 50.0 * np.exp(-np.sum(g.coords**2, axis=1) / (2 * 0.45**2))
    sols = [build_cgo(g, ph, amp, tau=t, q=q, vanish_label="Gamma_minus",
                      mask=mask) for t in (4.0, 8.0, 16.0, 32.0)]
    rep = residual_decay(sols, final_factor=0.5)
    assert rep["pass"], rep
