import numpy as np
import pytest

from cw.cgo import Profile, build_cgo, make_phase, transport_amplitude
from cw.errors import Refusal
from cw.grid import discretize_domain, halfspace_mask
from cw.probe import (assemble_P, correlation, end_to_end_demo,
                      hemisphere_funk_probe, orthogonality_residual,
                      reconstruct_difference, synthetic_green_residual)
from cw.transforms.radon import _plane_grid, radon_forward, x3_moments


@pytest.fixture(scope="module")
def slab96():
    return discretize_domain({"shape": "box",
                              "extents": [(-1.5, 1.5), (-1.5, 1.5), (-1, 1)],
                              "resolutions": [96, 96, 32]}, 8)


def qdiff_fn(pts):
    pts = np.atleast_2d(pts)
    r2 = (pts[:, 0] - 0.2) ** 2 + np.sum(pts[:, 1:] ** 2, axis=1)
    cut = np.clip((0.9**2 - r2) / (0.9**2 - 0.7**2), 0, 1)
    return 3.0 * np.exp(-r2 / (2 * 0.3**2)) * cut * cut * (3 - 2 * cut)


@pytest.fixture(scope="module")
def pfun(slab96):
    angles = np.linspace(0, np.pi, 120, endpoint=False)
    offsets = np.linspace(-1.4, 1.4, 192)
    zax = 0.04 * (np.arange(5) - 2)
    return assemble_P(slab96, qdiff_fn(slab96.coords), zax, zax,
                      angles, offsets), angles, offsets


def test_zero_difference_gives_zero_P(slab96):
    zax = np.array([0.0])
    P = assemble_P(slab96, np.zeros(slab96.num_nodes), zax, zax,
                   np.linspace(0, np.pi, 4, endpoint=False), np.linspace(-1, 1, 8))
    assert np.max(np.abs(P.values)) == 0.0


def test_cross_path_z0(slab96, pfun):
    P, angles, offsets = pfun
    plane, moms = x3_moments(slab96, qdiff_fn(slab96.coords), 0)
    sino = radon_forward(plane, np.real(moms[0]), angles, offsets)
    assert np.max(np.abs(P.at_z_zero() - sino.values)) <= 1e-8


def test_holomorphy_surrogate(pfun):
    P, _, _ = pfun
    assert P.holomorphy_defect() <= 1e-6


def test_imaginary_z_gaussian_oracle(slab96):
    from cw.probe import _slab_r_z
    sig = 0.25

    def qsep(pts):
        b = np.exp(-((pts[:, 0] - 0.2) ** 2 + pts[:, 1] ** 2) / (2 * 0.3**2))
        supp = (np.hypot(pts[:, 0] - 0.2, pts[:, 1]) < 1.0) & (np.abs(pts[:, 2]) < 0.95)
        return b * np.exp(-pts[:, 2] ** 2 / (2 * sig**2)) * supp

    qv = qsep(slab96.coords)
    _, r0 = _slab_r_z(slab96, qv, 0.0)
    for t in (0.5, 1.0):
        _, rz = _slab_r_z(slab96, qv, 1j * t)
        ratio = np.max(np.abs(rz)) / np.max(np.abs(r0))
        assert abs(ratio - np.exp(t**2 * sig**2 / 2)) <= 1e-3


def test_z_guard_refusal(slab96):
    big = np.array([15.0])
    with pytest.raises(Refusal):
        assemble_P(slab96, qdiff_fn(slab96.coords), big, big,
                   np.linspace(0, np.pi, 4, endpoint=False), np.linspace(-1, 1, 8))


def test_reconstruction_round_trip(slab96, pfun):
    P, _, _ = pfun
    plane, moms = x3_moments(slab96, qdiff_fn(slab96.coords), 0)
    rec = reconstruct_difference(P, plane)
    corr = correlation(rec["r0"], np.real(moms[0]), plane.interior_weights)
    assert corr >= 0.95


def test_moment_slab_parity(slab96):
    # int rho dx3 = 0 but the first moment is recovered through the chain
    X = slab96.coords
    qodd = (X[:, 2] * np.exp(-((X[:, 0] - 0.2) ** 2 + X[:, 1] ** 2) / (2 * 0.3**2))
            * np.exp(-X[:, 2] ** 2 / (2 * 0.3**2))
            * (np.abs(X[:, 2]) < 0.9) * (np.hypot(X[:, 0] - 0.2, X[:, 1]) < 1.2))
    angles = np.linspace(0, np.pi, 100, endpoint=False)
    offsets = np.linspace(-1.4, 1.4, 128)
    from cw.transforms.radon import moment_radon_sequence
    seq = moment_radon_sequence(slab96, qodd, 1, angles, offsets)
    zax = np.array([0.0])
    P = assemble_P(slab96, qodd, zax, zax, seq_angles := angles[::max(1, angles.size // 100)], offsets)
    plane, moms = x3_moments(slab96, qodd, 1)
    rec = reconstruct_difference(P, plane, moment_line_data=seq.line_data,
                                 x3_extent=(-1, 1), k_max=1)
    # r0 reconstruction is (near) zero
    assert np.max(np.abs(rec["r0"])) <= 0.02 * np.max(np.abs(np.imag(moms[1])))
    corr1 = correlation(np.imag(rec["moments"][1]), np.imag(moms[1]),
                        plane.interior_weights)
    assert corr1 >= 0.9


@pytest.fixture(scope="module")
def green_setup():
    g2 = discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]}, 64)
    mask = halfspace_mask(g2, np.array([0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))
    q1 = 1.5 * np.exp(-np.sum(g2.coords**2, axis=1) / (2 * 0.3**2))
    q2 = q1 + 2.0 * np.exp(-((g2.coords[:, 0] + 0.3) ** 2
                             + g2.coords[:, 1] ** 2) / (2 * 0.2**2))
    return g2, mask, q1, q2


def test_orthogonality_zero_for_equal_potentials(green_setup):
    g2, mask, q1, _ = green_setup
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    u1 = build_cgo(g2, ph, amp, tau=8.0, q=q1, vanish_label="Gamma_minus", mask=mask)
    v = build_cgo(g2, ph.negated(), amp, tau=8.0, q=q1,
                  vanish_label="Gamma_plus", mask=mask)
    assert abs(orthogonality_residual(g2, q1, q1, u1, v)) <= 1e-10


def test_orthogonality_negative_control(green_setup):
    g2, mask, q1, q2 = green_setup
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    u1 = build_cgo(g2, ph, amp, tau=8.0, q=q1, vanish_label="Gamma_minus", mask=mask)
    v = build_cgo(g2, ph.negated(), amp, tau=8.0, q=q2,
                  vanish_label="Gamma_plus", mask=mask)
    assert abs(orthogonality_residual(g2, q1, q2, u1, v)) >= 1e-4


def test_orthogonality_phase_guard(green_setup):
    g2, mask, q1, q2 = green_setup
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    u1 = build_cgo(g2, ph, amp, tau=60.0, q=q1, vanish_label="Gamma_minus", mask=mask)
    v = build_cgo(g2, ph, amp, tau=60.0, q=q2,
                  vanish_label="Gamma_plus", mask=mask)   # same sign: no cancel
    with pytest.raises(Refusal):
        orthogonality_residual(g2, q1, q2, u1, v)


def test_green_cancellation(green_setup):
    g2, mask, q1, q2 = green_setup
    rng = np.random.default_rng(1)
    nb = g2.boundary_indices.size
    for _ in range(4):
        u1b = rng.standard_normal(nb)
        u1b[mask.local("Gamma_minus")] = 0.0
        vb = rng.standard_normal(nb)
        vb[mask.local("Gamma_plus")] = 0.0
        rep = synthetic_green_residual(g2, q1, q2, mask, u1b, vb, 1e-8)
        assert rep["relative"] <= 10 * 1e-8


def test_green_trace_gates(green_setup):
    g2, mask, q1, q2 = green_setup
    nb = g2.boundary_indices.size
    with pytest.raises(Refusal):
        synthetic_green_residual(g2, q1, q2, mask, np.ones(nb), np.zeros(nb))


def test_hemisphere_probe():
    def qd(pts):
        r = np.linalg.norm(pts - np.array([0, 0, 2.0]), axis=1)
        return np.exp(-((r - 0.4) / 0.15) ** 2 / 2) * (r < 0.8)

    rep = hemisphere_funk_probe(qd, np.array([0, 0, 2.0]), 0.9,
                                n_theta=32, band=12)
    assert rep["correlation"] >= 0.9
    assert rep["moment_defect"] <= 1e-5
    with pytest.raises(Refusal):
        hemisphere_funk_probe(qd, np.array([0, 0, 0.5]), 0.9)
