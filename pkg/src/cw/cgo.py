"""Complex geometric optics solutions: phases, transport amplitudes, the
R_tau operators, and the weighted least-squares remainder solve.

Everything tau-weighted is computed in the conjugated gauge w_hat =
e^{-(tau+iz) Phi} u, so the linear algebra never materializes e^{tau phi};
for z = 0 the recorded gauge norms coincide with the e^{-tau phi}-weighted
norms.  The conjugated operator uses the analytic phase derivatives, with
the (tau+iz)^2 (grad Phi, grad Phi) term cancelled exactly by the eikonal
identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .carleman import CarlemanWeight, catalog_weight, eikonal_residual
from .cauchy import CauchyKernelConfig, cauchy_transform, composite_identity_residual
from .elliptic import EllipticProblem, operator_rows
from .errors import Refusal
from .grid import ComplexField, Grid, SubboundaryMask

__all__ = ["Phase", "Profile", "Amplitude", "make_phase", "transport_amplitude",
           "r_tau", "intertwining_residual", "solve_remainder", "build_cgo",
           "residual_decay", "CGOSolution", "separation_margin",
           "overflow_guard"]

OVERFLOW_EXPONENT = 600.0


# -- phases ---------------------------------------------------------------------


@dataclass
class Phase:
    weight: CarlemanWeight
    kind: str
    params: dict = field(default_factory=dict)
    critical_points: list = field(default_factory=list)

    def Phi(self, X: np.ndarray) -> np.ndarray:
        return self.weight.phi(X) + 1j * self.weight.psi(X)

    def grad_Phi(self, X: np.ndarray) -> np.ndarray:
        return self.weight.grad_phi(X) + 1j * self.weight.grad_psi(X)

    def lap_Phi(self, X: np.ndarray) -> np.ndarray:
        lp = self.weight.lap_phi(X)
        if self.weight.hess_psi is not None:
            return lp + 1j * self.weight.lap_psi(X)
        if self.kind.startswith("linear"):
            return lp + 0j
        if self.kind == "log_spherical":
            # Delta(ln r) = 1/r^2, Delta(theta) = cot(theta)/r^2
            r2 = np.sum(X**2, axis=1)
            rho = np.hypot(X[:, 0], X[:, 1])
            cot = X[:, 2] / rho
            return 1.0 / r2 + 1j * self.params.get("sign", 1.0) * cot / r2
        raise ValueError("no Laplacian evaluator for this phase kind")

    def negated(self) -> "Phase":
        base = self.weight

        def neg_hess(fn):
            return (lambda X: -fn(X)) if fn is not None else None

        w = CarlemanWeight(kind=base.kind, dim=base.dim,
                           phi=lambda X: -base.phi(X),
                           grad_phi=lambda X: -base.grad_phi(X),
                           hess_phi=lambda X: -base.hess_phi(X),
                           psi=(lambda X: -base.psi(X)) if base.psi else None,
                           grad_psi=(lambda X: -base.grad_psi(X)) if base.grad_psi else None,
                           hess_psi=neg_hess(base.hess_psi),
                           critical_points=base.critical_points,
                           admissible=base.admissible,
                           params={"negated": base.kind})
        return Phase(weight=w, kind=self.kind,
                     params={**self.params, "negated": True},
                     critical_points=self.critical_points)

    def check_eikonal(self, points: np.ndarray, tol: float = 1e-12) -> float:
        res = eikonal_residual(self.weight, points)["full"]
        if res > tol:
            raise Refusal("phase does not satisfy the eikonal equation",
                          detail={"residual": res})
        return res


def separation_margin(grid: Grid) -> float:
    """Distance from the origin to the closed domain (plane-separation)."""
    if grid.chart in ("polar", "spherical"):
        c = np.asarray(grid.meta["center"])
        return float(np.linalg.norm(c) - grid.meta["radius"])
    ext = grid.meta["extents"]
    clamped = [min(max(0.0, lo), hi) for lo, hi in ext]
    return float(np.linalg.norm(clamped))


def make_phase(kind: str, grid: Grid | None = None, **params) -> Phase:
    """Phase catalog.

    kinds: 'linear3d' (theta; Phi = x3 + i(cos t x1 + sin t x2)),
    'linear2d' (Phi = x2 + i x1), 'log_spherical' (sign; Phi = ln r +-
    i theta, needs the domain separated from the origin by a plane),
    'two_d' (holomorphic f/df/d2f with critical points).
    """
    if kind == "linear3d":
        th = float(params.get("theta", 0.0))
        w = catalog_weight("linear", v1=[0.0, 0.0, 1.0],
                           v2=[np.cos(th), np.sin(th), 0.0])
        return Phase(w, kind, {"theta": th})
    if kind == "linear2d":
        w = catalog_weight("linear", v1=[0.0, 1.0], v2=[1.0, 0.0])
        return Phase(w, kind, {})
    if kind == "log_spherical":
        sign = float(params.get("sign", 1.0))
        if grid is not None and separation_margin(grid) <= 0:
            raise Refusal("domain is not separated from the origin by a plane",
                          detail={"margin": separation_margin(grid)})
        w = catalog_weight("log_radial", sign=sign)
        return Phase(w, kind, {"sign": sign})
    if kind == "two_d":
        w = catalog_weight("two_d_holomorphic", **params)
        return Phase(w, kind, {"name": params.get("name", "custom")},
                     critical_points=w.critical_points)
    raise ValueError(f"unknown phase kind {kind!r}")


def overflow_guard(phase: Phase, grid: Grid, tau: float) -> None:
    mx = float(np.max(np.abs(phase.weight.phi(grid.coords))))
    if tau * mx > OVERFLOW_EXPONENT:
        raise Refusal("raw e^{tau phi} values would overflow; stay in the "
                      "conjugated gauge", detail={"tau_phi_max": tau * mx})


# -- profiles and amplitudes -----------------------------------------------------


@dataclass
class Profile:
    """Scalar profile with first and second derivative evaluators (entire
    expressions, usable on complex arguments)."""

    f: callable
    d1: callable
    d2: callable
    name: str = "custom"

    @staticmethod
    def constant(c=1.0) -> "Profile":
        return Profile(lambda s: c + 0 * s, lambda s: 0 * s, lambda s: 0 * s,
                       name=f"const:{c}")

    @staticmethod
    def linear(a=1.0, b=0.0) -> "Profile":
        return Profile(lambda s: a * s + b, lambda s: a + 0 * s,
                       lambda s: 0 * s, name="linear")

    @staticmethod
    def gaussian(center=0.0, width=0.3, amp=1.0) -> "Profile":
        w2 = width**2

        def f(s):
            return amp * np.exp(-((s - center) ** 2) / (2 * w2))

        return Profile(f,
                       lambda s: f(s) * (-(s - center) / w2),
                       lambda s: f(s) * (((s - center) / w2) ** 2 - 1.0 / w2),
                       name=f"gauss:{center}:{width}:{amp}")

    @staticmethod
    def cosine(k=1.0) -> "Profile":
        return Profile(lambda s: np.cos(k * s), lambda s: -k * np.sin(k * s),
                       lambda s: -k * k * np.cos(k * s), name=f"cos:{k}")


@dataclass
class Amplitude:
    tag: str                        # profile_g | linear2d | spherical_transport | magnetic
    a: callable                     # (m, d) -> complex values
    grad_a: callable
    lap_a: callable
    a_m1: object = None             # optional next-order amplitude (Amplitude)
    mag_phase: np.ndarray | None = None   # nodal script-A values (magnetic)
    meta: dict = field(default_factory=dict)


def transport_amplitude(phase: Phase, profile: Profile,
                        A: np.ndarray | None = None,
                        grid: Grid | None = None,
                        check_points: np.ndarray | None = None,
                        tol: float = 1e-8) -> Amplitude:
    """Amplitude solving the transport equation of the phase family.

    linear3d: a = b(sin t x1 - cos t x2); linear2d: a = b(x1 - i x2)
    (entire profile, Lap a = 0); log_spherical: a = r^{-1/2}
    (sin theta)^{-1/2} a0(azimuth); magnetic (linear3d + A): a multiplied
    by e^{script A} with 4 d_{z_theta}(script A) = -(A, grad Phi).
    The defining residual is evaluated with the closed-form gradients.
    """
    if phase.kind == "linear3d" and A is None:
        th = phase.params["theta"]
        wvec = np.array([np.sin(th), -np.cos(th), 0.0])

        def a(X):
            return profile.f(X @ wvec) + 0j

        def grad_a(X):
            return profile.d1(X @ wvec)[:, None] * wvec[None, :] + 0j

        def lap_a(X):
            return profile.d2(X @ wvec) + 0j

        amp = Amplitude("profile_g", a, grad_a, lap_a,
                        meta={"profile": profile.name})
    elif phase.kind == "linear2d" and A is None:
        def zbar(X):
            return X[:, 0] - 1j * X[:, 1]

        def a(X):
            return profile.f(zbar(X))

        def grad_a(X):
            d = profile.d1(zbar(X))
            return np.stack([d, -1j * d], axis=1)

        def lap_a(X):
            return np.zeros(X.shape[0], dtype=complex)

        amp = Amplitude("linear2d", a, grad_a, lap_a,
                        meta={"profile": profile.name})
    elif phase.kind == "log_spherical":
        if grid is not None:
            # singular set of the amplitude: the polar axis {x1 = x2 = 0}
            if grid.chart in ("spherical", "polar"):
                c = np.asarray(grid.meta["center"])
                axis_dist = float(np.hypot(c[0], c[1])) - grid.meta["radius"]
            else:
                rho = np.hypot(grid.coords[:, 0], grid.coords[:, 1])
                axis_dist = float(np.min(rho)) - 2 * max(grid.spacing)
            if axis_dist <= 0:
                raise Refusal("the polar axis meets the domain; spherical "
                              "amplitude is singular there",
                              detail={"axis_margin": axis_dist})

        def sph(X):
            r = np.linalg.norm(X, axis=1)
            rho = np.hypot(X[:, 0], X[:, 1])
            s = rho / r
            az = np.arctan2(X[:, 1], X[:, 0])
            return r, rho, s, az

        def a(X):
            r, rho, s, az = sph(X)
            return r**-0.5 * s**-0.5 * profile.f(az) + 0j

        def grad_a(X):
            r, rho, s, az = sph(X)
            c = X[:, 2] / r
            f0, f1 = profile.f(az), profile.d1(az)
            rhat = X / r[:, None]
            that = np.stack([c * np.cos(az), c * np.sin(az), -s], axis=1)
            phat = np.stack([-np.sin(az), np.cos(az), 0 * az], axis=1)
            fr = -0.5 * r**-1.5 * s**-0.5 * f0
            ft = r**-0.5 * (-0.5) * s**-1.5 * c * f0 / r
            fp = r**-0.5 * s**-0.5 * f1 / (r * s)
            return (fr[:, None] * rhat + ft[:, None] * that
                    + fp[:, None] * phat) + 0j

        def lap_a(X):
            r, rho, s, az = sph(X)
            c = X[:, 2] / r
            f0, f2 = profile.f(az), profile.d2(az)
            return (r**-2.5 * (0.25 * s**-0.5 * f0
                               + 0.25 * s**-2.5 * c**2 * f0
                               + s**-2.5 * f2)) + 0j

        amp = Amplitude("spherical_transport", a, grad_a, lap_a,
                        meta={"profile": profile.name})
    elif phase.kind == "linear3d" and A is not None:
        th = phase.params["theta"]
        wvec = np.array([np.sin(th), -np.cos(th), 0.0])
        omega = np.array([np.cos(th), np.sin(th)])
        if grid is None:
            raise ValueError("magnetic amplitude needs the grid")
        X = grid.coords
        gPhi = phase.grad_Phi(X)
        # For Phi = x3 + i(omega, x') the directional derivative factors as
        # (grad Phi, grad F) = 2 d/d(zbar_theta) F with z_theta = x3 +
        # i(omega, x') (functions of z_theta itself are annihilated, being
        # proportional to grad Phi under the bilinear pairing).  The
        # amplitude factor solves 4 d/d(zbar_theta) script = -(A, grad Phi).
        rhs = -np.sum(A * gPhi, axis=1)
        zbar_theta = X[:, 2] - 1j * (X[:, :2] @ omega)
        if np.allclose(A, A[0]):
            script = (rhs[0] / 4.0) * zbar_theta
            gzbar = np.array([-1j * omega[0], -1j * omega[1], 1.0])
            script_grad = np.broadcast_to((rhs[0] / 4.0) * gzbar,
                                          (X.shape[0], 3)).copy()
        else:
            script, script_grad = _magnetic_script(grid, phase, A)

        vals = profile.f(X @ wvec) * np.exp(script)
        grads = (profile.d1(X @ wvec)[:, None] * wvec[None, :]
                 + profile.f(X @ wvec)[:, None] * script_grad) * np.exp(script)[:, None]

        amp = Amplitude("magnetic",
                        a=lambda Xq: _nodal_or_fail(grid, Xq, vals),
                        grad_a=lambda Xq: _nodal_or_fail(grid, Xq, grads),
                        lap_a=None, mag_phase=script,
                        meta={"profile": profile.name,
                              "constant_A": bool(np.allclose(A, A[0]))})
    else:
        raise ValueError(f"no transport amplitude for phase kind {phase.kind!r}")

    if check_points is not None:
        res = transport_residual(phase, amp, check_points, A=A)
        scale = max(float(np.max(np.abs(amp.a(check_points)))), 1e-300)
        limit = tol if amp.tag != "magnetic" else max(tol, 1e-4)
        if res > limit * scale:
            raise Refusal("transport equation residual too large",
                          detail={"residual": res, "scale": scale})
        amp.meta["transport_residual"] = res
    return amp


def _nodal_or_fail(grid, Xq, vals):
    if Xq.shape[0] != grid.num_nodes or not np.allclose(Xq, grid.coords):
        raise ValueError("magnetic amplitude is nodal; evaluate on its grid")
    return vals


def _magnetic_script(grid: Grid, phase: Phase, A: np.ndarray):
    """Slice-wise Cauchy solve of 4 d_{zbar_theta} script = -(A, grad Phi).

    At theta = 0 every x2 = const slice of a box grid is an exact plane
    chart for z_theta = x3 + i x1, so the quarter-rhs is inverted by the
    2-D dzbar^{-1} slice by slice.  The Cartesian gradient is rebuilt from
    the known d_{zbar} (the rhs) and a spectral d_z of the potential.
    """
    if grid.chart != "cartesian" or grid.dimension != 3:
        raise Refusal("variable-A magnetic amplitude implemented on box grids",
                      detail={"chart": grid.chart})
    if abs(phase.params["theta"]) > 1e-12:
        raise Refusal("variable-A magnetic amplitude implemented for theta = 0",
                      detail={"theta": phase.params["theta"]})
    from .cauchy import spectral_dz
    from .grid import discretize_domain
    X = grid.coords
    gPhi = phase.grad_Phi(X)
    rhs_n = -0.25 * np.sum(A * gPhi, axis=1)
    n1, n2, n3 = grid.meta["axis_nodes"]
    ext = grid.meta["extents"]
    aux = discretize_domain({"shape": "rectangle",
                             "extents": [ext[2], ext[0]],
                             "resolutions": [n3 - 1, n1 - 1]}, 8)
    script = np.zeros(grid.num_nodes, dtype=complex)
    dscript = np.zeros((grid.num_nodes, 3), dtype=complex)
    rhs3 = rhs_n.reshape(n1, n2, n3)
    for j2 in range(n2):
        plane = rhs3[:, j2, :].T.ravel()   # (x3, x1) ordering: z = x3 + i x1
        pot = cauchy_transform(ComplexField(aux, plane), "dzbar_inverse")
        dz_pot = spectral_dz(pot).values
        sc = pot.values.reshape(n3, n1).T
        dzv = dz_pot.reshape(n3, n1).T
        dzbv = rhs3[:, j2, :]
        flat = (np.arange(n1)[:, None] * n2 + j2) * n3 + np.arange(n3)[None, :]
        script.reshape(-1)[flat.ravel()] = sc.ravel()
        # d/dx3 = d_z + d_zbar ; d/dx1 = i (d_z - d_zbar)
        dscript.reshape(-1, 3)[flat.ravel(), 0] = (1j * (dzv - dzbv)).ravel()
        dscript.reshape(-1, 3)[flat.ravel(), 2] = (dzv + dzbv).ravel()
    return script, dscript


def transport_residual(phase: Phase, amp: Amplitude, points: np.ndarray,
                       A: np.ndarray | None = None) -> float:
    """max |2 (grad Phi, grad a) + Lap Phi a (+ (A, grad Phi) a)|."""
    X = np.atleast_2d(points)
    ok = phase.weight.ok(X)
    X = X[ok]
    gPhi = phase.grad_Phi(X)
    if amp.tag == "magnetic":
        ga = amp.grad_a(X)
        av = amp.a(X)
        term = 2 * np.sum(gPhi * ga, axis=1)
        term = term + np.sum(A[ok] * gPhi, axis=1) * av
        return float(np.max(np.abs(term), initial=0.0))
    ga = amp.grad_a(X)
    av = amp.a(X)
    res = 2 * np.sum(gPhi * ga, axis=1) + phase.lap_Phi(X) * av
    return float(np.max(np.abs(res), initial=0.0))


# -- R_tau operators --------------------------------------------------------------


def r_tau(fld: ComplexField, phase: Phase, tau: float,
          orientation: str = "R", config: CauchyKernelConfig | None = None) -> ComplexField:
    """R_tau g = 1/2 e^{2 i tau psi} dzbar^{-1}(g e^{-2 i tau psi}) and the
    mirrored Rt_tau (orientation 'Rt'); psi = Im Phi, so every factor is
    unimodular and no e^{tau phi} is ever materialized."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    grid = fld.grid
    psi = phase.weight.psi(grid.coords)
    osc = np.exp(2j * tau * psi)
    if orientation == "R":
        inner = ComplexField(grid, fld.values / osc)
        out = cauchy_transform(inner, "dzbar_inverse", config)
        return ComplexField(grid, 0.5 * osc * out.values)
    if orientation == "Rt":
        inner = ComplexField(grid, fld.values * osc)
        out = cauchy_transform(inner, "dz_inverse", config)
        return ComplexField(grid, 0.5 * out.values / osc)
    raise ValueError("orientation must be 'R' or 'Rt'")


def intertwining_residual(fld: ComplexField, phase: Phase, tau: float,
                          config: CauchyKernelConfig | None = None,
                          collar_cells: int = 3) -> float:
    """Gauge-normalized residual of 2 d_z (e^{tau Phi} Rt_tau g) = g e^{tau Phi}.

    The exact reduction e^{-tau Phi} 2 d_z(e^{tau Phi} Rt_tau g) =
    e^{-2 i tau psi} d_z d_z^{-1}(g e^{2 i tau psi}) turns the check into
    the left-inverse identity for the modulated density; reported as the
    max residual over the collar-shrunk interior, relative to max |g|.
    """
    grid = fld.grid
    psi = phase.weight.psi(grid.coords)
    G = ComplexField(grid, fld.values * np.exp(2j * tau * psi))
    resid = composite_identity_residual(G, "dz_inverse", config)
    n1, n2 = grid.meta["axis_nodes"]
    idx = np.arange(grid.num_nodes)
    i1, i2 = np.unravel_index(idx, (n1, n2))
    inner = ((i1 >= collar_cells) & (i1 < n1 - collar_cells)
             & (i2 >= collar_cells) & (i2 < n2 - collar_cells))
    scale = max(float(np.max(np.abs(fld.values))), 1e-300)
    return float(np.max(np.abs(resid.values[inner])) / scale)


# -- remainder solve and assembly --------------------------------------------------


@dataclass
class RemainderResult:
    w_hat: np.ndarray
    norm: float                  # || w_hat ||_{L^2, quadrature}
    residual: float              # || P (a + w_hat) ||_{L^2, quadrature}
    meta: dict = field(default_factory=dict)


def conjugated_operator(grid: Grid, phase: Phase, tau: float, z: complex,
                        q: np.ndarray | None, A: np.ndarray | None) -> sp.csr_matrix:
    """P = e^{-(tau+iz) Phi} L (e^{(tau+iz) Phi} .) with the eikonal
    identity applied analytically: Lap + (2 s grad Phi + A, grad) +
    (s Lap Phi + s (A, grad Phi) + q), s = tau + iz."""
    X = grid.coords
    s = tau + 1j * z
    gPhi = phase.grad_Phi(X)
    drift = 2 * s * gPhi
    pot = s * phase.lap_Phi(X)
    if A is not None:
        drift = drift + A
        pot = pot + s * np.sum(A * gPhi, axis=1)
    if q is not None:
        pot = pot + q
    prob = EllipticProblem(grid, "magnetic", q=pot.astype(complex),
                           A=drift.astype(complex),
                           dirichlet=np.zeros(grid.boundary_indices.size))
    return operator_rows(prob)


def solve_remainder(grid: Grid, phase: Phase, tau: float, z: complex,
                    amplitude_values: np.ndarray,
                    q: np.ndarray | None = None, A: np.ndarray | None = None,
                    vanish_nodes: np.ndarray | None = None,
                    mu: float | None = None,
                    rhs_extra: np.ndarray | None = None,
                    boundary_values: np.ndarray | None = None) -> RemainderResult:
    """Tikhonov remainder solve in the conjugated gauge.

    minimizes ||w||_W^2 + mu ||P(a + w)||_W^2 over nodal w with w = -a
    enforced exactly on ``vanish_nodes`` (Dirichlet lift); mu defaults to
    tau^2.  ``rhs_extra``/``boundary_values`` override the defect and lift
    for manufactured problems.
    """
    mu = tau**2 if mu is None else mu
    P = conjugated_operator(grid, phase, tau, z, q, A)
    ii = grid.interior_indices
    w_all = grid.interior_weights
    Pi = P[ii]
    defect = Pi @ amplitude_values
    if rhs_extra is not None:
        defect = defect + rhs_extra[ii]
    g_target = -defect
    N = grid.num_nodes
    if vanish_nodes is None:
        vanish_nodes = np.empty(0, dtype=int)
    lift = np.zeros(N, dtype=complex)
    if vanish_nodes.size:
        if boundary_values is None:
            lift[vanish_nodes] = -amplitude_values[vanish_nodes]
        else:
            lift[vanish_nodes] = boundary_values
    free = np.setdiff1d(np.arange(N), vanish_nodes)
    Wf = sp.diags(w_all[free])
    Wi = sp.diags(w_all[ii])
    Pf = Pi[:, free].tocsc()
    rhs_resid = g_target - Pi[:, vanish_nodes] @ lift[vanish_nodes]
    M = (Wf + mu * (Pf.conj().T @ Wi @ Pf)).tocsc()
    b = mu * (Pf.conj().T @ (Wi @ rhs_resid))
    lu = spla.splu(M)
    x = lu.solve(np.asarray(b.todense()).ravel() if sp.issparse(b) else b)
    w_hat = lift.copy()
    w_hat[free] = x
    norm = float(np.sqrt(np.sum(w_all * np.abs(w_hat) ** 2)))
    full_resid = Pi @ (amplitude_values + w_hat)
    if rhs_extra is not None:
        full_resid = full_resid + rhs_extra[ii]
    residual = float(np.sqrt(np.sum(w_all[ii] * np.abs(full_resid) ** 2)))
    return RemainderResult(w_hat=w_hat, norm=norm, residual=residual,
                           meta={"mu": mu, "tau": tau, "z": complex(z),
                                 "free_nodes": int(free.size)})


@dataclass
class CGOSolution:
    phase: Phase
    amplitude: Amplitude
    tau: float
    z: complex
    vanish_label: str | None
    w_hat: np.ndarray               # gauge remainder e^{-(tau+iz)Phi} w
    amplitude_values: np.ndarray
    weighted_residual: float
    remainder_norm: float
    grid: Grid = None
    meta: dict = field(default_factory=dict)

    def gauge_values(self) -> np.ndarray:
        """e^{-(tau+iz) Phi} u = a + w_hat."""
        return self.amplitude_values + self.w_hat

    def raw_values(self) -> np.ndarray:
        overflow_guard(self.phase, self.grid, self.tau)
        X = self.grid.coords
        return np.exp((self.tau + 1j * self.z) * self.phase.Phi(X)) * self.gauge_values()

    def boundary_vanishing_defect(self, mask: SubboundaryMask) -> float:
        """max |a + w_hat| over the tagged subboundary (the e^{tau phi}
        gauge version of the nodal vanishing requirement)."""
        if self.vanish_label is None:
            return 0.0
        nodes = mask.nodes(self.vanish_label)
        return float(np.max(np.abs(self.gauge_values()[nodes]), initial=0.0))


def build_cgo(grid: Grid, phase: Phase, amplitude: Amplitude, tau: float,
              q: np.ndarray | None = None, A: np.ndarray | None = None,
              z: complex = 0.0, vanish_label: str | None = None,
              mask: SubboundaryMask | None = None,
              mu: float | None = None) -> CGOSolution:
    """Assemble e^{(tau+iz) Phi}(a) + remainder with the remainder solve
    targeting -a on the tagged subboundary."""
    X = grid.coords
    ok = phase.weight.ok(X)
    if not np.all(ok):
        raise Refusal("grid contains nodes outside the phase's admissible region",
                      detail={"bad_nodes": int(np.sum(~ok))})
    a_vals = amplitude.a(X)
    vanish_nodes = None
    if vanish_label is not None:
        if mask is None:
            raise ValueError("vanish_label needs a SubboundaryMask")
        vanish_nodes = mask.nodes(vanish_label)
    rem = solve_remainder(grid, phase, tau, z, a_vals, q=q, A=A,
                          vanish_nodes=vanish_nodes, mu=mu)
    return CGOSolution(phase=phase, amplitude=amplitude, tau=tau, z=complex(z),
                       vanish_label=vanish_label, w_hat=rem.w_hat,
                       amplitude_values=a_vals,
                       weighted_residual=rem.residual,
                       remainder_norm=rem.norm, grid=grid,
                       meta={"mu": rem.meta["mu"]})


def residual_decay(solutions: list[CGOSolution], jitter: float = 0.05,
                   final_factor: float = 0.2) -> dict:
    """Decay verdict over a geometric tau family sharing everything else.

    PASS iff final remainder norm <= final_factor x initial and the
    sequence is monotone nonincreasing within the jitter; all-zero
    families pass with slope -inf.
    """
    if len(solutions) < 4:
        raise ValueError("need at least 4 tau values")
    taus = np.array([s.tau for s in solutions])
    order = np.argsort(taus)
    taus = taus[order]
    ratios = taus[1:] / taus[:-1]
    if np.max(np.abs(ratios - ratios[0])) > 1e-9 * ratios[0]:
        raise ValueError("tau values must form a geometric progression")
    key = {(s.phase.kind, s.z, s.vanish_label) for s in solutions}
    if len(key) != 1:
        raise ValueError("solutions must share phase kind, z, and vanish tag")
    norms = np.array([solutions[k].remainder_norm for k in order])
    if np.max(norms) == 0:
        return {"pass": True, "slope": float("-inf"), "norms": norms.tolist(),
                "taus": taus.tolist()}
    monotone = bool(np.all(norms[1:] <= (1 + jitter) * norms[:-1]))
    final_ok = bool(norms[-1] <= final_factor * norms[0])
    slope = float(np.polyfit(np.log(taus), np.log(np.maximum(norms, 1e-300)), 1)[0])
    return {"pass": monotone and final_ok, "slope": slope,
            "monotone": monotone, "final_ratio": float(norms[-1] / norms[0]),
            "norms": norms.tolist(), "taus": taus.tolist()}
