"""Stationary-phase evaluation with Hessian signature and boundary term,
plus decay checks for boundary oscillatory integrals.

The leading term of I(lam) = int_G g e^{i lam phi} dx over nondegenerate
critical points x~ is

    (2 pi / lam) sum_j g(x~_j) e^{i lam phi(x~_j) + i pi sgn(H)/4}
                 / sqrt(|det H_phi(x~_j)|),

with an optional boundary correction (1/(i lam)) oint g phi_nu / |grad
phi|^2 e^{i lam phi} when phi has no boundary critical points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Refusal

__all__ = ["StationaryPhaseResult", "stationary_phase", "find_critical_points",
           "oscillatory_boundary_decay", "direct_oscillatory_integral"]


@dataclass
class StationaryPhaseResult:
    lam: float
    direct: complex
    prediction: complex
    boundary_term: complex
    discrepancy: float
    quad_error_est: float
    critical_points: list
    signatures: list
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"lambda": self.lam,
                "direct_re": self.direct.real, "direct_im": self.direct.imag,
                "pred_re": self.prediction.real, "pred_im": self.prediction.imag,
                "boundary_re": self.boundary_term.real,
                "boundary_im": self.boundary_term.imag,
                "discrepancy": self.discrepancy}


def find_critical_points(phi_grad, phi_hess, domain: dict,
                         seeds: list | None = None, restarts: int = 10,
                         seed: int = 0, tol: float = 1e-12) -> list:
    """Newton on grad(phi) from analytic seeds plus random restarts,
    polished to |grad phi| <= tol; deduplicated."""
    rng = np.random.default_rng(seed)
    lo, hi = _domain_box(domain)
    starts = [np.asarray(s, float) for s in (seeds or [])]
    for _ in range(restarts):
        starts.append(rng.uniform(lo, hi))
    found = []
    for x in starts:
        x = x.copy()
        okrun = True
        for _ in range(60):
            gv = np.asarray(phi_grad(x[None, :])[0], float)
            if np.linalg.norm(gv) <= tol:
                break
            H = np.asarray(phi_hess(x[None, :])[0], float)
            try:
                step = np.linalg.solve(H, gv)
            except np.linalg.LinAlgError:
                okrun = False
                break
            x = x - step
            if np.linalg.norm(x) > 1e6:
                okrun = False
                break
        if not okrun or np.linalg.norm(phi_grad(x[None, :])[0]) > tol:
            continue
        if not _inside(domain, x):
            continue
        if all(np.linalg.norm(x - y) > 1e-8 for y in found):
            found.append(x)
    return found


def _domain_box(domain: dict):
    if domain["shape"] in ("rectangle", "box"):
        ext = domain["extents"]
        return (np.array([e[0] for e in ext]), np.array([e[1] for e in ext]))
    c = np.asarray(domain.get("center", (0.0, 0.0)), float)
    R = domain.get("radius", domain.get("outer_radius"))
    return c - R, c + R


def _inside(domain: dict, x: np.ndarray) -> bool:
    if domain["shape"] in ("rectangle", "box"):
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, domain["extents"]))
    c = np.asarray(domain.get("center", (0.0, 0.0)), float)
    r = np.linalg.norm(x - c)
    if domain["shape"] == "disk":
        return r <= domain["radius"]
    if domain["shape"] == "annulus":
        return domain["inner_radius"] <= r <= domain["outer_radius"]
    raise ValueError(f"unknown domain {domain['shape']!r}")


def direct_oscillatory_integral(g, phi, lam: float, domain: dict,
                                resolution: int) -> complex:
    """Lattice quadrature of int_G g e^{i lam phi}.

    Rectangles use the tensor midpoint lattice (superalgebraic for
    integrands decaying inside the box); disks/annuli use the polar
    midpoint cell rule.
    """
    if domain["shape"] == "rectangle":
        ext = domain["extents"]
        axes = [np.linspace(lo, hi, resolution, endpoint=False)
                + (hi - lo) / (2 * resolution) for lo, hi in ext]
        h = np.prod([(hi - lo) / resolution for lo, hi in ext])
        X1, X2 = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
        vals = g(pts) * np.exp(1j * lam * phi(pts))
        return complex(np.sum(vals) * h)
    c = np.asarray(domain.get("center", (0.0, 0.0)), float)
    r0 = domain.get("inner_radius", 0.0)
    r1 = domain.get("radius", domain.get("outer_radius"))
    nr, nt = resolution, 4 * resolution
    dr = (r1 - r0) / nr
    dt = 2 * np.pi / nt
    r = r0 + (np.arange(nr) + 0.5) * dr
    t = (np.arange(nt) + 0.5) * dt
    Rm, Tm = np.meshgrid(r, t, indexing="ij")
    pts = np.stack([c[0] + Rm.ravel() * np.cos(Tm.ravel()),
                    c[1] + Rm.ravel() * np.sin(Tm.ravel())], axis=1)
    w = (Rm * dr * dt).ravel()
    vals = g(pts) * np.exp(1j * lam * phi(pts))
    return complex(np.sum(vals * w))


def _boundary_quadrature(domain: dict, m: int):
    """(points, unit normals, weights) on the domain boundary."""
    if domain["shape"] == "rectangle":
        ext = domain["extents"]
        (x0, x1), (y0, y1) = ext
        pts, nus, ws = [], [], []
        for (a, b, fixed, coord, nu) in (
                (x0, x1, y0, 1, (0, -1)), (x0, x1, y1, 1, (0, 1)),
                (y0, y1, x0, 0, (-1, 0)), (y0, y1, x1, 0, (1, 0))):
            s = np.linspace(a, b, m, endpoint=False) + (b - a) / (2 * m)
            for sv in s:
                p = [0.0, 0.0]
                p[coord] = sv
                p[1 - coord] = fixed
                pts.append(p)
                nus.append(nu)
                ws.append((b - a) / m)
        return np.array(pts), np.array(nus, float), np.array(ws)
    c = np.asarray(domain.get("center", (0.0, 0.0)), float)
    rings = []
    if domain["shape"] == "disk":
        rings = [(domain["radius"], +1.0)]
    elif domain["shape"] == "annulus":
        rings = [(domain["outer_radius"], +1.0), (domain["inner_radius"], -1.0)]
    pts, nus, ws = [], [], []
    for R, orient in rings:
        t = 2 * np.pi * (np.arange(m) + 0.5) / m
        for tv in t:
            d = np.array([np.cos(tv), np.sin(tv)])
            pts.append(c + R * d)
            nus.append(orient * d)
            ws.append(2 * np.pi * R / m)
    return np.array(pts), np.array(nus), np.array(ws)


def stationary_phase(g, phi, phi_grad, phi_hess, lam: float, domain: dict,
                     include_boundary_term: bool = False,
                     critical_seeds: list | None = None,
                     resolution: int | None = None,
                     boundary_nodes: int = 4096) -> StationaryPhaseResult:
    """Direct quadrature vs the leading-order stationary-phase prediction.

    Critical points are Newton-polished from ``critical_seeds`` (plus
    random restarts); degenerate Hessians (|det| <= 1e-10) are refused.
    The quadrature error estimate is the difference against a half-
    resolution evaluation.
    """
    res = resolution or max(512, int(8 * lam ** 0.75))
    direct = direct_oscillatory_integral(g, phi, lam, domain, res)
    direct_half = direct_oscillatory_integral(g, phi, lam, domain, res // 2)
    quad_err = abs(direct - direct_half)
    crit = find_critical_points(phi_grad, phi_hess, domain, critical_seeds)
    pred = 0.0 + 0.0j
    sigs = []
    for x in crit:
        H = np.asarray(phi_hess(x[None, :])[0], float)
        ev = np.linalg.eigvalsh(H)
        det = float(np.prod(ev))
        if abs(det) <= 1e-10:
            raise Refusal("degenerate critical point (|det H| <= 1e-10)",
                          detail={"point": x.tolist(), "det": det})
        sgn = int(np.sum(ev > 1e-10) - np.sum(ev < -1e-10))
        sigs.append(sgn)
        gv = complex(np.asarray(g(x[None, :]))[0])
        ph = float(np.asarray(phi(x[None, :]))[0])
        pred += (2 * np.pi / lam) * gv * np.exp(1j * lam * ph + 1j * np.pi * sgn / 4) \
            / np.sqrt(abs(det))
    bterm = 0.0 + 0.0j
    if include_boundary_term:
        pts, nus, ws = _boundary_quadrature(domain, boundary_nodes)
        gp = np.asarray(phi_grad(pts), float)
        phin = np.sum(gp * nus, axis=1)
        gn2 = np.sum(gp * gp, axis=1)
        if np.any(gn2 < 1e-20):
            raise Refusal("phi has (near-)critical points on the boundary",
                          detail={})
        vals = g(pts) * phin / gn2 * np.exp(1j * lam * np.asarray(phi(pts), float))
        bterm = complex(np.sum(vals * ws) / (1j * lam))
    discrepancy = abs(direct - pred - bterm)
    return StationaryPhaseResult(lam=lam, direct=direct, prediction=pred,
                                 boundary_term=bterm, discrepancy=discrepancy,
                                 quad_error_est=quad_err,
                                 critical_points=[x.tolist() for x in crit],
                                 signatures=sigs,
                                 meta={"resolution": res,
                                       "include_boundary_term": include_boundary_term})


def oscillatory_boundary_decay(grid, g_boundary: np.ndarray,
                               psi_boundary: np.ndarray, tau_grid,
                               threshold_frac: float = 0.02) -> dict:
    """Decay of oint g e^{2 i tau psi} over the boundary ring.

    The stationary-set gate counts boundary nodes with |tangential
    derivative of psi| below 1e-8 of its scale; more than
    ``threshold_frac`` of them (on the carrier of g) is refused.  PASS iff
    |value| at tau_max drops below 0.1 x its tau_min value.
    """
    if grid.chart != "polar":
        raise Refusal("boundary decay check implemented on disk boundaries",
                      detail={"chart": grid.chart})
    taus = sorted(float(t) for t in tau_grid)
    R = grid.meta["radius"]
    mt = grid.meta["m_theta"]
    dtheta = grid.spacing[1]
    # tangential derivative along the ring
    dpsi = (np.roll(psi_boundary, -1) - np.roll(psi_boundary, 1)) / (2 * dtheta * R)
    scale = max(np.max(np.abs(dpsi)), 1e-300)
    sub = np.abs(dpsi) <= 1e-8 * scale
    frac = float(np.mean(sub))
    if frac > threshold_frac:
        raise Refusal("tangential derivative of psi vanishes on more than "
                      f"{100 * threshold_frac:.0f}% of the boundary",
                      detail={"fraction": frac})
    w = grid.boundary_weights
    vals = {}
    for tau in taus:
        vals[tau] = complex(np.sum(w * g_boundary * np.exp(2j * tau * psi_boundary)))
    v0, v1 = abs(vals[taus[0]]), abs(vals[taus[-1]])
    return {"pass": bool(v1 <= 0.1 * v0), "values": {t: vals[t] for t in taus},
            "initial": v0, "final": v1,
            "stationary_fraction": frac}
