"""Command line entry point.

Exit codes: 0 completion/PASS, 2 FAIL verdict, 3 refusal (precondition
gate), 64 usage error, 65 malformed configuration.  Logging level comes
from the CW_LOG environment variable (error|warn|info|debug).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import Refusal
from .scenario import ConfigError, load_scenario

log = logging.getLogger("cw")

EXIT_OK, EXIT_FAIL, EXIT_REFUSAL, EXIT_USAGE, EXIT_CONFIG = 0, 2, 3, 64, 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _setup_logging():
    level = os.environ.get("CW_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _outdir(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True, default=str)


class RunReport:
    def __init__(self, args, seed):
        self.t0 = time.time()
        self.data = {"tool_version": __version__, "seed": int(seed),
                     "command": " ".join(sys.argv[1:]), "timings": {},
                     "input_hashes": {}}

    def add_input(self, name, payload: bytes):
        self.data["input_hashes"][name] = hashlib.sha256(payload).hexdigest()[:16]

    def done(self, outdir, **extra):
        self.data["wall_clock_s"] = time.time() - self.t0
        self.data.update(extra)
        _write_json(os.path.join(outdir, "run_report.json"), self.data)


def _mask_from_spec(grid, spec_minus: str, spec_plus: str):
    from .grid import SubboundaryMask
    nb = grid.boundary_indices.size

    def one(spec):
        kind = spec.split(":")[0]
        if kind == "empty":
            return np.zeros(nb, dtype=bool)
        if kind == "halfspace":
            d = np.array([float(x) for x in spec.split(":")[1].split(",")])
            nu = grid.boundary_normals
            return (nu @ d) < -1e-12
        if kind == "angular":
            lo, hi = (float(x) for x in spec.split(":")[1].split(","))
            th = np.mod(grid.meta["node_theta"][grid.boundary_indices], 2 * np.pi)
            lo, hi = np.mod(lo, 2 * np.pi), np.mod(hi, 2 * np.pi)
            return ((th >= lo) & (th < hi)) if lo <= hi else ((th >= lo) | (th < hi))
        raise ConfigError(f"bad mask spec {spec!r}", key="masks")

    m_minus = one(spec_minus)
    m_plus = one(spec_plus) & ~m_minus
    return SubboundaryMask(grid, {"Gamma_minus": m_minus, "Gamma_plus": m_plus})


# -- subcommands -------------------------------------------------------------------


def cmd_phantoms(args):
    from .phantoms import list_phantoms
    if args.list:
        for pid in list_phantoms():
            print(pid)
    return EXIT_OK


def cmd_forward(args):
    from .elliptic import EllipticProblem, solve
    from .grid import ComplexField, discretize_domain, field_to_csv
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    shape = ({"shape": "disk", "center": (0, 0), "radius": 1.0}
             if args.shape == "disk"
             else {"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]})
    grid = discretize_domain(shape, args.resolution)
    q = phantom_field(args.q, grid)
    bidx = grid.boundary_indices
    bvals = {"x1": grid.coords[bidx, 0], "x2": grid.coords[bidx, 1],
             "one": np.ones(bidx.size)}[args.boundary]
    sol = solve(EllipticProblem(grid, "schrodinger", q=q, dirichlet=bvals),
                args.tolerance)
    field_to_csv(ComplexField(grid, sol.field.astype(complex)),
                 os.path.join(out, "forward_field.csv"))
    _write_json(os.path.join(out, "forward_report.json"),
                {"residual": sol.residual, "iterations": sol.iterations,
                 "flagged": sol.zero_eigenvalue_suspected})
    rep.done(out, subcommand="forward")
    return EXIT_OK if not sol.zero_eigenvalue_suspected else EXIT_FAIL


def cmd_dnmap(args):
    from .dnmap import assemble_dn, fourier_basis, hat_basis
    from .grid import discretize_domain
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    grid = discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0},
                             args.resolution)
    mask = _mask_from_spec(grid, args.gamma_minus, args.gamma_plus)
    if args.basis.startswith("fourier"):
        n_max = int(args.basis.split(":")[1]) if ":" in args.basis else 8
        basis = fourier_basis(mask, n_max)
    else:
        stride = int(args.basis.split(":")[1]) if ":" in args.basis else 1
        basis = hat_basis(mask, stride)
    q = phantom_field(args.q, grid)
    lam = assemble_dn(grid, "schrodinger", {"q": q}, mask, basis,
                      args.tolerance, threads=args.threads)
    lam.write(os.path.join(out, "dn_matrix.csv"))
    rep.done(out, subcommand="dnmap", columns=int(basis.size))
    return EXIT_OK


def cmd_liouville(args):
    from .grid import SubboundaryMask, discretize_domain
    from .liouville import verify_liouville_dn
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    grid = discretize_domain({"shape": "disk", "center": (0, 0), "radius": 1.0},
                             args.resolution)
    nb = grid.boundary_indices.size
    mask = SubboundaryMask(grid, {"Gamma_minus": np.zeros(nb, bool),
                                  "Gamma_plus": np.zeros(nb, bool)})
    gamma = phantom_field(args.gamma, grid)
    report = verify_liouville_dn(grid, gamma, mask, args.tolerance,
                                 solver_tol=args.solver_tol, threads=args.threads)
    _write_json(os.path.join(out, "liouville_report.json"), report)
    rep.done(out, subcommand="liouville", distance=report["distance"])
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_gauge(args):
    from .grid import discretize_domain, halfspace_mask
    from .liouville import verify_gauge_dn
    from .dnmap import hat_basis
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    grid = discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]},
                             args.resolution)
    mask = halfspace_mask(grid, np.array([0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))
    basis = hat_basis(mask, stride=max(1, mask.complement_local("Gamma_minus").size // 8))
    q = phantom_field(args.q, grid).astype(complex)
    r2 = np.sum(grid.coords**2, axis=1)
    cut = np.clip((0.6**2 - r2) / (0.6**2 - 0.45**2), 0, 1)
    eta = args.eta_amp * (1 + 0.6j) * np.exp(-r2 / (2 * 0.35**2)) * cut * cut * (3 - 2 * cut)
    if args.inadmissible:
        eta = args.eta_amp * (grid.coords[:, 0] ** 2 + 0.5)
    report = verify_gauge_dn(grid, q, None, eta, mask, args.tolerance,
                             solver_tol=args.solver_tol, basis=basis,
                             enforce_precondition=not args.inadmissible,
                             threads=args.threads)
    _write_json(os.path.join(out, "gauge_report.json"), report)
    rep.done(out, subcommand="gauge", distance=report["distance"])
    return EXIT_OK if report["pass"] or args.inadmissible else EXIT_FAIL


def cmd_carleman_audit(args):
    from .carleman import audit_carleman, catalog_weight, random_test_functions
    from .grid import discretize_domain
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    taus = [float(t) for t in args.tau.split(",")]
    grid = discretize_domain({"shape": "rectangle", "extents": [(1, 2), (0, 1)]},
                             args.resolution)
    amp = args.amplitude
    if amp is None:
        # keep 2 tau_max range(phi) ~ 25 in double precision
        amp = 25.0 / (2 * max(taus))
    sign = -1.0 if args.negative else 1.0
    weight = catalog_weight("exp_convexified", lam=args.lam, dim=2,
                            amplitude=sign * amp, shift=2.0)
    q = phantom_field(args.q, grid)
    fns = random_test_functions(grid, args.count, seed=args.seed)
    report = audit_carleman(weight, q, fns, taus, grid, N=args.N)
    report.to_csv(os.path.join(out, "carleman_audit.csv"))
    _write_json(os.path.join(out, "carleman_verdict.json"), report.verdict_json())
    rep.done(out, subcommand="carleman-audit", verdict=report.verdict)
    return EXIT_OK if report.verdict == "PASS" else EXIT_FAIL


def cmd_cgo(args):
    from .cgo import Profile, build_cgo, make_phase, residual_decay, transport_amplitude
    from .grid import discretize_domain, halfspace_mask
    from .phantoms import phantom_field
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    taus = [float(t) for t in args.tau.split(",")]
    grid = discretize_domain({"shape": "rectangle", "extents": [(-1, 1), (-1, 1)]},
                             args.resolution)
    mask = halfspace_mask(grid, np.array([0.0, 1.0]),
                          names=("Gamma_plus", "Gamma_minus", "Gamma_0"))
    ph = make_phase("linear2d")
    amp = transport_amplitude(ph, Profile.constant(1.0))
    q = phantom_field(args.q, grid)
    sols = [build_cgo(grid, ph, amp, tau=t, q=q,
                      vanish_label="Gamma_minus", mask=mask) for t in taus]
    with open(os.path.join(out, "cgo.csv"), "w") as f:
        f.write("tau,theta,z_re,z_im,weighted_residual,remainder_norm\n")
        for s in sols:
            f.write(f"{float(s.tau)!r},0.0,{float(s.z.real)!r},{float(s.z.imag)!r},"
                    f"{float(s.weighted_residual)!r},{float(s.remainder_norm)!r}\n")
    verdict = residual_decay(sols)
    _write_json(os.path.join(out, "cgo_decay.json"), verdict)
    rep.done(out, subcommand="cgo", decay_pass=verdict["pass"])
    return EXIT_OK if verdict["pass"] else EXIT_FAIL


def cmd_radon(args):
    from .grid import discretize_domain
    from .phantoms import phantom_field
    from .probe import correlation
    from .transforms import radon_forward, radon_invert
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    grid = discretize_domain({"shape": "rectangle",
                              "extents": [(-1.5, 1.5), (-1.5, 1.5)]},
                             args.resolution)
    f = phantom_field(args.phantom, grid)
    angles = np.linspace(0, np.pi, args.angles, endpoint=False)
    offsets = np.linspace(-1.4, 1.4, args.offsets)
    sino = radon_forward(grid, f, angles, offsets)
    sino.to_csv(os.path.join(out, "sinogram.csv"))
    rec = radon_invert(sino, grid)
    corr = correlation(rec, f, grid.interior_weights)
    _write_json(os.path.join(out, "radon_report.json"),
                {"round_trip_correlation": corr,
                 "angles": args.angles, "offsets": args.offsets})
    rep.done(out, subcommand="radon", correlation=corr)
    return EXIT_OK


def cmd_funk(args):
    from .probe import correlation
    from .transforms import SphereSampler, funk_forward, funk_invert, sphere_gauss_grid
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    sg = sphere_gauss_grid(args.sphere_resolution, 2 * args.sphere_resolution)
    nh = np.array([0.0, 0.0, 1.0])
    ang = np.arccos(np.clip(sg.points @ nh, -1, 1))
    f = np.exp(-(ang / 0.35) ** 2 / 2)
    data = funk_forward(SphereSampler(sg, f), sg, args.step_deg)
    data.to_csv(os.path.join(out, "funk.csv"))
    rec, report = funk_invert(data, args.band, hemisphere_support=nh)
    corr = correlation(rec, f * (sg.points @ nh > 0), sg.weights)
    report["round_trip_correlation"] = corr
    _write_json(os.path.join(out, "funk_report.json"), report)
    rep.done(out, subcommand="funk", correlation=corr)
    return EXIT_OK


def cmd_stationary_phase(args):
    from .transforms import stationary_phase
    out = _outdir(args)
    rep = RunReport(args, args.seed)
    lams = [float(x) for x in args.lam.split(",")]
    g = lambda p: np.exp(-np.sum(p**2, axis=1))
    phi = lambda p: np.sum(p**2, axis=1)
    grad = lambda p: 2 * p
    hess = lambda p: np.broadcast_to(2 * np.eye(2), (p.shape[0], 2, 2))
    dom = {"shape": "rectangle", "extents": [(-5, 5), (-5, 5)]}
    results = []
    for lam in lams:
        res = stationary_phase(g, phi, grad, hess, lam, dom,
                               critical_seeds=[(0.1, 0.1)],
                               resolution=int(max(512, 22 * lam)))
        results.append(res.to_json_dict())
    _write_json(os.path.join(out, "stationary_phase.json"), {"results": results})
    rep.done(out, subcommand="stationary-phase")
    return EXIT_OK


def cmd_uniqueness_demo(args):
    from .grid import discretize_domain
    from .phantoms import phantom
    from .probe import end_to_end_demo
    out = _outdir(args)
    if not args.scenario:
        raise ConfigError("uniqueness-demo requires --scenario")
    sc = load_scenario(args.scenario)
    rep = RunReport(args, sc.seed)
    rep.add_input("scenario", sc.raw_bytes)
    res = sc.grid.get("resolution", 96)
    ext = sc.grid.get("extent", 1.5)
    slab_res = sc.grid.get("slab_resolution", 32)
    slab_ext = sc.grid.get("slab_extent", 1.0)
    grid2 = discretize_domain({"shape": "rectangle",
                               "extents": [(-1.0, 1.0), (-1.0, 1.0)]},
                              min(res, 96))
    grid3 = discretize_domain({"shape": "box",
                               "extents": [(-ext, ext), (-ext, ext),
                                           (-slab_ext, slab_ext)],
                               "resolutions": [res, res, slab_res]}, 8)
    mask = _mask_from_spec(grid2, sc.masks["gamma_minus"], sc.masks["gamma_plus"])
    q1_fn, q2_fn = phantom(sc.potentials["q1"]), phantom(sc.potentials["q2"])
    zs = sc.probe.get("z_spacing", 0.04)
    zc = sc.probe.get("z_count", 5)
    zax = zs * (np.arange(zc) - zc // 2)
    angles = np.linspace(0, np.pi, sc.probe.get("angles", 180), endpoint=False)
    offsets = np.linspace(-1.4 * ext / 1.5, 1.4 * ext / 1.5,
                          sc.probe.get("offsets", 256))
    result = end_to_end_demo(grid2, grid3, q1_fn, q2_fn, mask,
                             sc.cgo["tau_list"], int(sc.cgo["theta_count"]),
                             zax, zax, angles, offsets,
                             solver_tol=float(sc.solver.get("tolerance", 1e-8)),
                             seed=sc.seed)
    _write_json(os.path.join(out, "probe_report.json"), result.to_json_dict())
    from .probe import assemble_P
    qd3 = q1_fn(grid3.coords) - q2_fn(grid3.coords)
    pfun = assemble_P(grid3, qd3, zax, zax, angles[::max(1, angles.size // 12)],
                      offsets[::max(1, offsets.size // 32)])
    pfun.to_csv(os.path.join(out, "pfunction.csv"))
    if result.reconstruction is not None:
        np.savetxt(os.path.join(out, "reconstruction.csv"),
                   result.reconstruction, delimiter=",")
    rep.done(out, subcommand="uniqueness-demo", verdict=result.verdict,
             correlation=result.correlation)
    print(result.verdict)
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="cw", description="Calderon workbench")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--scenario", default=None)

    sp = sub.add_parser("phantoms")
    common(sp)
    sp.add_argument("--list", action="store_true")
    sp.set_defaults(fn=cmd_phantoms)

    sp = sub.add_parser("forward")
    common(sp)
    sp.add_argument("--shape", choices=["disk", "square"], default="disk")
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--q", default="zero")
    sp.add_argument("--boundary", choices=["x1", "x2", "one"], default="x1")
    sp.add_argument("--tolerance", type=float, default=1e-8)
    sp.set_defaults(fn=cmd_forward)

    sp = sub.add_parser("dnmap")
    common(sp)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--q", default="zero")
    sp.add_argument("--basis", default="fourier:8")
    sp.add_argument("--gamma-minus", default="empty")
    sp.add_argument("--gamma-plus", default="empty")
    sp.add_argument("--tolerance", type=float, default=1e-8)
    sp.set_defaults(fn=cmd_dnmap)

    sp = sub.add_parser("liouville")
    common(sp)
    sp.add_argument("--resolution", type=int, default=128)
    sp.add_argument("--gamma", default="collar_one_conductivity")
    sp.add_argument("--tolerance", type=float, default=5e-6)
    sp.add_argument("--solver-tol", type=float, default=1e-8)
    sp.set_defaults(fn=cmd_liouville)

    sp = sub.add_parser("gauge")
    common(sp)
    sp.add_argument("--resolution", type=int, default=96)
    sp.add_argument("--q", default="gaussian_bump::0.3:2")
    sp.add_argument("--eta-amp", type=float, default=0.1)
    sp.add_argument("--inadmissible", action="store_true")
    sp.add_argument("--tolerance", type=float, default=1e-6)
    sp.add_argument("--solver-tol", type=float, default=1e-9)
    sp.set_defaults(fn=cmd_gauge)

    sp = sub.add_parser("carleman-audit")
    common(sp)
    sp.add_argument("--weight", choices=["exp"], default="exp")
    sp.add_argument("--lambda", dest="lam", type=float, default=4.0)
    sp.add_argument("--tau", default="8,16,32,64,128")
    sp.add_argument("--amplitude", type=float, default=None)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--count", type=int, default=50)
    sp.add_argument("--q", default="gaussian_bump:1.5,0.5:0.2:0.5")
    sp.add_argument("--N", type=float, default=0.0)
    sp.add_argument("--negative", action="store_true")
    sp.set_defaults(fn=cmd_carleman_audit)

    sp = sub.add_parser("cgo")
    common(sp)
    sp.add_argument("--resolution", type=int, default=256)
    sp.add_argument("--tau", default="8,16,32,64")
    sp.add_argument("--q", default="gaussian_bump::0.5:60")
    sp.set_defaults(fn=cmd_cgo)

    sp = sub.add_parser("radon")
    common(sp)
    sp.add_argument("--resolution", type=int, default=256)
    sp.add_argument("--phantom", default="two_bumps")
    sp.add_argument("--angles", type=int, default=180)
    sp.add_argument("--offsets", type=int, default=256)
    sp.set_defaults(fn=cmd_radon)

    sp = sub.add_parser("funk")
    common(sp)
    sp.add_argument("--sphere-resolution", type=int, default=32)
    sp.add_argument("--band", type=int, default=16)
    sp.add_argument("--step-deg", type=float, default=1.0)
    sp.set_defaults(fn=cmd_funk)

    sp = sub.add_parser("stationary-phase")
    common(sp)
    sp.add_argument("--lambda", dest="lam", default="50,100,200")
    sp.set_defaults(fn=cmd_stationary_phase)

    sp = sub.add_parser("uniqueness-demo")
    common(sp)
    sp.set_defaults(fn=cmd_uniqueness_demo)

    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except Refusal as e:
        sys.stderr.write(f"refused: {e}\n")
        if e.detail:
            sys.stderr.write(f"  detail: {e.detail}\n")
        return EXIT_REFUSAL


if __name__ == "__main__":
    sys.exit(main())
