"""Deterministic phantom library.

Phantoms are point callables (evaluate on (m, d) arrays) selected by id
strings like ``gaussian_bump:0.2,0:0.3:2.5``; ``phantom_field`` samples
one on a grid.  The collar-one conductivity phantoms satisfy the
Liouville collar precondition by construction.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid

__all__ = ["phantom", "phantom_field", "list_phantoms", "PHANTOM_IDS"]

PHANTOM_IDS = [
    "zero",
    "const:<c>",
    "disk_indicator[:<radius>[:<cx>,<cy>]]",
    "gaussian_bump[:<center>[:<width>[:<amp>]]]",
    "two_bumps",
    "radial_shell[:<center>[:<r0>[:<w>[:<amp>]]]]",
    "separable[:<beta width>[:<rho width>[:<amp>]]]",
    "collar_one_conductivity[:<amp>[:<width>]]",
]


def _parse_vec(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(",")])


def _fit_center(c: np.ndarray | None, dim: int) -> np.ndarray:
    """Pad/truncate a phantom center to the evaluation dimension, so one id
    serves both a 3-D slab and its 2-D section."""
    if c is None:
        return np.zeros(dim)
    if c.size >= dim:
        return c[:dim]
    return np.concatenate([c, np.zeros(dim - c.size)])


def _smooth_cut(r2, r_in, r_out):
    t = np.clip((r_out**2 - r2) / (r_out**2 - r_in**2), 0.0, 1.0)
    return t * t * (3 - 2 * t)


def phantom(pid: str):
    """Point callable for a phantom id; raises ValueError on unknown ids."""
    parts = pid.split(":")
    name = parts[0]

    if name == "zero":
        return lambda X: np.zeros(np.atleast_2d(X).shape[0])
    if name == "const":
        c = float(parts[1]) if len(parts) > 1 else 1.0
        return lambda X: np.full(np.atleast_2d(X).shape[0], c)
    if name == "disk_indicator":
        R = float(parts[1]) if len(parts) > 1 else 1.0
        c = _parse_vec(parts[2]) if len(parts) > 2 else None

        def f(X):
            X = np.atleast_2d(X)
            return (np.linalg.norm(X - _fit_center(c, X.shape[1]), axis=1) <= R).astype(float)
        return f
    if name == "gaussian_bump":
        c = _parse_vec(parts[1]) if parts[1:] and parts[1] else None
        w = float(parts[2]) if len(parts) > 2 else 0.3
        amp = float(parts[3]) if len(parts) > 3 else 1.0
        support = float(parts[4]) if len(parts) > 4 else 0.0

        def f(X):
            X = np.atleast_2d(X)
            r2 = np.sum((X - _fit_center(c, X.shape[1])) ** 2, axis=1)
            out = amp * np.exp(-r2 / (2 * w * w))
            if support > 0:
                # exact compact support with a smooth rolloff
                out = out * _smooth_cut(r2, 0.75 * support, support)
            return out
        return f
    if name == "two_bumps":
        def f(X):
            X = np.atleast_2d(X)
            c1 = np.zeros(X.shape[1])
            c2 = np.zeros(X.shape[1])
            c1[0], c2[0] = -0.4, 0.45
            c2[1] = 0.25
            r1 = np.sum((X - c1) ** 2, axis=1)
            r2 = np.sum((X - c2) ** 2, axis=1)
            return np.exp(-r1 / (2 * 0.15**2)) + 0.8 * np.exp(-r2 / (2 * 0.12**2))
        return f
    if name == "radial_shell":
        c = _parse_vec(parts[1]) if len(parts) > 1 else None
        r0 = float(parts[2]) if len(parts) > 2 else 0.4
        w = float(parts[3]) if len(parts) > 3 else 0.12
        amp = float(parts[4]) if len(parts) > 4 else 1.0

        def f(X):
            X = np.atleast_2d(X)
            r = np.linalg.norm(X - _fit_center(c, X.shape[1]), axis=1)
            return amp * np.exp(-((r - r0) / w) ** 2 / 2)
        return f
    if name == "separable":
        wb = float(parts[1]) if len(parts) > 1 else 0.35
        wr = float(parts[2]) if len(parts) > 2 else 0.3
        amp = float(parts[3]) if len(parts) > 3 else 1.0

        def f(X):
            X = np.atleast_2d(X)
            beta = np.exp(-np.sum(X[:, :-1] ** 2, axis=1) / (2 * wb * wb))
            rho = np.exp(-X[:, -1] ** 2 / (2 * wr * wr))
            return amp * beta * rho
        return f
    if name == "collar_one_conductivity":
        amp = float(parts[1]) if len(parts) > 1 else 0.08
        w = float(parts[2]) if len(parts) > 2 else 0.30

        def f(X):
            X = np.atleast_2d(X)
            r2 = np.sum(X ** 2, axis=1)
            return 1.0 + amp * np.exp(-r2 / (2 * w * w)) * _smooth_cut(r2, 0.55, 0.65)
        return f
    raise ValueError(f"unknown phantom id {pid!r}")


def phantom_field(pid: str, grid: Grid) -> np.ndarray:
    return phantom(pid)(grid.coords)


def list_phantoms() -> list[str]:
    return list(PHANTOM_IDS)
