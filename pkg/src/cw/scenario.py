"""Scenario configuration: a flat TOML file with one table per stage.

Example::

    [scenario]
    name = "demo_bump"
    dimension = 3

    [grid]
    resolution = 96
    slab_resolution = 32
    extent = 1.5
    slab_extent = 1.0

    [potentials]
    q1 = "gaussian_bump:0.2,0,0:0.3:3"
    q2 = "zero"

    [masks]
    gamma_minus = "halfspace:0,-1"
    gamma_plus = "halfspace:0,1"

    [cgo]
    family = "linear2d"
    tau_list = [8, 16, 32, 64]
    theta_count = 8

    [probe]
    z_spacing = 0.04
    z_count = 5
    k_max = 4
    angles = 180
    offsets = 256

    [output]
    dir = "out"
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:             # Python 3.10
    import tomli as tomllib

from .phantoms import phantom

__all__ = ["Scenario", "ConfigError", "load_scenario"]


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"[{key}] {message}")
        self.key = key


@dataclass
class Scenario:
    name: str
    dimension: int
    grid: dict
    potentials: dict
    masks: dict
    cgo: dict
    probe: dict
    output_dir: str
    seed: int = 0
    solver: dict = field(default_factory=dict)
    raw_bytes: bytes = b""

    def hash(self) -> str:
        return hashlib.sha256(self.raw_bytes).hexdigest()[:16]


_REQUIRED = {
    "scenario": ["name", "dimension"],
    "potentials": ["q1", "q2"],
    "masks": ["gamma_minus", "gamma_plus"],
    "cgo": ["family", "tau_list", "theta_count"],
}


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "rb") as f:
            raw = f.read()
        data = tomllib.loads(raw.decode())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed TOML: {e}")
    for table, keys in _REQUIRED.items():
        if table not in data:
            raise ConfigError("missing table", key=table)
        for k in keys:
            if k not in data[table]:
                raise ConfigError(f"missing key {k!r}", key=table)
    dim = data["scenario"]["dimension"]
    if dim not in (2, 3):
        raise ConfigError("dimension must be 2 or 3", key="scenario.dimension")
    grid = data.get("grid", {})
    res = grid.get("resolution", 96)
    if not (8 <= res <= 512):
        raise ConfigError("resolution out of the supported range [8, 512]",
                          key="grid.resolution")
    for key in ("q1", "q2"):
        pid = data["potentials"][key]
        try:
            phantom(pid)
        except ValueError as e:
            raise ConfigError(str(e), key=f"potentials.{key}")
    for key in ("gamma_minus", "gamma_plus"):
        spec = data["masks"][key]
        if not (isinstance(spec, str) and spec.split(":")[0] in ("halfspace", "angular", "empty")):
            raise ConfigError("mask must be halfspace:<dir>, angular:<lo>,<hi>, or empty",
                              key=f"masks.{key}")
    return Scenario(name=data["scenario"]["name"], dimension=dim, grid=grid,
                    potentials=data["potentials"], masks=data["masks"],
                    cgo=data["cgo"], probe=data.get("probe", {}),
                    output_dir=data.get("output", {}).get("dir", "out"),
                    seed=int(data.get("scenario", {}).get("seed", 0)),
                    solver=data.get("solver", {}), raw_bytes=raw)
