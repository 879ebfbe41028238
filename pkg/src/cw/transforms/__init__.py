from .radon import (Sinogram, radon_forward, radon_invert, backproject,
                    MomentSequence, moment_radon_sequence)
from .funk import (FunkData, sphere_gauss_grid, funk_forward, funk_invert,
                   SphereSampler, funk_hecke_eigenvalue)
from .oscillatory import (StationaryPhaseResult, stationary_phase,
                          find_critical_points, oscillatory_boundary_decay)

__all__ = [
    "Sinogram", "radon_forward", "radon_invert", "backproject",
    "MomentSequence", "moment_radon_sequence",
    "FunkData", "sphere_gauss_grid", "funk_forward", "funk_invert",
    "SphereSampler", "funk_hecke_eigenvalue",
    "StationaryPhaseResult", "stationary_phase", "find_critical_points",
    "oscillatory_boundary_decay",
]
