"""Broken ray transform toolkit for planar scenes with reflecting boundary parts."""

from .geometry import Domain2D, UnitSpeedState
from .billiard import BrokenRay, disc_ray, periodic_square, periodic_star_disc, trace_broken_ray
from .transform import QuadratureSpec, ScalarField, Sinogram, brt_scan, integrate_along, radon_sinogram

__version__ = "0.1.0"

__all__ = [
    "Domain2D", "UnitSpeedState", "BrokenRay", "disc_ray", "periodic_square",
    "periodic_star_disc", "trace_broken_ray", "QuadratureSpec", "ScalarField", "Sinogram",
    "brt_scan", "integrate_along", "radon_sinogram", "__version__",
]
