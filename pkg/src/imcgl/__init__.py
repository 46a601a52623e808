"""Spectral cone and inertial-graph toolkit on the 3-torus.

Core layers, bottom up: spectral (Fourier cube, projectors, norms),
cutoffs (scalar roll-offs), truncation (modified reaction and its
derivatives), dynamics (exponential integrators, variational flow,
monitors), cones (mode transform, cone certificates, averaging-operator
norms), manifold (backward shooting, graph evaluation, tracking).
"""

from .spectral import (SpectralField, SpectralGrid, enumerate_modes,
                       project, random_field, sobolev_norm)
from .truncation import ModelParams
from .models import LinearModel, ModifiedGLModel, ZeroModel
from .dynamics import IntegratorConfig, Trajectory, integrate
from .config import RunConfig, load_config
from .experiments import run_experiment, __version__

__all__ = [
    "SpectralField", "SpectralGrid", "enumerate_modes", "project",
    "random_field", "sobolev_norm", "ModelParams", "LinearModel",
    "ModifiedGLModel", "ZeroModel", "IntegratorConfig", "Trajectory",
    "integrate", "RunConfig", "load_config", "run_experiment",
    "__version__",
]
