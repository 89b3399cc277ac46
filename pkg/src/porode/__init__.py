"""porode: porosity defeaturing estimator for 2D plane-stress elasticity.

Predicts an elastic quantity of interest on a porous domain from solves on
the pore-free reference domain, split into topological, first-order shape
and second-order (self + pairwise interaction) contributions, with a direct
FEA verification harness and effectivity-index reporting.
"""

from .errors import ConfigError, GeometryError, MeshingError, PorodeError, SolverError
from .estimator import EstimateOptions, EstimateReport, effectivity_index, estimate
from .fem import Functional, MaterialModel, VolumeMesh
from .geometry import (
    PairPolicy,
    Pore,
    PoreBoundaryMesh,
    PorePair,
    ReferenceDomain,
    build_pore_boundary_mesh,
    design_velocity,
    pore_surface_distance,
    select_interaction_pairs,
)
from .model import PorousModel

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EstimateOptions",
    "EstimateReport",
    "Functional",
    "GeometryError",
    "MaterialModel",
    "MeshingError",
    "PairPolicy",
    "Pore",
    "PoreBoundaryMesh",
    "PorePair",
    "PorodeError",
    "PorousModel",
    "ReferenceDomain",
    "SolverError",
    "VolumeMesh",
    "build_pore_boundary_mesh",
    "design_velocity",
    "effectivity_index",
    "estimate",
    "pore_surface_distance",
    "select_interaction_pairs",
    "__version__",
]
