"""maxsurf: a numerical laboratory for maximal spacelike surfaces in H^{2,2}.

Solves the gauge-fixed coupled elliptic system driven by a quartic
differential, reconstructs the immersion from the flat structure equations,
and verifies the geometric identities, bounds, decay rates and convex-core
slice volumes of such surfaces at desk scale.
"""

from .barbot import BarbotSurface, barbot_frame, barbot_point
from .geometry import (
    FermiChart,
    GeodesicClass,
    HPoint,
    TangentVec,
    classify_pair,
    fermi_forward,
    fermi_inverse,
    geodesic_eval,
    minkowski_inner,
    standard_chart,
)
from .grids import Grid2D
from .quartic import QuarticDifferential
from .solver import FieldState, GeometryFields, derived_fields, residual, solve

__all__ = [
    "BarbotSurface",
    "FermiChart",
    "FieldState",
    "GeodesicClass",
    "GeometryFields",
    "Grid2D",
    "HPoint",
    "QuarticDifferential",
    "TangentVec",
    "barbot_frame",
    "barbot_point",
    "classify_pair",
    "derived_fields",
    "fermi_forward",
    "fermi_inverse",
    "geodesic_eval",
    "minkowski_inner",
    "residual",
    "solve",
    "standard_chart",
]
