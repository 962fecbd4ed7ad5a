"""Electric-taxi charging station siting from taxi trip records.

The pipeline runs ingest -> trip chains -> demand points -> k-means candidate
sites -> cost matrix -> P-median / Min-max solvers.
"""

from .cost import CongestionPolicy, CostMatrix, build_cost_matrix
from .errors import (EmptyInstanceError, ExactBudgetExceeded, IngestError, NotComparableError,
                     SitingError, StageError)
from .geo import BoundingBox, DegreeScale, GeoPoint, RingConfig, RingZone, manhattan_km, zone_of
from .solve import Method, Model, SitingSolution, SolveParams, assign_nearest, solve

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "CongestionPolicy", "CostMatrix", "DegreeScale", "EmptyInstanceError",
    "ExactBudgetExceeded", "GeoPoint", "IngestError", "Method", "Model", "NotComparableError",
    "RingConfig", "RingZone", "SitingError", "SitingSolution", "SolveParams", "StageError",
    "assign_nearest", "build_cost_matrix", "manhattan_km", "solve", "zone_of",
]
