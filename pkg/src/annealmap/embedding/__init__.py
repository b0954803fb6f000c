"""Placement and routing of penalty models onto hardware graphs."""
from .routing import RouteOutcome, RouteSearch, optimal_route_search, route
from .rrr import (
    EmbedConstraint,
    Embedding,
    EmbeddingError,
    EmbeddingReport,
    RrrParams,
    RrrResult,
    candidate_placements,
    dumps_embedding,
    loads_embedding,
    rip_up_and_replace,
    trim,
    validate_embedding,
)
from .steiner import ChainBound, GraphIndex, RoutingError, bcr_lower_bound, steiner_mst, tree_weight

__all__ = [
    "ChainBound",
    "EmbedConstraint",
    "Embedding",
    "EmbeddingError",
    "EmbeddingReport",
    "GraphIndex",
    "RouteOutcome",
    "RouteSearch",
    "RoutingError",
    "RrrParams",
    "RrrResult",
    "bcr_lower_bound",
    "candidate_placements",
    "dumps_embedding",
    "loads_embedding",
    "optimal_route_search",
    "rip_up_and_replace",
    "route",
    "steiner_mst",
    "trim",
    "tree_weight",
    "validate_embedding",
]
