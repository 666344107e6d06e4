"""Minkowski-type curvature problems in hyperbolic space, solved through the
de Sitter dual and a logarithmic curvature flow."""

from .curvfunc import CurvatureFunctionSpec, f_eval, inverse_spec, kstar_check
from .duality import beltrami, duality_verify, gauss_map, resample_to_graph
from .flow import FlowOptions, PrescribedData, auto_barriers, run_flow
from .geometry import Ambient, GraphHypersurface, graph_geometry
from .sphere_grid import build_grid, covariant_jet

__all__ = [
    "Ambient",
    "CurvatureFunctionSpec",
    "FlowOptions",
    "GraphHypersurface",
    "PrescribedData",
    "auto_barriers",
    "beltrami",
    "build_grid",
    "covariant_jet",
    "duality_verify",
    "f_eval",
    "gauss_map",
    "graph_geometry",
    "inverse_spec",
    "kstar_check",
    "resample_to_graph",
    "run_flow",
]
