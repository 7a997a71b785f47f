"""Numerical toolkit for SRB measures of piecewise-smooth hyperbolic maps of the square."""

__version__ = "0.1.0"

from .conditions import ConditionReport, Grid, check_all, check_G3, check_geometry
from .config import build_map
from .distortion import composition_distortion, theta
from .entropy import (EntropyEstimate, block_entropy, entropy_cylinder, entropy_derivative_growth,
                      entropy_directional, entropy_integral)
from .families import Baker, ExpressionFamily, Lueroth, PerturbedLueroth
from .geometry import (BranchHit, ConeParams, Jet, PiecewiseMap, Point2, PowerMap, branch_of,
                       jet_at, power_map, zwidth)
from .graph_transform import CurveGraph, stable_manifold, unstable_manifold
from .measures import (EmpiricalMeasure, birkhoff_srb, chi_square, holonomy_test, pushforward_srb,
                       sinai_density, sinai_density_on_curve)
from .symbolic import Cylinder, Itinerary, forward_itinerary, post_cylinder, strip_cylinder

__all__ = ["Baker", "BranchHit", "ConditionReport", "ConeParams", "CurveGraph", "Cylinder",
           "EmpiricalMeasure", "EntropyEstimate", "ExpressionFamily", "Grid", "Itinerary", "Jet",
           "Lueroth", "PerturbedLueroth", "PiecewiseMap", "Point2", "PowerMap", "birkhoff_srb",
           "block_entropy", "branch_of", "build_map", "check_G3", "check_all", "check_geometry", "chi_square",
           "composition_distortion", "entropy_cylinder", "entropy_derivative_growth",
           "entropy_directional", "entropy_integral", "forward_itinerary", "holonomy_test",
           "jet_at", "post_cylinder", "power_map", "pushforward_srb", "sinai_density",
           "sinai_density_on_curve", "stable_manifold", "strip_cylinder", "theta",
           "unstable_manifold", "zwidth"]
