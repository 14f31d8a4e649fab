"""Finite-difference lab for ``-L0 u = lam c u + <M grad u, grad u> + h``."""

from .continuation import Branch, classify, detect_folds, model_branch, principal_eigenvalue, trace
from .grid import Grid, GridFunction, Region, build_grid, half_boxes, lp_mean
from .operators import ProblemSpec, make_problem, residual
from .solver import DeflationSet, Solution, deflated_newton, newton
from .transform import TransformSpec, forward, inverse, transformed_problem

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "DeflationSet",
    "Grid",
    "GridFunction",
    "ProblemSpec",
    "Region",
    "Solution",
    "TransformSpec",
    "build_grid",
    "classify",
    "deflated_newton",
    "detect_folds",
    "forward",
    "half_boxes",
    "inverse",
    "lp_mean",
    "make_problem",
    "model_branch",
    "newton",
    "principal_eigenvalue",
    "residual",
    "trace",
    "transformed_problem",
]
