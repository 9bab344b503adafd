"""Riemannian geometry of full-rank matrices and of full-rank one-forms.

Submodules
----------
linalg      dense helpers, sampling, JSON encoding of matrices
metric      the scale-invariant metric and the volume / unit-volume split
geodesics   closed-form and numerical geodesics, shooting
curvature   Christoffel symbols, Riemann tensor, sectional curvature scans
submersion  the projection ``a -> a^T a`` onto SPD matrices
forms       discretized one-forms and curves modulo translation
cli         command-line entry point
"""

from .errors import (BeyondBlowup, DegeneratePlane, GeometryError, NoConvergence, NotImmersed,
                     NotMonotone, NotSPD, NotUnimodularTangent, RankDeficient, RankLossAt,
                     WrongDimension)
from .metric import Frame, metric, norm
from .geodesics import eval_geodesic, integrate_numeric, integrate_numeric_batch, shoot_bvp, solve_ivp
from .curvature import curvature_scan, riemann, sectional
from .forms import DiscreteCurve, DiscreteOneForm, curve_geodesic, form_geodesic, form_metric

__version__ = "0.1.0"
