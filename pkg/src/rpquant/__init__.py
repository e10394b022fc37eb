"""Projective iterated function systems on RP^1: attractors, dimension, invariant measures, quantization."""

from .errors import DomainError, GeometryError, ResourceError, RPQuantError, UnsupportedError
from .measure import BernoulliSpec, SelfSimilarMeasure, cantor_measure, solve_moments
from .projline import INF, ProjPoint, normalize, point
from .quant import ErrorReport, Quantizer, delta_n, dn_bound, error_exact_r2, lloyd, oracle
from .rpifs import Cone, Mat2, RPIFSSpec, cantor_spec, critical_exponent, load_spec

__version__ = "0.1.0"

__all__ = [
    "BernoulliSpec", "Cone", "DomainError", "ErrorReport", "GeometryError", "INF", "Mat2", "ProjPoint",
    "Quantizer", "RPIFSSpec", "RPQuantError", "ResourceError", "SelfSimilarMeasure", "UnsupportedError",
    "cantor_measure", "cantor_spec", "critical_exponent", "delta_n", "dn_bound", "error_exact_r2",
    "load_spec", "lloyd", "normalize", "oracle", "point", "solve_moments",
]
