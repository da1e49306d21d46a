"""Numerical toolkit for generalized Berwald spacetimes g = (1 + phi) h."""
__version__ = "0.1.0"

from .charts import Chart, ChartMap, get_chart, get_map, register_chart, register_map
from .connection import (
    base_curvature,
    berwald_check,
    cartan,
    certify,
    christoffel,
    curvature,
    frozen_velocity_christoffel,
    lambda_series,
    theorem_c_check,
)
from .dsl import ArgumentBinding, VectorField, homogeneity_check, parse
from .geodesics import (
    CurveSpec,
    build_normal_chart,
    el_residual,
    exp_map,
    integrate_geodesic,
    proper_time,
)
from .metrics import (
    ChartedTensor,
    CustomMetric,
    FundamentalTensor,
    Minkowski,
    RobertsonWalker,
    ScaleFactor,
    SamplingPlan,
    classify_causal,
    deformed_rw,
    evaluate_g,
    flat_deformed,
    in_chart,
    lagrangian,
    validate,
)
from .tensor import Event, SymMatrix4, TangentVector, change_chart, differentiate
