"""Loschmidt-echo laboratory for quantized torus maps at strong perturbation.

Classical sawtooth/cat-map dynamics, exact split-operator quantum fidelity,
semiclassical decay predictors, and reproduction pipelines for the four
reference decay figures.
"""

from .maps import (CAT_SAWTOOTH, SAWTOOTH_POLY, ClassicalState, MapSpec,
                   TangentFrame, classical_fidelity, lambda1_asymptotic,
                   lambda1_of_t, lyapunov_lambda, step_classical,
                   step_classical_inverse, step_tangent)
from .action import (StationaryPoint, UnresolvedOscillations,
                     action_difference, action_slope, action_slope_at_center,
                     find_stationary_points)
from .quantum import (HilbertSpec, PacketSpec, PacketUnresolvable,
                      average_fidelity, build_gaussian, fidelity_series,
                      floquet_step, resolve_xi)
from .semiclassics import (NoStationaryPoints, OscillationUnderresolved,
                           RegimeViolation, SemiclassicalConfig,
                           crossover_time, inverse_expansion_decay,
                           inverse_slope_average, inverse_slope_average_series,
                           linear_phase_fidelity, overlap_quadrature,
                           stationary_phase_overlap)
from .experiments import (DecaySeries, ExperimentConfig, InsufficientWindow,
                          NonpositiveValues, RateFit, TwoSegmentFit,
                          figure_config, figure_pipeline, fit_rate,
                          run_experiment, two_segment_fit)

__version__ = "0.1.0"

__all__ = [
    "CAT_SAWTOOTH", "SAWTOOTH_POLY", "ClassicalState", "MapSpec",
    "TangentFrame", "classical_fidelity", "lambda1_asymptotic",
    "lambda1_of_t", "lyapunov_lambda", "step_classical",
    "step_classical_inverse", "step_tangent",
    "StationaryPoint", "UnresolvedOscillations", "action_difference",
    "action_slope", "action_slope_at_center", "find_stationary_points",
    "HilbertSpec", "PacketSpec", "PacketUnresolvable", "average_fidelity",
    "build_gaussian", "fidelity_series", "floquet_step", "resolve_xi",
    "NoStationaryPoints", "OscillationUnderresolved", "RegimeViolation",
    "SemiclassicalConfig", "crossover_time", "inverse_expansion_decay",
    "inverse_slope_average", "inverse_slope_average_series",
    "linear_phase_fidelity", "overlap_quadrature", "stationary_phase_overlap",
    "DecaySeries", "ExperimentConfig", "InsufficientWindow",
    "NonpositiveValues", "RateFit", "TwoSegmentFit", "figure_config",
    "figure_pipeline", "fit_rate", "run_experiment", "two_segment_fit",
    "__version__",
]
