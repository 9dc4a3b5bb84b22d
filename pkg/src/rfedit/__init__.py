"""rfedit: few-step rectified-flow inversion and editing engine.

Core numerics live in ``flow_core`` (stepping), ``fields`` (closed-form
velocity/noise fields), ``editing`` (regeneration strategies and guidance),
and ``metrics``; the experiment harness and its CLI/service wrappers live
under ``harness``, ``service``, and ``cli``.
"""

from .editing import (EditResult, GuidanceConfig, GuidanceMode, NoiseAnchors,
                      RegenStrategy, dpg_velocity, edit, ili_step, mu, nli_edit,
                      nsli_anchors, pg_velocity, project, relevance_map, threshold_mask)
from .errors import ConfigurationError, DomainError, NumericalError, RfeditError
from .fields import (AuxHook, EpsilonField, GaussianEpsField, GaussianModel,
                     GaussianRFField, GaussianVPField, NoiseSchedule, StraightenedField,
                     VelocityField, eps_from_velocity, make_schedule, straighten,
                     velocity_from_eps, with_aux_hook)
from .flow_core import (Condition, Latent, NfeCounter, TimeGrid, TimeSide,
                        TrajectoryRecord, ddim_fixed_point, ddim_invert, ddim_sample,
                        denoise_step, invert, invert_step, make_uniform_grid, sample)
from .metrics import MetricReport, alignment, consistency, default_peak, mse, psnr

__version__ = "0.1.0"

__all__ = [
    "AuxHook", "Condition", "ConfigurationError", "DomainError", "EditResult",
    "EpsilonField", "GaussianEpsField", "GaussianModel", "GaussianRFField",
    "GaussianVPField", "GuidanceConfig", "GuidanceMode", "Latent", "MetricReport",
    "NfeCounter", "NoiseAnchors", "NoiseSchedule", "NumericalError", "RegenStrategy",
    "RfeditError", "StraightenedField", "TimeGrid", "TimeSide", "TrajectoryRecord",
    "alignment", "consistency", "ddim_fixed_point", "ddim_invert", "ddim_sample",
    "default_peak", "denoise_step", "dpg_velocity", "edit", "eps_from_velocity",
    "ili_step", "invert", "invert_step", "make_schedule", "make_uniform_grid",
    "mse", "mu", "nli_edit", "nsli_anchors", "pg_velocity", "project",
    "psnr", "relevance_map", "sample", "straighten", "threshold_mask",
    "velocity_from_eps", "with_aux_hook",
]
