"""PixelMan-style inversion-free, training-free consistent object editing."""

__version__ = "0.1.0"

from .errors import (BackendUnavailableError, ConfigurationError,
                     InvalidEditError, JobFailureError, PixelManError)
from .guidance import EnergyConfig
from .masks import EditTransform, RegionMaskSet, derive_mask_set
from .sampler import EditRequest, SamplerConfig, SamplerReport, run_edit
from .schedule import NoiseSchedule, ScheduleConfig, build_schedule, fdp, rgp_predict_x0

__all__ = [
    "BackendUnavailableError", "ConfigurationError", "InvalidEditError",
    "JobFailureError", "PixelManError", "EnergyConfig", "EditTransform",
    "RegionMaskSet", "derive_mask_set", "EditRequest", "SamplerConfig",
    "SamplerReport", "run_edit", "NoiseSchedule", "ScheduleConfig",
    "build_schedule", "fdp", "rgp_predict_x0",
]
