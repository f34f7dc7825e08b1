"""corrtrack: local correlation volumes and a tracking-by-detection engine.

Subpackages are plain modules:

- ``tensor``       feature maps and pyramids
- ``correlation``  local/non-local correlation, fusion, pyramid propagation,
                   temporal aggregation, cost model
- ``supervision``  identity labels, balanced BCE, colorization loss
- ``kalman``       constant-velocity box filter
- ``tracker``      affinity, Hungarian assignment, track lifecycle
- ``metrics``      CLEAR-MOT and IDF1
- ``io_formats``   MOTChallenge rows and synthetic scenarios
- ``bench``        timing harness
- ``gradcheck``    finite-difference gradient checks
"""

from . import bench, correlation, gradcheck, io_formats, kalman, metrics, supervision, tensor, tracker
from .correlation import CorrelationVolume, CorrParams, FrameMemory, MlpParams
from .tensor import FeatureMap, FeaturePyramid
from .tracker import Detection, Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "bench",
    "correlation",
    "gradcheck",
    "io_formats",
    "kalman",
    "metrics",
    "supervision",
    "tensor",
    "tracker",
    "CorrelationVolume",
    "CorrParams",
    "FrameMemory",
    "MlpParams",
    "FeatureMap",
    "FeaturePyramid",
    "Detection",
    "Tracker",
    "TrackerConfig",
]
