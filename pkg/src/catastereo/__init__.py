"""Planar-mirror catadioptric stereo for front/back smartphone cameras."""

__version__ = "0.1.0"

from .calibration import BoardSpec, CalibrationResult, CornerObservations, ViewObservation, calibrate
from .fov import AdapterConfig, FovReport, fov_report, predicted_baseline, sweep
from .geometry import Camera, Mirror, RigidTransform, StereoRig, project, reflection_matrix, virtual_camera
from .reconstruction import (
    Keypoints2D,
    Skeleton,
    SegmentReport,
    fit_plane,
    plane_distance_report,
    reconstruct_skeleton,
    segment_lengths,
    triangulate_dlt,
    triangulate_midpoint,
)

__all__ = [
    "AdapterConfig",
    "BoardSpec",
    "CalibrationResult",
    "Camera",
    "CornerObservations",
    "FovReport",
    "Keypoints2D",
    "Mirror",
    "RigidTransform",
    "SegmentReport",
    "Skeleton",
    "StereoRig",
    "ViewObservation",
    "calibrate",
    "fit_plane",
    "fov_report",
    "plane_distance_report",
    "predicted_baseline",
    "project",
    "reconstruct_skeleton",
    "reflection_matrix",
    "segment_lengths",
    "sweep",
    "triangulate_dlt",
    "triangulate_midpoint",
    "virtual_camera",
]
