from .assignment import INFEASIBLE, Assignment, hungarian_solve
from .kalman import KalmanParams, KalmanState
from .tracker import (
    CHI2_GATE_4DOF,
    AssignmentRecord,
    EmptyGalleryError,
    Track,
    Tracker,
    TrackerConfig,
    TrackStatus,
    appearance_cost,
    combined_cost,
    gate,
    motion_cost,
)

__all__ = [
    "CHI2_GATE_4DOF", "INFEASIBLE", "Assignment", "AssignmentRecord", "EmptyGalleryError",
    "KalmanParams", "KalmanState", "Track", "Tracker", "TrackerConfig", "TrackStatus",
    "appearance_cost", "combined_cost", "gate", "hungarian_solve", "motion_cost",
]
