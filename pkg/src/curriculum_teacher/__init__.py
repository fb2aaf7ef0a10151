"""Curriculum learning with reinforcement-learned teachers.

A student MLP is trained on windows (DDPG teacher) or batches (DQN teacher)
of a difficulty-ordered training set. The teacher observes an encoding of
the student's weights and is rewarded for improving training accuracy.
"""

from .curriculum import (BatchPlan, CosineScorer, CurriculumBuilder, Dataset, DenoisingAutoencoder,
                         MahalanobisScorer, make_plan, slice_window)
from .estimators import CurriculumTeacherClassifier
from .exceptions import (BoundsError, ConfigurationError, CurriculumTeacherError, DimensionError,
                         InsufficientDataError, NumericError, TransferError)
from .student import StudentConfig, encode_state

__version__ = "0.1.0"

__all__ = [
    "BatchPlan", "BoundsError", "ConfigurationError", "CosineScorer", "CurriculumBuilder",
    "CurriculumTeacherClassifier", "CurriculumTeacherError", "Dataset", "DenoisingAutoencoder",
    "DimensionError", "InsufficientDataError", "MahalanobisScorer", "NumericError",
    "StudentConfig", "TransferError", "encode_state", "make_plan", "slice_window",
]
