# -*- coding: utf-8 -*-

"""
agentseg.errors
---------------

Exception hierarchy. Every error raised on purpose by the library derives from
:class:`AgentSegError`, whose ``category`` is what the command line reports.
"""

from __future__ import annotations


class AgentSegError(Exception):
    """Base class of PyAgentSeg errors"""

    category = "internal"
    exit_code = 1


class ValidationError(AgentSegError, ValueError):
    """Invalid input data or configuration value"""

    category = "data"
    exit_code = 3


class UnmatchedSegmentationError(ValidationError):
    """One of the compared split masks has no segmentation point"""

    def __init__(self, trajectory_id, n_est: int, n_gt: int):
        super().__init__(
            f"trajectory {trajectory_id!r}: cannot match {n_est} estimated "
            f"against {n_gt} ground-truth segmentation points"
        )
        self.trajectory_id = trajectory_id
        self.n_est = n_est
        self.n_gt = n_gt


class FileFormatError(AgentSegError):
    """Unreadable or invalid file"""

    category = "format"
    exit_code = 5


class NumericalError(AgentSegError):
    """Numerical failure (non-SPD covariance, underflow, singular system)"""

    category = "numerical"
    exit_code = 4

    def __init__(self, message: str, step: int | None = None, trajectory_id=None):
        super().__init__(message)
        self.step = step
        self.trajectory_id = trajectory_id


class SingularSystemError(NumericalError):
    """Normal matrix of the dynamics update is rank deficient"""


class InitializationError(NumericalError):
    """Model initialization failed (degenerate k-means clustering)"""


class TrainingError(AgentSegError):
    """A segmentation method could not be trained"""

    category = "training"
    exit_code = 4
