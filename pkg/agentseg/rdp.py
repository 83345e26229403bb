# -*- coding: utf-8 -*-

"""
agentseg.rdp
------------

Ramer-Douglas-Peucker baseline: preserved interior points of the simplified
polyline are the segmentation points.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from agentseg.core import Trajectory
from agentseg.errors import UnmatchedSegmentationError, ValidationError
from agentseg.utils.loghelper import LOG


@dataclass(frozen=True)
class RdpParams:
    """RDP threshold (pixels)"""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon!r}")


def _distances(points: np.ndarray, start: np.ndarray, stop: np.ndarray) -> np.ndarray:
    """Distances of `points` to the line through `start` and `stop`"""
    direction = stop - start
    norm = np.hypot(direction[0], direction[1])
    offsets = points - start
    if norm == 0.0:
        return np.hypot(offsets[:, 0], offsets[:, 1])
    cross = direction[0] * offsets[:, 1] - direction[1] * offsets[:, 0]
    return np.abs(cross) / norm


def _simplify(points: np.ndarray, first: int, last: int, epsilon: float, keep):
    # explicit stack: recursion depth would grow with the trajectory length
    stack = [(first, last)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        dist = _distances(points[first + 1 : last], points[first], points[last])
        index = int(np.argmax(dist))
        if dist[index] > epsilon:
            split = first + 1 + index
            keep[split] = True
            stack.append((first, split))
            stack.append((split, last))


def rdp_points(points, epsilon: float) -> np.ndarray:
    """Indices of the points preserved by RDP, endpoints included"""
    points = np.asarray(points, dtype=float)
    keep = np.zeros(points.shape[0], dtype=bool)
    keep[0] = keep[-1] = True
    _simplify(points, 0, points.shape[0] - 1, float(epsilon), keep)
    return np.flatnonzero(keep)


def rdp_simplify(traj: Trajectory, params: RdpParams) -> np.ndarray:
    """Split mask of `traj`: true at preserved interior points"""
    mask = np.zeros(traj.n_points, dtype=bool)
    mask[rdp_points(traj.points, params.epsilon)] = True
    mask[0] = mask[-1] = False
    return mask


def default_grid(
    eps_min: float = 10.0, eps_max: float = 300.0, count: int = 30
) -> np.ndarray:
    """Log-spaced ε grid"""
    if not 0.0 < eps_min <= eps_max or count < 1:
        raise ValidationError("invalid epsilon grid bounds")
    return np.geomspace(eps_min, eps_max, count)


def select_epsilon(
    train_trajs: Sequence[Trajectory],
    ground_truths: Sequence,
    grid: Sequence[float],
    criterion: str = "positional",
) -> float:
    """ε minimizing the mean training error

    Grid points are ranked by number of skipped trajectories (one-sided
    masks), then mean error, then ε.

    Args:
        train_trajs: training trajectories
        ground_truths: ground-truth split masks, aligned with `train_trajs`
        grid: candidate thresholds
        criterion: "positional" or "step"
    """
    # pylint: disable=import-outside-toplevel
    from agentseg.metrics import calc_errors

    if len(grid) == 0:
        raise ValidationError("epsilon grid is empty")
    if criterion not in ("positional", "step"):
        raise ValidationError(f"unknown criterion {criterion!r}")
    column = 0 if criterion == "positional" else 1
    ranking = []
    for epsilon in sorted(float(value) for value in grid):
        params = RdpParams(epsilon)
        errors, skipped = [], 0
        for traj, truth in zip(train_trajs, ground_truths):
            try:
                errors.append(calc_errors(traj, rdp_simplify(traj, params), truth))
            except UnmatchedSegmentationError:
                skipped += 1
        mean = float(np.mean([err[column] for err in errors])) if errors else np.inf
        ranking.append((skipped, mean, epsilon))
    best = min(ranking)
    LOG.debug(
        "** rdp::select_epsilon {}".format(
            {"epsilon": best[2], "skipped": best[0], "error": best[1]}
        )
    )
    return best[2]
