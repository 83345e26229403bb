# -*- coding: utf-8 -*-

"""
agentseg.analytics
------------------

Behavior analysis: normalized transition matrix and its thresholded graph,
agent occurrence map over a grid of the scene, and KDE density maps of the
points of each agent's segments.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from agentseg.core import Segmentation, Trajectory
from agentseg.errors import ValidationError
from agentseg.utils.loghelper import LOG


@dataclass(frozen=True)
class GridSpec:
    """Regular grid over the scene (pixels); row index follows y"""

    rows: int = 10
    cols: int = 10
    width: float = 1920.0
    height: float = 1080.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("grid needs at least one row and one column")
        if not (self.width > 0.0 and self.height > 0.0):
            raise ValidationError("scene size must be positive")

    @property
    def cell_width(self) -> float:
        """Cell width (pixels)"""
        return self.width / self.cols

    @property
    def cell_height(self) -> float:
        """Cell height (pixels)"""
        return self.height / self.rows

    @property
    def cell_area(self) -> float:
        """Cell area (pixels²)"""
        return self.cell_width * self.cell_height

    def cells_of(self, points) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) of each point; points outside the scene are clipped"""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        cols = np.floor(points[:, 0] / self.cell_width).astype(np.int64)
        rows = np.floor(points[:, 1] / self.cell_height).astype(np.int64)
        return np.clip(rows, 0, self.rows - 1), np.clip(cols, 0, self.cols - 1)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """x coordinates of column centers and y coordinates of row centers"""
        x = (np.arange(self.cols) + 0.5) * self.cell_width
        y = (np.arange(self.rows) + 0.5) * self.cell_height
        return x, y


@dataclass(frozen=True, eq=False)
class OccurrenceGrid:
    """Number of distinct agents whose labelled points fall in each cell"""

    layout: GridSpec
    counts: np.ndarray


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """KDE density evaluated at cell centers (sum × cell area = 1)"""

    layout: GridSpec
    bandwidth: float
    values: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        """(rows, cols)"""
        return self.values.shape


def normalize_transitions(A) -> np.ndarray:
    """Zero the diagonal and renormalize rows; all-zero rows stay zero"""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("transition matrix must be square")
    off = A - np.diag(np.diag(A))
    totals = off.sum(axis=1, keepdims=True)
    return np.where(totals > 0.0, off / np.where(totals > 0.0, totals, 1.0), 0.0)


def flagged_rows(normalized) -> np.ndarray:
    """Rows of a normalized transition matrix without off-diagonal mass"""
    return np.flatnonzero(~np.any(np.asarray(normalized) > 0.0, axis=1))


class TransitionTables(NamedTuple):
    """Transition matrix, its normalized form and the rows left at zero"""

    matrix: np.ndarray
    normalized: np.ndarray
    flagged: np.ndarray


def transition_tables(hmm) -> TransitionTables:
    """Tables of a trained HMM (or transition matrix)"""
    matrix = np.asarray(getattr(hmm, "transition", hmm), dtype=float)
    normalized = normalize_transitions(matrix)
    flagged = flagged_rows(normalized)
    if flagged.size:
        LOG.warning(f"agents without transitions to other agents: {list(flagged)}")
    return TransitionTables(matrix, normalized, flagged)


def transition_graph(
    normalized, threshold: float = 0.2
) -> list[tuple[int, int, float]]:
    """Edges (i, j, weight) with normalized probability above `threshold`"""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold!r}")
    normalized = np.asarray(normalized, dtype=float)
    rows, cols = np.nonzero(normalized > threshold)
    return [(int(i), int(j), float(normalized[i, j])) for i, j in zip(rows, cols)]


def _check_alignment(segmentations, trajs):
    if len(segmentations) != len(trajs):
        raise ValidationError("segmentations and trajectories differ in number")
    for seg, traj in zip(segmentations, trajs):
        if len(seg) != traj.n_points:
            raise ValidationError(
                f"trajectory {traj.id!r}: {len(seg)} labels for {traj.n_points} points"
            )


def occurrence_map(
    segmentations: Sequence[Segmentation],
    trajs: Sequence[Trajectory],
    layout: GridSpec | None = None,
) -> OccurrenceGrid:
    """Count the distinct agent labels present in each cell"""
    layout = GridSpec() if layout is None else layout
    _check_alignment(segmentations, trajs)
    counts = np.zeros((layout.rows, layout.cols), dtype=np.int64)
    if not trajs:
        return OccurrenceGrid(layout, counts)
    rows, cols, labels = [], [], []
    for seg, traj in zip(segmentations, trajs):
        row, col = layout.cells_of(traj.points)
        rows.append(row)
        cols.append(col)
        labels.append(seg.labels)
    cells = np.concatenate(rows) * layout.cols + np.concatenate(cols)
    pairs = np.unique(np.stack((cells, np.concatenate(labels)), axis=1), axis=0)
    counts = np.bincount(pairs[:, 0], minlength=layout.rows * layout.cols)
    counts = counts.reshape(layout.rows, layout.cols)
    return OccurrenceGrid(layout, counts)


def agent_points(
    segmentations: Sequence[Segmentation], trajs: Sequence[Trajectory], agent: int
) -> np.ndarray:
    """Points labelled `agent`, shape (n, 2)"""
    _check_alignment(segmentations, trajs)
    chunks = [
        traj.points[seg.labels == agent] for seg, traj in zip(segmentations, trajs)
    ]
    chunks.append(np.zeros((0, 2)))
    return np.concatenate(chunks)


def default_bandwidth(points, layout: GridSpec) -> float:
    """n^(-1/6) times the mean per-axis standard deviation of the points

    Falls back to the smallest cell side when the points do not spread.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    sigma = float(np.mean(np.std(points, axis=0)))
    bandwidth = points.shape[0] ** (-1.0 / 6.0) * sigma
    if not bandwidth > 0.0:
        bandwidth = min(layout.cell_width, layout.cell_height)
    return bandwidth


def density_map(
    points, layout: GridSpec | None = None, bandwidth: float | None = None
) -> DensityGrid:
    """Isotropic Gaussian KDE of `points` at the cell centers"""
    layout = GridSpec(64, 64) if layout is None else layout
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] < 1:
        raise ValidationError("density map needs at least one point")
    if bandwidth is None:
        bandwidth = default_bandwidth(points, layout)
    elif not bandwidth > 0.0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth!r}")
    x, y = layout.centers()
    # Separable kernel: (rows, n) @ (n, cols)
    kernel_x = stats.norm.pdf(x[None, :], loc=points[:, :1], scale=bandwidth)
    kernel_y = stats.norm.pdf(y[None, :], loc=points[:, 1:], scale=bandwidth)
    values = kernel_y.T @ kernel_x
    total = values.sum() * layout.cell_area
    if total > 0.0:
        values = values / total
    return DensityGrid(layout, float(bandwidth), values)
