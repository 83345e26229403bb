# -*- coding: utf-8 -*-

"""
agentseg.metrics
----------------

Positional and step errors between estimated and ground-truth segmentation
points, and the cross-validation harness.

Every segmentation point of one mask is matched to the nearest-index point of
the other mask (ties: smaller index); distances are accumulated in both
directions and divided by the total number of points of both masks.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from agentseg.core import Segmentation, Trajectory
from agentseg.em import EmConfig, fit
from agentseg.errors import (
    AgentSegError,
    TrainingError,
    UnmatchedSegmentationError,
    ValidationError,
)
from agentseg.hmm import HmmConfig, HmmModel, segment, train_hmm
from agentseg.rdp import RdpParams, default_grid, rdp_simplify, select_epsilon
from agentseg.utils.loghelper import LOG


def as_mask(value) -> np.ndarray:
    """Split mask of a segmentation or boolean array"""
    if isinstance(value, Segmentation):
        return value.split_mask
    return np.asarray(value, dtype=bool)


def _one_way(points: np.ndarray, source: np.ndarray, target: np.ndarray):
    """Sum of distances from each `source` index to its nearest `target` index"""
    gaps = np.abs(target[None, :] - source[:, None])
    nearest = target[np.argmin(gaps, axis=1)]
    delta = points[source] - points[nearest]
    return float(np.sum(np.hypot(delta[:, 0], delta[:, 1]))), float(
        np.sum(np.abs(source - nearest))
    )


def calc_errors(traj: Trajectory, d, g) -> tuple[float, float]:
    """Positional and step errors between masks `d` (estimate) and `g`

    Raises:
        UnmatchedSegmentationError: exactly one of the masks is empty
    """
    d, g = as_mask(d), as_mask(g)
    if d.shape != (traj.n_points,) or g.shape != (traj.n_points,):
        raise ValidationError(
            f"trajectory {traj.id!r}: masks must have {traj.n_points} entries"
        )
    est, gt = np.flatnonzero(d), np.flatnonzero(g)
    if est.size == 0 and gt.size == 0:
        return 0.0, 0.0
    if est.size == 0 or gt.size == 0:
        raise UnmatchedSegmentationError(traj.id, est.size, gt.size)
    pos_a, step_a = _one_way(traj.points, est, gt)
    pos_b, step_b = _one_way(traj.points, gt, est)
    total = est.size + gt.size
    return (pos_a + pos_b) / total, (step_a + step_b) / total


@dataclass(frozen=True)
class TrajectoryError:
    """Errors of one trajectory"""

    trajectory_id: object
    e_pos: float
    e_step: float
    n_est: int
    n_gt: int


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Mean errors over the evaluated trajectories

    Errors are NaN when every trajectory was skipped.
    """

    e_pos: float
    e_step: float
    per_trajectory: tuple[TrajectoryError, ...] = ()
    skipped: tuple = ()

    @property
    def n_evaluated(self) -> int:
        """Number of trajectories entering the means"""
        return len(self.per_trajectory)


def evaluate(
    trajs: Sequence[Trajectory], estimates: Sequence, ground_truths: Sequence
) -> ErrorReport:
    """Aggregate errors; trajectories with one empty mask are skipped"""
    if not len(trajs) == len(estimates) == len(ground_truths):
        raise ValidationError("trajectories, estimates and ground truths differ")
    rows, skipped = [], []
    for traj, est, truth in zip(trajs, estimates, ground_truths):
        d, g = as_mask(est), as_mask(truth)
        try:
            e_pos, e_step = calc_errors(traj, d, g)
        except UnmatchedSegmentationError:
            skipped.append(traj.id)
            continue
        n_est, n_gt = int(np.count_nonzero(d)), int(np.count_nonzero(g))
        rows.append(TrajectoryError(traj.id, e_pos, e_step, n_est, n_gt))
    if skipped:
        LOG.info(f"{len(skipped)} trajectories skipped (one-sided segmentation)")
    if not rows:
        return ErrorReport(np.nan, np.nan, (), tuple(skipped))
    return ErrorReport(
        e_pos=float(np.mean([row.e_pos for row in rows])),
        e_step=float(np.mean([row.e_step for row in rows])),
        per_trajectory=tuple(rows),
        skipped=tuple(skipped),
    )


class Segmenter(Protocol):
    """Trainable segmentation method"""

    name: str

    def train(self, trajs: Sequence[Trajectory], ground_truths: Sequence) -> None:
        """Train on trajectories (ground truth is available to the method)"""

    def detect(self, traj: Trajectory) -> np.ndarray:
        """Return the split mask of `traj`"""

    @property
    def parameter(self) -> float:
        """Trained parameter reported with the errors (M or ε)"""


class AgentSegmenter:
    """Agent estimation followed by HMM segmentation"""

    def __init__(self, em_config: EmConfig, hmm_config: HmmConfig | None = None):
        self.em_config = em_config
        self.hmm_config = HmmConfig() if hmm_config is None else hmm_config
        self.name = f"{em_config.estep_variant.value}+HMM"
        self.model = None
        self.hmm: HmmModel | None = None

    def train(self, trajs: Sequence[Trajectory], ground_truths: Sequence) -> None:
        """Fit agents then the transition matrix"""
        result = fit(trajs, self.em_config)
        self.model = result.model
        self.hmm = train_hmm(trajs, result, self.hmm_config)

    def detect(self, traj: Trajectory) -> np.ndarray:
        """Segment with the trained models"""
        if self.model is None:
            raise TrainingError("agent segmenter used before training")
        if traj.n_points < self.hmm_config.window:
            LOG.warning(
                f"trajectory {traj.id!r}: {traj.n_points} points, shorter than "
                f"the window ({self.hmm_config.window}), no segmentation point"
            )
            return np.zeros(traj.n_points, dtype=bool)
        seg = segment(
            traj,
            self.model,
            self.hmm,
            window=self.hmm_config.window,
            overlap=self.hmm_config.overlap,
            em_config=self.em_config,
        )
        return seg.split_mask

    @property
    def parameter(self) -> float:
        """Number of agents"""
        return float(self.em_config.num_agents)


class RdpSegmenter:
    """RDP with ε selected on the training set"""

    def __init__(self, grid: Sequence[float] | None = None, criterion="positional"):
        self.grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        self.criterion = criterion
        self.name = "RDP"
        self.epsilon: float | None = None

    def train(self, trajs: Sequence[Trajectory], ground_truths: Sequence) -> None:
        """Select ε"""
        masks = [as_mask(truth) for truth in ground_truths]
        self.epsilon = select_epsilon(trajs, masks, self.grid, self.criterion)

    def detect(self, traj: Trajectory) -> np.ndarray:
        """Simplify with the selected ε"""
        if self.epsilon is None:
            raise TrainingError("RDP segmenter used before training")
        return rdp_simplify(traj, RdpParams(self.epsilon))

    @property
    def parameter(self) -> float:
        """Selected ε"""
        return np.nan if self.epsilon is None else self.epsilon


@dataclass(frozen=True, eq=False)
class FoldResult:
    """Held-out evaluation of one fold"""

    index: int
    parameter: float
    report: ErrorReport
    test_ids: tuple


@dataclass(frozen=True, eq=False)
class CrossValidationReport:
    """Fold-wise results with mean and (population) standard deviation"""

    method: str
    folds: tuple[FoldResult, ...]
    failed: tuple[tuple[int, TrainingError], ...] = field(default=())

    def _values(self, name: str) -> np.ndarray:
        values = []
        for fold in self.folds:
            if name == "parameter":
                value = fold.parameter
            else:
                value = getattr(fold.report, name)
            if np.isfinite(value):
                values.append(value)
        return np.array(values)

    def mean(self, name: str) -> float:
        """Mean of "e_pos", "e_step" or "parameter" over folds"""
        values = self._values(name)
        return float(np.mean(values)) if values.size else np.nan

    def std(self, name: str) -> float:
        """Standard deviation (ddof=0) over folds, see :meth:`mean`"""
        values = self._values(name)
        return float(np.std(values)) if values.size else np.nan


def cross_validate(
    trajs: Sequence[Trajectory],
    ground_truths: Sequence,
    segmenter_factory: Callable[[], Segmenter],
    folds: int = 10,
    seed: int = 0,
) -> CrossValidationReport:
    """k-fold cross-validation of a segmentation method

    Args:
        trajs: trajectories
        ground_truths: ground-truth masks or segmentations, aligned with `trajs`
        segmenter_factory: returns a fresh untrained segmenter
        folds: number of folds
        seed: seed of the fold assignment
    """
    n_trajs = len(trajs)
    if folds < 2:
        raise ValidationError("at least 2 folds are needed")
    if n_trajs < folds:
        raise ValidationError(f"{n_trajs} trajectories cannot form {folds} folds")
    if len(ground_truths) != n_trajs:
        raise ValidationError("trajectories and ground truths differ in size")
    order = np.random.default_rng(seed).permutation(n_trajs)
    splits = np.array_split(order, folds)
    results, failed = [], []
    name = None
    for index, test_idx in enumerate(splits):
        train_idx = np.sort(np.concatenate(splits[:index] + splits[index + 1 :]))
        test_idx = np.sort(test_idx)
        segmenter = segmenter_factory()
        name = segmenter.name
        train = [trajs[k] for k in train_idx]
        test = [trajs[k] for k in test_idx]
        try:
            segmenter.train(train, [ground_truths[k] for k in train_idx])
            estimates = [segmenter.detect(traj) for traj in test]
        except AgentSegError as exc:
            error = TrainingError(f"fold {index}: {exc}")
            LOG.warning(f"cross-validation fold {index} failed: {exc}")
            failed.append((index, error))
            continue
        report = evaluate(test, estimates, [ground_truths[k] for k in test_idx])
        LOG.info(
            f"fold {index}: parameter {segmenter.parameter:g}, "
            f"E_pos {report.e_pos:.4f}, E_step {report.e_step:.4f}"
        )
        results.append(
            FoldResult(
                index, float(segmenter.parameter), report, tuple(t.id for t in test)
            )
        )
    return CrossValidationReport(name, tuple(results), tuple(failed))
