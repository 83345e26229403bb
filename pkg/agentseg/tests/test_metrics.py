# -*- coding: utf-8 -*-
"""Testing PyAgentSeg segmentation errors and cross-validation"""

import numpy as np
import pytest

from agentseg.core import Segmentation, Trajectory
from agentseg.em import EmConfig
from agentseg.errors import TrainingError, UnmatchedSegmentationError, ValidationError
from agentseg.hmm import HmmModel, default_transition
from agentseg.metrics import (
    AgentSegmenter,
    RdpSegmenter,
    calc_errors,
    cross_validate,
    evaluate,
)
from agentseg.rdp import RdpParams, rdp_simplify
from agentseg.synth import sample_switching
from agentseg.tests.helpers import crossing_model


def _random_walk(rng, traj_id, n_points=12):
    steps = rng.normal(scale=5.0, size=(n_points, 2))
    return Trajectory(traj_id, np.cumsum(steps, axis=0))


def _polyline(traj_id, corners, step=5.0):
    """Points spaced by `step` along a polyline, corner indices returned too"""
    points, split = [np.asarray(corners[0], dtype=float)], []
    for start, stop in zip(corners[:-1], corners[1:]):
        start, stop = np.asarray(start, float), np.asarray(stop, float)
        count = int(round(np.linalg.norm(stop - start) / step))
        for k in range(1, count + 1):
            points.append(start + (stop - start) * k / count)
        split.append(len(points) - 1)
    mask = np.zeros(len(points), dtype=bool)
    mask[split[:-1]] = True
    return Trajectory(traj_id, points), mask


def test_hand_trace():
    """One estimated point two steps after the ground truth"""
    rng = np.random.default_rng(0)
    traj = _random_walk(rng, "hand", 8)
    d = np.zeros(8, dtype=bool)
    g = np.zeros(8, dtype=bool)
    d[5], g[3] = True, True
    e_pos, e_step = calc_errors(traj, d, g)
    assert e_step == 2.0
    assert e_pos == pytest.approx(np.linalg.norm(traj.points[5] - traj.points[3]))


def test_nearest_match_ties():
    """Equidistant candidates match the smaller index"""
    traj = Trajectory("line", [[float(k) ** 2, 0.0] for k in range(7)])
    d = np.zeros(7, dtype=bool)
    g = np.zeros(7, dtype=bool)
    d[3] = True
    g[[1, 5]] = True
    e_pos, e_step = calc_errors(traj, d, g)
    # 3 -> 1 (tie with 5), 1 -> 3, 5 -> 3
    assert e_step == pytest.approx((2 + 2 + 2) / 3)
    assert e_pos == pytest.approx((8.0 + 8.0 + 16.0) / 3)


def test_error_properties():
    """Errors are symmetric, non-negative and vanish on identical masks"""
    rng = np.random.default_rng(1)
    for _ in range(1000):
        traj = _random_walk(rng, "r", 15)
        d = rng.random(15) < 0.3
        g = rng.random(15) < 0.3
        d[7], g[int(rng.integers(15))] = True, True
        forward = calc_errors(traj, d, g)
        assert forward == pytest.approx(calc_errors(traj, g, d))
        assert min(forward) >= 0.0
        assert calc_errors(traj, d, d) == (0.0, 0.0)
        if not np.array_equal(d, g):
            assert forward[1] > 0.0


def test_empty_masks():
    """Both empty is a perfect match, one empty cannot be matched"""
    traj = _random_walk(np.random.default_rng(2), "e", 6)
    empty = np.zeros(6, dtype=bool)
    one = empty.copy()
    one[2] = True
    assert calc_errors(traj, empty, empty) == (0.0, 0.0)
    with pytest.raises(UnmatchedSegmentationError):
        calc_errors(traj, empty, one)
    with pytest.raises(ValidationError):
        calc_errors(traj, np.zeros(5, dtype=bool), empty)


def test_evaluate_skips_one_sided():
    """One-sided trajectories are reported, not averaged"""
    rng = np.random.default_rng(3)
    trajs = [_random_walk(rng, str(k), 10) for k in range(3)]
    truth = np.zeros(10, dtype=bool)
    truth[4] = True
    shifted = np.zeros(10, dtype=bool)
    shifted[6] = True
    seg = Segmentation.from_labels("1", [0] * 6 + [1] * 4)
    report = evaluate(
        trajs, [shifted, seg, np.zeros(10, dtype=bool)], [truth, truth, truth]
    )
    assert report.skipped == ("2",)
    assert report.n_evaluated == 2
    assert report.e_step == pytest.approx(2.0)
    assert report.per_trajectory[0].n_est == 1
    empty = evaluate(trajs[:1], [np.zeros(10, dtype=bool)], [truth])
    assert np.isnan(empty.e_pos) and empty.skipped == ("0",)


class PerfectSegmenter:
    """Returns the ground truth it was built with"""

    name = "perfect"

    def __init__(self, truths):
        self.truths = truths
        self.train_sizes = []

    def train(self, trajs, ground_truths):
        """Remember the training size"""
        self.train_sizes.append(len(trajs))

    def detect(self, traj):
        """Look up the ground truth"""
        return self.truths[traj.id]

    @property
    def parameter(self):
        """Dummy parameter"""
        return 1.0


class FailingSegmenter(PerfectSegmenter):
    """Cannot train on folds where trajectory 00 is not held out"""

    name = "failing"

    def train(self, trajs, ground_truths):
        """Fail when trajectory 00 is not held out"""
        if any(traj.id == "00" for traj in trajs):
            raise TrainingError("cannot train")


def _corpus(count=20):
    trajs, truths = [], []
    for k in range(count):
        turn = 40.0 + 5.0 * k
        traj, mask = _polyline(
            f"{k:02d}", [(0.0, 0.0), (turn, 0.0), (turn, 60.0), (turn + 50.0, 60.0)]
        )
        trajs.append(traj)
        truths.append(mask)
    return trajs, truths


def test_cross_validate_perfect():
    """A perfect segmenter has zero error on every fold"""
    trajs, truths = _corpus()
    lookup = {traj.id: truth for traj, truth in zip(trajs, truths)}
    stub = PerfectSegmenter(lookup)
    report = cross_validate(trajs, truths, lambda: stub, folds=10, seed=3)
    assert report.method == "perfect"
    assert len(report.folds) == 10 and not report.failed
    assert all(len(fold.test_ids) == 2 for fold in report.folds)
    assert stub.train_sizes == [18] * 10
    held_out = sorted(k for fold in report.folds for k in fold.test_ids)
    assert held_out == sorted(traj.id for traj in trajs)
    assert report.mean("e_pos") == 0.0 and report.std("e_step") == 0.0
    assert report.mean("parameter") == 1.0
    again = cross_validate(trajs, truths, lambda: stub, folds=10, seed=3)
    assert [fold.test_ids for fold in again.folds] == [
        fold.test_ids for fold in report.folds
    ]


def test_cross_validate_failures():
    """A fold whose training fails is reported and skipped"""
    trajs, truths = _corpus()
    lookup = {traj.id: truth for traj, truth in zip(trajs, truths)}
    report = cross_validate(trajs, truths, lambda: FailingSegmenter(lookup), folds=5)
    assert len(report.failed) == 4
    assert len(report.folds) == 1
    assert "00" in report.folds[0].test_ids
    with pytest.raises(ValidationError):
        cross_validate(trajs[:3], truths[:3], lambda: FailingSegmenter(lookup), 5)
    with pytest.raises(ValidationError):
        cross_validate(trajs, truths, lambda: FailingSegmenter(lookup), folds=1)


def test_cross_validate_rdp():
    """Exactly simplifiable polylines: held-out error close to training error"""
    trajs, truths = _corpus()
    grid = [1.0, 5.0, 20.0, 200.0]
    report = cross_validate(trajs, truths, lambda: RdpSegmenter(grid), folds=4)
    assert not report.failed
    assert report.method == "RDP"
    for fold in report.folds:
        params = RdpParams(fold.parameter)
        train = [
            (traj, truth)
            for traj, truth in zip(trajs, truths)
            if traj.id not in fold.test_ids
        ]
        train_errors = [
            calc_errors(traj, rdp_simplify(traj, params), truth)[0]
            for traj, truth in train
        ]
        assert fold.report.e_pos <= np.mean(train_errors) + 0.1 * max(
            np.mean(train_errors), 1.0
        )
    assert report.mean("e_pos") == pytest.approx(0.0, abs=1e-9)


def test_agent_segmenter_short_trajectory():
    """A trajectory shorter than the window gets an empty mask"""
    segmenter = AgentSegmenter(EmConfig(num_agents=2, t_cap=2))
    with pytest.raises(TrainingError):
        segmenter.detect(Trajectory("early", np.zeros((5, 2))))
    segmenter.model = crossing_model()
    segmenter.hmm = HmmModel(default_transition(2), [0.5, 0.5])
    short = Trajectory("short", [[200.0, 300.0], [230.0, 300.0]])
    mask = segmenter.detect(short)
    assert mask.shape == (2,) and not mask.any()
    sample = sample_switching(crossing_model(), [0, 1], [15], 30, seed=3)
    assert segmenter.detect(sample.trajectory).sum() == 1


if __name__ == "__main__":
    test_hand_trace()
    test_nearest_match_ties()
    test_error_properties()
    test_empty_masks()
    test_evaluate_skips_one_sided()
    test_cross_validate_perfect()
    test_cross_validate_failures()
    test_cross_validate_rdp()
    test_agent_segmenter_short_trajectory()
