# -*- coding: utf-8 -*-

"""
agentseg.core
-------------

Domain types shared by every module: trajectories, agent models, hidden
tuples and segmentations. Instances are immutable once built (numpy arrays are
copied and flagged read-only).
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from agentseg.errors import ValidationError

#: Minimum eigenvalue of estimated covariances (pixel² units)
COV_FLOOR = 1e-6

#: Tolerance on the sum of mixture weights
PI_SUM_TOL = 1e-9

LOG_2PI = np.log(2.0 * np.pi)


def _frozen_array(value, dtype=float, shape=None, name="array") -> np.ndarray:
    """Return a read-only copy of `value`, checking its shape"""
    array = np.array(value, dtype=dtype, copy=True)
    if shape is not None and array.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered sequence of 2D observations (pixels) of one pedestrian

    Args:
        id: trajectory identifier
        points: array of shape (τ+1, 2)
        frames: integer frame indices (defaults to 0..τ)
    """

    id: object
    points: np.ndarray
    frames: np.ndarray | None = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValidationError(
                f"trajectory {self.id!r}: points must have shape (n, 2), "
                f"got {points.shape}"
            )
        if points.shape[0] < 2:
            raise ValidationError(f"trajectory {self.id!r}: at least 2 points needed")
        if not np.all(np.isfinite(points)):
            raise ValidationError(f"trajectory {self.id!r}: non-finite coordinates")
        if self.frames is None:
            frames = np.arange(points.shape[0])
        else:
            frames = np.array(self.frames, dtype=np.int64)
            if frames.shape != (points.shape[0],):
                raise ValidationError(
                    f"trajectory {self.id!r}: {frames.size} frames "
                    f"for {points.shape[0]} points"
                )
            if np.any(np.diff(frames) <= 0):
                raise ValidationError(
                    f"trajectory {self.id!r}: frame indices not strictly increasing"
                )
        object.__setattr__(self, "points", _frozen_array(points))
        object.__setattr__(self, "frames", _frozen_array(frames, dtype=np.int64))

    @property
    def n_points(self) -> int:
        """Number of observed points (τ+1)"""
        return self.points.shape[0]

    @property
    def tau(self) -> int:
        """Index of the last observation"""
        return self.points.shape[0] - 1

    @property
    def first(self) -> np.ndarray:
        """First observed point"""
        return self.points[0]

    @property
    def last(self) -> np.ndarray:
        """Last observed point"""
        return self.points[-1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class DynamicsParams:
    """Linear dynamics x_t = A x_{t-1} + b + N(0, Q), y_t = x_t + N(0, R)"""

    A: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name, shape in (("A", (2, 2)), ("b", (2,)), ("Q", (2, 2)), ("R", (2, 2))):
            value = _frozen_array(getattr(self, name), shape=shape, name=name)
            object.__setattr__(self, name, value)


@dataclass(frozen=True, eq=False)
class BeliefParams:
    """Gaussian beliefs on start (mu_s, Phi_s) and end (mu_e, Phi_e) states"""

    mu_s: np.ndarray
    Phi_s: np.ndarray
    mu_e: np.ndarray
    Phi_e: np.ndarray

    def __post_init__(self):
        for name, shape in (
            ("mu_s", (2,)),
            ("Phi_s", (2, 2)),
            ("mu_e", (2,)),
            ("Phi_e", (2, 2)),
        ):
            value = _frozen_array(getattr(self, name), shape=shape, name=name)
            object.__setattr__(self, name, value)


@dataclass(frozen=True, eq=False)
class AgentModel:
    """Agent: dynamics, beliefs, mixture weight and Poisson duration rates"""

    dynamics: DynamicsParams
    belief: BeliefParams
    pi: float = 1.0
    lambda_s: float = 1.0
    lambda_e: float = 1.0

    def __post_init__(self):
        for name in ("pi", "lambda_s", "lambda_e"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def replace(self, **changes) -> AgentModel:
        """Return a copy with some fields replaced"""
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Mixture of M agents"""

    agents: tuple[AgentModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def num_agents(self) -> int:
        """Number of agents M"""
        return len(self.agents)

    @property
    def weights(self) -> np.ndarray:
        """Mixture weights π"""
        return np.array([agent.pi for agent in self.agents])

    def __len__(self) -> int:
        return len(self.agents)

    def __getitem__(self, index: int) -> AgentModel:
        return self.agents[index]

    def __iter__(self) -> Iterator[AgentModel]:
        return iter(self.agents)

    def permuted(self, order: Sequence[int]) -> MixtureModel:
        """Return the model whose agent i is agent order[i] of this one"""
        if sorted(order) != list(range(self.num_agents)):
            raise ValidationError(f"{list(order)} is not a permutation")
        return MixtureModel(tuple(self.agents[index] for index in order))

    def with_agent(self, index: int, agent: AgentModel) -> MixtureModel:
        """Return a copy with agent `index` replaced"""
        agents = list(self.agents)
        agents[index] = agent
        return MixtureModel(tuple(agents))


class HiddenTuple(NamedTuple):
    """Hidden variables of one trajectory: agent and padding lengths"""

    z: int
    t_s: int
    t_e: int


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Per-point agent labels and the derived split mask

    ``split_mask[i]`` is true when ``labels[i] != labels[i - 1]``;
    ``split_mask[0]`` is always false.
    """

    trajectory_id: object
    labels: np.ndarray
    split_mask: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        mask = np.array(self.split_mask, dtype=bool)
        if labels.ndim != 1 or mask.shape != labels.shape:
            raise ValidationError(
                f"trajectory {self.trajectory_id!r}: labels and split mask "
                "must be 1D arrays of the same length"
            )
        if not np.array_equal(mask, split_mask_from_labels(labels)):
            raise ValidationError(
                f"trajectory {self.trajectory_id!r}: split mask inconsistent "
                "with labels"
            )
        object.__setattr__(self, "labels", _frozen_array(labels, dtype=np.int64))
        object.__setattr__(self, "split_mask", _frozen_array(mask, dtype=bool))

    @classmethod
    def from_labels(cls, trajectory_id, labels) -> Segmentation:
        """Build segmentation from per-point labels"""
        labels = np.asarray(labels, dtype=np.int64)
        return cls(trajectory_id, labels, split_mask_from_labels(labels))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_splits(self) -> int:
        """Number of segmentation points"""
        return int(np.count_nonzero(self.split_mask))

    def segments(self) -> Iterator[tuple[int, int, int]]:
        """Yield (label, start, stop) runs of constant label"""
        bounds = np.concatenate(
            ([0], np.flatnonzero(self.split_mask), [self.labels.shape[0]])
        )
        for start, stop in zip(bounds[:-1], bounds[1:]):
            yield int(self.labels[start]), int(start), int(stop)


def split_mask_from_labels(labels) -> np.ndarray:
    """Return boolean mask d with d[i] = labels[i] != labels[i-1], d[0] = False"""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    if labels.size > 1:
        mask[1:] = labels[1:] != labels[:-1]
    return mask


def project_spd(matrix, floor: float = COV_FLOOR) -> np.ndarray:
    """Symmetrize and clamp eigenvalues to `floor` (works on stacks of matrices)"""
    matrix = np.asarray(matrix, dtype=float)
    sym = 0.5 * (matrix + np.swapaxes(matrix, -1, -2))
    eigvals, eigvecs = np.linalg.eigh(sym)
    if np.all(eigvals >= floor):
        return sym
    eigvals = np.maximum(eigvals, floor)
    return (eigvecs * eigvals[..., None, :]) @ np.swapaxes(eigvecs, -1, -2)


def gauss_logpdf(x, mean, cov) -> np.ndarray:
    """Log-density of multivariate normals, broadcast over leading axes

    Args:
        x: points (..., d)
        mean: means (..., d)
        cov: covariances (..., d, d)
    """
    diff = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    cov = np.broadcast_to(cov, diff.shape + diff.shape[-1:])
    sol = np.linalg.solve(cov, diff[..., None])[..., 0]
    _sign, logdet = np.linalg.slogdet(cov)
    quad = np.sum(diff * sol, axis=-1)
    return -0.5 * (quad + logdet + diff.shape[-1] * LOG_2PI)


def poisson_logpmf(k, lam) -> np.ndarray:
    """Poisson log-probability of `k` events with rate `lam`"""
    return stats.poisson.logpmf(k, lam)


def _spd_violation(name: str, matrix: np.ndarray) -> str | None:
    if not np.all(np.isfinite(matrix)):
        return f"{name} has non-finite entries"
    if not np.allclose(matrix, matrix.T, rtol=1e-9, atol=1e-12):
        return f"{name} must be symmetric positive-definite (not symmetric)"
    min_eig = np.linalg.eigvalsh(matrix).min()
    if min_eig < COV_FLOOR * (1.0 - 1e-6):
        return (
            f"{name} must be symmetric positive-definite "
            f"(minimum eigenvalue {min_eig:g} < {COV_FLOOR:g})"
        )
    return None


def validate_model(model: MixtureModel) -> list[str]:
    """Return the list of invariant violations of `model` (empty if valid)"""
    violations = []
    if model.num_agents < 1:
        return ["mixture must contain at least one agent"]
    total = float(np.sum(model.weights))
    if abs(total - 1.0) > PI_SUM_TOL:
        violations.append(f"mixture weights pi must sum to 1 (sum = {total!r})")
    for index, agent in enumerate(model.agents):
        prefix = f"agent {index}: "
        if not 0.0 < agent.pi <= 1.0:
            violations.append(prefix + f"pi must lie in (0, 1] (pi = {agent.pi!r})")
        for name in ("lambda_s", "lambda_e"):
            value = getattr(agent, name)
            if not (np.isfinite(value) and value > 0.0):
                violations.append(prefix + f"{name} must be positive ({value!r})")
        dyn, bel = agent.dynamics, agent.belief
        for name, vector in (("A", dyn.A), ("b", dyn.b), ("mu_s", bel.mu_s)):
            if not np.all(np.isfinite(vector)):
                violations.append(prefix + f"{name} has non-finite entries")
        if not np.all(np.isfinite(bel.mu_e)):
            violations.append(prefix + "mu_e has non-finite entries")
        for name, matrix in (
            ("Q", dyn.Q),
            ("R", dyn.R),
            ("Phi_s", bel.Phi_s),
            ("Phi_e", bel.Phi_e),
        ):
            message = _spd_violation(name, matrix)
            if message is not None:
                violations.append(prefix + message)
    return violations
