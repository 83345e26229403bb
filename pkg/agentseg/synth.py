# -*- coding: utf-8 -*-

"""
agentseg.synth
--------------

Sampling from the generative model: padding lengths from Poisson priors, start
state from the start belief, noisy linear dynamics, observations on the
observed span only.

Random numbers come from numpy's PCG64 generator; trajectory ``k`` of a corpus
uses the seed sequence ``[seed, k]``, so corpora do not depend on the order in
which trajectories are generated.
"""

# pylint: disable=invalid-name  # Allows short reference names like A, b, Q, ...

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from agentseg.core import (
    AgentModel,
    BeliefParams,
    DynamicsParams,
    HiddenTuple,
    MixtureModel,
    Segmentation,
    Trajectory,
)
from agentseg.errors import NumericalError, ValidationError
from agentseg.utils.loghelper import LOG
from agentseg.utils.misc import parallel_map


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """Sampled trajectory with its latent variables

    ``end_deviation`` is the Mahalanobis distance of the last latent state
    under the end belief.
    """

    trajectory: Trajectory
    hidden: HiddenTuple
    states: np.ndarray
    end_deviation: float
    attempts: int = 1


@dataclass(frozen=True, eq=False)
class SwitchingSample:
    """Trajectory made of several dynamics regimes, with its ground truth"""

    trajectory: Trajectory
    segmentation: Segmentation
    states: np.ndarray

    @property
    def split_mask(self) -> np.ndarray:
        """Ground-truth mask g (true at switch indices)"""
        return self.segmentation.split_mask


def make_rng(seed, index: int | None = None) -> np.random.Generator:
    """PCG64 generator from `seed` (sub-stream `index` if given)"""
    if isinstance(seed, np.random.Generator):
        return seed
    if index is not None:
        seed = np.random.SeedSequence([int(seed), int(index)])
    return np.random.Generator(np.random.PCG64(seed))


def _gaussian(rng: np.random.Generator, mean, cov) -> np.ndarray:
    """Draw from N(mean, cov) through the Cholesky factor of cov"""
    return mean + np.linalg.cholesky(cov) @ rng.standard_normal(2)


def _mahalanobis(x, mean, cov) -> float:
    diff = x - mean
    return float(np.sqrt(diff @ np.linalg.solve(cov, diff)))


def _draw(agent: AgentModel, n_points: int, rng: np.random.Generator):
    dyn, bel = agent.dynamics, agent.belief
    t_s = int(rng.poisson(agent.lambda_s))
    t_e = int(rng.poisson(agent.lambda_e))
    chol_q = np.linalg.cholesky(dyn.Q)
    chol_r = np.linalg.cholesky(dyn.R)
    length = t_s + n_points + t_e
    states = np.empty((length, 2))
    states[0] = _gaussian(rng, bel.mu_s, bel.Phi_s)
    for t in range(1, length):
        states[t] = dyn.A @ states[t - 1] + dyn.b + chol_q @ rng.standard_normal(2)
    noise = rng.standard_normal((n_points, 2)) @ chol_r.T
    points = states[t_s : t_s + n_points] + noise
    deviation = _mahalanobis(states[-1], bel.mu_e, bel.Phi_e)
    return t_s, t_e, states, points, deviation


def sample_trajectory(
    agent: AgentModel,
    n_points: int = 20,
    seed=0,
    traj_id="0",
    z: int = 0,
    rejection: bool = False,
    k_sigma: float = 3.0,
    max_attempts: int = 1000,
) -> SampledTrajectory:
    """Draw one trajectory from an agent

    Args:
        agent: agent
        n_points: number of observed points
        seed: seed or generator
        traj_id: trajectory identifier
        z: agent index recorded in the hidden tuple
        rejection: redraw until the end state lies within `k_sigma` of the
         end belief
        k_sigma: rejection radius (Mahalanobis distance)
        max_attempts: rejection budget
    """
    if n_points < 2:
        raise ValidationError("a trajectory needs at least 2 points")
    rng = make_rng(seed)
    for attempt in range(1, max_attempts + 1):
        t_s, t_e, states, points, deviation = _draw(agent, n_points, rng)
        if not rejection or deviation <= k_sigma:
            return SampledTrajectory(
                Trajectory(traj_id, points),
                HiddenTuple(int(z), t_s, t_e),
                states,
                deviation,
                attempt,
            )
    raise NumericalError(
        f"no end state within {k_sigma} sigma of the end belief "
        f"after {max_attempts} attempts"
    )


def sample_corpus(
    model: MixtureModel,
    count: int,
    n_points=20,
    seed: int = 0,
    rejection: bool = False,
    k_sigma: float = 3.0,
) -> list[SampledTrajectory]:
    """Draw `count` trajectories, agents chosen by the mixture weights

    Args:
        model: mixture of agents
        count: number of trajectories
        n_points: number of points, or (min, max) range drawn uniformly
        seed: corpus seed
        rejection: see :func:`sample_trajectory`
        k_sigma: see :func:`sample_trajectory`
    """
    weights = model.weights / np.sum(model.weights)

    def draw(k: int) -> SampledTrajectory:
        rng = make_rng(seed, k)
        z = int(rng.choice(model.num_agents, p=weights))
        length = _draw_length(rng, n_points)
        return sample_trajectory(
            model[z],
            length,
            rng,
            traj_id=f"{k:05d}",
            z=z,
            rejection=rejection,
            k_sigma=k_sigma,
        )

    samples = parallel_map(draw, range(count))
    LOG.debug("** synth::sample_corpus {}".format({"count": count, "seed": seed}))
    return samples


def _draw_length(rng: np.random.Generator, n_points) -> int:
    if np.ndim(n_points) == 0:
        return int(n_points)
    low, high = n_points
    return int(rng.integers(low, high + 1))


def sample_switching(
    model: MixtureModel,
    regimes: Sequence[int],
    schedule: Sequence[int],
    n_points: int,
    seed=0,
    traj_id="0",
) -> SwitchingSample:
    """Draw a trajectory whose dynamics switch between agents

    Args:
        model: agents
        regimes: agent index of each regime (consecutive regimes differ)
        schedule: strictly increasing switch indices (first point of each
         regime after the first one)
        n_points: number of points
        seed: seed or generator
        traj_id: trajectory identifier
    """
    schedule = [int(index) for index in schedule]
    regimes = [int(index) for index in regimes]
    if len(regimes) != len(schedule) + 1:
        raise ValidationError("one regime more than switch indices is needed")
    if any(b <= a for a, b in zip(schedule[:-1], schedule[1:])):
        raise ValidationError("switch indices must be strictly increasing")
    if schedule and not 0 < schedule[0] <= schedule[-1] < n_points:
        raise ValidationError("switch indices must lie inside the trajectory")
    if any(a == b for a, b in zip(regimes[:-1], regimes[1:])):
        raise ValidationError("consecutive regimes must use different agents")
    if any(not 0 <= z < model.num_agents for z in regimes):
        raise ValidationError("regime agent index out of range")
    rng = make_rng(seed)
    labels = np.empty(n_points, dtype=np.int64)
    bounds = [0] + schedule + [n_points]
    for regime, (start, stop) in enumerate(zip(bounds[:-1], bounds[1:])):
        labels[start:stop] = regimes[regime]
    first = model[regimes[0]].belief
    states = np.empty((n_points, 2))
    states[0] = _gaussian(rng, first.mu_s, first.Phi_s)
    for t in range(1, n_points):
        dyn = model[labels[t]].dynamics
        step_noise = np.linalg.cholesky(dyn.Q) @ rng.standard_normal(2)
        states[t] = dyn.A @ states[t - 1] + dyn.b + step_noise
    points = np.empty((n_points, 2))
    for t in range(n_points):
        chol_r = np.linalg.cholesky(model[labels[t]].dynamics.R)
        points[t] = states[t] + chol_r @ rng.standard_normal(2)
    return SwitchingSample(
        Trajectory(traj_id, points), Segmentation.from_labels(traj_id, labels), states
    )


def random_schedule(
    rng: np.random.Generator, n_points: int, n_switches: int, min_gap: int
) -> list[int]:
    """Switch indices leaving at least `min_gap` points in every regime"""
    n_regimes = n_switches + 1
    extra = n_points - n_regimes * min_gap
    if extra < 0:
        raise ValidationError(
            f"{n_points} points cannot hold {n_regimes} regimes of {min_gap} points"
        )
    lengths = min_gap + rng.multinomial(extra, np.full(n_regimes, 1.0 / n_regimes))
    return [int(index) for index in np.cumsum(lengths)[:-1]]


def sample_switching_corpus(
    model: MixtureModel,
    count: int,
    n_points: int = 30,
    n_switches: int = 1,
    min_gap: int = 6,
    seed: int = 0,
) -> list[SwitchingSample]:
    """Draw `count` switching trajectories with random schedules

    The first regime's agent follows the mixture weights, each next one is
    drawn uniformly among the other agents.
    """
    if model.num_agents < 2 and n_switches > 0:
        raise ValidationError("switching needs at least 2 agents")
    weights = model.weights / np.sum(model.weights)

    def draw(k: int) -> SwitchingSample:
        rng = make_rng(seed, k)
        schedule = random_schedule(rng, n_points, n_switches, min_gap)
        regimes = [int(rng.choice(model.num_agents, p=weights))]
        for _ in range(n_switches):
            others = [z for z in range(model.num_agents) if z != regimes[-1]]
            regimes.append(int(others[rng.integers(len(others))]))
        return sample_switching(
            model, regimes, schedule, n_points, rng, traj_id=f"{k:05d}"
        )

    return parallel_map(draw, range(count))


def lane_agents(
    n_lanes: int = 2,
    step: float = 30.0,
    spacing: float = 300.0,
    reversion: float = 0.1,
    q: float = 4.0,
    r: float = 1.0,
    length: int = 20,
    origin=(150.0, 150.0),
    spread: float = 100.0,
) -> MixtureModel:
    """Agents walking right along parallel lanes

    Lane ``m`` is centred on ``y = origin[1] + m * spacing``; agents share their
    speed and noise levels. The vertical position relaxes toward the lane centre
    at rate `reversion` (``A = diag(1, 1 - reversion)``), so a lane change is a
    switch of dynamics that only lane-specific agents can explain. With a zero
    rate all agents have the same dynamics and differ by their beliefs only.

    Args:
        n_lanes: number of agents
        step: horizontal displacement per step
        spacing: distance between lane centres
        reversion: relaxation rate, in [0, 1)
        q: process noise variance (per axis)
        r: observation noise variance (per axis)
        length: the end belief is the start belief moved `length` + 1 steps
        origin: start belief of lane 0
        spread: belief variance (per axis)
    """
    if n_lanes < 1:
        raise ValidationError("at least one lane is needed")
    if not 0.0 <= reversion < 1.0:
        raise ValidationError(f"reversion rate must lie in [0, 1), got {reversion}")
    A = np.diag([1.0, 1.0 - reversion])
    agents = []
    for lane in range(n_lanes):
        center = origin[1] + spacing * lane
        b = np.array([step, reversion * center])
        mu_s = np.array([origin[0], center], dtype=float)
        mu_e = mu_s
        for _ in range(length + 1):
            mu_e = A @ mu_e + b
        agents.append(
            AgentModel(
                DynamicsParams(A, b, q * np.eye(2), r * np.eye(2)),
                BeliefParams(mu_s, spread * np.eye(2), mu_e, spread * np.eye(2)),
                pi=1.0 / n_lanes,
            )
        )
    return MixtureModel(tuple(agents))
