# -*- coding: utf-8 -*-

"""
agentseg.lds
------------

Linear dynamical system machinery: mean propagation and the modified Kalman
filter / RTS smoother over padded state sequences.

A hidden tuple (z, t_s, t_e) pads the τ+1 observed points with t_s states
before and t_e states after them. The start belief N(mu_s, Phi_s) is the prior
of the first padded state and the end belief N(mu_e, Phi_e) is applied as a
pseudo-observation of the last one. In "plain" mode beliefs are ignored: the
prior is a diffuse Gaussian centred on the first observation and no end
pseudo-observation is made.

Every (agent, t_s, t_e) hypothesis of a trajectory is smoothed in one batch on
a common time grid of 2·T+τ+1 steps (T being the largest padding), grid index
``T`` being the first observation.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from agentseg.core import (
    AgentModel,
    HiddenTuple,
    Trajectory,
    gauss_logpdf,
    project_spd,
)
from agentseg.errors import NumericalError
from agentseg.utils.loghelper import LOG

#: Minimum eigenvalue of filter covariances
FILTER_FLOOR = 1e-9

#: Prior variance of the first padded state when beliefs are ignored
PLAIN_PRIOR_VAR = 1e6


@dataclass(frozen=True, eq=False)
class SmoothedStates:
    """Posterior of the padded state sequence for one hidden tuple

    Padded index 0 is time -t_s, index t_s is the first observation.
    ``cross_covs[i]`` is Cov(x_{i+1}, x_i | y).
    """

    states: np.ndarray
    covs: np.ndarray
    cross_covs: np.ndarray
    log_likelihood: float
    t_s: int
    t_e: int
    observations: np.ndarray
    z: int = 0

    @property
    def hidden(self) -> HiddenTuple:
        """Hidden tuple these states were smoothed for"""
        return HiddenTuple(self.z, self.t_s, self.t_e)

    @property
    def n_states(self) -> int:
        """Padded length t_s + τ + 1 + t_e"""
        return self.states.shape[0]

    @property
    def n_transitions(self) -> int:
        """Number of transitions in the padded sequence"""
        return self.states.shape[0] - 1

    @property
    def start(self) -> np.ndarray:
        """Smoothed start state x_s"""
        return self.states[0]

    @property
    def start_cov(self) -> np.ndarray:
        """Posterior covariance of x_s"""
        return self.covs[0]

    @property
    def end(self) -> np.ndarray:
        """Smoothed end state x_e"""
        return self.states[-1]

    @property
    def end_cov(self) -> np.ndarray:
        """Posterior covariance of x_e"""
        return self.covs[-1]

    @property
    def observed_slice(self) -> slice:
        """Padded indices of the observed span"""
        return slice(self.t_s, self.t_s + self.observations.shape[0])

    @property
    def observed(self) -> np.ndarray:
        """Smoothed states over the observed span"""
        return self.states[self.observed_slice]

    @property
    def observed_covs(self) -> np.ndarray:
        """Posterior covariances over the observed span"""
        return self.covs[self.observed_slice]

    @property
    def interior(self) -> np.ndarray:
        """Smoothed states without the x_s and x_e endpoints"""
        return self.states[1:-1]


@dataclass(frozen=True, eq=False)
class SmoothedGrid:
    """Batch of smoothed hypotheses of one trajectory

    Hypothesis ``i`` is (z[i], t_s[i], t_e[i]); its padded sequence occupies
    grid indices ``first[i]`` to ``last[i]`` inclusive.
    """

    z: np.ndarray
    t_s: np.ndarray
    t_e: np.ndarray
    t_cap: int
    means: np.ndarray
    covs: np.ndarray
    cross_covs: np.ndarray
    log_likelihood: np.ndarray
    observations: np.ndarray

    def __len__(self) -> int:
        return self.z.shape[0]

    @property
    def first(self) -> np.ndarray:
        """Grid index of each hypothesis' start state"""
        return self.t_cap - self.t_s

    @property
    def last(self) -> np.ndarray:
        """Grid index of each hypothesis' end state"""
        return self.t_cap + self.observations.shape[0] - 1 + self.t_e

    @property
    def start_states(self) -> np.ndarray:
        """Smoothed x_s of every hypothesis, shape (H, 2)"""
        return self.means[np.arange(len(self)), self.first]

    @property
    def end_states(self) -> np.ndarray:
        """Smoothed x_e of every hypothesis, shape (H, 2)"""
        return self.means[np.arange(len(self)), self.last]

    def states(self, index: int) -> SmoothedStates:
        """Return the smoothed states of hypothesis `index`"""
        first, last = int(self.first[index]), int(self.last[index])
        return SmoothedStates(
            states=self.means[index, first : last + 1].copy(),
            covs=self.covs[index, first : last + 1].copy(),
            cross_covs=self.cross_covs[index, first + 1 : last + 1].copy(),
            log_likelihood=float(self.log_likelihood[index]),
            t_s=int(self.t_s[index]),
            t_e=int(self.t_e[index]),
            observations=self.observations,
            z=int(self.z[index]),
        )


def hypothesis_pairs(t_cap: int) -> np.ndarray:
    """All (t_s, t_e) pairs with 0 <= t_s, t_e <= t_cap, t_e varying fastest"""
    grid = np.arange(t_cap + 1)
    t_s, t_e = np.meshgrid(grid, grid, indexing="ij")
    return np.stack((t_s.ravel(), t_e.ravel()), axis=1)


def propagate(agent: AgentModel, x, n: int) -> np.ndarray:
    """Apply the noise-free dynamics x <- A x + b `n` times"""
    if n < 0:
        raise ValueError("number of steps must be non-negative")
    x = np.asarray(x, dtype=float)
    A, b = agent.dynamics.A, agent.dynamics.b
    for _ in range(n):
        x = A @ x + b
    return x


def _check_innovation(S: np.ndarray, mask: np.ndarray, step: int):
    """Raise if an active innovation covariance is not positive definite"""
    S = S[mask]
    if S.shape[0] == 0:
        return
    if not np.all(np.isfinite(S)) or np.any(np.linalg.eigvalsh(S)[:, 0] <= 0.0):
        raise NumericalError(
            f"innovation covariance not positive definite at step {step}", step=step
        )


def _update(mean, cov, obs, noise, mask, step):
    """Joseph-form measurement update of the hypotheses selected by `mask`"""
    S = cov + noise
    _check_innovation(S, mask, step)
    S = np.where(mask[:, None, None], S, np.eye(2))
    gain = cov @ np.linalg.inv(S)
    innovation = obs - mean
    new_mean = mean + (gain @ innovation[..., None])[..., 0]
    i_k = np.eye(2) - gain
    new_cov = i_k @ cov @ np.swapaxes(i_k, -1, -2)
    new_cov = new_cov + gain @ noise @ np.swapaxes(gain, -1, -2)
    new_cov = project_spd(new_cov, FILTER_FLOOR)
    loglik = np.where(mask, gauss_logpdf(obs, mean, S), 0.0)
    new_mean = np.where(mask[:, None], new_mean, mean)
    new_cov = np.where(mask[:, None, None], new_cov, cov)
    return new_mean, new_cov, loglik


def smooth_grid(
    traj: Trajectory,
    agents: Sequence[AgentModel],
    pairs,
    conditioned: bool = True,
) -> SmoothedGrid:
    """Smooth every (agent, t_s, t_e) hypothesis of `traj` in one batch

    Args:
        traj: trajectory
        agents: agents (hypothesis agent index is the position in this list)
        pairs: (P, 2) array of (t_s, t_e) pairs, see :func:`hypothesis_pairs`
        conditioned: if False, ignore beliefs (plain smoothing)

    Returns:
        Smoothed grid with M·P hypotheses, agent index varying slowest
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=np.int64))
    if pairs.shape[1] != 2 or np.any(pairs < 0):
        raise ValueError("pairs must be non-negative (t_s, t_e) rows")
    n_agents, n_pairs = len(agents), pairs.shape[0]
    z = np.repeat(np.arange(n_agents), n_pairs)
    t_s = np.tile(pairs[:, 0], n_agents)
    t_e = np.tile(pairs[:, 1], n_agents)
    n_hyp = z.shape[0]
    t_cap = int(pairs.max())
    obs = traj.points
    tau = traj.tau
    length = 2 * t_cap + tau + 1
    first = t_cap - t_s
    last = t_cap + tau + t_e

    A = np.stack([agent.dynamics.A for agent in agents])[z]
    A_t = np.swapaxes(A, -1, -2)
    b = np.stack([agent.dynamics.b for agent in agents])[z]
    Q = np.stack([agent.dynamics.Q for agent in agents])[z]
    R = np.stack([agent.dynamics.R for agent in agents])[z]
    if conditioned:
        mu0 = np.stack([agent.belief.mu_s for agent in agents])[z]
        P0 = np.stack([agent.belief.Phi_s for agent in agents])[z]
        mu_e = np.stack([agent.belief.mu_e for agent in agents])[z]
        Phi_e = np.stack([agent.belief.Phi_e for agent in agents])[z]
    else:
        mu0 = np.broadcast_to(obs[0], (n_hyp, 2))
        P0 = np.broadcast_to(PLAIN_PRIOR_VAR * np.eye(2), (n_hyp, 2, 2))

    pred_means = np.zeros((n_hyp, length, 2))
    pred_covs = np.zeros((n_hyp, length, 2, 2))
    filt_means = np.zeros((n_hyp, length, 2))
    filt_covs = np.zeros((n_hyp, length, 2, 2))
    loglik = np.zeros(n_hyp)
    mean = np.zeros((n_hyp, 2))
    cov = np.broadcast_to(np.eye(2), (n_hyp, 2, 2))

    # Forward pass
    for g in range(length):
        t = g - t_cap
        starting = first == g
        active = (first <= g) & (g <= last)
        mean = (A @ mean[..., None])[..., 0] + b
        cov = project_spd(A @ cov @ A_t + Q, FILTER_FLOOR)
        mean = np.where(starting[:, None], mu0, mean)
        cov = np.where(starting[:, None, None], P0, cov)
        pred_means[:, g], pred_covs[:, g] = mean, cov
        if 0 <= t <= tau:
            mean, cov, step_ll = _update(mean, cov, obs[t], R, active, t)
            loglik += step_ll
        if conditioned:
            ending = last == g
            if np.any(ending):
                mean, cov, step_ll = _update(mean, cov, mu_e, Phi_e, ending, t)
                loglik += step_ll
        filt_means[:, g], filt_covs[:, g] = mean, cov

    # Backward (Rauch-Tung-Striebel) pass
    means = filt_means.copy()
    covs = filt_covs.copy()
    cross_covs = np.zeros((n_hyp, length, 2, 2))
    for g in range(length - 2, -1, -1):
        inner = (first <= g) & (g < last)
        if not np.any(inner):
            continue
        next_cov = np.where(inner[:, None, None], pred_covs[:, g + 1], np.eye(2))
        gain = filt_covs[:, g] @ A_t @ np.linalg.inv(next_cov)
        gain_t = np.swapaxes(gain, -1, -2)
        delta = means[:, g + 1] - pred_means[:, g + 1]
        new_mean = filt_means[:, g] + (gain @ delta[..., None])[..., 0]
        new_cov = filt_covs[:, g] + gain @ (covs[:, g + 1] - next_cov) @ gain_t
        new_cov = project_spd(new_cov, FILTER_FLOOR)
        means[:, g] = np.where(inner[:, None], new_mean, means[:, g])
        covs[:, g] = np.where(inner[:, None, None], new_cov, covs[:, g])
        cross = covs[:, g + 1] @ gain_t
        cross_covs[:, g + 1] = np.where(inner[:, None, None], cross, 0.0)

    if not np.all(np.isfinite(loglik)):
        raise NumericalError(f"trajectory {traj.id!r}: non-finite log-likelihood")
    LOG.debug(
        "** lds::smooth_grid {}".format(
            {"trajectory": traj.id, "hypotheses": n_hyp, "grid": length}
        )
    )
    return SmoothedGrid(
        z=z,
        t_s=t_s,
        t_e=t_e,
        t_cap=t_cap,
        means=means,
        covs=covs,
        cross_covs=cross_covs,
        log_likelihood=loglik,
        observations=obs,
    )


def smooth(
    traj: Trajectory, agent: AgentModel, h: HiddenTuple, conditioned: bool = True
) -> SmoothedStates:
    """Smooth the padded state sequence of `traj` for one hidden tuple

    Args:
        traj: trajectory
        agent: agent z of the hidden tuple
        h: hidden tuple (only t_s and t_e are used, z is recorded)
        conditioned: if False, ignore beliefs (plain smoothing)

    Returns:
        Smoothed states and log p(y | h)
    """
    grid = smooth_grid(traj, [agent], [[h.t_s, h.t_e]], conditioned=conditioned)
    return replace(grid.states(0), z=int(h.z))
