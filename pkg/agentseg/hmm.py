# -*- coding: utf-8 -*-

"""
agentseg.hmm
------------

Hidden Markov model over agent labels. Observations are windows of N
successive smoothed states; a window's emission is its likelihood under an
agent's dynamics (beliefs are not used). Only the transition matrix is
estimated, the initial distribution being the mixture weights π.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from agentseg.core import (
    AgentModel,
    MixtureModel,
    Segmentation,
    Trajectory,
    gauss_logpdf,
)
from agentseg.em import EmConfig, FitResult, map_hypothesis
from agentseg.errors import NumericalError, ValidationError
from agentseg.lds import SmoothedStates
from agentseg.utils.loghelper import LOG
from agentseg.utils.misc import parallel_map


@dataclass(frozen=True)
class HmmConfig:
    """Segmentation settings

    Args:
        window: number N of states per window
        overlap: use windows of stride 1 instead of disjoint windows
        max_iters: maximum number of Baum-Welch updates
        tol: stop when the log-likelihood improves less than this
        self_prob: diagonal of the initial transition matrix
    """

    window: int = 3
    overlap: bool = False
    max_iters: int = 100
    tol: float = 1e-6
    self_prob: float = 0.9

    def __post_init__(self):
        if self.window < 2:
            raise ValidationError("window size must be at least 2")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if not 0.0 <= self.self_prob <= 1.0:
            raise ValidationError("self_prob must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class WindowedStates:
    """Windows of N states, shape (W, N, 2)"""

    windows: np.ndarray
    overlap: bool = False
    n_points: int = 0

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def window_size(self) -> int:
        """Number N of states per window"""
        return self.windows.shape[1]

    @property
    def centers(self) -> np.ndarray:
        """Point index at the center of each window"""
        stride = 1 if self.overlap else self.window_size
        return stride * np.arange(len(self)) + 0.5 * (self.window_size - 1)


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Row-stochastic transition matrix and fixed initial distribution"""

    transition: np.ndarray
    initial: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_iter: int = 0

    def __post_init__(self):
        transition = np.array(self.transition, dtype=float)
        initial = np.array(self.initial, dtype=float)
        n_agents = initial.shape[0]
        if transition.shape != (n_agents, n_agents):
            raise ValidationError(
                f"transition matrix must be {n_agents}x{n_agents}, "
                f"got {transition.shape}"
            )
        if np.any(transition < 0.0) or not np.allclose(
            transition.sum(axis=1), 1.0, rtol=0.0, atol=1e-9
        ):
            raise ValidationError("transition matrix must be row-stochastic")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "trace", np.asarray(self.trace, dtype=float))

    @property
    def num_agents(self) -> int:
        """Number of agents"""
        return self.initial.shape[0]

    @property
    def log_transition(self) -> np.ndarray:
        """Element-wise log of the transition matrix"""
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    @property
    def log_initial(self) -> np.ndarray:
        """Element-wise log of the initial distribution"""
        with np.errstate(divide="ignore"):
            return np.log(self.initial)


def default_transition(n_agents: int, self_prob: float = 0.9) -> np.ndarray:
    """Transition matrix with `self_prob` on the diagonal, rest spread evenly"""
    if n_agents == 1:
        return np.ones((1, 1))
    off = (1.0 - self_prob) / (n_agents - 1)
    transition = np.full((n_agents, n_agents), off)
    np.fill_diagonal(transition, self_prob)
    return transition


def emission_loglik(window, agent: AgentModel) -> float:
    """Log-likelihood of a window of states under the agent's dynamics"""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] < 2:
        raise ValidationError("a window needs at least 2 states")
    dyn = agent.dynamics
    residuals = window[1:] - window[:-1] @ dyn.A.T - dyn.b
    return float(np.sum(gauss_logpdf(residuals, np.zeros(2), dyn.Q)))


def emission_matrix(windows: WindowedStates, model: MixtureModel) -> np.ndarray:
    """Emission log-likelihoods, shape (W, M)"""
    data = windows.windows
    columns = []
    for agent in model.agents:
        dyn = agent.dynamics
        residuals = data[:, 1:] - data[:, :-1] @ dyn.A.T - dyn.b
        columns.append(gauss_logpdf(residuals, np.zeros(2), dyn.Q).sum(axis=1))
    return np.stack(columns, axis=1)


def build_windows(states, window: int, overlap: bool = False) -> WindowedStates:
    """Group successive states into windows of `window` states

    Args:
        states: smoothed states (the observed span is used) or (n, 2) array
        window: number N of states per window
        overlap: stride 1 instead of disjoint windows (a remainder shorter
         than N is dropped)
    """
    if isinstance(states, SmoothedStates):
        states = states.observed
    states = np.asarray(states, dtype=float)
    n_points = states.shape[0]
    if window < 2:
        raise ValidationError("window size must be at least 2")
    if n_points < window:
        raise ValidationError(f"{n_points} states cannot fill a window of {window}")
    if overlap:
        windows = sliding_window_view(states, (window, 2))[:, 0]
    else:
        count = n_points // window
        windows = states[: count * window].reshape(count, window, 2)
    return WindowedStates(np.array(windows), overlap=overlap, n_points=n_points)


def _forward_backward(log_em, log_init, log_trans):
    """Return (log-likelihood, expected transition counts) of one sequence"""
    n_windows, n_agents = log_em.shape
    log_alpha = np.empty((n_windows, n_agents))
    log_beta = np.zeros((n_windows, n_agents))
    log_alpha[0] = log_init + log_em[0]
    for t in range(1, n_windows):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + log_trans, axis=0)
        log_alpha[t] += log_em[t]
    for t in range(n_windows - 2, -1, -1):
        log_beta[t] = logsumexp(log_trans + (log_em[t + 1] + log_beta[t + 1]), axis=1)
    loglik = float(logsumexp(log_alpha[-1]))
    if not np.isfinite(loglik):
        raise NumericalError("window sequence has zero likelihood")
    if n_windows < 2:
        return loglik, np.zeros((n_agents, n_agents))
    log_xi = (
        log_alpha[:-1, :, None]
        + log_trans[None, :, :]
        + (log_em[1:] + log_beta[1:])[:, None, :]
        - loglik
    )
    return loglik, np.exp(log_xi).sum(axis=0)


def baum_welch(
    corpora: Sequence,
    model: MixtureModel,
    max_iters: int = 100,
    tol: float = 1e-6,
    init_transition=None,
) -> HmmModel:
    """Estimate the transition matrix by Baum-Welch

    Args:
        corpora: one :class:`WindowedStates` (or (W, M) emission
         log-likelihood array) per trajectory
        model: mixture whose dynamics define emissions and whose weights are
         the initial distribution
        max_iters: maximum number of updates
        tol: stop when the log-likelihood improves less than this
        init_transition: starting transition matrix (default: 0.9 diagonal)

    Returns:
        Trained HMM whose trace holds the log-likelihood of each estimate
    """
    emissions = [
        emission_matrix(item, model) if isinstance(item, WindowedStates) else item
        for item in corpora
    ]
    emissions = [np.asarray(item, dtype=float) for item in emissions if len(item)]
    if not any(item.shape[0] >= 2 for item in emissions):
        raise ValidationError("Baum-Welch needs a sequence of at least 2 windows")
    n_agents = model.num_agents
    initial = model.weights
    if init_transition is None:
        init_transition = default_transition(n_agents)
    transition = np.array(init_transition, dtype=float)
    with np.errstate(divide="ignore"):
        log_init = np.log(initial)
    trace = []
    n_iter = 0
    while True:
        with np.errstate(divide="ignore"):
            log_trans = np.log(transition)
        counts = np.zeros((n_agents, n_agents))
        loglik = 0.0
        for log_em in emissions:
            seq_loglik, seq_counts = _forward_backward(log_em, log_init, log_trans)
            loglik += seq_loglik
            counts += seq_counts
        trace.append(loglik)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
        if n_iter >= max_iters:
            break
        totals = counts.sum(axis=1, keepdims=True)
        safe = np.where(totals > 0.0, totals, 1.0)
        transition = np.where(totals > 0.0, counts / safe, transition)
        transition /= transition.sum(axis=1, keepdims=True)
        n_iter += 1
    LOG.debug(
        "** hmm::baum_welch {}".format(
            {"sequences": len(emissions), "iterations": n_iter, "loglik": trace[-1]}
        )
    )
    return HmmModel(transition, initial, trace=np.array(trace), n_iter=n_iter)


def viterbi_path(log_em, log_init, log_trans) -> np.ndarray:
    """Most probable label sequence from log-scores

    Ties go to the lower label, resolved from the last window backwards.
    """
    log_em = np.asarray(log_em, dtype=float)
    n_windows, n_agents = log_em.shape
    delta = log_init + log_em[0]
    backptr = np.zeros((n_windows, n_agents), dtype=np.int64)
    for t in range(1, n_windows):
        scores = delta[:, None] + log_trans
        backptr[t] = np.argmax(scores, axis=0)
        delta = scores[backptr[t], np.arange(n_agents)] + log_em[t]
    path = np.empty(n_windows, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(n_windows - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path


def viterbi(windows: WindowedStates, hmm: HmmModel, model: MixtureModel) -> np.ndarray:
    """MAP agent label of each window"""
    if len(windows) < 1:
        raise ValidationError("Viterbi decoding needs at least one window")
    log_em = emission_matrix(windows, model)
    return viterbi_path(log_em, hmm.log_initial, hmm.log_transition)


def expand_labels(window_labels, windows: WindowedStates) -> np.ndarray:
    """Per-point labels from window labels

    Disjoint windows label their own points, trailing points take the last
    window's label. Overlapping windows label each point by the window whose
    center is nearest (ties: earlier window).
    """
    window_labels = np.asarray(window_labels, dtype=np.int64)
    points = np.arange(windows.n_points)
    if windows.overlap:
        distance = np.abs(points[:, None] - windows.centers[None, :])
        owner = np.argmin(distance, axis=1)
    else:
        owner = np.minimum(points // windows.window_size, len(windows) - 1)
    return window_labels[owner]


def segment(
    traj: Trajectory,
    model: MixtureModel,
    hmm: HmmModel,
    window: int = 3,
    overlap: bool = False,
    em_config: EmConfig | None = None,
) -> Segmentation:
    """Segment a trajectory into agent-labelled parts

    States are smoothed under the most probable hidden tuple of `traj`.

    Args:
        traj: trajectory
        model: agents
        hmm: trained HMM
        window: number N of states per window
        overlap: use overlapping windows
        em_config: settings of the hidden tuple search (default: t_cap 20,
         iMDA variant)
    """
    if traj.n_points < window:
        raise ValidationError(
            f"trajectory {traj.id!r}: {traj.n_points} points, "
            f"shorter than the window ({window})"
        )
    if em_config is None:
        em_config = EmConfig(num_agents=model.num_agents)
    _h, states = map_hypothesis(traj, model, em_config)
    windows = build_windows(states, window, overlap)
    labels = expand_labels(viterbi(windows, hmm, model), windows)
    return Segmentation.from_labels(traj.id, labels)


def train_hmm(
    trajs: Sequence[Trajectory], fit_result: FitResult, cfg: HmmConfig
) -> HmmModel:
    """Train the transition matrix on the windows of fitted trajectories"""
    usable = [traj for traj in trajs if traj.n_points >= cfg.window]
    if len(usable) < len(trajs):
        LOG.warning(
            f"{len(trajs) - len(usable)} trajectories shorter than the window "
            "are ignored by Baum-Welch"
        )
    model = fit_result.model

    def windows_of(traj: Trajectory) -> WindowedStates:
        _h, states = map_hypothesis(traj, model, fit_result.config)
        return build_windows(states, cfg.window, cfg.overlap)

    corpora = parallel_map(windows_of, usable)
    return baum_welch(
        corpora,
        model,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        init_transition=default_transition(model.num_agents, cfg.self_prob),
    )
