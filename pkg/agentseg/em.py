# -*- coding: utf-8 -*-

"""
agentseg.em
-----------

Expectation-maximization of the mixture of agents.

The E-step enumerates the hidden tuples h = (z, t_s, t_e) of every trajectory
(0 <= t_s, t_e <= ``t_cap``) and weighs them in log-space. Depending on the
E-step variant, the weight combines:

- the mixture weight π_z,
- Poisson priors on t_s and t_e (uniform otherwise),
- Gaussian belief densities of the smoothed start and end states,
- the filter likelihood p(y | h).

The M-step solves the 6×6 linear system in (vec(Aᵀ), b) and updates the
remaining parameters in closed form. By default it uses expected sufficient
statistics (smoothed means plus posterior covariances); ``plugin_statistics``
switches to the smoothed means alone.
"""

from __future__ import annotations

import enum
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.special import gammaln, logsumexp

from agentseg.core import (
    COV_FLOOR,
    LOG_2PI,
    AgentModel,
    BeliefParams,
    DynamicsParams,
    HiddenTuple,
    MixtureModel,
    Trajectory,
    gauss_logpdf,
    poisson_logpmf,
    project_spd,
)
from agentseg.errors import (
    InitializationError,
    NumericalError,
    SingularSystemError,
    ValidationError,
)
from agentseg.lds import SmoothedGrid, SmoothedStates, hypothesis_pairs, smooth_grid
from agentseg.utils.loghelper import LOG
from agentseg.utils.misc import parallel_map

#: Agents whose total responsibility falls below this mass are reinitialized
STARVATION_MASS = 1e-8


class EstepVariant(str, enum.Enum):
    """E-step weighting variants"""

    IMDA = "imda"
    IMDA_NO_POISSON = "imda_no_poisson"
    IMDA_NO_GAUSS = "imda_no_gauss"
    ORIGINAL_MDA = "original_mda"

    @property
    def uses_poisson(self) -> bool:
        """Poisson priors on the padding lengths"""
        return self in (EstepVariant.IMDA, EstepVariant.IMDA_NO_GAUSS)

    @property
    def uses_belief_factors(self) -> bool:
        """Gaussian belief densities of the smoothed endpoints"""
        return self in (EstepVariant.IMDA, EstepVariant.IMDA_NO_POISSON)


@dataclass(frozen=True)
class EmConfig:
    """Agent estimation settings

    Args:
        num_agents: number of agents M
        t_cap: largest padding length enumerated for t_s and t_e
        max_iters: maximum number of M-steps
        loglik_tol: stop when the log-likelihood improves less than this
        estep_variant: E-step weighting variant
        rng_seed: k-means seed
        belief_smoothing: smooth conditionally on beliefs (None: True for
         the iMDA variants, False for original MDA)
        plugin_statistics: M-step on smoothed means only
        cov_floor: minimum eigenvalue of estimated covariances
        lambda_floor: minimum Poisson rate
        min_cache_weight: hypotheses with a lower weight are not cached
        reseed_attempts: k-means attempts before giving up
    """

    num_agents: int = 1
    t_cap: int = 20
    max_iters: int = 50
    loglik_tol: float = 1e-4
    estep_variant: EstepVariant = EstepVariant.IMDA
    rng_seed: int = 0
    belief_smoothing: bool | None = None
    plugin_statistics: bool = False
    cov_floor: float = COV_FLOOR
    lambda_floor: float = 1e-3
    min_cache_weight: float = 1e-12
    reseed_attempts: int = 5

    def __post_init__(self):
        try:
            variant = EstepVariant(self.estep_variant)
        except ValueError as exc:
            choices = ", ".join(item.value for item in EstepVariant)
            raise ValidationError(
                f"unknown E-step variant {self.estep_variant!r} (choose from {choices})"
            ) from exc
        object.__setattr__(self, "estep_variant", variant)
        if self.num_agents < 1:
            raise ValidationError("number of agents must be at least 1")
        if self.t_cap < 0:
            raise ValidationError("t_cap must be non-negative")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.reseed_attempts < 1:
            raise ValidationError("reseed_attempts must be at least 1")

    @property
    def conditioned(self) -> bool:
        """True if the smoother conditions on beliefs"""
        if self.belief_smoothing is not None:
            return bool(self.belief_smoothing)
        return self.estep_variant is not EstepVariant.ORIGINAL_MDA


@dataclass(frozen=True, eq=False)
class Responsibility:
    """Posterior weights γ of the hidden tuples of one trajectory

    ``weights[z, t_s, t_e]`` sums to 1; ``log_evidence`` is the log of the sum
    of the unnormalized weights.
    """

    trajectory_id: object
    weights: np.ndarray
    log_evidence: float

    def __getitem__(self, h: HiddenTuple) -> float:
        return float(self.weights[h.z, h.t_s, h.t_e])

    @property
    def num_agents(self) -> int:
        """Number of agents"""
        return self.weights.shape[0]

    @property
    def t_cap(self) -> int:
        """Largest padding length"""
        return self.weights.shape[1] - 1

    @property
    def agent_weights(self) -> np.ndarray:
        """Marginal weight of each agent"""
        return self.weights.sum(axis=(1, 2))

    @property
    def max_weight(self) -> float:
        """Largest tuple weight"""
        return float(self.weights.max())

    def argmax(self) -> HiddenTuple:
        """Most probable hidden tuple (ties: lowest z, t_s, t_e)"""
        z, t_s, t_e = np.unravel_index(np.argmax(self.weights), self.weights.shape)
        return HiddenTuple(int(z), int(t_s), int(t_e))

    def items(self) -> Iterator[tuple[HiddenTuple, float]]:
        """Iterate over (hidden tuple, weight) pairs with non-zero weight"""
        for index in np.flatnonzero(self.weights.ravel()):
            z, t_s, t_e = np.unravel_index(index, self.weights.shape)
            yield HiddenTuple(int(z), int(t_s), int(t_e)), float(
                self.weights.flat[index]
            )


class StateCache:
    """Smoothed states of the retained hypotheses, per trajectory index"""

    def __init__(self, n_trajectories: int):
        self._entries: list[dict[HiddenTuple, SmoothedStates]] = [
            {} for _ in range(n_trajectories)
        ]

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, k: int, states: SmoothedStates):
        """Store smoothed states of trajectory `k`"""
        self._entries[k][states.hidden] = states

    def get(self, k: int, h: HiddenTuple) -> SmoothedStates:
        """Return smoothed states of trajectory `k` under `h`"""
        return self._entries[k][h]

    def entries(self, k: int) -> dict[HiddenTuple, SmoothedStates]:
        """Return the cached hypotheses of trajectory `k`"""
        return self._entries[k]

    @property
    def n_states(self) -> int:
        """Total number of cached hypotheses"""
        return sum(len(entries) for entries in self._entries)

    def agent_items(self, m: int) -> Iterator[tuple[int, SmoothedStates]]:
        """Iterate over (k, states) with z = m, in deterministic order"""
        for k, entries in enumerate(self._entries):
            for h in sorted(entries):
                if h.z == m:
                    yield k, entries[h]


@dataclass(frozen=True, eq=False)
class LogTerms:
    """Separate log factors of the tuple weights of one trajectory

    Arrays have shape (M, T+1, T+1) unless stated otherwise.
    """

    log_pi: np.ndarray  # (M,)
    poisson_s: np.ndarray  # (M, T+1)
    poisson_e: np.ndarray  # (M, T+1)
    belief_s: np.ndarray
    belief_e: np.ndarray
    loglik: np.ndarray
    grid: SmoothedGrid

    @property
    def shape(self) -> tuple[int, int, int]:
        """Tuple grid shape"""
        return self.loglik.shape

    def total(self, variant: EstepVariant) -> np.ndarray:
        """Unnormalized log weights of `variant`"""
        variant = EstepVariant(variant)
        n_pad = self.shape[1]
        total = self.log_pi[:, None, None] + self.loglik
        if variant.uses_poisson:
            total = total + self.poisson_s[:, :, None] + self.poisson_e[:, None, :]
        else:
            total = total - 2.0 * np.log(n_pad)
        if variant.uses_belief_factors:
            total = total + self.belief_s + self.belief_e
        return total


def tuple_log_terms(traj: Trajectory, model: MixtureModel, cfg: EmConfig) -> LogTerms:
    """Compute the log factors of every hidden tuple of `traj`"""
    grid = smooth_grid(
        traj, model.agents, hypothesis_pairs(cfg.t_cap), conditioned=cfg.conditioned
    )
    n_pad = cfg.t_cap + 1
    shape = (model.num_agents, n_pad, n_pad)
    steps = np.arange(n_pad)
    lambda_s = np.array([agent.lambda_s for agent in model.agents])
    lambda_e = np.array([agent.lambda_e for agent in model.agents])
    mu_s = np.stack([agent.belief.mu_s for agent in model.agents])[grid.z]
    Phi_s = np.stack([agent.belief.Phi_s for agent in model.agents])[grid.z]
    mu_e = np.stack([agent.belief.mu_e for agent in model.agents])[grid.z]
    Phi_e = np.stack([agent.belief.Phi_e for agent in model.agents])[grid.z]
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.weights)
    return LogTerms(
        log_pi=log_pi,
        poisson_s=poisson_logpmf(steps[None, :], lambda_s[:, None]),
        poisson_e=poisson_logpmf(steps[None, :], lambda_e[:, None]),
        belief_s=gauss_logpdf(grid.start_states, mu_s, Phi_s).reshape(shape),
        belief_e=gauss_logpdf(grid.end_states, mu_e, Phi_e).reshape(shape),
        loglik=grid.log_likelihood.reshape(shape),
        grid=grid,
    )


def _normalize(traj: Trajectory, total: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalize log weights, returning (weights, log evidence)"""
    log_evidence = float(logsumexp(total))
    if not np.isfinite(log_evidence):
        raise NumericalError(
            f"trajectory {traj.id!r}: all hidden tuple weights underflow to zero",
            trajectory_id=traj.id,
        )
    weights = np.exp(total - log_evidence)
    return weights / weights.sum(), log_evidence


def e_step(
    trajs: Sequence[Trajectory], model: MixtureModel, cfg: EmConfig
) -> tuple[list[Responsibility], StateCache]:
    """Compute responsibilities and cache the smoothed states they weigh"""

    def evaluate(k: int):
        traj = trajs[k]
        terms = tuple_log_terms(traj, model, cfg)
        weights, log_evidence = _normalize(traj, terms.total(cfg.estep_variant))
        retained = np.flatnonzero(weights.ravel() >= cfg.min_cache_weight)
        states = [terms.grid.states(index) for index in retained]
        return Responsibility(traj.id, weights, log_evidence), states

    results = parallel_map(evaluate, range(len(trajs)))
    cache = StateCache(len(trajs))
    resps = []
    for k, (resp, states) in enumerate(results):
        resps.append(resp)
        for item in states:
            cache.add(k, item)
    LOG.debug(
        "** em::e_step {}".format(
            {"trajectories": len(trajs), "cached": cache.n_states}
        )
    )
    return resps, cache


@dataclass
class TransitionStats:
    """Weighted sufficient statistics of the transitions x_{t-1} -> x_t"""

    count: float = 0.0
    prev_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    curr_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    prev_outer: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    curr_outer: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    cross: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def add(self, states: SmoothedStates, gamma: float, plugin: bool = False):
        """Accumulate the transitions of `states` with weight `gamma`"""
        prev, curr = states.states[:-1], states.states[1:]
        prev_outer = prev.T @ prev
        curr_outer = curr.T @ curr
        cross = curr.T @ prev
        if not plugin:
            prev_outer = prev_outer + states.covs[:-1].sum(axis=0)
            curr_outer = curr_outer + states.covs[1:].sum(axis=0)
            cross = cross + states.cross_covs.sum(axis=0)
        self.count += gamma * states.n_transitions
        self.prev_sum = self.prev_sum + gamma * prev.sum(axis=0)
        self.curr_sum = self.curr_sum + gamma * curr.sum(axis=0)
        self.prev_outer = self.prev_outer + gamma * prev_outer
        self.curr_outer = self.curr_outer + gamma * curr_outer
        self.cross = self.cross + gamma * cross

    def residual_scatter(self, A: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weighted sum of E[r rᵀ] with r = x_t - A x_{t-1} - b"""
        a_prev = A @ self.prev_sum
        return (
            self.curr_outer
            - self.cross @ A.T
            - A @ self.cross.T
            + A @ self.prev_outer @ A.T
            - np.outer(self.curr_sum, b)
            - np.outer(b, self.curr_sum)
            + np.outer(a_prev, b)
            + np.outer(b, a_prev)
            + self.count * np.outer(b, b)
        )


@dataclass
class AgentStats:
    """Sufficient statistics of one agent's M-step"""

    mass: float = 0.0
    transitions: TransitionStats = field(default_factory=TransitionStats)
    obs_count: float = 0.0
    obs_scatter: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    start_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    start_outer: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    end_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    end_outer: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    # From the dense responsibilities
    tuple_mass: float = 0.0
    t_s_sum: float = 0.0
    t_e_sum: float = 0.0
    t_s_logfact: float = 0.0
    t_e_logfact: float = 0.0

    @staticmethod
    def scatter(total_sum, total_outer, mass, mean) -> np.ndarray:
        """Weighted scatter about `mean` from first and second moments"""
        return (
            total_outer
            - np.outer(mean, total_sum)
            - np.outer(total_sum, mean)
            + mass * np.outer(mean, mean)
        )


def agent_statistics(
    resps: Sequence[Responsibility], cache: StateCache, m: int, plugin: bool = False
) -> AgentStats:
    """Accumulate the M-step statistics of agent `m`"""
    stats = AgentStats()
    for k, states in cache.agent_items(m):
        gamma = resps[k][states.hidden]
        if gamma <= 0.0:
            continue
        stats.mass += gamma
        stats.transitions.add(states, gamma, plugin)
        residuals = states.observations - states.observed
        scatter = residuals.T @ residuals
        start_outer = np.outer(states.start, states.start)
        end_outer = np.outer(states.end, states.end)
        if not plugin:
            scatter = scatter + states.observed_covs.sum(axis=0)
            start_outer = start_outer + states.start_cov
            end_outer = end_outer + states.end_cov
        stats.obs_count += gamma * states.observations.shape[0]
        stats.obs_scatter = stats.obs_scatter + gamma * scatter
        stats.start_sum = stats.start_sum + gamma * states.start
        stats.start_outer = stats.start_outer + gamma * start_outer
        stats.end_sum = stats.end_sum + gamma * states.end
        stats.end_outer = stats.end_outer + gamma * end_outer
    for resp in resps:
        weights = resp.weights[m]
        steps = np.arange(weights.shape[0])
        logfact = gammaln(steps + 1.0)
        w_s, w_e = weights.sum(axis=1), weights.sum(axis=0)
        stats.tuple_mass += float(weights.sum())
        stats.t_s_sum += float(w_s @ steps)
        stats.t_e_sum += float(w_e @ steps)
        stats.t_s_logfact += float(w_s @ logfact)
        stats.t_e_logfact += float(w_e @ logfact)
    return stats


def solve_dynamics(stats: TransitionStats) -> tuple[np.ndarray, np.ndarray]:
    """Solve the normal equations of the dynamics for (A, b)

    Unknowns are stacked as (vec(Aᵀ), b), i.e. the rows of A then b.
    """
    eye = np.eye(2)
    lhs = np.block(
        [
            [np.kron(eye, stats.prev_outer), np.kron(eye, stats.prev_sum[:, None])],
            [np.kron(eye, stats.prev_sum[None, :]), stats.count * eye],
        ]
    )
    rhs = np.concatenate((stats.cross.ravel(), stats.curr_sum))
    if stats.count <= 0.0 or np.linalg.matrix_rank(lhs) < lhs.shape[0]:
        raise SingularSystemError("dynamics normal matrix is singular")
    solution = np.linalg.solve(lhs, rhs)
    return solution[:4].reshape(2, 2), solution[4:]


def m_step_dynamics(
    resps: Sequence[Responsibility], cache: StateCache, m: int, cfg: EmConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Update (A, b) of agent `m`"""
    stats = agent_statistics(resps, cache, m, cfg.plugin_statistics)
    if stats.mass <= 0.0:
        raise SingularSystemError(f"agent {m} has no responsibility mass")
    return solve_dynamics(stats.transitions)


class RestUpdate(NamedTuple):
    """Closed-form updates of an agent besides (A, b)"""

    Q: np.ndarray
    R: np.ndarray
    mu_s: np.ndarray
    Phi_s: np.ndarray
    mu_e: np.ndarray
    Phi_e: np.ndarray
    pi: float
    lambda_s: float
    lambda_e: float


def _update_rest(
    stats: AgentStats, A, b, n_trajectories: int, cfg: EmConfig
) -> RestUpdate:
    floor = cfg.cov_floor
    Q = stats.transitions.residual_scatter(A, b) / stats.transitions.count
    mu_s = stats.start_sum / stats.mass
    mu_e = stats.end_sum / stats.mass
    Phi_s = AgentStats.scatter(stats.start_sum, stats.start_outer, stats.mass, mu_s)
    Phi_e = AgentStats.scatter(stats.end_sum, stats.end_outer, stats.mass, mu_e)
    return RestUpdate(
        Q=project_spd(Q, floor),
        R=project_spd(stats.obs_scatter / stats.obs_count, floor),
        mu_s=mu_s,
        Phi_s=project_spd(Phi_s / stats.mass, floor),
        mu_e=mu_e,
        Phi_e=project_spd(Phi_e / stats.mass, floor),
        pi=stats.tuple_mass / n_trajectories,
        lambda_s=max(stats.t_s_sum / stats.tuple_mass, cfg.lambda_floor),
        lambda_e=max(stats.t_e_sum / stats.tuple_mass, cfg.lambda_floor),
    )


def m_step_rest(
    resps: Sequence[Responsibility],
    cache: StateCache,
    m: int,
    cfg: EmConfig,
    dynamics: tuple[np.ndarray, np.ndarray] | None = None,
) -> RestUpdate:
    """Update Q, R, beliefs, π and Poisson rates of agent `m`

    Args:
        resps: responsibilities
        cache: smoothed states
        m: agent index
        cfg: settings
        dynamics: updated (A, b), computed if not given
    """
    stats = agent_statistics(resps, cache, m, cfg.plugin_statistics)
    if stats.mass <= 0.0:
        raise SingularSystemError(f"agent {m} has no responsibility mass")
    if dynamics is None:
        dynamics = solve_dynamics(stats.transitions)
    A, b = dynamics
    return _update_rest(stats, A, b, len(resps), cfg)


def _reinitialize_starved(
    trajs: Sequence[Trajectory],
    resps: Sequence[Responsibility],
    agents: list[AgentModel],
    starved: list[int],
) -> list[AgentModel]:
    """Move starved agents' beliefs onto the worst explained trajectories"""
    fits = np.array([resp.max_weight for resp in resps])
    worst = np.argsort(fits, kind="stable")
    weight = 1.0 / len(trajs)
    for rank, m in enumerate(starved):
        traj = trajs[worst[rank % len(worst)]]
        LOG.warning(
            f"agent {m} starved: reinitializing its beliefs from trajectory "
            f"{traj.id!r}"
        )
        agent = agents[m]
        belief = BeliefParams(
            traj.first, agent.belief.Phi_s, traj.last, agent.belief.Phi_e
        )
        agents[m] = agent.replace(belief=belief, pi=weight, lambda_s=1.0, lambda_e=1.0)
    total = sum(agent.pi for agent in agents)
    return [agent.replace(pi=agent.pi / total) for agent in agents]


def m_step(
    trajs: Sequence[Trajectory],
    resps: Sequence[Responsibility],
    cache: StateCache,
    model: MixtureModel,
    cfg: EmConfig,
) -> MixtureModel:
    """Update every agent, reinitializing starved ones"""
    agents, starved = [], []
    for m in range(model.num_agents):
        stats = agent_statistics(resps, cache, m, cfg.plugin_statistics)
        if stats.tuple_mass < STARVATION_MASS or stats.mass <= 0.0:
            starved.append(m)
            agents.append(model[m])
            continue
        A, b = solve_dynamics(stats.transitions)
        rest = _update_rest(stats, A, b, len(resps), cfg)
        agents.append(
            AgentModel(
                DynamicsParams(A, b, rest.Q, rest.R),
                BeliefParams(rest.mu_s, rest.Phi_s, rest.mu_e, rest.Phi_e),
                pi=rest.pi,
                lambda_s=rest.lambda_s,
                lambda_e=rest.lambda_e,
            )
        )
    if starved:
        agents = _reinitialize_starved(trajs, resps, agents, starved)
    return MixtureModel(tuple(agents))


def expected_complete_loglik(
    resps: Sequence[Responsibility],
    cache: StateCache,
    model: MixtureModel,
    plugin: bool = False,
) -> float:
    """Expected complete-data log-likelihood Q(Θ, Θ̂) of `model`

    Responsibilities and smoothed states are those of Θ̂.
    """
    total = 0.0
    for m, agent in enumerate(model.agents):
        stats = agent_statistics(resps, cache, m, plugin)
        dyn, bel = agent.dynamics, agent.belief
        with np.errstate(divide="ignore"):
            total += stats.tuple_mass * np.log(agent.pi)
        for lam, t_sum, logfact in (
            (agent.lambda_s, stats.t_s_sum, stats.t_s_logfact),
            (agent.lambda_e, stats.t_e_sum, stats.t_e_logfact),
        ):
            total += t_sum * np.log(lam) - stats.tuple_mass * lam - logfact
        if stats.mass <= 0.0:
            continue
        trans = stats.transitions
        start = AgentStats.scatter(
            stats.start_sum, stats.start_outer, stats.mass, bel.mu_s
        )
        end = AgentStats.scatter(stats.end_sum, stats.end_outer, stats.mass, bel.mu_e)
        terms = (
            (trans.residual_scatter(dyn.A, dyn.b), trans.count, dyn.Q),
            (stats.obs_scatter, stats.obs_count, dyn.R),
            (start, stats.mass, bel.Phi_s),
            (end, stats.mass, bel.Phi_e),
        )
        for scatter, count, cov in terms:
            _sign, logdet = np.linalg.slogdet(cov)
            quad = np.trace(np.linalg.solve(cov, scatter))
            total -= 0.5 * (quad + count * (logdet + 2.0 * LOG_2PI))
    return float(total)


def initialize(trajs: Sequence[Trajectory], cfg: EmConfig) -> MixtureModel:
    """Initialize agents by k-means on (first point, last point) vectors

    Each agent starts with A = I, b = mean step of its cluster and isotropic
    covariances holding per-axis variances: Phi_s = Phi_e = (r² / 4) I where r
    is the RMS radius of the cluster in the 4-d feature space, and Q = R =
    (s² / 2) I where s is the RMS norm of the step residuals. Dividing by the
    dimension gives the variance of a single coordinate.
    """
    n_agents = cfg.num_agents
    if len(trajs) < n_agents:
        raise ValidationError(
            f"{len(trajs)} trajectories cannot initialize {n_agents} agents"
        )
    features = np.array([np.concatenate((traj.first, traj.last)) for traj in trajs])
    for attempt in range(cfg.reseed_attempts):
        seed = cfg.rng_seed + attempt
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                centroids, labels = kmeans2(
                    features, n_agents, minit="++", missing="raise", seed=seed
                )
        except (ClusterError, ValueError, IndexError) as exc:
            LOG.warning(f"k-means failed with seed {seed} ({exc}), reseeding")
            continue
        if np.bincount(labels, minlength=n_agents).min() > 0:
            break
        LOG.warning(f"k-means left an empty cluster with seed {seed}, reseeding")
    else:
        raise InitializationError(
            f"k-means initialization failed after {cfg.reseed_attempts} attempts"
        )

    all_steps = np.concatenate([np.diff(traj.points, axis=0) for traj in trajs])
    global_var = max(float(np.mean(np.var(all_steps, axis=0))), cfg.cov_floor)
    agents = []
    for m in range(n_agents):
        members = [traj for traj, label in zip(trajs, labels) if label == m]
        mu_s, mu_e = centroids[m, :2], centroids[m, 2:]
        offsets = features[labels == m] - centroids[m]
        belief_var = float(np.mean(np.sum(offsets**2, axis=1))) / 4.0
        if belief_var < cfg.cov_floor:
            belief_var = global_var
        steps = np.concatenate([np.diff(traj.points, axis=0) for traj in members])
        b = steps.mean(axis=0)
        step_var = float(np.mean(np.sum((steps - b) ** 2, axis=1))) / 2.0
        step_var = max(step_var, cfg.cov_floor)
        noise = step_var * np.eye(2)
        spread = belief_var * np.eye(2)
        agents.append(
            AgentModel(
                DynamicsParams(np.eye(2), b, noise, noise),
                BeliefParams(mu_s, spread, mu_e, spread),
                pi=1.0 / n_agents,
            )
        )
    LOG.debug(
        "** em::initialize {}".format(
            {"agents": n_agents, "trajectories": len(trajs), "seed": seed}
        )
    )
    return MixtureModel(tuple(agents))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of :func:`fit`"""

    model: MixtureModel
    trace: np.ndarray
    responsibilities: list[Responsibility]
    n_iter: int
    converged: bool
    config: EmConfig
    best_iter: int = -1

    @property
    def labels(self) -> np.ndarray:
        """Agent of the most probable hidden tuple of each trajectory"""
        return cluster_labels(self.responsibilities)


def fit(
    trajs: Sequence[Trajectory],
    cfg: EmConfig,
    init_model: MixtureModel | None = None,
) -> FitResult:
    """Fit the mixture of agents by EM

    Args:
        trajs: training trajectories
        cfg: settings
        init_model: initial model (default: :func:`initialize`)

    Returns:
        Fit result, whose trace holds the observed-data log-likelihood
        before each M-step and after the last one. The returned model is the
        iterate with the highest log-likelihood (``best_iter``).
    """
    trajs = list(trajs)
    if len(trajs) < cfg.num_agents:
        raise ValidationError(
            f"{len(trajs)} trajectories cannot fit {cfg.num_agents} agents"
        )
    model = initialize(trajs, cfg) if init_model is None else init_model
    if model.num_agents != cfg.num_agents:
        raise ValidationError(
            f"initial model has {model.num_agents} agents, expected {cfg.num_agents}"
        )
    trace = []
    n_iter = 0
    converged = False
    best = None
    while True:
        resps, cache = e_step(trajs, model, cfg)
        trace.append(float(sum(resp.log_evidence for resp in resps)))
        LOG.info(
            f"EM iteration {n_iter} ({cfg.estep_variant.value}): "
            f"log-likelihood {trace[-1]:.6f}"
        )
        if best is None or trace[-1] > best[0]:
            best = (trace[-1], model, resps, n_iter)
        if len(trace) > 1 and trace[-1] - trace[-2] < cfg.loglik_tol:
            # a decrease stops the loop too, without counting as convergence
            converged = trace[-1] >= trace[-2]
            break
        if n_iter >= cfg.max_iters:
            break
        model = m_step(trajs, resps, cache, model, cfg)
        n_iter += 1
    _loglik, model, resps, best_iter = best
    if best_iter != n_iter:
        LOG.warning(
            f"log-likelihood decreased after iteration {best_iter}, "
            f"keeping that iteration's model"
        )
    return FitResult(
        model=model,
        trace=np.array(trace),
        responsibilities=resps,
        n_iter=n_iter,
        converged=converged,
        config=cfg,
        best_iter=best_iter,
    )


def map_hypothesis(
    traj: Trajectory, model: MixtureModel, cfg: EmConfig
) -> tuple[HiddenTuple, SmoothedStates]:
    """Return the most probable hidden tuple of `traj` and its smoothed states"""
    terms = tuple_log_terms(traj, model, cfg)
    total = terms.total(cfg.estep_variant)
    index = int(np.argmax(total))
    states = terms.grid.states(index)
    return states.hidden, states


def cluster_labels(resps: Sequence[Responsibility]) -> np.ndarray:
    """Agent of the most probable hidden tuple of each trajectory"""
    return np.array([resp.argmax().z for resp in resps], dtype=np.int64)


def cluster_purity(labels, truth) -> float:
    """Fraction of trajectories belonging to the majority true class of
    their cluster"""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape or labels.size == 0:
        raise ValidationError("labels and truth must be non-empty and aligned")
    majority = 0
    for label in np.unique(labels):
        majority += np.bincount(truth[labels == label]).max()
    return majority / labels.size
