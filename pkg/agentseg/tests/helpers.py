# -*- coding: utf-8 -*-
"""Shared oracles and corpus builders for PyAgentSeg tests"""

# pylint: disable=invalid-name  # Allows short reference names like A, b, Q, ...

import itertools
import math

import numpy as np
from scipy import stats

from agentseg.core import AgentModel, BeliefParams, DynamicsParams, MixtureModel
from agentseg.synth import lane_agents

#: Transition matrix of a 10-agent model fitted on a pedestrian corpus
PEDESTRIAN_TRANSITIONS = np.array(
    [
        [0.972, 0.002, 0.0, 0.006, 0.0, 0.0, 0.002, 0.019, 0.0, 0.0],
        [0.04, 0.937, 0.001, 0.001, 0.0, 0.0, 0.015, 0.001, 0.002, 0.003],
        [0.0, 0.0, 0.974, 0.008, 0.01, 0.0, 0.002, 0.0, 0.003, 0.003],
        [0.006, 0.005, 0.006, 0.953, 0.002, 0.0, 0.003, 0.019, 0.004, 0.001],
        [0.0, 0.002, 0.01, 0.002, 0.979, 0.001, 0.0, 0.0, 0.0, 0.005],
        [0.0, 0.001, 0.0, 0.001, 0.002, 0.931, 0.0, 0.0, 0.022, 0.043],
        [0.004, 0.014, 0.0, 0.001, 0.0, 0.0, 0.968, 0.0, 0.01, 0.002],
        [0.058, 0.0, 0.001, 0.029, 0.001, 0.0, 0.0, 0.906, 0.004, 0.001],
        [0.001, 0.008, 0.005, 0.002, 0.0, 0.024, 0.014, 0.004, 0.929, 0.013],
        [0.009, 0.014, 0.012, 0.01, 0.032, 0.051, 0.021, 0.005, 0.007, 0.838],
    ]
)

#: Its normalized form as published (3 decimals)
PEDESTRIAN_NORMALIZED = np.array(
    [
        [0.0, 0.059, 0.001, 0.196, 0.0, 0.0, 0.073, 0.657, 0.002, 0.012],
        [0.639, 0.0, 0.011, 0.009, 0.006, 0.0, 0.24, 0.015, 0.033, 0.047],
        [0.001, 0.009, 0.0, 0.289, 0.371, 0.005, 0.082, 0.012, 0.126, 0.105],
        [0.132, 0.11, 0.122, 0.0, 0.041, 0.0, 0.069, 0.403, 0.095, 0.028],
        [0.007, 0.076, 0.493, 0.087, 0.0, 0.07, 0.02, 0.003, 0.0, 0.245],
        [0.0, 0.018, 0.006, 0.008, 0.034, 0.0, 0.0, 0.0, 0.318, 0.615],
        [0.129, 0.42, 0.011, 0.043, 0.008, 0.001, 0.0, 0.012, 0.301, 0.075],
        [0.615, 0.003, 0.01, 0.31, 0.011, 0.0, 0.0, 0.0, 0.041, 0.009],
        [0.015, 0.118, 0.075, 0.023, 0.003, 0.335, 0.194, 0.06, 0.0, 0.176],
        [0.058, 0.083, 0.075, 0.064, 0.2, 0.312, 0.129, 0.033, 0.045, 0.0],
    ]
)


def make_agent(
    b=(20.0, 0.0),
    A=None,
    q=4.0,
    r=1.0,
    mu_s=(200.0, 500.0),
    phi_s=100.0,
    mu_e=None,
    phi_e=100.0,
    pi=1.0,
    lambda_s=1.0,
    lambda_e=1.0,
    length=20,
):
    """Agent with isotropic covariances; end belief defaults to the point
    reached after `length` + 1 noise-free steps from the start belief"""
    A = np.eye(2) if A is None else np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    mu_s = np.asarray(mu_s, dtype=float)
    if mu_e is None:
        mu_e = mu_s
        for _ in range(length + 1):
            mu_e = A @ mu_e + b
    return AgentModel(
        DynamicsParams(A, b, q * np.eye(2), r * np.eye(2)),
        BeliefParams(
            mu_s, phi_s * np.eye(2), np.asarray(mu_e, float), phi_e * np.eye(2)
        ),
        pi=pi,
        lambda_s=lambda_s,
        lambda_e=lambda_e,
    )


def lane_model(n_lanes=4, step=40.0, spacing=250.0, q=4.0, r=1.0, length=20):
    """Agents sharing the same dynamics, moving along parallel lanes"""
    return lane_agents(n_lanes, step, spacing, 0.0, q, r, length)


def crossing_model(step=30.0, q=4.0, r=0.25):
    """Two agents with orthogonal motions (right and down)"""
    return MixtureModel(
        (
            make_agent(b=(step, 0.0), q=q, r=r, mu_s=(200.0, 300.0), pi=0.5),
            make_agent(b=(0.0, step), q=q, r=r, mu_s=(900.0, 100.0), pi=0.5),
        )
    )


def random_spd(rng, low=0.5, high=5.0):
    """Random 2x2 SPD matrix with eigenvalues in [low, high]"""
    angle = rng.uniform(0.0, np.pi)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return rot @ np.diag(rng.uniform(low, high, 2)) @ rot.T


def random_agent(rng):
    """Agent with random (stable) dynamics and random covariances"""
    angle = rng.uniform(-0.2, 0.2)
    scale = rng.uniform(0.9, 1.05)
    A = scale * np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    )
    return AgentModel(
        DynamicsParams(
            A, rng.uniform(-10.0, 10.0, 2), random_spd(rng), random_spd(rng)
        ),
        BeliefParams(
            rng.uniform(0.0, 200.0, 2),
            random_spd(rng, 5.0, 50.0),
            rng.uniform(0.0, 200.0, 2),
            random_spd(rng, 5.0, 50.0),
        ),
        pi=1.0,
        lambda_s=rng.uniform(0.5, 3.0),
        lambda_e=rng.uniform(0.5, 3.0),
    )


def dense_posterior(points, agent, t_s, t_e, conditioned=True, prior_var=1e6):
    """Posterior of the padded states by joint Gaussian conditioning

    Returns:
        (means (L, 2), covs (L, L, 2, 2) blocks, log-likelihood)
    """
    points = np.asarray(points, dtype=float)
    n_obs = points.shape[0]
    length = t_s + n_obs + t_e
    dyn, bel = agent.dynamics, agent.belief
    if conditioned:
        m0, P0 = bel.mu_s, bel.Phi_s
    else:
        m0, P0 = points[0], prior_var * np.eye(2)
    # Prior moments of the chain
    mean = np.zeros(2 * length)
    cov = np.zeros((2 * length, 2 * length))
    mean[0:2] = m0
    cov[0:2, 0:2] = P0
    for i in range(1, length):
        cur, prev = slice(2 * i, 2 * i + 2), slice(2 * i - 2, 2 * i)
        mean[cur] = dyn.A @ mean[prev] + dyn.b
        # Cov(x_i, x_j) = A Cov(x_{i-1}, x_j) for j < i
        cov[cur, : 2 * i] = dyn.A @ cov[prev, : 2 * i]
        cov[: 2 * i, cur] = cov[cur, : 2 * i].T
        cov[cur, cur] = dyn.A @ cov[prev, prev] @ dyn.A.T + dyn.Q
    # Observation operator
    rows, values, noises = [], [], []
    for t in range(n_obs):
        rows.append(t_s + t)
        values.append(points[t])
        noises.append(dyn.R)
    if conditioned:
        rows.append(length - 1)
        values.append(bel.mu_e)
        noises.append(bel.Phi_e)
    H = np.zeros((2 * len(rows), 2 * length))
    noise = np.zeros((2 * len(rows), 2 * len(rows)))
    for k, (row, cov_k) in enumerate(zip(rows, noises)):
        H[2 * k : 2 * k + 2, 2 * row : 2 * row + 2] = np.eye(2)
        noise[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = cov_k
    obs = np.concatenate(values)
    S = H @ cov @ H.T + noise
    gain = np.linalg.solve(S, H @ cov).T
    post_mean = mean + gain @ (obs - H @ mean)
    post_cov = cov - gain @ H @ cov
    loglik = stats.multivariate_normal.logpdf(obs, H @ mean, S)
    blocks = post_cov.reshape(length, 2, length, 2).transpose(0, 2, 1, 3)
    return post_mean.reshape(length, 2), blocks, float(loglik)


def stack_rdp(points, epsilon):
    """Iterative RDP on an explicit stack, returns preserved indices"""
    points = [tuple(map(float, point)) for point in points]
    keep = {0, len(points) - 1}
    stack = [(0, len(points) - 1)]
    while stack:
        first, last = stack.pop()
        (x0, y0), (x1, y1) = points[first], points[last]
        norm = math.hypot(x1 - x0, y1 - y0)
        best, best_index = -1.0, None
        for index in range(first + 1, last):
            x, y = points[index]
            if norm == 0.0:
                dist = math.hypot(x - x0, y - y0)
            else:
                dist = abs((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)) / norm
            if dist > best:
                best, best_index = dist, index
        if best_index is not None and best > epsilon:
            keep.add(best_index)
            stack.append((first, best_index))
            stack.append((best_index, last))
    return np.array(sorted(keep))


def brute_viterbi(log_em, log_init, log_trans):
    """Exhaustive MAP label sequence

    Ties go to the sequence whose reversed labels are lexicographically
    smallest.
    """
    log_em = np.asarray(log_em, dtype=float)
    n_windows, n_agents = log_em.shape
    seqs = np.array(list(itertools.product(range(n_agents), repeat=n_windows)))
    score = log_init[seqs[:, 0]] + log_em[0, seqs[:, 0]]
    for t in range(1, n_windows):
        score = score + log_trans[seqs[:, t - 1], seqs[:, t]]
        score = score + log_em[t, seqs[:, t]]
    best = seqs[score == score.max()]
    # np.lexsort: last key (label of the last window) is the primary key
    order = np.lexsort(best.T)
    return best[order[0]], float(score.max())
