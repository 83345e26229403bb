# -*- coding: utf-8 -*-
"""Testing PyAgentSeg agent estimation (E-step, M-step, EM loop)"""

# pylint: disable=invalid-name  # Allows short reference names like A, b, Q, ...

import numpy as np
import pytest
from scipy import optimize, stats

from agentseg import em
from agentseg.core import (
    AgentModel,
    BeliefParams,
    DynamicsParams,
    HiddenTuple,
    MixtureModel,
    Trajectory,
    gauss_logpdf,
)
from agentseg.em import (
    EmConfig,
    EstepVariant,
    Responsibility,
    StateCache,
    TransitionStats,
    agent_statistics,
    cluster_labels,
    cluster_purity,
    e_step,
    expected_complete_loglik,
    fit,
    initialize,
    m_step,
    m_step_dynamics,
    m_step_rest,
    map_hypothesis,
    solve_dynamics,
)
from agentseg.errors import InitializationError, SingularSystemError, ValidationError
from agentseg.lds import SmoothedStates
from agentseg.synth import sample_corpus, sample_trajectory
from agentseg.tests.helpers import (
    crossing_model,
    dense_posterior,
    lane_model,
    make_agent,
)


def _states(points, z=0, t_s=0, t_e=0):
    """Noise-free smoothed states (zero posterior covariances)"""
    points = np.asarray(points, dtype=float)
    n_states = points.shape[0]
    return SmoothedStates(
        states=points,
        covs=np.zeros((n_states, 2, 2)),
        cross_covs=np.zeros((n_states - 1, 2, 2)),
        log_likelihood=0.0,
        t_s=t_s,
        t_e=t_e,
        observations=points[t_s : n_states - t_e],
        z=z,
    )


def test_config_validation():
    """Settings are checked on construction"""
    assert EmConfig(estep_variant="original_mda").estep_variant is (
        EstepVariant.ORIGINAL_MDA
    )
    assert not EmConfig(estep_variant="original_mda").conditioned
    assert EmConfig().conditioned
    assert not EmConfig(belief_smoothing=False).conditioned
    with pytest.raises(ValidationError):
        EmConfig(estep_variant="mda")
    with pytest.raises(ValidationError):
        EmConfig(num_agents=0)
    with pytest.raises(ValidationError):
        EmConfig(t_cap=-1)


def test_single_hypothesis_weight():
    """One agent and no padding leave a single tuple of weight 1"""
    traj = Trajectory("0", [[200.0, 500.0], [220.0, 501.0], [241.0, 499.0]])
    cfg = EmConfig(num_agents=1, t_cap=0)
    resps, cache = e_step([traj], MixtureModel((make_agent(),)), cfg)
    assert resps[0].weights.shape == (1, 1, 1)
    assert resps[0][HiddenTuple(0, 0, 0)] == pytest.approx(1.0, abs=1e-15)
    assert cache.n_states == 1


def test_estep_oracle():
    """Tuple weights equal a brute-force enumeration of joint densities"""
    points = np.array([[203.0, 498.0], [219.0, 503.0], [242.0, 500.0]])
    traj = Trajectory("oracle", points)
    model = MixtureModel(
        (
            make_agent(b=(20.0, 0.0), pi=0.3, lambda_s=0.7, lambda_e=1.6, length=2),
            make_agent(
                b=(15.0, 5.0), mu_s=(190.0, 490.0), pi=0.7, lambda_s=2.0, length=3
            ),
        )
    )
    t_cap = 1
    for variant in EstepVariant:
        cfg = EmConfig(num_agents=2, t_cap=t_cap, estep_variant=variant)
        expected = np.zeros((2, t_cap + 1, t_cap + 1))
        for z, agent in enumerate(model):
            for t_s in range(t_cap + 1):
                for t_e in range(t_cap + 1):
                    means, _blocks, loglik = dense_posterior(
                        points, agent, t_s, t_e, conditioned=cfg.conditioned
                    )
                    total = np.log(agent.pi) + loglik
                    if variant.uses_poisson:
                        total += stats.poisson.logpmf(t_s, agent.lambda_s)
                        total += stats.poisson.logpmf(t_e, agent.lambda_e)
                    if variant.uses_belief_factors:
                        bel = agent.belief
                        total += gauss_logpdf(means[0], bel.mu_s, bel.Phi_s)
                        total += gauss_logpdf(means[-1], bel.mu_e, bel.Phi_e)
                    expected[z, t_s, t_e] = total
        expected = np.exp(expected - expected.max())
        expected /= expected.sum()
        resps, _cache = e_step([traj], model, cfg)
        assert np.allclose(resps[0].weights, expected, rtol=1e-8, atol=1e-12)
        assert resps[0].weights.sum() == pytest.approx(1.0)


def test_map_hypothesis():
    """A trajectory drawn from agent 0 is attributed to agent 0"""
    model = crossing_model()
    sample = sample_trajectory(model[0], n_points=12, seed=4)
    cfg = EmConfig(num_agents=2, t_cap=2)
    h, states = map_hypothesis(sample.trajectory, model, cfg)
    assert h.z == 0
    assert states.hidden == h
    resps, _cache = e_step([sample.trajectory], model, cfg)
    assert resps[0].argmax().z == 0
    assert cluster_labels(resps).tolist() == [0]


def test_solve_dynamics_exact():
    """Exactly consistent transitions give back the generating dynamics"""
    steps = np.arange(8.0)
    first = np.stack((steps, np.zeros(8)), axis=1)
    second = np.stack((steps, np.full(8, 5.0)), axis=1)
    accu = TransitionStats()
    accu.add(_states(first), 1.0, plugin=True)
    accu.add(_states(second), 1.0, plugin=True)
    A, b = solve_dynamics(accu)
    assert np.allclose(A, np.eye(2), atol=1e-10)
    assert np.allclose(b, [1.0, 0.0], atol=1e-10)


def test_solve_dynamics_regression():
    """Dynamics update equals weighted least squares of x_t on (x_{t-1}, 1)"""
    rng = np.random.default_rng(11)
    accu = TransitionStats()
    regressors, targets, weights = [], [], []
    for _ in range(6):
        points = rng.normal(scale=30.0, size=(int(rng.integers(3, 9)), 2))
        gamma = float(rng.uniform(0.1, 1.0))
        accu.add(_states(points), gamma, plugin=True)
        regressors.append(np.column_stack((points[:-1], np.ones(len(points) - 1))))
        targets.append(points[1:])
        weights.append(np.full(len(points) - 1, gamma))
    X = np.concatenate(regressors)
    Y = np.concatenate(targets)
    root = np.sqrt(np.concatenate(weights))[:, None]
    coef = np.linalg.solve((root * X).T @ (root * X), (root * X).T @ (root * Y))
    A, b = solve_dynamics(accu)
    assert np.allclose(A, coef[:2].T, rtol=1e-8, atol=1e-8)
    assert np.allclose(b, coef[2], rtol=1e-8, atol=1e-8)


def test_solve_dynamics_singular():
    """Identical states cannot determine the dynamics"""
    accu = TransitionStats()
    accu.add(_states(np.tile([3.0, 4.0], (6, 1))), 1.0, plugin=True)
    with pytest.raises(SingularSystemError):
        solve_dynamics(accu)
    with pytest.raises(SingularSystemError):
        solve_dynamics(TransitionStats())


def test_poisson_rate_update():
    """Rate updates are the weighted mean padding length"""
    weights = np.zeros((1, 7, 7))
    weights[0, 2, 0] = 0.25
    weights[0, 6, 0] = 0.75
    resp = Responsibility("0", weights, 0.0)
    accu = agent_statistics([resp], StateCache(1), 0)
    assert accu.t_s_sum / accu.tuple_mass == pytest.approx(5.0)
    assert accu.t_e_sum == 0.0
    # Same answer from a grid search on the expected log-likelihood
    grid = np.linspace(0.01, 18.0, 1800)
    values = [
        expected_complete_loglik(
            [resp], StateCache(1), MixtureModel((make_agent(lambda_s=lam),))
        )
        for lam in grid
    ]
    assert grid[int(np.argmax(values))] == pytest.approx(5.0, abs=0.01)


def _corpus(agent, count, n_points=12, seed=0):
    samples = sample_corpus(MixtureModel((agent,)), count, n_points, seed=seed)
    return [sample.trajectory for sample in samples]


def test_single_agent_mass():
    """One agent takes the whole mixture weight"""
    truth = make_agent(length=12)
    trajs = _corpus(truth, 5)
    cfg = EmConfig(num_agents=1, t_cap=1)
    resps, cache = e_step(trajs, MixtureModel((truth,)), cfg)
    rest = m_step_rest(resps, cache, 0, cfg)
    assert rest.pi == pytest.approx(1.0)
    A, b = m_step_dynamics(resps, cache, 0, cfg)
    model = m_step(trajs, resps, cache, MixtureModel((truth,)), cfg)
    assert np.allclose(model[0].dynamics.A, A)
    assert np.allclose(model[0].dynamics.b, b)


def _perturb(agent: AgentModel, name: str, index, delta: float) -> AgentModel:
    """Return `agent` with one parameter entry moved by `delta`

    Covariances are perturbed symmetrically.
    """
    if name in ("lambda_s", "lambda_e"):
        return agent.replace(**{name: getattr(agent, name) + delta})
    dyn, bel = agent.dynamics, agent.belief
    values = {
        "A": dyn.A,
        "b": dyn.b,
        "Q": dyn.Q,
        "R": dyn.R,
        "mu_s": bel.mu_s,
        "Phi_s": bel.Phi_s,
        "mu_e": bel.mu_e,
        "Phi_e": bel.Phi_e,
    }
    value = np.array(values[name], dtype=float)
    value[index] += delta
    if name in ("Q", "R", "Phi_s", "Phi_e") and index[0] != index[1]:
        value[index[::-1]] += delta
    values[name] = value
    return agent.replace(
        dynamics=DynamicsParams(values["A"], values["b"], values["Q"], values["R"]),
        belief=BeliefParams(
            values["mu_s"], values["Phi_s"], values["mu_e"], values["Phi_e"]
        ),
    )


def _gradient(resps, cache, agent, name, index):
    """Central finite difference of the expected log-likelihood"""
    if index is None:
        value = getattr(agent, name)
    else:
        source = agent.dynamics if name in ("A", "b", "Q", "R") else agent.belief
        value = getattr(source, name)[index]
    step = 1e-6 * max(1.0, abs(float(value)))
    plus = MixtureModel((_perturb(agent, name, index, step),))
    minus = MixtureModel((_perturb(agent, name, index, -step),))
    f_plus = expected_complete_loglik(resps, cache, plus)
    f_minus = expected_complete_loglik(resps, cache, minus)
    return (f_plus - f_minus) / (2.0 * step)


def test_mstep_stationarity():
    """Updated parameters zero the gradient of the expected log-likelihood"""
    truth = make_agent(length=12)
    trajs = _corpus(truth, 5, seed=3)
    start = make_agent(b=(18.0, 1.0), q=6.0, r=2.0, mu_s=(195.0, 505.0), length=12)
    cfg = EmConfig(num_agents=1, t_cap=2)
    resps, cache = e_step(trajs, MixtureModel((start,)), cfg)
    updated = m_step(trajs, resps, cache, MixtureModel((start,)), cfg)[0]
    f0 = expected_complete_loglik(resps, cache, MixtureModel((updated,)))
    before = expected_complete_loglik(resps, cache, MixtureModel((start,)))
    assert f0 >= before
    entries = [("lambda_s", None), ("lambda_e", None)]
    entries += [("A", (i, j)) for i in range(2) for j in range(2)]
    entries += [(name, (i,)) for name in ("b", "mu_s", "mu_e") for i in range(2)]
    entries += [
        (name, index)
        for name in ("Q", "R", "Phi_s", "Phi_e")
        for index in ((0, 0), (0, 1), (1, 1))
    ]
    for name, index in entries:
        grad = _gradient(resps, cache, updated, name, index)
        assert abs(grad) <= 1e-6 * abs(f0), (name, index, grad)


def test_exact_em_monotone():
    """Without hypothesis competition, EM never decreases the likelihood"""
    truth = make_agent(b=(12.0, 3.0), q=2.0, r=3.0, length=15)
    trajs = _corpus(truth, 8, n_points=15, seed=5)
    cfg = EmConfig(
        num_agents=1,
        t_cap=0,
        estep_variant="original_mda",
        max_iters=15,
        loglik_tol=1e-12,
    )
    result = fit(trajs, cfg)
    trace = result.trace
    assert trace.shape[0] >= 2
    slack = 1e-7 * np.abs(trace).max()
    assert np.all(np.diff(trace) >= -slack)
    assert result.n_iter <= cfg.max_iters
    assert result.model[0].pi == pytest.approx(1.0)


def test_initialize():
    """k-means initialization on first and last points"""
    rng = np.random.default_rng(0)
    trajs = []
    for k in range(10):
        first = rng.uniform(0.0, 20.0, 2) + (0.0 if k % 2 else 500.0)
        last = first + (300.0, 0.0)
        trajs.append(Trajectory(str(k), np.linspace(first, last, 6)))
    model = initialize(trajs, EmConfig(num_agents=1))
    firsts = np.array([traj.first for traj in trajs])
    lasts = np.array([traj.last for traj in trajs])
    assert np.allclose(model[0].belief.mu_s, firsts.mean(axis=0))
    assert np.allclose(model[0].belief.mu_e, lasts.mean(axis=0))
    assert np.allclose(model[0].dynamics.b, [60.0, 0.0])
    features = np.hstack((firsts, lasts))
    radius2 = np.mean(np.sum((features - features.mean(axis=0)) ** 2, axis=1))
    # per-axis variance: squared RMS radius over the 4 feature coordinates
    assert np.allclose(model[0].belief.Phi_s, radius2 / 4.0 * np.eye(2))
    assert np.allclose(model[0].belief.Phi_e, model[0].belief.Phi_s)
    model = initialize(trajs, EmConfig(num_agents=2))
    assert model.weights.tolist() == [0.5, 0.5]
    for agent in model:
        group = firsts[np.abs(firsts[:, 0] - agent.belief.mu_s[0]) < 100.0]
        assert group.shape[0] == 5
        assert np.all(agent.belief.mu_s >= group.min(axis=0))
        assert np.all(agent.belief.mu_s <= group.max(axis=0))


def test_initialize_degenerate():
    """Identical trajectories cannot seed distinct clusters"""
    trajs = [Trajectory(str(k), [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]) for k in range(6)]
    with pytest.raises(InitializationError):
        initialize(trajs, EmConfig(num_agents=2, reseed_attempts=3))
    with pytest.raises(ValidationError):
        fit(trajs[:1], EmConfig(num_agents=2))


def test_cluster_purity():
    """Majority class fraction per cluster"""
    assert cluster_purity([0, 0, 1, 1], [1, 1, 0, 1]) == 0.75
    assert cluster_purity([2, 2, 2], [0, 0, 0]) == 1.0
    with pytest.raises(ValidationError):
        cluster_purity([0, 1], [0])


def test_beliefs_separate_lanes():
    """Belief factors split agents that share their dynamics

    k-means initialization, four lanes: start beliefs are recovered within 5% of
    the scene diagonal and clusters are pure, unlike without belief factors.
    """
    truth = lane_model(length=12)
    samples = sample_corpus(truth, 200, n_points=12, seed=1)
    trajs = [sample.trajectory for sample in samples]
    labels = [sample.hidden.z for sample in samples]
    diagonal = float(np.hypot(1000.0, 1000.0))
    purities = {}
    for variant in ("imda", "original_mda"):
        cfg = EmConfig(num_agents=4, t_cap=2, max_iters=10, estep_variant=variant)
        result = fit(trajs, cfg)
        purities[variant] = cluster_purity(result.labels, labels)
        if variant == "imda":
            starts = np.array([agent.belief.mu_s for agent in result.model])
            true_starts = np.array([agent.belief.mu_s for agent in truth])
            errors = np.linalg.norm(starts[:, None] - true_starts[None], axis=2)
            rows, cols = optimize.linear_sum_assignment(errors)
            assert errors[rows, cols].max() <= 0.05 * diagonal
    assert purities["imda"] >= 0.95
    assert purities["original_mda"] < purities["imda"]


def test_imda_trace_monotone():
    """With belief factors the likelihood only decreases within a small slack"""
    truth = lane_model(n_lanes=3, length=10)
    trajs = [
        sample.trajectory for sample in sample_corpus(truth, 24, n_points=10, seed=6)
    ]
    for num_agents in (1, 2, 3):
        for t_cap in (0, 3, 5):
            cfg = EmConfig(
                num_agents=num_agents, t_cap=t_cap, max_iters=6, loglik_tol=1e-9
            )
            trace = fit(trajs, cfg).trace
            slack = 1e-3 * np.abs(trace).max()
            assert np.all(np.diff(trace) >= -slack), (num_agents, t_cap, trace)


def test_fit_keeps_best_iterate(monkeypatch):
    """A step that lowers the likelihood is not returned"""
    truth = crossing_model()
    samples = sample_corpus(truth, 16, n_points=10, seed=8)
    trajs = [sample.trajectory for sample in samples]
    cfg = EmConfig(num_agents=2, t_cap=1, max_iters=5)
    wrong = MixtureModel(
        (make_agent(b=(0.0, -30.0), pi=0.5), make_agent(b=(-30.0, 0.0), pi=0.5))
    )
    models = [truth]
    real_m_step = em.m_step

    def degrading_m_step(*args):
        models.append(real_m_step(*args) if len(models) == 1 else wrong)
        return models[-1]

    monkeypatch.setattr(em, "m_step", degrading_m_step)
    result = fit(trajs, cfg, init_model=truth)
    assert result.trace[-1] < result.trace.max()
    assert not result.converged
    assert result.best_iter == int(np.argmax(result.trace)) < result.n_iter
    assert result.model is models[result.best_iter]
    assert result.responsibilities[0].weights.shape == (2, 2, 2)


def test_label_permutation():
    """Permuting the initial agents permutes the fitted agents"""
    truth = crossing_model()
    samples = sample_corpus(truth, 16, n_points=10, seed=8)
    trajs = [sample.trajectory for sample in samples]
    cfg = EmConfig(num_agents=2, t_cap=1, max_iters=3)
    result = fit(trajs, cfg, init_model=truth)
    swapped = fit(trajs, cfg, init_model=truth.permuted([1, 0]))
    assert swapped.n_iter == result.n_iter
    assert np.allclose(swapped.trace, result.trace, rtol=1e-9)
    names = {"dynamics": ("A", "b", "Q", "R"), "belief": ("mu_s", "Phi_s", "mu_e")}
    for index, source in enumerate((1, 0)):
        fitted, expected = swapped.model[index], result.model[source]
        for group, attrs in names.items():
            for name in attrs:
                one = getattr(getattr(fitted, group), name)
                two = getattr(getattr(expected, group), name)
                assert np.allclose(one, two, rtol=1e-7, atol=1e-9), name
        assert fitted.pi == pytest.approx(expected.pi, rel=1e-9)
        assert fitted.lambda_s == pytest.approx(expected.lambda_s, rel=1e-7)
    assert np.array_equal(swapped.labels, 1 - result.labels)


if __name__ == "__main__":
    test_config_validation()
    test_single_hypothesis_weight()
    test_estep_oracle()
    test_map_hypothesis()
    test_solve_dynamics_exact()
    test_solve_dynamics_regression()
    test_solve_dynamics_singular()
    test_poisson_rate_update()
    test_single_agent_mass()
    test_mstep_stationarity()
    test_exact_em_monotone()
    test_initialize()
    test_initialize_degenerate()
    test_cluster_purity()
    test_beliefs_separate_lanes()
    test_imda_trace_monotone()
    test_label_permutation()
