import numpy as np
import pytest

from jointopt import audit
from jointopt.engine import (
    Engine,
    GraphSettings,
    RunConfig,
    RunMode,
    SwarmState,
    align,
    run,
    run_sequential_baseline,
)
from jointopt.errors import ConfigError, ConvergenceFailure, RunError
from jointopt.graph import generate_topology, metropolis_weights
from jointopt.metrics import consensus_gap
from jointopt.problem import (
    AgentObjective,
    LearningSpec,
    NoiseModel,
    ProblemSpec,
    random_box_family,
    random_learning,
    random_problem,
)
from jointopt.schedule import StepsizeSchedule
from jointopt.sets import Box, SetFamily

from conftest import dyadic_learning, small_config


def test_align_single_agent():
    x = np.array([[1.0, -2.0]])
    assert np.array_equal(align(SwarmState(0, x, np.zeros((1, 1))), np.eye(1)), x)


def test_align_uniform_average():
    w = metropolis_weights(generate_topology("complete", 2))
    v = align(SwarmState(0, np.array([[0.0, 0.0], [2.0, 2.0]]), np.zeros((2, 1))), w)
    assert np.allclose(v, [[1, 1], [1, 1]])


def test_align_fixes_consensus_points():
    w = metropolis_weights(generate_topology("ring", 4))
    c = np.array([0.3, -1.7])
    v = align(SwarmState(0, np.tile(c, (4, 1)), np.zeros((4, 1))), w)
    assert np.allclose(v, c, atol=1e-15)


def test_exact_gradient_step_to_minimiser():
    prob = ProblemSpec([AgentObjective(np.eye(2), np.zeros((2, 1)), np.zeros(2))])
    cfg = RunConfig(prob, SetFamily([Box([-10, -10], [10, 10])]), LearningSpec(np.eye(1), [0.0]),
                    mode=RunMode("deterministic"))
    eng = Engine(cfg)
    nxt = eng.step(SwarmState(0, np.array([[1.0, 0.0]]), np.zeros((1, 1))))
    assert cfg.schedule.alpha(0) == 1.0
    assert np.array_equal(nxt.x, [[0.0, 0.0]])
    assert nxt.k == 1


def test_correctly_specified_keeps_theta_star():
    learn, theta_star = dyadic_learning()
    cfg = small_config(m=3, mode=RunMode("correctly_specified")).replace(learning=learn)
    eng = Engine(cfg)
    state = eng.initial_state()
    for _ in range(20):
        state = eng.step(state)
        assert np.array_equal(state.theta, np.tile(theta_star, (3, 1)))


def test_same_seed_same_trace():
    cfg = small_config(x_noise=NoiseModel.gaussian(0.1), theta_noise=NoiseModel.uniform(0.2),
                       iterations=300, stride=7, seed=11)
    a, b = run(cfg), run(cfg)
    for ra, rb in zip(a.records, b.records):
        assert (ra.k, ra.consensus_gap, ra.theta_error, ra.opt_gap) == \
            (rb.k, rb.consensus_gap, rb.theta_error, rb.opt_gap)
    assert np.array_equal(a.final_state.x, b.final_state.x)
    c = run(cfg.replace(seed=12))
    assert not np.array_equal(a.final_state.x, c.final_state.x)


def test_zero_iterations():
    trace = run(small_config(iterations=0))
    assert len(trace.records) == 1 and trace.records[0].k == 0


def test_record_count():
    for K, stride in [(25, 10), (20, 10), (7, 1), (3, 10)]:
        trace = run(small_config(iterations=K, stride=stride))
        assert len(trace.records) == -(-K // stride) + 1
        assert trace.records[-1].k == K


def test_deterministic_single_agent_converges():
    prob = random_problem(1, 3, 2, seed=5)
    fam = random_box_family(1, 3, seed=5)
    cfg = RunConfig(prob, fam, random_learning(2, seed=5), mode=RunMode("deterministic"),
                    iterations=10_000, stride=1000)
    trace = run(cfg)
    assert np.linalg.norm(trace.final_state.x[0] - trace.reference.x_star) <= 1e-3


def test_modes_agree_at_learning_fixed_point():
    learn, _ = dyadic_learning()
    base = small_config(m=4, x_noise=NoiseModel.gaussian(0.05), iterations=500, stride=1,
                        seed=3).replace(learning=learn, theta_init="reference")
    a = run(base)
    b = run(base.replace(mode=RunMode("correctly_specified")))
    assert np.array_equal(a.final_state.x, b.final_state.x)
    assert [r.consensus_gap for r in a.records] == [r.consensus_gap for r in b.records]


def test_noise_streams_do_not_depend_on_agent_count():
    from jointopt.engine import X_NOISE, NoiseStreams
    small = NoiseStreams(NoiseModel.gaussian(1.0), 3, 2, seed=9, purpose=X_NOISE)
    large = NoiseStreams(NoiseModel.gaussian(1.0), 6, 2, seed=9, purpose=X_NOISE)
    for _ in range(1500):
        assert np.array_equal(small.next(), large.next()[:3])


def test_sequential_baseline_matches_correct_model_when_learned():
    cfg = small_config(m=3, mode=RunMode("deterministic"), iterations=50_000, stride=5000)
    seq = run_sequential_baseline(cfg, learn_iters=60)
    assert seq.summary["theta_hat_error"] <= 1e-8
    good = run(cfg.replace(mode=RunMode("correctly_specified")))
    assert abs(seq.summary["final_opt_gap"] - good.summary["final_opt_gap"]) <= 1e-6


def test_sequential_baseline_budget_split():
    cfg = small_config(m=3, iterations=6, stride=1)
    trace = run_sequential_baseline(cfg, learn_iters=5)
    xs = [r.y for r in trace.records]
    for k in range(1, 6):
        assert np.array_equal(xs[k], xs[0])
    assert not np.array_equal(xs[6], xs[5])


def test_sequential_baseline_stops_early():
    learn = LearningSpec(0.2 * np.eye(2), [0.2, -0.2])
    cfg = small_config(m=3, mode=RunMode("deterministic"), iterations=5000, stride=500)
    cfg = cfg.replace(learning=learn, theta_init=np.array([20.0, 20.0]))
    joint = run(cfg)
    seq = run_sequential_baseline(cfg, learn_iters=1)
    assert seq.summary["theta_hat_error"] > np.sqrt(joint.summary["final_theta_error"])


def test_learn_iters_must_fit_budget():
    with pytest.raises(ConfigError):
        run_sequential_baseline(small_config(iterations=10), learn_iters=10)
    with pytest.raises(ConfigError):
        RunMode("sequential_baseline", 0)


def test_feasibility_every_step():
    cfg = small_config(m=4, x_noise=NoiseModel.gaussian(0.5), theta_noise=NoiseModel.gaussian(0.5))
    cfg = cfg.replace(learning=random_learning(2, seed=0, theta_set=Box([-0.3, -0.3], [0.3, 0.3])))
    eng = Engine(cfg)
    state = eng.initial_state()
    for _ in range(300):
        state = eng.step(state)
        assert cfg.sets.contains_each(state.x, 1e-10)
        assert all(cfg.learning.theta_set.contains(t, 1e-10) for t in state.theta)


def test_consensus_fixed_point_is_stationary():
    m, n, p = 4, 2, 2
    base = random_problem(m, n, p, seed=3)
    learn, theta_star = dyadic_learning()
    xbar = np.array([0.1, -0.2])
    objs = [AgentObjective(o.Q, o.B, -(o.Q @ xbar + o.B @ theta_star)) for o in base.objectives]
    fam = SetFamily([Box([-1, -1], [1, 1])] * m)
    cfg = RunConfig(ProblemSpec(objs), fam, learn, mode=RunMode("deterministic"))
    eng = Engine(cfg)
    state = SwarmState(0, np.tile(xbar, (m, 1)), np.tile(theta_star, (m, 1)))
    for _ in range(50):
        nxt = eng.step(state)
        assert np.abs(nxt.x - state.x).max() <= 1e-12
        assert np.abs(nxt.theta - state.theta).max() <= 1e-12
        state = nxt


def test_noiseless_theta_descent_every_step():
    cfg = small_config(m=3, p=3, mode=RunMode("deterministic"))
    cfg = cfg.replace(learning=random_learning(3, seed=1, spread=(0.5, 1.5)), theta_init_scale=5.0)
    eng = Engine(cfg)
    kappa, R = cfg.learning.kappa, cfg.learning.R_theta
    k0 = cfg.schedule.first_gamma_below(kappa / R ** 2)
    state = eng.initial_state()
    for _ in range(k0 + 500):
        nxt = eng.step(state)
        if state.k >= k0:
            lhs, rhs = audit.theta_descent(state.theta, nxt.theta, eng.reference.theta_star,
                                           cfg.schedule.gamma(state.k), kappa, R)
            assert lhs <= rhs + 1e-12
        state = nxt


def test_align_relations_along_run(rng):
    cfg = small_config(m=6, x_noise=NoiseModel.gaussian(0.3), iterations=200)
    eng = Engine(cfg)
    state = eng.initial_state()
    for _ in range(200):
        W = eng.topologies.weights(state.k)
        v = W @ state.x
        c = rng.normal(size=cfg.n)
        assert audit.averaging_identity_residual(W, state.x, c) <= 1e-10
        assert consensus_gap(v) <= consensus_gap(state.x) + 1e-12
        state = eng.step(state)


def test_audit_mode_runs_clean():
    cfg = small_config(m=5, mode=RunMode("deterministic"), iterations=2000, stride=20, audit=True)
    trace = run(cfg)
    for name in ("L1", "L3", "L5", "AC", "FEAS"):
        assert trace.summary["audit"][name]["violations"] == 0
        assert trace.summary["audit"][name]["checks"] > 0
    assert "L1=ok" in trace.records[-1].audit_flags


def test_lemma5_skipped_for_non_box_family():
    from jointopt.sets import Ball
    prob = random_problem(2, 2, 2, seed=0)
    fam = SetFamily([Ball([0, 0], 1.0), Box([-0.5, -0.5], [2, 2])])
    cfg = RunConfig(prob, fam, random_learning(2), iterations=20, stride=10, audit=True)
    trace = run(cfg)
    assert "L5=skip" in trace.records[-1].audit_flags
    assert "L5" not in trace.summary["audit"]


def test_component_failure_reports_iteration(monkeypatch):
    cfg = small_config(iterations=50, stride=5)
    eng = Engine(cfg)
    original = eng.step

    def failing(state):
        if state.k == 17:
            raise ConvergenceFailure("forced", 1.0)
        return original(state)

    monkeypatch.setattr(eng, "step", failing)
    with pytest.raises(RunError) as info:
        eng.run()
    assert info.value.iteration == 17
    assert [r.k for r in info.value.trace.records] == [0, 5, 10, 15]


def test_invalid_schedule_rejected():
    with pytest.raises(ConfigError, match="Assumption 7"):
        Engine(small_config(schedule=StepsizeSchedule(a1=0.4)))


def test_noise_bound_enforced():
    with pytest.raises(ConfigError, match="Assumption 2"):
        Engine(small_config(x_noise=NoiseModel.gaussian(1.0), nu=0.5))
