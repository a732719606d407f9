import numpy as np
import pytest
from scipy.stats import chi2

import checks
import oracles
from nashdqn import ConfigError, UsageError
from nashdqn.agents import (
    AlgorithmKind,
    ExplorationSchedule,
    NashRules,
    act,
    epsilon_at,
    greedy_joint,
    td_target,
    td_targets,
)
from nashdqn.qnet import forward, init_single, snapshot_params

GAMMA = 0.95
JOINT_KINDS = [AlgorithmKind.SET_CONTROLLER, AlgorithmKind.FRIEND,
               AlgorithmKind.NASH_Q_PUBLIC, AlgorithmKind.NASH_Q_PRIVATE]


def constant_net(q, in_dim=4):
    """A network whose output is ``q`` for every input."""
    p = init_single(in_dim, len(q), hidden=(3, 3), rng=0)
    p.tensors["W3"][...] = 0.0
    p.tensors["b3"][...] = q
    return p


class TestKinds:
    def test_from_config(self):
        assert AlgorithmKind.from_config("nash_q", public=True) is AlgorithmKind.NASH_Q_PUBLIC
        assert AlgorithmKind.from_config("nash_q", public=False) is AlgorithmKind.NASH_Q_PRIVATE
        assert AlgorithmKind.from_config("idqn") is AlgorithmKind.IDQN
        with pytest.raises(ConfigError):
            AlgorithmKind.from_config("foe")

    def test_output_dimensions(self):
        assert AlgorithmKind.IDQN.output_dim(5) == 5
        for kind in JOINT_KINDS:
            assert kind.output_dim(4) == 16
            assert kind.output_dim(5) == 25


class TestSchedule:
    def test_endpoints_and_midpoint(self):
        s = ExplorationSchedule(1.0, 0.1, 0.75, 1000)
        assert epsilon_at(s, 0) == 1.0
        assert epsilon_at(s, 375) == pytest.approx(0.55)
        assert epsilon_at(s, 750) == 0.1
        assert epsilon_at(s, 10_000) == 0.1

    def test_monotone_and_bounded(self):
        s = ExplorationSchedule(1.0, 0.1, 0.75, 500_000)
        eps = [s.epsilon_at(t) for t in range(0, 600_000, 997)]
        assert all(a >= b for a, b in zip(eps, eps[1:]))
        assert all(0.1 <= e <= 1.0 for e in eps)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ExplorationSchedule(0.1, 0.5)
        with pytest.raises(UsageError):
            ExplorationSchedule().epsilon_at(-1)


class TestTargets:
    @pytest.mark.parametrize("kind", list(AlgorithmKind))
    def test_terminal_returns_reward(self, kind):
        n_out = 5 if kind is AlgorithmKind.IDQN else 25
        nets = [constant_net(np.arange(n_out, dtype=float)) for _ in range(2)]
        assert td_target(kind, 10.0, True, np.zeros(4), nets, GAMMA) == 10.0
        batch = td_targets(kind, [10.0, -3.0], [True, True], np.zeros((2, 4)), nets, GAMMA)
        np.testing.assert_array_equal(batch, [10.0, -3.0])

    def test_set_controller_direct_max(self):
        net = constant_net([0.0, 0.0, 20.0, 0.0])
        assert td_target(AlgorithmKind.SET_CONTROLLER, 0.0, False, np.zeros(4), [net], GAMMA) == pytest.approx(19.0)

    def test_idqn_uses_own_max(self):
        nets = [constant_net([1.0, 4.0, 2.0, 0.0, 0.0]), constant_net([9.0, 0, 0, 0, 0])]
        assert td_target(AlgorithmKind.IDQN, 1.0, False, np.zeros(4), nets, GAMMA, agent_id=0) == pytest.approx(1 + GAMMA * 4)
        assert td_target(AlgorithmKind.IDQN, 1.0, False, np.zeros(4), nets, GAMMA, agent_id=1) == pytest.approx(1 + GAMMA * 9)

    def test_nash_public_matching_pennies_greedy_fallback(self):
        p1 = np.array([[1.0, -1.0], [-1.0, 2.0]])
        nets = [constant_net(p1.ravel()), constant_net((-p1).ravel())]
        rules = NashRules("max_sum", "greedy")
        # no pure equilibrium; agent 0 falls back to its own best cell (1, 1), agent 1 to (0, 1):
        # the joint play is (1, 1), and each agent bootstraps its own value there
        y0 = td_target(AlgorithmKind.NASH_Q_PUBLIC, 1.0, False, np.zeros(4), nets, GAMMA, 0, rules)
        y1 = td_target(AlgorithmKind.NASH_Q_PUBLIC, 1.0, False, np.zeros(4), nets, GAMMA, 1, rules)
        assert y0 == pytest.approx(1 + GAMMA * p1[1, 1])
        assert y1 == pytest.approx(1 + GAMMA * -p1[1, 1])

    def test_nash_private_ignores_other_network(self):
        q = np.random.default_rng(0).normal(size=25)
        mine = constant_net(q)
        y = td_target(AlgorithmKind.NASH_Q_PRIVATE, 0.0, False, np.zeros(4), [mine, constant_net(-q)], GAMMA, 0)
        # with both matrices equal to q, max-sum picks the global max of q
        assert y == pytest.approx(GAMMA * q.max())

    def test_private_equals_public_with_identical_params(self):
        rng = np.random.default_rng(3)
        net = init_single(4, 25, rng=rng)
        twin = snapshot_params(net)
        obs = rng.uniform(size=(64, 4))
        r = rng.normal(size=64)
        done = rng.random(64) < 0.2
        for tie in ("greedy", "max_sum"):
            for no in ("greedy", "best_sum"):
                rules = NashRules(tie, no)
                for agent in (0, 1):
                    pub = td_targets(AlgorithmKind.NASH_Q_PUBLIC, r, done, obs, [net, twin], GAMMA, agent, rules)
                    priv = td_targets(AlgorithmKind.NASH_Q_PRIVATE, r, done, obs, [net, twin], GAMMA, agent, rules)
                    np.testing.assert_array_equal(pub, priv)

    @pytest.mark.parametrize("kind", [AlgorithmKind.IDQN, AlgorithmKind.FRIEND])
    def test_independent_kinds_never_read_the_other_network(self, kind):
        rng = np.random.default_rng(4)
        n_out = 5 if kind is AlgorithmKind.IDQN else 25
        mine = init_single(4, n_out, rng=rng)
        obs = rng.uniform(size=(32, 4))
        r = rng.normal(size=32)
        base = td_targets(kind, r, np.zeros(32, bool), obs, [mine, init_single(4, n_out, rng=rng)], GAMMA, 0)
        other = init_single(4, n_out, rng=rng)
        other.flat[:] = rng.normal(size=other.flat.shape) * 100
        np.testing.assert_array_equal(base, td_targets(kind, r, np.zeros(32, bool), obs, [mine, other], GAMMA, 0))

    def test_set_controller_equals_friend_style_max(self):
        rng = np.random.default_rng(5)
        net = init_single(4, 25, rng=rng)
        obs = rng.uniform(size=(32, 4))
        r = rng.normal(size=32)
        sc = td_targets(AlgorithmKind.SET_CONTROLLER, r, np.zeros(32, bool), obs, [net], GAMMA)
        fr = td_targets(AlgorithmKind.FRIEND, r, np.zeros(32, bool), obs, [net, net], GAMMA, 0)
        np.testing.assert_array_equal(sc, fr)

    def test_dimension_errors(self):
        with pytest.raises(UsageError):
            td_targets(AlgorithmKind.SET_CONTROLLER, [0.0], [False], np.zeros((1, 4)), [constant_net(np.zeros(5))], GAMMA)
        with pytest.raises(UsageError):
            td_targets(AlgorithmKind.IDQN, [0.0], [False], np.zeros((1, 4)),
                       [constant_net(np.zeros(5)), constant_net(np.zeros(4))], GAMMA)
        with pytest.raises(UsageError):
            td_targets(AlgorithmKind.IDQN, [0.0], [False], np.zeros((1, 4)), [constant_net(np.zeros(5))] * 2, 1.0)


class TestAct:
    def test_greedy_is_deterministic(self):
        rng = np.random.default_rng(0)
        nets = [init_single(4, 25, rng=rng) for _ in range(2)]
        obs = [rng.uniform(size=4), rng.uniform(size=4)]
        for kind in JOINT_KINDS:
            a = act(kind, obs, nets, 0.0, np.random.default_rng(1), 5)
            b = act(kind, obs, nets, 0.0, np.random.default_rng(2), 5)
            assert a == b

    def test_act_matches_batched_greedy(self):
        rng = np.random.default_rng(1)
        nets = [init_single(4, 25, rng=rng) for _ in range(2)]
        idqn_nets = [init_single(4, 5, rng=rng) for _ in range(2)]
        obs = rng.uniform(size=(2, 30, 4))
        for kind in [AlgorithmKind.IDQN] + JOINT_KINDS:
            params = idqn_nets if kind is AlgorithmKind.IDQN else nets
            batch, _ = greedy_joint(kind, [obs[0], obs[1]], params)
            for k in range(30):
                single = act(kind, [obs[0, k], obs[1, k]], params, 0.0, rng, 5)
                assert single == tuple(batch[k])

    def test_friend_twins_match_set_controller(self):
        assert checks.friend_set_controller_mismatches(2000, seed=7) == 0

    @pytest.mark.parametrize("kind", [AlgorithmKind.IDQN, AlgorithmKind.SET_CONTROLLER, AlgorithmKind.NASH_Q_PUBLIC])
    def test_full_exploration_is_uniform_over_joint_actions(self, kind):
        rng = np.random.default_rng(11)
        n_out = 5 if kind is AlgorithmKind.IDQN else 25
        nets = [constant_net(np.arange(n_out, dtype=float)) for _ in range(2)]
        obs = [np.zeros(4), np.zeros(4)]
        counts = np.zeros(25)
        for _ in range(100_000):
            a0, a1 = act(kind, obs, nets, 1.0, rng, 5)
            counts[a0 * 5 + a1] += 1
        assert oracles.chi_square_uniform_ok(counts, chi2.ppf(0.99, df=24))

    def test_idqn_agents_explore_independently(self):
        # greedy choice is action 4 for both; with eps=0.5 each agent deviates on its own
        nets = [constant_net(np.arange(5, dtype=float)) for _ in range(2)]
        rng = np.random.default_rng(0)
        draws = np.array([act(AlgorithmKind.IDQN, [np.zeros(4)] * 2, nets, 0.5, rng, 5) for _ in range(20_000)])
        greedy = draws == 4
        # P(greedy) = 0.5 + 0.5/5 = 0.6 per agent, independently
        assert greedy.mean(axis=0) == pytest.approx([0.6, 0.6], abs=0.015)
        assert (greedy[:, 0] & greedy[:, 1]).mean() == pytest.approx(0.36, abs=0.015)

    def test_joint_kinds_share_one_draw(self):
        nets = [constant_net(np.arange(25, dtype=float))]
        rng = np.random.default_rng(0)
        draws = [act(AlgorithmKind.SET_CONTROLLER, [np.zeros(4)] * 2, nets, 0.5, rng, 5) for _ in range(20_000)]
        # greedy joint action (4, 4) is hit w.p. 0.5 + 0.5/25
        hits = np.mean([d == (4, 4) for d in draws])
        assert hits == pytest.approx(0.52, abs=0.015)

    def test_invalid_epsilon(self):
        with pytest.raises(UsageError):
            act(AlgorithmKind.IDQN, [np.zeros(4)] * 2, [constant_net(np.zeros(5))] * 2, 1.5, np.random.default_rng(), 5)
