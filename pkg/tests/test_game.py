import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import checks
import oracles
from nashdqn import ConfigError, UsageError
from nashdqn.game import (
    build_payoffs,
    nash_mask,
    pure_nash,
    select_friend,
    select_nash_actions,
    select_nash_q,
    select_set_controller,
)


def pair_of(p1, p2):
    p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
    return build_payoffs(p1.ravel(), p2.ravel(), p1.shape[0])


class TestBuildPayoffs:
    def test_reshape_is_agent0_major(self):
        pair = build_payoffs([0, 1, 2, 3], [0, 1, 2, 3])
        np.testing.assert_array_equal(pair.payoff_1, [[0, 1], [2, 3]])
        np.testing.assert_array_equal(pair.payoff_2, pair.payoff_1)

    def test_sync_dimensions(self):
        assert build_payoffs(np.zeros(25), np.zeros(25)).shape == (5, 5)

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            build_payoffs(np.zeros(4), np.zeros(9))
        with pytest.raises(UsageError):
            build_payoffs(np.zeros(5), np.zeros(5))


class TestPureNash:
    def test_dominant_cell(self):
        assert pure_nash(pair_of([[2, 1], [1, 0]], [[2, 1], [1, 0]])) == [(0, 0)]

    def test_weak_equilibria_count(self):
        # (1, 1) is a weak equilibrium: neither agent strictly gains by deviating
        assert pure_nash(pair_of([[1, 0], [0, 0]], [[1, 0], [0, 0]])) == [(0, 0), (1, 1)]

    def test_matching_pennies_has_none(self):
        p1 = np.array([[1, -1], [-1, 1]])
        assert pure_nash(pair_of(p1, -p1)) == []

    def test_coordination_game_has_two(self):
        p = [[2, 0], [0, 1]]
        assert pure_nash(pair_of(p, p)) == [(0, 0), (1, 1)]

    def test_ties_admit_several_best_responses(self):
        assert pure_nash(pair_of(np.zeros((3, 3)), np.zeros((3, 3)))) == [(i, j) for i in range(3) for j in range(3)]

    def test_oracle_agreement(self):
        assert checks.nash_mismatches(1200) == 0

    def test_batched_mask_matches_single(self):
        rng = np.random.default_rng(0)
        q1, q2 = rng.integers(0, 3, size=(2, 10, 16)).astype(float)
        mask = nash_mask(build_payoffs(q1, q2))
        for k in range(10):
            single = pure_nash(build_payoffs(q1[k], q2[k]))
            assert [tuple(c) for c in np.argwhere(mask[k])] == single

    def test_tolerance_widens_best_responses(self):
        p = [[1.0, 0.0], [0.999, 0.0]]
        assert pure_nash(pair_of(p, p)) == [(0, 0)]
        assert (1, 0) in pure_nash(pair_of(p, p), tol=0.01)

    @settings(max_examples=200, deadline=None)
    @given(
        arrays(float, (4, 4), elements=st.integers(-3, 3).map(float)),
        arrays(float, (4, 4), elements=st.integers(-3, 3).map(float)),
        st.integers(-5, 5),
        st.integers(-5, 5),
    )
    def test_shift_invariance_and_deviation_property(self, p1, p2, c1, c2):
        cells = pure_nash(pair_of(p1, p2))
        assert cells == pure_nash(pair_of(p1 + c1, p2 + c2))
        assert cells == sorted(set(cells))
        assert cells == oracles.brute_force_nash(p1, p2)


class TestSelectNash:
    def test_max_sum_picks_larger_sum(self):
        # equilibria (0,0) with sum 5 and (1,1) with sum 7
        p1 = [[3, 0], [0, 4]]
        p2 = [[2, 0], [0, 3]]
        pair = pair_of(p1, p2)
        assert pure_nash(pair) == [(0, 0), (1, 1)]
        assert select_nash_q(pair, "max_sum", "greedy", 0) == 1
        assert select_nash_q(pair, "max_sum", "greedy", 1) == 1

    def test_greedy_tie_break_can_miscoordinate(self):
        p1 = [[3, 0], [0, 1]]
        p2 = [[1, 0], [0, 3]]
        pair = pair_of(p1, p2)
        assert pure_nash(pair) == [(0, 0), (1, 1)]
        assert tuple(select_nash_actions(pair, "greedy", "greedy")) == (0, 1)

    def test_best_sum_matching_pennies_picks_lowest_row(self):
        p1 = np.array([[1, -1], [-1, 1]])
        pair = pair_of(p1, -p1)
        assert select_nash_q(pair, "greedy", "best_sum", 0) == 0
        assert select_nash_q(pair, "greedy", "best_sum", 1) == 0

    def test_greedy_no_nash_uses_own_argmax(self):
        p1 = np.array([[1, -1], [-1, 2]])
        pair = pair_of(p1, -p1)
        assert pure_nash(pair) == []
        # agent 0's best cell is (1, 1); agent 1's matrix -p1 peaks first at (0, 1)
        assert tuple(select_nash_actions(pair, "max_sum", "greedy")) == (1, 1)

    def test_best_sum_uses_row_and_column_means(self):
        p1 = np.array([[0, -1, 2], [1, 0, -1], [-1, 1, 0]], float)
        p2 = np.array([[0, 3, -2], [-1, 0, 1], [1, -1, 0]], float)
        pair = pair_of(p1, p2)
        assert pure_nash(pair) == []
        # agent 0: row means (1/3, 0, 0) -> 0; agent 1: column means (0, 2/3, -1/3) -> 1
        assert tuple(select_nash_actions(pair, "max_sum", "best_sum")) == (0, 1)

    def test_rule_names_validated(self):
        pair = pair_of(np.eye(2), np.eye(2))
        with pytest.raises(ConfigError):
            select_nash_actions(pair, "random", "greedy")
        with pytest.raises(ConfigError):
            select_nash_actions(pair, "greedy", "mixed")
        with pytest.raises(UsageError):
            select_nash_q(pair, "greedy", "greedy", 2)

    @settings(max_examples=300, deadline=None)
    @given(
        arrays(float, (5, 5), elements=st.integers(-2, 2).map(float)),
        arrays(float, (5, 5), elements=st.integers(-2, 2).map(float)),
    )
    def test_max_sum_is_coordination_safe(self, p1, p2):
        pair = pair_of(p1, p2)
        cells = pure_nash(pair)
        joint = tuple(int(a) for a in select_nash_actions(pair, "max_sum", "greedy"))
        if cells:
            assert joint in cells
            sums = {c: p1[c] + p2[c] for c in cells}
            best = max(sums.values())
            assert joint == min(c for c in cells if sums[c] == best)

    def test_batched_selection_matches_single(self):
        rng = np.random.default_rng(5)
        q1, q2 = rng.integers(-2, 3, size=(2, 50, 25)).astype(float)
        for tie in ("greedy", "max_sum"):
            for no in ("greedy", "best_sum"):
                batch = select_nash_actions(build_payoffs(q1, q2), tie, no)
                for k in range(50):
                    single = select_nash_actions(build_payoffs(q1[k], q2[k]), tie, no)
                    np.testing.assert_array_equal(batch[k], single)


class TestFriendAndSetController:
    def test_friend_coordinates(self):
        assert select_friend([0, 5, 1, 2], 0) == 0
        assert select_friend([0, 5, 1, 2], 1) == 1

    def test_uniform_q_goes_to_index_zero(self):
        assert select_friend(np.ones(25), 0) == 0
        assert select_friend(np.ones(25), 1) == 0
        assert select_set_controller(np.ones(25)) == (0, 0)

    def test_set_controller_decoding(self):
        assert select_set_controller([0, 0, 9, 0]) == (1, 0)

    def test_set_controller_matches_linear_scan(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            q = rng.integers(0, 4, size=25).astype(float)
            k = oracles.linear_scan_argmax(q)
            assert select_set_controller(q) == (k // 5, k % 5)

    def test_friend_twins_equal_set_controller(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            q = rng.normal(size=16)
            assert (select_friend(q, 0), select_friend(q, 1)) == select_set_controller(q)
