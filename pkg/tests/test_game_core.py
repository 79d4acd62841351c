import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablegames.discretize import DiscreteGrid, make_grid
from stablegames.equilibria import check_bse, check_ree
from stablegames.game_core import (
    BasicGame, CovariateBin, DecisionRule, EntryGameTheta, InfoStructure, build_entry_game,
    deviation_gain, dump_json, expand_with_public_signal, load_json, profile_labels, standard_info,
)

from oracles import random_private_game


def point_grid(points):
    """Grid with a single joint state (one point per player)."""
    pts = tuple(np.array([p]) for p in points)
    return DiscreteGrid(pts, np.array([points], dtype=float), np.array([1.0]))


def two_point_grid(p1, p2):
    pts = (np.array(sorted(p1)), np.array(sorted(p2)))
    states = np.array([[a, b] for a in pts[0] for b in pts[1]])
    return DiscreteGrid(pts, states, np.full(4, 0.25))


class TestEntryGame:
    def test_payoffs_by_substitution(self):
        theta = EntryGameTheta(np.zeros((2, 1)), [-1.0, -1.0])
        g = build_entry_game(theta, CovariateBin([1.0]), point_grid([0.5, -0.2]))
        a11 = g.profile_index((1, 1))
        a10 = g.profile_index((1, 0))
        assert g.payoff[0, a11, 0] == pytest.approx(-0.5)
        assert g.payoff[0, a10, 0] == pytest.approx(0.5)
        assert g.payoff[1, a11, 0] == pytest.approx(-1.2)

    def test_staying_out_pays_zero(self):
        rng = np.random.default_rng(0)
        theta = EntryGameTheta(rng.normal(size=(2, 2)), rng.normal(size=2), 0.3)
        g = build_entry_game(theta, [1.0, 0.0], make_grid(4, 0.3))
        assert np.all(g.payoff[:, 0, :] == 0.0)
        assert np.all(g.payoff[0, g.profile_index((0, 1)), :] == 0.0)
        assert np.all(g.payoff[1, g.profile_index((1, 0)), :] == 0.0)

    def test_dimension_mismatch(self):
        theta = EntryGameTheta(np.zeros((2, 2)), [-1.0, -1.0])
        with pytest.raises(ValueError):
            build_entry_game(theta, [1.0, 0.0, 1.0], make_grid(2))

    def test_payoffs_affine_in_coefficients(self):
        # with the shock at zero, doubling (beta, kappa) doubles every payoff
        theta = EntryGameTheta([[0.3], [-0.2]], [-0.7, -1.1])
        twice = EntryGameTheta([[0.6], [-0.4]], [-1.4, -2.2])
        grid = point_grid([0.0, 0.0])
        g1 = build_entry_game(theta, [1.0], grid)
        g2 = build_entry_game(twice, [1.0], grid)
        np.testing.assert_allclose(g2.payoff, 2 * g1.payoff)

    def test_profile_order(self):
        g = build_entry_game(EntryGameTheta(np.zeros((2, 1)), [0, 0]), [1.0], make_grid(2))
        assert profile_labels(g) == ["00", "01", "10", "11"]

    def test_theta_vector_roundtrip(self):
        theta = EntryGameTheta([[1.0, 2.0], [3.0, 4.0]], [-1.0, -2.0], 0.25)
        back = EntryGameTheta.from_vector(theta.to_vector(), 2)
        np.testing.assert_array_equal(back.beta, theta.beta)
        assert back.rho == 0.25
        assert EntryGameTheta.names(["c", "d"]) == [
            "beta1_c", "beta1_d", "beta2_c", "beta2_d", "kappa1", "kappa2", "rho"]

    def test_rho_range(self):
        with pytest.raises(ValueError):
            EntryGameTheta(np.zeros((2, 1)), [0, 0], 1.0)


class TestDeviationGain:
    def setup_method(self):
        theta = EntryGameTheta(np.zeros((2, 1)), [-1.0, -1.0])
        self.g = build_entry_game(theta, [1.0], two_point_grid([0.3, -0.4], [0.1, 0.2]))
        # state with eps_1 = 0.3 and eps_2 = 0.1
        self.s = int(np.flatnonzero((self.g.states[:, 0] == 0.3) & (self.g.states[:, 1] == 0.1))[0])

    def test_entering_against_an_entrant(self):
        assert deviation_gain(self.g, 0, (0, 1), 1, self.s) == pytest.approx(-0.7)

    def test_exiting_a_monopoly(self):
        assert deviation_gain(self.g, 0, (1, 0), 0, self.s) == pytest.approx(-0.3)

    def test_identity_deviation_is_zero(self):
        for i in range(2):
            for a, prof in enumerate(self.g.profiles):
                assert np.all(self.g.gains[i][a, prof[i], :] == 0.0)


class TestBasicGameValidation:
    def test_prior_must_sum_to_one(self):
        with pytest.raises(ValueError):
            BasicGame(((0, 1),), [[0.0], [1.0]], [0.5, 0.6], np.zeros((1, 2, 2)))

    def test_payoff_shape(self):
        with pytest.raises(ValueError):
            BasicGame(((0, 1),), [[0.0]], [1.0], np.zeros((1, 3, 1)))

    def test_private_values_audit(self):
        states = [[0.0, 0.0], [0.0, 1.0]]
        payoff = np.zeros((2, 4, 2))
        payoff[0, 3, 1] = 1.0   # player 1's payoff moves with player 2's shock
        with pytest.raises(ValueError):
            BasicGame(((0, 1), (0, 1)), states, [0.5, 0.5], payoff)
        g = BasicGame(((0, 1), (0, 1)), states, [0.5, 0.5], payoff, private_values=False)
        assert not g.has_private_values()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_private_games_pass_audit(self, seed):
        g = random_private_game(np.random.default_rng(seed), (3, 2))
        assert g.has_private_values()


class TestStandardInfo:
    def setup_method(self):
        self.g = build_entry_game(EntryGameTheta(np.zeros((2, 1)), [-1, -1]), [1.0], make_grid(2))

    def test_null(self):
        info = standard_info("null", self.g)
        assert all(len(s) == 1 for s in info.signals)
        assert np.all(info.prob == 1.0)

    def test_private(self):
        info = standard_info("private", self.g)
        assert [len(s) for s in info.signals] == [2, 2]
        np.testing.assert_array_equal(info.signal, self.g.coord_index)

    def test_one_player(self):
        g = build_entry_game(EntryGameTheta(np.zeros((2, 1)), [-1, -1]), [1.0], make_grid(3))
        info = standard_info("1p", g)
        assert [len(s) for s in info.signals] == [3, 1]

    def test_unknown(self):
        with pytest.raises(ValueError):
            standard_info("psychic", self.g)

    def test_info_validation(self):
        with pytest.raises(ValueError):
            InfoStructure(((0,),), [0, 0], [[0], [0]], [0.5, 0.4], 1)


class TestSerialization:
    def test_json_roundtrip(self):
        g = random_private_game(np.random.default_rng(3))
        info = standard_info("private", g)
        g2, info2 = load_json(dump_json(g, info))
        np.testing.assert_array_equal(g2.payoff, g.payoff)
        np.testing.assert_array_equal(g2.prior, g.prior)
        np.testing.assert_array_equal(info2.signal, info.signal)
        assert info2.name == "private"


class TestPublicExpansion:
    def test_obedience_failure_carries_over(self):
        # two states, one player: always entering is not obedient when the shock is very negative
        states = np.array([[-2.0], [1.0]])
        payoff = np.zeros((1, 2, 2))
        payoff[0, 1] = states[:, 0]
        g = BasicGame(((0, 1),), states, [0.5, 0.5], payoff)
        info = standard_info("complete", g)
        sigma = DecisionRule([0, 1], [[0], [1]], [[0.0, 1.0], [0.0, 1.0]])
        assert not check_bse(g, info, sigma)
        expanded, delta = expand_with_public_signal(g, info, sigma)
        assert not check_ree(g, expanded, delta)

    def test_singleton_actions_vacuous(self):
        g = BasicGame(((0,), (0,)), [[0.0, 0.0], [1.0, 1.0]], [0.5, 0.5], np.zeros((2, 1, 2)))
        info = standard_info("null", g)
        sigma = DecisionRule([0, 1], [[0, 0], [0, 0]], [[1.0], [1.0]])
        expanded, delta = expand_with_public_signal(g, info, sigma)
        assert delta.is_outcome_function()
        assert check_ree(g, expanded, delta)
