# %%
import pytest
import numpy as np
from cooperationenforcer.calculations.game import (
    Action,
    Outcome,
    PublicGoodsGame,
    MemoryOneStrategy,
    StrategyProfile,
    stage_payoff,
    outcome_payoffs,
    outcome_payoff_matrix,
    classic_strategy,
    opponent_cooperators,
    sample_strategy,
)


@pytest.fixture
def game() -> PublicGoodsGame:
    return PublicGoodsGame(n=3, r=2)


class TestPublicGoodsGame:
    """
    Test suite for the `PublicGoodsGame` class.
    """

    def test_mpcr(self, game):
        assert game.mpcr == pytest.approx(2 / 3)
        assert game.endowment == 1.0

    @pytest.mark.parametrize("n, r", [(1, 0.5), (3, 1.0), (3, 3.0), (3, 3.5), (4, 0.8)])
    def test_invalid_parameters(self, n, r):
        with pytest.raises(ValueError):
            PublicGoodsGame(n=n, r=r)

    def test_payoff_table(self, game):
        np.testing.assert_allclose(
            game.payoff_table(),
            [[-1 / 3, 1 / 3, 1.0], [0.0, 2 / 3, 4 / 3]]
        )


class TestStagePayoff:
    """
    Test suite for the `stage_payoff` function.
    """

    def test_mutual_cooperation(self, game):
        assert stage_payoff(game, Action.COOPERATE, 2) == pytest.approx(1.0)

    def test_defector_among_defectors(self, game):
        assert stage_payoff(game, Action.DEFECT, 0) == 0.0

    def test_defector_among_cooperators(self, game):
        assert stage_payoff(game, Action.DEFECT, 2) == pytest.approx(4 / 3)

    def test_k_out_of_range(self, game):
        with pytest.raises(ValueError, match="k must be"):
            stage_payoff(game, Action.COOPERATE, 3)

    def test_closed_forms_on_grid(self):
        for n in range(2, 7):
            for r in np.arange(1.1, n, 0.1):
                g = PublicGoodsGame(n=n, r=float(r))
                for k in range(n):
                    assert stage_payoff(g, Action.COOPERATE, k) == g.r * (k + 1) / n - 1
                    assert stage_payoff(g, Action.DEFECT, k) == g.r * k / n

    def test_temptation_and_boundary(self):
        for n in range(2, 7):
            for r in np.arange(1.1, n, 0.1):
                g = PublicGoodsGame(n=n, r=float(r))
                for k in range(n - 1):
                    temptation = stage_payoff(g, Action.DEFECT, k + 1) - stage_payoff(g, Action.COOPERATE, k)
                    assert temptation == pytest.approx(1 - g.r / n)
                    assert temptation > 0
                if abs(g.r / n - 0.5) < 1e-9:
                    continue
                cooperation = stage_payoff(g, Action.COOPERATE, n - 1)
                assert (cooperation > stage_payoff(g, Action.DEFECT, n - 2)) == (g.r / n > 0.5)


class TestOutcome:
    """
    Test suite for the `Outcome` class.
    """

    def test_label_roundtrip(self):
        o = Outcome.from_label('dcc')
        assert o.bits == 0b110
        assert o.label() == 'dcc'
        assert o.cooperators == 2
        assert o.action(0) is Action.DEFECT

    def test_mutual_outcomes(self):
        assert Outcome.mutual_cooperation(3).label() == 'ccc'
        assert Outcome.mutual_defection(3).label() == 'ddd'
        assert len(Outcome.all(4)) == 16

    def test_invalid_bits(self):
        with pytest.raises(ValueError):
            Outcome(bits=8, n=3)


class TestOpponentCooperators:
    """
    Test suite for the `opponent_cooperators` function.
    """

    @pytest.mark.parametrize("label, i, expected", [
        ('ccdc', 0, 2),
        ('ddd', 1, 0),
        ('dcc', 0, 2),
        ('dcc', 1, 1),
    ])
    def test_counts(self, label, i, expected):
        assert opponent_cooperators(Outcome.from_label(label), i) == expected

    def test_index_out_of_range(self):
        with pytest.raises(ValueError, match="player index"):
            opponent_cooperators(Outcome.from_label('ccc'), 3)


class TestOutcomePayoffs:
    """
    Test suite for the `outcome_payoffs` function.
    """

    @pytest.mark.parametrize("label, expected", [
        ('ccc', (1, 1, 1)),
        ('ddd', (0, 0, 0)),
        ('dcc', (4 / 3, 1 / 3, 1 / 3)),
    ])
    def test_examples(self, game, label, expected):
        np.testing.assert_allclose(outcome_payoffs(game, Outcome.from_label(label)), expected, atol=1e-15)

    def test_dimension_mismatch(self, game):
        with pytest.raises(ValueError, match="players"):
            outcome_payoffs(game, Outcome.from_label('cc'))

    def test_pot_accounting(self):
        for n in (2, 3, 4, 5):
            g = PublicGoodsGame(n=n, r=1.7)
            for o in Outcome.all(n):
                total = outcome_payoffs(g, o).sum()
                assert total == pytest.approx(g.r * o.cooperators - o.cooperators)

    def test_matrix_matches_rows(self):
        g = PublicGoodsGame(n=4, r=2.5)
        matrix = outcome_payoff_matrix(g)
        for o in Outcome.all(4):
            np.testing.assert_allclose(matrix[o.bits], outcome_payoffs(g, o))


class TestClassicStrategy:
    """
    Test suite for the `classic_strategy` function.
    """

    def test_wsls(self):
        p = classic_strategy('WSLS', 3)
        assert p.p_c == (0.0, 0.0, 1.0)
        assert p.p_d == (0.0, 0.0, 1.0)
        assert p.first_move == 1.0

    def test_alld(self):
        p = classic_strategy('ALLD', 4)
        assert p.as_vector().sum() == 0.0

    def test_repeat(self):
        p = classic_strategy('Repeat', 3)
        assert p.p_c == (1.0, 1.0, 1.0)
        assert p.p_d == (0.0, 0.0, 0.0)

    def test_grim_trigger(self):
        p = classic_strategy('GrimTrigger', 4)
        assert p.p_c == (0.0, 0.0, 0.0, 1.0)
        assert p.p_d == (0.0, 0.0, 0.0, 0.0)
        assert p.first_move == 1.0

    def test_wsls_reset(self):
        p = classic_strategy('WSLSReset', 3)
        assert p.p_c == (0.0, 0.0, 1.0)
        assert p.p_d == (1.0, 0.0, 1.0)

    def test_case_insensitive(self):
        assert classic_strategy('wsls', 3) == classic_strategy('WSLS', 3)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="Unknown strategy"):
            classic_strategy('TFT', 3)

    def test_n_too_small(self):
        with pytest.raises(ValueError):
            classic_strategy('ALLC', 1)


class TestMemoryOneStrategy:
    """
    Test suite for the `MemoryOneStrategy` class.
    """

    def test_vector_roundtrip(self):
        p = MemoryOneStrategy.from_vector([0.1, 0.2, 0.3, 0.4, 0.5, 0.6], first_move=0.7)
        assert p.n == 3
        np.testing.assert_allclose(p.as_vector(), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        assert p.is_fully_mixed()

    def test_invalid_probability(self):
        with pytest.raises(ValueError, match="probabilities"):
            MemoryOneStrategy(n=2, p_c=[0.5, 1.5], p_d=[0.0, 0.0])

    def test_invalid_length(self):
        with pytest.raises(ValueError, match="length"):
            MemoryOneStrategy(n=3, p_c=[0.5, 0.5], p_d=[0.0, 0.0, 0.0])

    def test_perturbed(self):
        p = classic_strategy('ALLD', 2).perturbed(0.01)
        np.testing.assert_allclose(p.as_vector(), 0.01)
        assert p.first_move == pytest.approx(0.01)


class TestSampleStrategy:
    """
    Test suite for the `sample_strategy` function.
    """

    def test_deterministic(self):
        a = sample_strategy(3, np.random.default_rng(5))
        b = sample_strategy(3, np.random.default_rng(5))
        assert a == b
        assert a.first_move == 0.5


class TestStrategyProfile:
    """
    Test suite for the `StrategyProfile` class.
    """

    def test_mismatched_strategy(self):
        with pytest.raises(ValueError, match="seat"):
            StrategyProfile.from_strategies(classic_strategy('ALLC', 3), classic_strategy('ALLC', 3))

    def test_initial_distribution(self):
        profile = StrategyProfile.from_strategies(
            classic_strategy('ALLC', 2),
            MemoryOneStrategy(n=2, p_c=[0, 0], p_d=[0, 0], first_move=0.25),
        )
        # player 0 always cooperates: outcomes 'cd' (bits 1) and 'cc' (bits 3)
        np.testing.assert_allclose(profile.initial_distribution(), [0.0, 0.75, 0.0, 0.25])
