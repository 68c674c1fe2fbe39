# %%
import logging
import pytest
import numpy as np
import scipy.linalg
from cooperationenforcer.calculations.game import (
    CapacityError,
    ErgodicityError,
    MemoryOneStrategy,
    Outcome,
    PublicGoodsGame,
    StrategyProfile,
    classic_strategy,
)
from cooperationenforcer.calculations.markov import (
    LimitDistribution,
    MarginalDistribution,
    lift_strategy,
    build_transition_matrix,
    is_ergodic,
    stationary_exact,
    limit_cesaro,
    limit_distribution,
    simulate_empirical,
    expected_payoffs,
    marginalize,
    akin_residual,
    marginal_akin_residual,
    payoff_gap,
    payoff_gap_coefficients,
)
from cooperationenforcer.utility.statistics import l1_distance


def _mixed_profile(n: int, rng: np.random.Generator, low: float = 0.05, high: float = 0.95) -> StrategyProfile:
    return StrategyProfile(tuple(
        MemoryOneStrategy.from_vector(rng.uniform(low, high, 2 * n), first_move=0.5)
        for _ in range(n)
    ))


def _uniform_profile(name: str, n: int) -> StrategyProfile:
    return StrategyProfile(tuple(classic_strategy(name, n) for _ in range(n)))


def _delta(label: str) -> LimitDistribution:
    o = Outcome.from_label(label)
    return LimitDistribution.point_mass(o.n, o.bits)


class TestLiftStrategy:
    """
    Test suite for the `lift_strategy` function.
    """

    def test_alld(self):
        np.testing.assert_array_equal(lift_strategy(classic_strategy('ALLD', 2), 0, 2), np.zeros(4))

    def test_wsls(self):
        lifted = lift_strategy(classic_strategy('WSLS', 3), 0, 3)
        assert lifted[Outcome.from_label('ccc').bits] == 1.0
        assert lifted[Outcome.from_label('cdd').bits] == 0.0

    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_repeat_is_own_action(self, i):
        """
        Tests that Repeat cooperates exactly after outcomes where its own seat cooperated.
        """
        lifted = lift_strategy(classic_strategy('Repeat', 3), i, 3)
        expected = [float(o.action(i)) for o in Outcome.all(3)]
        np.testing.assert_array_equal(lifted, expected)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="players"):
            lift_strategy(classic_strategy('ALLC', 3), 0, 2)


class TestBuildTransitionMatrix:
    """
    Test suite for the `build_transition_matrix` function.
    """

    def test_alld_absorbs_in_mutual_defection(self):
        """
        Tests that every row of an all-ALLD profile moves to mutual defection.
        """
        P = build_transition_matrix(_uniform_profile('ALLD', 2))
        np.testing.assert_array_equal(P.entries[:, 0], np.ones(4))

    def test_repeat_is_identity(self):
        P = build_transition_matrix(_uniform_profile('Repeat', 2))
        np.testing.assert_array_equal(P.entries, np.eye(4))

    def test_wsls_mutual_cooperation_absorbing(self):
        P = build_transition_matrix(_uniform_profile('WSLS', 3))
        assert P.entries[7, 7] == 1.0

    def test_row_stochastic(self):
        rng = np.random.default_rng(0)
        for n in (2, 3, 4, 5):
            P = build_transition_matrix(_mixed_profile(n, rng, 0.0, 1.0))
            np.testing.assert_allclose(P.entries.sum(axis=1), 1.0, atol=1e-12)

    def test_product_of_independent_choices(self):
        """
        Tests that each entry is the product of the seats' independent choices.
        """
        rng = np.random.default_rng(1)
        profile = _mixed_profile(3, rng)
        P = build_transition_matrix(profile)
        o, o_next = Outcome.from_label('cdc'), Outcome.from_label('dcc')
        q = [lift_strategy(p, i, 3)[o.bits] for i, p in enumerate(profile.strategies)]
        expected = (1 - q[0]) * q[1] * q[2]
        assert P.entries[o.bits, o_next.bits] == pytest.approx(expected)

    def test_capacity(self):
        """
        Tests that dense matrices beyond the player limit are refused.
        """
        with pytest.raises(CapacityError):
            build_transition_matrix(_uniform_profile('ALLC', 3), max_players=2)


class TestStationaryExact:
    """
    Test suite for the `stationary_exact` function.
    """

    def test_uniform(self):
        half = MemoryOneStrategy.from_vector([0.5] * 6)
        v = stationary_exact(build_transition_matrix(StrategyProfile((half,) * 3)))
        np.testing.assert_allclose(v.v, np.full(8, 1 / 8))
        assert v.kind == 'stationary-exact'

    def test_residual(self):
        """
        Tests that the direct solve leaves a residual below 1e-10.
        """
        rng = np.random.default_rng(2)
        P = build_transition_matrix(_mixed_profile(3, rng))
        v = stationary_exact(P)
        assert np.max(np.abs(v.v @ P.entries - v.v)) < 1e-10

    def test_perturbed_alld(self):
        """
        Tests that a perturbed all-ALLD profile concentrates on mutual defection.
        """
        profile = _uniform_profile('ALLD', 2).perturbed(1e-6)
        v = stationary_exact(build_transition_matrix(profile))
        assert v.mutual_defection >= 1 - 1e-4

    def test_non_ergodic(self):
        P = build_transition_matrix(_uniform_profile('ALLD', 3))
        assert not is_ergodic(P)
        with pytest.raises(ErgodicityError, match="limit_cesaro"):
            stationary_exact(P)

    def test_power_iteration_fallback(self, monkeypatch, caplog):
        """
        Tests that a failed direct solve falls back to power iteration with a logged warning.
        """
        P = build_transition_matrix(_mixed_profile(3, np.random.default_rng(2)))
        direct = stationary_exact(P)

        def singular(*args, **kwargs):
            raise scipy.linalg.LinAlgError("singular matrix")

        monkeypatch.setattr(scipy.linalg, 'solve', singular)
        with caplog.at_level(logging.WARNING):
            fallback = stationary_exact(P)
        assert 'falling back to power iteration' in caplog.text
        assert np.max(np.abs(fallback.v @ P.entries - fallback.v)) < 1e-10
        np.testing.assert_allclose(fallback.v, direct.v, atol=1e-9)

    def test_power_iteration_not_converged(self, monkeypatch):
        """
        Tests that an unconverged power iteration raises instead of returning a wrong distribution.
        """
        P = build_transition_matrix(_mixed_profile(3, np.random.default_rng(2)))

        def singular(*args, **kwargs):
            raise scipy.linalg.LinAlgError("singular matrix")

        monkeypatch.setattr(scipy.linalg, 'solve', singular)
        with pytest.raises(ValueError, match="power iteration stopped after 1 steps"):
            stationary_exact(P, max_steps=1)


class TestLimitCesaro:
    """
    Test suite for the `limit_cesaro` function.
    """

    def test_repeat_keeps_initial_outcome(self):
        P = build_transition_matrix(_uniform_profile('Repeat', 3))
        initial = _delta('cdc').v
        v = limit_cesaro(P, initial, T=1000)
        np.testing.assert_allclose(v.v, initial)

    def test_wsls_mutual_cooperation(self):
        P = build_transition_matrix(_uniform_profile('WSLS', 3))
        v = limit_cesaro(P, _delta('ccc').v, T=1000)
        assert v.mutual_cooperation == pytest.approx(1.0)
        assert v.diagnostic == pytest.approx(0.0)

    def test_grim_trigger_collapses(self):
        """
        Tests that Grim Trigger players never recover from a single defection.
        """
        P = build_transition_matrix(_uniform_profile('GrimTrigger', 3))
        v = limit_cesaro(P, _delta('dcc').v, T=200_000)
        assert v.mutual_defection == pytest.approx(1.0)

    @pytest.mark.parametrize("T", [1, 2, 37, 64, 101])
    def test_matches_direct_sum(self, T):
        """
        Tests the binary powering against an explicit sum of matrix powers.
        """
        rng = np.random.default_rng(T)
        P = build_transition_matrix(_mixed_profile(3, rng, 0.0, 1.0))
        initial = rng.dirichlet(np.ones(8))
        total, current = np.zeros(8), initial
        for _ in range(T):
            current = current @ P.entries
            total += current
        np.testing.assert_allclose(limit_cesaro(P, initial, T).v, total / T, atol=1e-12)

    def test_periodic_chain(self):
        """
        Tests that a periodic chain is averaged over its cycle.
        """
        flip = MemoryOneStrategy(n=2, p_c=[0, 0], p_d=[1, 1], first_move=1.0)
        profile = StrategyProfile((flip, flip))
        P = build_transition_matrix(profile)
        assert not is_ergodic(P)
        T = 1001
        v = limit_cesaro(P, _delta('cc').v, T=T)
        assert v.mutual_cooperation == pytest.approx(500 / 1001)
        assert v.mutual_defection == pytest.approx(501 / 1001)
        assert abs(akin_residual(flip, 0, v)) <= 1 / T + 1e-12

    def test_invalid_initial(self):
        P = build_transition_matrix(_uniform_profile('ALLC', 2))
        with pytest.raises(ValueError, match="initial"):
            limit_cesaro(P, np.array([0.5, 0.5, 0.5, 0.0]), T=10)


class TestLimitDistribution:
    """
    Test suite for the `limit_distribution` function.
    """

    def test_methods_agree_for_mixed_profile(self):
        """
        Tests that the exact and Cesaro methods agree for an ergodic chain.
        """
        rng = np.random.default_rng(3)
        profile = _mixed_profile(3, rng)
        exact = limit_distribution(profile, method='stationary')
        cesaro = limit_distribution(profile, method='cesaro', T=100_000)
        perturbed = limit_distribution(profile, method='perturbed')
        assert l1_distance(exact.v, cesaro.v) < 1e-4
        assert l1_distance(exact.v, perturbed.v) < 1e-4

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            limit_distribution(_uniform_profile('ALLC', 2), method='exact')


class TestSimulateEmpirical:
    """
    Test suite for the `simulate_empirical` function.
    """

    def test_allc(self):
        v = simulate_empirical(_uniform_profile('ALLC', 3), T=1000, seed=0)
        assert v.mutual_cooperation == 1.0
        assert v.kind == 'empirical'

    def test_alld(self):
        v = simulate_empirical(_uniform_profile('ALLD', 3), T=1000, seed=0)
        assert v.mutual_defection == 1.0

    def test_deterministic(self):
        profile = _mixed_profile(3, np.random.default_rng(4))
        a = simulate_empirical(profile, T=10_000, seed=11)
        b = simulate_empirical(profile, T=10_000, seed=11)
        np.testing.assert_array_equal(a.v, b.v)

    def test_agrees_with_stationary(self):
        """
        Tests that the empirical frequencies approach the stationary distribution.
        """
        rng = np.random.default_rng(5)
        for seed in range(20):
            profile = _mixed_profile(3, rng)
            exact = limit_distribution(profile, method='stationary')
            empirical = simulate_empirical(profile, T=1_000_000, seed=seed)
            assert l1_distance(exact.v, empirical.v) < 0.02


class TestExpectedPayoffs:
    """
    Test suite for the `expected_payoffs` function.
    """

    @pytest.mark.parametrize("label, expected", [
        ('ccc', (1, 1, 1)),
        ('ddd', (0, 0, 0)),
        ('dcc', (4 / 3, 1 / 3, 1 / 3)),
    ])
    def test_point_masses(self, label, expected):
        np.testing.assert_allclose(
            expected_payoffs(PublicGoodsGame(n=3, r=2), _delta(label)), expected, atol=1e-15
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="players"):
            expected_payoffs(PublicGoodsGame(n=3, r=2), _delta('cc'))


class TestMarginalize:
    """
    Test suite for the `marginalize` function.
    """

    def test_mutual_cooperation(self):
        u = marginalize(_delta('cccc'), 0, 1)
        assert u.get('cc', 2) == 1.0
        assert u.u.sum() == 1.0

    def test_mutual_defection(self):
        assert marginalize(_delta('dddd'), 2, 3).get('dd', 0) == 1.0

    def test_single_outcome(self):
        assert marginalize(_delta('dcc'), 0, 1).get('dc', 1) == 1.0

    def test_same_player(self):
        with pytest.raises(ValueError, match="distinct"):
            marginalize(_delta('ccc'), 1, 1)

    def test_mass_and_identities(self):
        """
        Tests that the marginal sums to one and keeps the mutual outcomes of the joint distribution.
        """
        rng = np.random.default_rng(6)
        for n in (2, 3, 4, 5):
            v = LimitDistribution(n=n, v=rng.dirichlet(np.ones(2 ** n)), kind='cesaro')
            u = marginalize(v, 0, n - 1)
            assert u.u.sum() == pytest.approx(1.0)
            assert u.get('cc', n - 2) == pytest.approx(v.mutual_cooperation)
            assert u.get('dd', 0) == pytest.approx(v.mutual_defection)


class TestAkinResidual:
    """
    Test suite for the `akin_residual` function.
    """

    def test_repeat(self):
        v = LimitDistribution(n=3, v=np.random.default_rng(7).dirichlet(np.ones(8)), kind='cesaro')
        assert akin_residual(classic_strategy('Repeat', 3), 1, v) == 0.0

    def test_alld_at_mutual_defection(self):
        assert akin_residual(classic_strategy('ALLD', 3), 0, _delta('ddd')) == 0.0

    def test_vanishes_for_stationary_distributions(self):
        """
        Tests that Akin's identity holds for stationary distributions of random profiles.
        """
        rng = np.random.default_rng(8)
        for sample in range(1000):
            n = (2, 3, 4)[sample % 3]
            profile = _mixed_profile(n, rng)
            v = limit_distribution(profile, method='stationary')
            for i, p in enumerate(profile.strategies):
                assert abs(akin_residual(p, i, v)) < 1e-8


class TestPayoffGap:
    """
    Test suite for the `payoff_gap` function.
    """

    @staticmethod
    def _cell(pair: str, k: int) -> MarginalDistribution:
        u = np.zeros((4, 2))
        u[('cc', 'cd', 'dc', 'dd').index(pair), k] = 1.0
        return MarginalDistribution(n=3, i=0, j=1, u=u)

    @pytest.mark.parametrize("pair, k, expected", [
        ('cc', 1, 0.0),
        ('dc', 1, -2 / 3),
        ('dd', 0, -1.0),
    ])
    def test_cells(self, pair, k, expected):
        assert payoff_gap(PublicGoodsGame(n=3, r=2), self._cell(pair, k)) == pytest.approx(expected)

    def test_coefficient_shape(self):
        assert payoff_gap_coefficients(PublicGoodsGame(n=5, r=3)).shape == (4, 4)

    def test_matches_inner_product(self):
        """
        Tests that the grouped coefficients reproduce the payoff gap of random distributions.
        """
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 6))
            game = PublicGoodsGame(n=n, r=float(rng.uniform(1.01, n - 0.01)))
            v = LimitDistribution(n=n, v=rng.dirichlet(np.ones(2 ** n)), kind='cesaro')
            i, j = rng.choice(n, size=2, replace=False)
            direct = expected_payoffs(game, v)[j] - game.mutual_cooperation_payoff
            assert payoff_gap(game, marginalize(v, int(i), int(j))) == pytest.approx(direct, abs=1e-10)


class TestMarginalAkinResidual:
    """
    Test suite for the `marginal_akin_residual` function.
    """

    def test_vanishes_for_stationary_distributions(self):
        """
        Tests that the identity holds for every seat of random profiles.
        """
        rng = np.random.default_rng(10)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            profile = _mixed_profile(n, rng)
            v = limit_distribution(profile, method='stationary')
            i, j = rng.choice(n, size=2, replace=False)
            u = marginalize(v, int(i), int(j))
            assert abs(marginal_akin_residual(profile[int(i)], u)) < 1e-8

    def test_nonzero_for_foreign_distribution(self):
        """
        Tests that the residual detects a distribution the strategy cannot sustain.
        """
        # the strategy at seat 0 always cooperates, but the distribution only holds mutual defection
        u = marginalize(_delta('ddd'), 0, 1)
        assert marginal_akin_residual(classic_strategy('ALLC', 3), u) == pytest.approx(1.0)
