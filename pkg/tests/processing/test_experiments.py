# %%
import pytest
import numpy as np
import pandas as pd
from pandas.testing import assert_frame_equal
from cooperationenforcer.calculations.game import PublicGoodsGame, classic_strategy
from cooperationenforcer.processing.experiments import (
    payoff_cloud,
    summarize_payoff_cloud,
    region_map,
    check,
    learn,
    collusion,
)


@pytest.fixture
def game() -> PublicGoodsGame:
    return PublicGoodsGame(n=3, r=2)


class TestPayoffCloud:
    """
    Test suite for the `payoff_cloud` function.
    """

    @pytest.fixture
    def cloud(self, game) -> tuple[pd.DataFrame, dict]:
        return payoff_cloud(game, classic_strategy('WSLS', 3), samples=50, seed=0, T=100_000)

    def test_bound_holds(self, cloud):
        df, summary = cloud
        assert summary['bound_holds']
        assert summary['violations'] == 0
        assert summary['samples'] == 52
        assert summary['max_opponent_payoff'] <= 1.0 + 1e-6

    def test_reference_samples(self, cloud):
        df, _ = cloud
        copies = df[df['sample'] == -2].iloc[0]
        np.testing.assert_allclose([copies['payoff_1'], copies['payoff_2']], [1.0, 1.0])
        defectors = df[df['sample'] == -1].iloc[0]
        assert defectors['payoff_1'] <= 1.0

    def test_columns(self, cloud):
        df, _ = cloud
        assert {'sample', 'payoff_0', 'payoff_1', 'payoff_2', 'diagnostic', 'p1_c0', 'p2_d2', 'p2_first'} <= set(df.columns)

    def test_independent_of_workers(self, game):
        focal = classic_strategy('WSLS', 3)
        a, _ = payoff_cloud(game, focal, samples=1_500, seed=3, T=1_000, reference_samples=False)
        b, _ = payoff_cloud(game, focal, samples=1_500, seed=3, T=1_000, reference_samples=False, workers=2)
        assert_frame_equal(a, b)

    @pytest.mark.slow
    def test_bound_holds_full_sample(self, game):
        """
        Tests the bound over a hundred thousand sampled opponent profiles.
        """
        _, summary = payoff_cloud(game, classic_strategy('WSLS', 3), samples=100_000, seed=0, workers=4)
        assert summary['samples'] == 100_002
        assert summary['violations'] == 0
        assert summary['bound_holds']

    def test_not_enforcing(self, game):
        with pytest.raises(ValueError, match="not cooperation enforcing"):
            payoff_cloud(game, classic_strategy('Repeat', 3), samples=10)


class TestSummarizePayoffCloud:
    """
    Test suite for the `summarize_payoff_cloud` function.
    """

    def test_violation_counted(self, game):
        df = pd.DataFrame({
            'payoff_0': [0.0, 0.0],
            'payoff_1': [1.2, 0.9],
            'payoff_2': [0.5, 0.9],
            'diagnostic': [0.0, np.nan],
        })
        summary = summarize_payoff_cloud(df, game, classic_strategy('WSLS', 3))
        assert summary['violations'] == 1
        assert not summary['bound_holds']
        assert summary['max_opponent_payoff'] == pytest.approx(1.2)

    def test_missing_columns(self, game):
        with pytest.raises(ValueError, match="missing required columns"):
            summarize_payoff_cloud(pd.DataFrame({'payoff_1': [0.0]}), game, classic_strategy('WSLS', 3))


class TestRegionMap:
    """
    Test suite for the `region_map` function.
    """

    def test_grid(self):
        df = region_map(n_min=2, n_max=4, r_step=0.5)
        assert list(df.columns) == ['n', 'r', 'regime', 'min_profitable_alliance', 'max_profitable_alliance']
        assert df[df['n'] == 3]['r'].tolist() == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
        row = df[(df['n'] == 4) & (df['r'] == 1.5)].iloc[0]
        assert row['regime'] == 'enforcing-impossible'
        assert row['min_profitable_alliance'] == 2

    def test_missing_alliances(self):
        df = region_map(n_min=3, n_max=3, r_step=1.0)
        assert df['max_profitable_alliance'].isna().tolist() == [False, True, True, True]

    def test_invalid(self):
        with pytest.raises(ValueError):
            region_map(n_min=1, n_max=3)


class TestCheck:
    """
    Test suite for the `check` function.
    """

    def test_wsls(self, game):
        result = check(game, classic_strategy('WSLS', 3))
        assert result['overall']
        assert result['strategy']['name'] == 'WSLS'
        assert result['necessary_conditions'] == {'p_c[n-2] < 1': True, 'r/n > 1/2': True}

    def test_small_r(self):
        result = check(PublicGoodsGame(n=3, r=1.4), classic_strategy('WSLS', 3))
        assert not result['overall']
        assert not result['applicable']


class TestLearn:
    """
    Test suite for the `learn` function.
    """

    def test_summary(self, game):
        trajectories, summary = learn('B', game, T=300, seeds=range(2))
        assert len(trajectories) == 2
        assert [run['seed'] for run in summary['runs']] == [0, 1]
        assert summary['target'] == pytest.approx(1.0)
        assert 0 <= summary['converged'] <= 2


class TestCollusion:
    """
    Test suite for the `collusion` function.
    """

    @pytest.mark.parametrize("n, r, resistant", [(3, 2.0, True), (4, 1.8, False), (2, 1.5, True), (4, 2.0, True)])
    def test_resistance(self, n, r, resistant):
        assert collusion(PublicGoodsGame(n=n, r=r))['resistant'] == resistant
