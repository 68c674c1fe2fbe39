# %%
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from cooperationenforcer.calculations.enforcement import (
    check_enforcing,
    collusion_scan,
    necessary_conditions,
    region_of,
)
from cooperationenforcer.calculations.game import (
    MemoryOneStrategy,
    PublicGoodsGame,
    StrategyProfile,
    classic_strategy,
    sample_strategy,
)
from cooperationenforcer.calculations.learning import (
    LearnerConfig,
    Trajectory,
    run_batch,
)
from cooperationenforcer.calculations.markov import (
    expected_payoffs,
    limit_distribution,
)
from cooperationenforcer.data.constants import (
    cesaro_diagnostic_warning,
    cesaro_horizon,
    convergence_tolerance,
    learning_horizon,
    payoff_bound_tolerance,
    strictness_slack,
)
from cooperationenforcer.utility.tabular import _validate_dataframe_columns

logger = logging.getLogger(__name__)

chunk_size = 1_000


@dataclass(frozen=True)
class PayoffCloudRecord:
    """
    One sample of the payoff cloud: the opponents of the focal strategy at seat 0
    and the expected payoffs of all players.
    """
    sample: int
    opponents: tuple[MemoryOneStrategy, ...]
    payoffs: tuple[float, ...]
    diagnostic: Optional[float]

    def to_row(self) -> dict:
        row = {'sample': self.sample}
        for i, payoff in enumerate(self.payoffs):
            row[f'payoff_{i}'] = payoff
        row['diagnostic'] = np.nan if self.diagnostic is None else self.diagnostic
        for seat, p in enumerate(self.opponents, start=1):
            for k, value in enumerate(p.p_c):
                row[f'p{seat}_c{k}'] = value
            for k, value in enumerate(p.p_d):
                row[f'p{seat}_d{k}'] = value
            row[f'p{seat}_first'] = p.first_move
        return row


def _cloud_record(
    game: PublicGoodsGame,
    focal: MemoryOneStrategy,
    opponents: Sequence[MemoryOneStrategy],
    sample: int,
    method: str,
    T: int,
) -> PayoffCloudRecord:
    profile = StrategyProfile((focal, *opponents))
    v = limit_distribution(profile, method=method, T=T)
    return PayoffCloudRecord(
        sample=sample,
        opponents=tuple(opponents),
        payoffs=tuple(float(x) for x in expected_payoffs(game, v)),
        diagnostic=v.diagnostic,
    )


def _cloud_chunk(args: tuple) -> list[PayoffCloudRecord]:
    game, focal, start, stop, seed_sequence, method, T = args
    rng = np.random.default_rng(seed_sequence)
    records = []
    for sample in range(start, stop):
        opponents = [sample_strategy(game.n, rng) for _ in range(game.n - 1)]
        records.append(_cloud_record(game, focal, opponents, sample, method, T))
    return records


def payoff_cloud(
    game: PublicGoodsGame,
    focal: MemoryOneStrategy,
    samples: int,
    seed: int = 0,
    method: str = 'cesaro',
    T: int = cesaro_horizon,
    workers: int = 1,
    reference_samples: bool = True,
) -> tuple[pd.DataFrame, dict]:
    r"""
    Computes the expected payoffs of a cooperation enforcing strategy at seat 0
    against randomly sampled opponents.

    Opponent strategies are drawn i.i.d. uniform from $[0, 1]^{2n}$ with first move $0.5$.
    Samples are split into chunks of fixed size, each drawn from its own generator
    spawned from `seed`, so that the output does not depend on `workers`.
    With `reference_samples`, two deterministic samples precede the random ones:
    opponents copying the focal strategy (all payoffs $R_{c,n-1}$) and unconditional defectors.

    Parameters
    ----------
    game : PublicGoodsGame
        The game.
    focal : MemoryOneStrategy
        Strategy at seat 0, must pass `check_enforcing`.
    samples : int
        Number of random opponent profiles.
    seed : int
        Root seed.
    method : str
        `cesaro` or `perturbed`, see [`limit_distribution`][cooperationenforcer.calculations.markov.limit_distribution].
    T : int
        Cesaro horizon.
    workers : int
        Size of the process pool.
    reference_samples : bool
        Whether to add the two deterministic samples (with negative sample index).

    Returns
    -------
    tuple[pd.DataFrame, dict]
        The records, one row per sample, and a summary of the payoff bound.

    Raises
    ------
    ValueError
        If the focal strategy is not cooperation enforcing.
    """
    verdict = check_enforcing(game, focal)
    if not verdict.overall:
        raise ValueError(f"focal strategy is not cooperation enforcing, failed constraints: {verdict.failed}")

    records = []
    if reference_samples:
        records.append(_cloud_record(game, focal, [focal] * (game.n - 1), -2, method, T))
        records.append(_cloud_record(game, focal, [classic_strategy('ALLD', game.n)] * (game.n - 1), -1, method, T))

    starts = list(range(0, samples, chunk_size))
    children = np.random.SeedSequence(seed).spawn(len(starts))
    jobs = [
        (game, focal, start, min(start + chunk_size, samples), child, method, T)
        for start, child in zip(starts, children)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_cloud_chunk, jobs))
    else:
        chunks = [_cloud_chunk(job) for job in jobs]
    for chunk in chunks:
        records.extend(chunk)

    df = pd.DataFrame([record.to_row() for record in records])
    return df, summarize_payoff_cloud(df, game, focal)


def summarize_payoff_cloud(
    df: pd.DataFrame,
    game: PublicGoodsGame,
    focal: MemoryOneStrategy
) -> dict:
    """
    Summarises a payoff cloud: the largest opponent payoff, and how many samples
    exceed the mutual cooperation payoff or have an unconverged Cesaro average.

    Raises
    ------
    ValueError
        If payoff or diagnostic columns are missing.
    """
    R = game.mutual_cooperation_payoff
    opponent_columns = [f'payoff_{i}' for i in range(1, game.n)]
    _validate_dataframe_columns(df, opponent_columns + ['diagnostic'])
    max_opponent = float(df[opponent_columns].to_numpy().max())
    violations = int((df[opponent_columns] > R + payoff_bound_tolerance).any(axis=1).sum())
    unconverged = int((df['diagnostic'] > cesaro_diagnostic_warning).sum())
    if unconverged:
        logger.warning(
            "%d of %d Cesaro averages have a diagnostic above %.0e",
            unconverged, len(df), cesaro_diagnostic_warning,
        )
    if violations:
        logger.warning("%d samples exceed the mutual cooperation payoff %.6g", violations, R)
    return {
        'n': game.n,
        'r': game.r,
        'focal': list(focal.as_vector()),
        'samples': len(df),
        'mutual_cooperation_payoff': R,
        'max_opponent_payoff': max_opponent,
        'violations': violations,
        'unconverged': unconverged,
        'bound_holds': violations == 0,
    }


def region_map(
    n_min: int = 2,
    n_max: int = 10,
    r_step: float = 0.1,
) -> pd.DataFrame:
    r"""
    Classifies a grid of $(n, r)$ points into the parameter regimes of
    [`region_of`][cooperationenforcer.calculations.enforcement.region_of].

    For every $n$, $r$ runs over the multiples of `r_step` in $(0, n + 1]$.
    """
    if not isinstance(n_min, int) or n_min < 2 or n_max < n_min:
        raise ValueError(f"need 2 <= n_min <= n_max, got n_min={n_min}, n_max={n_max}")
    if not r_step > 0:
        raise ValueError(f"r_step must be positive, got {r_step}")
    rows = []
    for n in range(n_min, n_max + 1):
        steps = int(np.floor((n + 1) / r_step + 1e-9))
        for step in range(1, steps + 1):
            region = region_of(n, round(step * r_step, 10))
            rows.append({
                'n': region.n,
                'r': region.r,
                'regime': region.regime,
                'min_profitable_alliance': region.min_profitable_alliance,
                'max_profitable_alliance': region.max_profitable_alliance,
            })
    df = pd.DataFrame(rows)
    for col in ('min_profitable_alliance', 'max_profitable_alliance'):
        df[col] = df[col].astype('Int64')
    return df


def check(
    game: PublicGoodsGame,
    strategy: MemoryOneStrategy
) -> dict:
    """
    Verdict of [`check_enforcing`][cooperationenforcer.calculations.enforcement.check_enforcing]
    together with the necessary conditions, as a JSON-ready dictionary.
    """
    verdict = check_enforcing(game, strategy)
    result = verdict.to_dict()
    result['n'] = game.n
    result['r'] = game.r
    result['strategy'] = {
        'name': strategy.name,
        'p_c': list(strategy.p_c),
        'p_d': list(strategy.p_d),
        'first_move': strategy.first_move,
    }
    result['necessary_conditions'] = {name: bool(holds) for name, holds in necessary_conditions(game, strategy)}
    return result


def learn(
    scenario: str,
    game: PublicGoodsGame,
    leader: Optional[MemoryOneStrategy] = None,
    cfg: Optional[LearnerConfig] = None,
    T: int = learning_horizon,
    seeds: Sequence[int] = range(10),
    workers: int = 1,
    tolerance: float = convergence_tolerance,
) -> tuple[list[Trajectory], dict]:
    """
    Runs a learning scenario for several seeds and summarises the final running averages.

    A seed counts as converged if all players end within `tolerance` of the mutual cooperation payoff.
    """
    trajectories = run_batch(scenario, game, leader, cfg, T, seeds, workers)
    R = game.mutual_cooperation_payoff
    per_seed = [
        {
            'seed': tr.seed,
            'final_averages': [float(x) for x in tr.final_averages],
            'converged': tr.converged(R, tolerance),
        }
        for tr in trajectories
    ]
    summary = {
        'scenario': scenario,
        'n': game.n,
        'r': game.r,
        'horizon': T,
        'target': R,
        'tolerance': tolerance,
        'runs': per_seed,
        'converged': sum(run['converged'] for run in per_seed),
    }
    logger.info("scenario %s: %d of %d seeds converged", scenario, summary['converged'], len(per_seed))
    return trajectories, summary


def collusion(game: PublicGoodsGame) -> dict:
    """
    Collusion reports of every alliance, and whether no alliance gains from collusion.
    """
    reports = collusion_scan(game)
    return {
        'n': game.n,
        'r': game.r,
        'reports': [report.to_dict() for report in reports],
        'resistant': all(report.gain <= strictness_slack for report in reports),
    }
