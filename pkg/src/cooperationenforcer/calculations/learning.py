# %%
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from cooperationenforcer.calculations.enforcement import check_enforcing
from cooperationenforcer.calculations.game import (
    MemoryOneStrategy,
    Outcome,
    PublicGoodsGame,
    classic_strategy,
    outcome_payoff_matrix,
)
from cooperationenforcer.calculations.markov import lift_strategy
from cooperationenforcer.utility.statistics import prefix_means
from cooperationenforcer.data.constants import (
    average_reward_rate,
    convergence_tolerance,
    epsilon_decay,
    epsilon_floor,
    epsilon_initial,
    learning_horizon,
    learning_rate,
)

logger = logging.getLogger(__name__)

SCENARIOS = ('A', 'B', 'C')
AVERAGE_REWARD_MODES = ('running', 'verbatim')
DEFAULT_LEADER = 'WSLSReset'


@dataclass(frozen=True)
class EpsilonSchedule:
    r"""
    Exploration probability $\varepsilon(t) = \max\{\varepsilon_{min}, \varepsilon_0 \lambda^{t}\}$.

    Parameters
    ----------
    initial : float
        $\varepsilon_0$.
    decay : float
        Factor $\lambda$ per stage.
    floor : float
        Lower bound $\varepsilon_{min}$.
    """
    initial: float = epsilon_initial
    decay: float = epsilon_decay
    floor: float = epsilon_floor

    def __post_init__(self):
        for name in ('initial', 'decay', 'floor'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"epsilon {name} must be in [0, 1], got {value}")

    def value(self, t: int) -> float:
        return max(self.floor, self.initial * self.decay ** t)


@dataclass(frozen=True)
class LearnerConfig:
    r"""
    Hyperparameters of the average-reward Q-learner.

    Parameters
    ----------
    alpha : float
        Learning rate of the Q values, in $(0, 1]$.
    beta : float
        Step of the average reward estimate, in $(0, 1]$. Only used by the `verbatim` update.
    epsilon : EpsilonSchedule
        Exploration schedule.
    seed : int
        Seed of the `numpy.random.Generator` driving the whole run.
    average_reward : str
        `running` updates $\bar{R} \leftarrow [(t-1)\bar{R} + R]/t$,
        `verbatim` updates $\bar{R} \leftarrow (1-\beta)\bar{R} + \beta[(t-1)\bar{R} + R]/t$.
        Both only after a greedy step.
    """
    alpha: float = learning_rate
    beta: float = average_reward_rate
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    seed: int = 0
    average_reward: str = 'running'

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.average_reward not in AVERAGE_REWARD_MODES:
            raise ValueError(f"average_reward must be one of {AVERAGE_REWARD_MODES}, got '{self.average_reward}'")


@dataclass
class QTable:
    r"""
    Tabular action values $Q(\bm{o}, a)$ over the $2^n$ previous outcomes, and the average reward estimate $\bar{R}$.

    A learner controlling $m$ seats has $2^m$ joint actions;
    bit $l$ of a joint action is the action of the $l$-th controlled seat.
    """
    values: np.ndarray
    avg_reward: float = 0.0

    @classmethod
    def zeros(cls, n: int, n_actions: int = 2) -> 'QTable':
        return cls(values=np.zeros((2 ** n, n_actions)))

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]


def _select(q: QTable, state: int, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(q.n_actions))
    row = q.values[state]
    best = np.flatnonzero(row == row.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def select_action(
    q: QTable,
    o: Outcome,
    epsilon: float,
    rng: np.random.Generator
) -> int:
    r"""
    $\varepsilon$-greedy action after outcome `o`.

    With probability $\varepsilon$ a uniformly random action is returned,
    otherwise $\arg\max_a Q(\bm{o}, a)$ with ties broken uniformly at random.
    A greedy action is therefore chosen with probability $1 - \varepsilon + \varepsilon/|A|$.

    Returns
    -------
    int
        Action index. For a single learner this is the integer value of
        [`Action`][cooperationenforcer.calculations.game.Action].
    """
    if q.values.shape[0] != 2 ** o.n:
        raise ValueError(f"Q table has {q.values.shape[0]} states but the outcome is over {o.n} players")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    return _select(q, o.bits, epsilon, rng)


def _update(
    q: QTable,
    prev: int,
    a: int,
    new: int,
    reward: float,
    t: int,
    cfg: LearnerConfig,
) -> QTable:
    values = q.values
    delta = reward - q.avg_reward + values[new].max() - values[prev, a]
    values[prev, a] += cfg.alpha * delta
    if values[prev, a] == values[prev].max():
        running = ((t - 1) * q.avg_reward + reward) / t
        if cfg.average_reward == 'verbatim':
            q.avg_reward = (1.0 - cfg.beta) * q.avg_reward + cfg.beta * running
        else:
            q.avg_reward = running
    return q


def learner_update(
    q: QTable,
    prev_o: Outcome,
    a: int,
    new_o: Outcome,
    reward: float,
    t: int,
    cfg: LearnerConfig,
) -> QTable:
    r"""
    One step of average-reward Q-learning:
    $$
    \delta = R - \bar{R} + \max_{a'} Q(\bm{o}(t), a') - Q(\bm{o}(t-1), a), \qquad
    Q(\bm{o}(t-1), a) \leftarrow Q(\bm{o}(t-1), a) + \alpha \delta
    $$

    | Symbol          | Description                        |
    |-----------------|------------------------------------|
    | $R$             | stage reward of the learner        |
    | $\bar{R}$       | average reward estimate            |
    | $\bm{o}(t-1)$   | `prev_o`, the state the action was chosen in |
    | $\bm{o}(t)$     | `new_o`                            |

    If the updated $Q(\bm{o}(t-1), a)$ is the maximum of its row (compared after the update),
    $\bar{R}$ is updated according to `cfg.average_reward`.
    The default is `running`, which sets $\bar{R} \leftarrow [(t-1)\bar{R} + R]/t$;
    `verbatim` blends that value into the previous estimate at rate $\beta$.

    Warnings
    --------
    The table is updated in place and returned.

    Parameters
    ----------
    q : QTable
        Learner state.
    prev_o : Outcome
        Outcome of the previous stage.
    a : int
        Action chosen after `prev_o`.
    new_o : Outcome
        Outcome that followed.
    reward : float
        Reward of the learner in `new_o`.
    t : int
        Stage index, $t \ge 1$.
    cfg : LearnerConfig
        Hyperparameters.

    Returns
    -------
    QTable
    """
    if not isinstance(t, (int, np.integer)) or t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    if not 0 <= a < q.n_actions:
        raise ValueError(f"action must be in [0, {q.n_actions}), got {a}")
    return _update(q, prev_o.bits, a, new_o.bits, reward, t, cfg)


@dataclass(frozen=True)
class Trajectory:
    """
    Stage-by-stage record of a learning run.

    `running_averages[t]` is the mean of `payoffs[:t+1]` for every player.
    """
    scenario: str
    seed: int
    outcomes: np.ndarray
    payoffs: np.ndarray
    running_averages: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'running_averages', prefix_means(self.payoffs))

    def __len__(self) -> int:
        return len(self.outcomes)

    @property
    def n(self) -> int:
        return self.payoffs.shape[1]

    @property
    def final_averages(self) -> np.ndarray:
        return self.running_averages[-1]

    def converged(self, target: float, tolerance: float = convergence_tolerance) -> bool:
        """True if every player's final running average is within `tolerance` of `target`."""
        return bool(np.all(np.abs(self.final_averages - target) <= tolerance))

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame({
            'stage': np.arange(1, len(self) + 1),
            'outcome': self.outcomes,
        })
        for i in range(self.n):
            df[f'payoff_{i}'] = self.payoffs[:, i]
        for i in range(self.n):
            df[f'running_average_{i}'] = self.running_averages[:, i]
        return df


@dataclass
class _Learner:
    seats: tuple[int, ...]
    q: QTable


def _seat_plan(scenario: str, n: int) -> tuple[list[int], list[tuple[int, ...]]]:
    """Returns the leader seats and the seats of each learner."""
    if scenario == 'A':
        return list(range(n - 1)), [(n - 1,)]
    if scenario == 'B':
        return [0], [(seat,) for seat in range(1, n)]
    return [0], [tuple(range(1, n))]


def run_scenario(
    scenario: str,
    game: PublicGoodsGame,
    leader: Optional[MemoryOneStrategy] = None,
    cfg: Optional[LearnerConfig] = None,
    T: int = learning_horizon,
) -> Trajectory:
    r"""
    Plays $T$ stages of the repeated public goods game between leaders committed to
    a cooperation enforcing strategy and reinforcement learners.

    | Scenario | Leaders                  | Learners                                                      |
    |----------|--------------------------|---------------------------------------------------------------|
    | `A`      | seats $0, \dots, n-2$    | seat $n-1$                                                    |
    | `B`      | seat 0                   | seats $1, \dots, n-1$, each an independent learner            |
    | `C`      | seat 0                   | seats $1, \dots, n-1$ as one alliance over joint actions, rewarded with the mean payoff of its members |

    Learners observe the full previous outcome. The outcome before the first stage is $c^n$.
    The run is deterministic given `cfg.seed`.

    See Also
    --------
    [`cooperationenforcer.calculations.learning.learner_update`][]

    Parameters
    ----------
    scenario : str
        `A`, `B` or `C`.
    game : PublicGoodsGame
        The game.
    leader : MemoryOneStrategy, optional
        Strategy of the leaders, must pass `check_enforcing`. Defaults to `WSLSReset`.
    cfg : LearnerConfig, optional
        Hyperparameters, defaults to `LearnerConfig()`.
    T : int
        Number of stages.

    Returns
    -------
    Trajectory

    Raises
    ------
    ValueError
        If the scenario is unknown, $T < 1$ or the leader is not cooperation enforcing.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}, got '{scenario}'")
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    n = game.n
    leader = leader if leader is not None else classic_strategy(DEFAULT_LEADER, n)
    cfg = cfg if cfg is not None else LearnerConfig()
    verdict = check_enforcing(game, leader)
    if not verdict.overall:
        raise ValueError(f"leader strategy is not cooperation enforcing, failed constraints: {verdict.failed}")

    leader_seats, learner_seats = _seat_plan(scenario, n)
    leader_probabilities = [lift_strategy(leader, seat, n).tolist() for seat in leader_seats]
    learners = [_Learner(seats, QTable.zeros(n, 2 ** len(seats))) for seats in learner_seats]
    payoff_rows = outcome_payoff_matrix(game).tolist()
    rng = np.random.default_rng(cfg.seed)

    outcomes = np.empty(T, dtype=np.int64)
    payoffs = np.empty((T, n))
    state = 2 ** n - 1
    for t in range(1, T + 1):
        epsilon = cfg.epsilon.value(t)
        bits = 0
        for seat, probabilities in zip(leader_seats, leader_probabilities):
            if rng.random() < probabilities[state]:
                bits |= 1 << seat
        actions = []
        for learner in learners:
            a = _select(learner.q, state, epsilon, rng)
            actions.append(a)
            for position, seat in enumerate(learner.seats):
                bits |= ((a >> position) & 1) << seat
        row = payoff_rows[bits]
        for learner, a in zip(learners, actions):
            reward = sum(row[seat] for seat in learner.seats) / len(learner.seats)
            _update(learner.q, state, a, bits, reward, t, cfg)
        outcomes[t - 1] = bits
        payoffs[t - 1] = row
        state = bits

    trajectory = Trajectory(scenario=scenario, seed=cfg.seed, outcomes=outcomes, payoffs=payoffs)
    logger.debug(
        "scenario %s, seed %d: final running averages %s",
        scenario, cfg.seed, np.round(trajectory.final_averages, 4).tolist(),
    )
    return trajectory


def _run_seed(args: tuple) -> Trajectory:
    scenario, game, leader, cfg, T = args
    return run_scenario(scenario, game, leader, cfg, T)


def run_batch(
    scenario: str,
    game: PublicGoodsGame,
    leader: Optional[MemoryOneStrategy] = None,
    cfg: Optional[LearnerConfig] = None,
    T: int = learning_horizon,
    seeds: Iterable[int] = range(10),
    workers: int = 1,
) -> list[Trajectory]:
    """
    Runs one scenario for several seeds, overriding `cfg.seed`.

    With `workers > 1` the runs are distributed over a process pool;
    trajectories are returned in the order of `seeds` either way.
    """
    cfg = cfg if cfg is not None else LearnerConfig()
    jobs = [(scenario, game, leader, dataclasses.replace(cfg, seed=int(seed)), T) for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(job) for job in jobs]


def converged_seeds(
    trajectories: Sequence[Trajectory],
    target: float,
    tolerance: float = convergence_tolerance,
) -> list[int]:
    """Seeds of the trajectories whose final running averages are all within `tolerance` of `target`."""
    return [tr.seed for tr in trajectories if tr.converged(target, tolerance)]
