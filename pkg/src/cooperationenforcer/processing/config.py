# %%
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from cooperationenforcer.calculations.game import (
    CLASSIC_STRATEGIES,
    MemoryOneStrategy,
    PublicGoodsGame,
    classic_strategy,
)
from cooperationenforcer.calculations.learning import (
    AVERAGE_REWARD_MODES,
    DEFAULT_LEADER,
    SCENARIOS,
    EpsilonSchedule,
    LearnerConfig,
)
from cooperationenforcer.data.constants import (
    average_reward_rate,
    cesaro_horizon,
    epsilon_decay,
    epsilon_floor,
    epsilon_initial,
    learning_horizon,
    learning_rate,
)

EXPERIMENTS = ('payoff-cloud', 'region-map', 'check', 'learn', 'collusion')
FORMATS = ('csv', 'json')
METHODS = ('cesaro', 'perturbed')

StrategySpec = Union[str, list]


def resolve_strategy(
    spec: StrategySpec,
    n: int,
    first_move: Optional[float] = None
) -> MemoryOneStrategy:
    """
    Builds a strategy from a classic strategy name or an explicit vector
    $(p_{c,0..n-1}, p_{d,0..n-1})$ of $2n$ probabilities.

    `first_move` overrides the first move of a classic strategy;
    explicit vectors default to cooperating in the first stage.

    Raises
    ------
    ValueError
        If the name is unknown or the vector does not have length $2n$.
    """
    if isinstance(spec, str):
        strategy = classic_strategy(spec, n)
        if first_move is not None:
            strategy = dataclasses.replace(strategy, first_move=first_move)
        return strategy
    vector = [float(x) for x in spec]
    if len(vector) != 2 * n:
        raise ValueError(f"a strategy vector for n = {n} must have {2 * n} entries, got {len(vector)}")
    return MemoryOneStrategy.from_vector(
        vector,
        first_move=1.0 if first_move is None else first_move,
        name='custom',
    )


@dataclass
class ExperimentConfig:
    """
    Configuration of one experiment run from the command line.

    Values are read from a JSON file and overridden by command line flags.
    `horizon` defaults to the Cesaro horizon for `payoff-cloud` and
    to the learning horizon for `learn`.
    """
    experiment: str = 'check'
    n: int = 3
    r: float = 2.0
    strategy: StrategySpec = 'WSLS'
    leader: StrategySpec = DEFAULT_LEADER
    first_move: Optional[float] = None
    scenario: str = 'A'
    samples: int = 100_000
    horizon: Optional[int] = None
    seeds: int = 10
    seed: int = 0
    method: str = 'cesaro'
    workers: int = 1
    reference_samples: bool = True
    n_min: int = 2
    n_max: int = 10
    r_step: float = 0.1
    alpha: float = learning_rate
    beta: float = average_reward_rate
    epsilon_initial: float = epsilon_initial
    epsilon_decay: float = epsilon_decay
    epsilon_floor: float = epsilon_floor
    average_reward: str = 'running'
    out: Optional[str] = None
    format: str = 'csv'

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> 'ExperimentConfig':
        """
        Raises
        ------
        ValueError
            If `values` holds keys that are not configuration fields.
        """
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ValueError(f"unknown configuration fields: {unknown}")
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> 'ExperimentConfig':
        values = json.loads(text)
        if not isinstance(values, dict):
            raise ValueError("a configuration file must hold a JSON object")
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        with open(path, encoding='utf-8') as file:
            return cls.from_json(file.read())

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def with_overrides(self, **overrides: Any) -> 'ExperimentConfig':
        """Returns a copy with every override that is not `None` applied."""
        unknown = sorted(set(overrides) - set(self.field_names()))
        if unknown:
            raise ValueError(f"unknown configuration fields: {unknown}")
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> 'ExperimentConfig':
        """
        Checks all fields and returns the configuration itself.

        Raises
        ------
        ValueError
            Listing every offending field.
        """
        errors = []
        if self.experiment not in EXPERIMENTS:
            errors.append(f"experiment: must be one of {EXPERIMENTS}")
        if self.format not in FORMATS:
            errors.append(f"format: must be one of {FORMATS}")
        if self.method not in METHODS:
            errors.append(f"method: must be one of {METHODS}")
        if self.scenario not in SCENARIOS:
            errors.append(f"scenario: must be one of {SCENARIOS}")
        if self.average_reward not in AVERAGE_REWARD_MODES:
            errors.append(f"average_reward: must be one of {AVERAGE_REWARD_MODES}")
        for name in ('samples', 'seeds', 'workers'):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                errors.append(f"{name}: must be a positive integer")
        if self.horizon is not None and (not isinstance(self.horizon, int) or self.horizon < 1):
            errors.append("horizon: must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            errors.append("seed: must be a non-negative integer")
        if self.first_move is not None and not 0.0 <= self.first_move <= 1.0:
            errors.append("first_move: must be in [0, 1]")

        if self.experiment == 'region-map':
            if not isinstance(self.n_min, int) or self.n_min < 2 or self.n_max < self.n_min:
                errors.append("n_min, n_max: need 2 <= n_min <= n_max")
            if not self.r_step > 0:
                errors.append("r_step: must be positive")
        else:
            try:
                PublicGoodsGame(n=self.n, r=self.r)
            except ValueError as error:
                errors.append(f"n, r: {error}")
            else:
                for name in ('strategy', 'leader'):
                    spec = getattr(self, name)
                    if isinstance(spec, str) and spec.lower() not in [s.lower() for s in CLASSIC_STRATEGIES]:
                        errors.append(f"{name}: unknown strategy '{spec}'")
                        continue
                    try:
                        resolve_strategy(spec, self.n, self.first_move)
                    except (ValueError, TypeError) as error:
                        errors.append(f"{name}: {error}")
        try:
            self.learner_config()
        except ValueError as error:
            errors.append(f"learner: {error}")

        if errors:
            raise ValueError("invalid configuration: " + "; ".join(errors))
        return self

    def game(self) -> PublicGoodsGame:
        return PublicGoodsGame(n=self.n, r=self.r)

    def focal_strategy(self) -> MemoryOneStrategy:
        return resolve_strategy(self.strategy, self.n, self.first_move)

    def leader_strategy(self) -> MemoryOneStrategy:
        return resolve_strategy(self.leader, self.n, None)

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            alpha=self.alpha,
            beta=self.beta,
            epsilon=EpsilonSchedule(
                initial=self.epsilon_initial,
                decay=self.epsilon_decay,
                floor=self.epsilon_floor,
            ),
            seed=self.seed,
            average_reward=self.average_reward,
        )

    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return learning_horizon if self.experiment == 'learn' else cesaro_horizon
