# %%
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from cooperationenforcer.data.constants import (
    endowment,
    sampled_first_move,
)


class CapacityError(ValueError):
    """Raised when the $2^n$ outcome space is too large to be handled with dense matrices."""


class ErgodicityError(ValueError):
    """Raised when a stationary distribution is requested for a chain that is not ergodic."""


class InapplicableError(ValueError):
    """Raised when the game does not satisfy $r > n/2$, so that no cooperation enforcing strategy exists."""


class Action(enum.IntEnum):
    """
    Action of a player in a single stage game.

    The integer values fix the order `DEFECT < COOPERATE`, which is also the bit value
    of the action in an [`Outcome`][cooperationenforcer.calculations.game.Outcome].
    """
    DEFECT = 0
    COOPERATE = 1

    @property
    def symbol(self) -> str:
        return 'c' if self is Action.COOPERATE else 'd'

    @classmethod
    def from_symbol(cls, symbol: str) -> 'Action':
        if symbol == 'c':
            return cls.COOPERATE
        if symbol == 'd':
            return cls.DEFECT
        raise ValueError(f"Action symbol must be 'c' or 'd', got '{symbol}'")


@dataclass(frozen=True)
class Outcome:
    r"""
    Joint action profile $\bm{o} \in A^n$ of one stage game.

    The profile is stored as an unsigned integer of width $n$:
    bit $i$ is 1 if player $i$ cooperated. Player 0 occupies the least significant bit,
    so that `Outcome.from_label("dcc").bits == 0b110`.

    Parameters
    ----------
    bits : int
        Bit-encoded profile, $0 \le$ `bits` $< 2^n$.
    n : int
        Number of players.
    """
    bits: int
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not isinstance(self.bits, (int, np.integer)) or not 0 <= self.bits < 2 ** self.n:
            raise ValueError(f"bits must be an integer in [0, 2^n) = [0, {2 ** self.n}), got {self.bits}")
        object.__setattr__(self, 'bits', int(self.bits))
        object.__setattr__(self, 'n', int(self.n))

    @property
    def cooperators(self) -> int:
        r"""Number of cooperators $\#_c(\bm{o})$ (population count of `bits`)."""
        return bin(self.bits).count('1')

    @property
    def defectors(self) -> int:
        return self.n - self.cooperators

    def action(self, i: int) -> Action:
        if not 0 <= i < self.n:
            raise ValueError(f"player index must be in [0, {self.n}), got {i}")
        return Action((self.bits >> i) & 1)

    def actions(self) -> tuple[Action, ...]:
        return tuple(self.action(i) for i in range(self.n))

    def label(self) -> str:
        """Outcome as a string of `c`/`d` symbols, player 0 first (e.g. `ccdc`)."""
        return ''.join(a.symbol for a in self.actions())

    @classmethod
    def from_actions(cls, actions: Sequence[Action]) -> 'Outcome':
        bits = 0
        for i, a in enumerate(actions):
            bits |= int(Action(a)) << i
        return cls(bits=bits, n=len(actions))

    @classmethod
    def from_label(cls, label: str) -> 'Outcome':
        return cls.from_actions([Action.from_symbol(s) for s in label])

    @classmethod
    def mutual_cooperation(cls, n: int) -> 'Outcome':
        r"""The outcome $c^n$."""
        return cls(bits=2 ** n - 1, n=n)

    @classmethod
    def mutual_defection(cls, n: int) -> 'Outcome':
        r"""The outcome $d^n$."""
        return cls(bits=0, n=n)

    @classmethod
    def all(cls, n: int) -> list['Outcome']:
        """All $2^n$ outcomes in index order."""
        return [cls(bits=b, n=n) for b in range(2 ** n)]


@dataclass(frozen=True)
class PublicGoodsGame:
    r"""
    Linear public goods game among $n$ players with multiplication factor $r$.

    Every cooperator contributes her endowment $e=1$ to a public pool, the pool
    is multiplied by $r$ and split equally among all $n$ players.
    The game is a social dilemma for $1 < r < n$:

    | Symbol | Description                                   |
    |--------|-----------------------------------------------|
    | $n$    | number of players                             |
    | $r$    | multiplication factor                         |
    | $e$    | endowment, fixed to 1                         |
    | $r/n$  | marginal per-capita rate of return (MPCR)     |

    Notes
    -----
    Empirical studies report an MPCR between $0.3$ and $0.75$. This range is not enforced.

    Parameters
    ----------
    n : int
        Number of players, $n \ge 2$.
    r : float
        Multiplication factor, $1 < r < n$.

    Raises
    ------
    ValueError
        If $n < 2$ or $r$ is outside $(1, n)$.
    """
    n: int
    r: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool) or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not np.isfinite(self.r) or not 1 < self.r < self.n:
            raise ValueError(f"r must satisfy 1 < r < n = {self.n}, got {self.r}")
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'r', float(self.r))

    @property
    def endowment(self) -> float:
        return endowment

    @property
    def mpcr(self) -> float:
        return self.r / self.n

    @property
    def mutual_cooperation_payoff(self) -> float:
        r"""$R_{c,n-1} = r - 1$."""
        return stage_payoff(self, Action.COOPERATE, self.n - 1)

    def payoff_table(self) -> np.ndarray:
        r"""
        Returns the $2 \times n$ array of stage payoffs,
        row 0 holding $R_{c,0..n-1}$ and row 1 holding $R_{d,0..n-1}$.
        """
        k = np.arange(self.n)
        return np.vstack([
            self.r * (k + 1) / self.n - self.endowment,
            self.r * k / self.n,
        ])


def stage_payoff(
    game: PublicGoodsGame,
    a: Action,
    k: int
) -> float:
    r"""
    Computes the stage payoff of a player who chose action $a$
    while $k$ of her opponents cooperated:
    $$
    R_{c,k} = \frac{r(k+1)}{n} - 1, \qquad R_{d,k} = \frac{rk}{n}
    $$

    | Symbol    | Description                                  |
    |-----------|----------------------------------------------|
    | $R_{a,k}$ | stage payoff                                 |
    | $k$       | number of cooperating opponents, $0..n-1$    |
    | $r$       | multiplication factor                        |
    | $n$       | number of players                            |

    Since $R_{d,k+1} - R_{c,k} = 1 - r/n > 0$, defection is always tempting.

    Parameters
    ----------
    game : PublicGoodsGame
        The game.
    a : Action
        Action of the focal player.
    k : int
        Number of cooperating opponents.

    Returns
    -------
    float
        Stage payoff $R_{a,k}$.

    Raises
    ------
    ValueError
        If $k$ is not in $\{0, \dots, n-1\}$.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import PublicGoodsGame, Action, stage_payoff
    stage_payoff(PublicGoodsGame(n=3, r=2), Action.COOPERATE, k=2)
    ```
    """
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= game.n - 1:
        raise ValueError(f"k must be an integer in [0, {game.n - 1}], got {k}")
    if Action(a) is Action.COOPERATE:
        return game.r * (k + 1) / game.n - game.endowment
    return game.r * k / game.n


def opponent_cooperators(o: Outcome, i: int) -> int:
    r"""
    Number of cooperating opponents $k = \#_c(\bm{a}_{-i})$ of player $i$ in outcome $\bm{o}$.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import Outcome, opponent_cooperators
    opponent_cooperators(Outcome.from_label('ccdc'), 0) # 2
    ```
    """
    if not isinstance(i, (int, np.integer)) or not 0 <= i < o.n:
        raise ValueError(f"player index must be in [0, {o.n}), got {i}")
    return o.cooperators - ((o.bits >> i) & 1)


def outcome_payoffs(
    game: PublicGoodsGame,
    o: Outcome
) -> np.ndarray:
    """
    Stage payoffs of all $n$ players for outcome `o`.

    Returns
    -------
    np.ndarray
        Entry $i$ is `stage_payoff(game, o.action(i), opponent_cooperators(o, i))`.

    Raises
    ------
    ValueError
        If `o.n` differs from `game.n`.
    """
    if o.n != game.n:
        raise ValueError(f"outcome has {o.n} players but the game has {game.n}")
    return np.array([
        stage_payoff(game, o.action(i), opponent_cooperators(o, i))
        for i in range(game.n)
    ])


def outcome_bit_matrix(n: int) -> np.ndarray:
    """
    Returns the $2^n \\times n$ 0/1 matrix whose row `o` holds the actions of outcome `o`.
    """
    return (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1


def outcome_payoff_matrix(game: PublicGoodsGame) -> np.ndarray:
    """
    Returns the $2^n \\times n$ matrix of stage payoffs; row `o` equals `outcome_payoffs(game, Outcome(o, n))`.
    """
    bits = outcome_bit_matrix(game.n)
    k = bits.sum(axis=1, keepdims=True) - bits
    table = game.payoff_table()
    return np.where(bits == 1, table[0][k], table[1][k])


@dataclass(frozen=True)
class MemoryOneStrategy:
    r"""
    Memory-one strategy of the repeated public goods game.

    A strategy is the vector
    $$
    \bm{p} = (p_{c,0}, \dots, p_{c,n-1}, p_{d,0}, \dots, p_{d,n-1})
    $$
    where $p_{a,k}$ is the probability to cooperate after a stage in which the player
    chose $a$ and $k$ of her opponents cooperated.
    `first_move` is the probability to cooperate in the first stage.

    Parameters
    ----------
    n : int
        Number of players.
    p_c : Sequence[float]
        $p_{c,0..n-1}$.
    p_d : Sequence[float]
        $p_{d,0..n-1}$.
    first_move : float
        Cooperation probability in the first stage.
    name : str, optional
        Label used in reports, not part of equality.

    Raises
    ------
    ValueError
        If a vector does not have length $n$ or an entry is outside $[0, 1]$.
    """
    n: int
    p_c: tuple[float, ...]
    p_d: tuple[float, ...]
    first_move: float = sampled_first_move
    name: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        p_c = tuple(float(x) for x in self.p_c)
        p_d = tuple(float(x) for x in self.p_d)
        if len(p_c) != self.n or len(p_d) != self.n:
            raise ValueError(f"p_c and p_d must both have length n = {self.n}")
        for label, values in (('p_c', p_c), ('p_d', p_d), ('first_move', (float(self.first_move),))):
            if not all(0.0 <= x <= 1.0 for x in values):
                raise ValueError(f"all entries of {label} must be probabilities in [0, 1]")
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'p_c', p_c)
        object.__setattr__(self, 'p_d', p_d)
        object.__setattr__(self, 'first_move', float(self.first_move))

    def probability(self, a: Action, k: int) -> float:
        r"""Returns $p_{a,k}$."""
        return self.p_c[k] if Action(a) is Action.COOPERATE else self.p_d[k]

    def as_vector(self) -> np.ndarray:
        """The $2n$ vector in the order $(p_{c,0..n-1}, p_{d,0..n-1})$."""
        return np.array(self.p_c + self.p_d)

    @classmethod
    def from_vector(
        cls,
        vector: Iterable[float],
        first_move: float = sampled_first_move,
        name: Optional[str] = None,
    ) -> 'MemoryOneStrategy':
        vector = [float(x) for x in vector]
        if len(vector) < 4 or len(vector) % 2:
            raise ValueError(f"a strategy vector must have even length 2n >= 4, got {len(vector)}")
        n = len(vector) // 2
        return cls(n=n, p_c=vector[:n], p_d=vector[n:], first_move=first_move, name=name)

    def is_fully_mixed(self) -> bool:
        """True if every conditional probability lies strictly inside $(0, 1)$."""
        return all(0.0 < x < 1.0 for x in self.p_c + self.p_d)

    def perturbed(self, delta: float) -> 'MemoryOneStrategy':
        r"""Returns the strategy with every entry mapped to $\delta + (1 - 2\delta)p$."""
        if not 0.0 < delta < 0.5:
            raise ValueError("delta must be in (0, 0.5)")
        shift = lambda x: delta + (1.0 - 2.0 * delta) * x
        return MemoryOneStrategy(
            n=self.n,
            p_c=[shift(x) for x in self.p_c],
            p_d=[shift(x) for x in self.p_d],
            first_move=shift(self.first_move),
            name=self.name,
        )


CLASSIC_STRATEGIES = ('ALLC', 'ALLD', 'Repeat', 'GrimTrigger', 'WSLS', 'WSLSReset')


def classic_strategy(name: str, n: int) -> MemoryOneStrategy:
    r"""
    Builds one of the classic memory-one strategies for $n$ players.

    | Name          | $p_{c,k}$                         | $p_{d,k}$                              | first move |
    |---------------|-----------------------------------|----------------------------------------|------------|
    | `ALLC`        | 1                                 | 1                                      | 1          |
    | `ALLD`        | 0                                 | 0                                      | 0          |
    | `Repeat`      | 1                                 | 0                                      | 1          |
    | `GrimTrigger` | 1 for $k=n-1$, else 0             | 0                                      | 1          |
    | `WSLS`        | 1 for $k=n-1$, else 0             | 1 for $k=n-1$, else 0                  | 1          |
    | `WSLSReset`   | 1 for $k=n-1$, else 0             | 1 for $k\in\{0, n-1\}$, else 0         | 1          |

    `WSLS` and `GrimTrigger` are the multi-player instantiations of Win-Stay Lose-Shift
    and Grim Trigger in the $2n$-component representation.
    `WSLSReset` additionally restarts cooperation after mutual defection $d^n$;
    it satisfies the enforcing constraints exactly when $r > \max\{n/2, 2n/(n+1)\}$.

    Warnings
    --------
    Two `WSLS` players facing each other never leave mutual defection once it occurred
    (neither of them sees all opponents cooperate). `WSLSReset` does not have this property.

    Parameters
    ----------
    name : str
        One of `ALLC`, `ALLD`, `Repeat`, `GrimTrigger`, `WSLS`, `WSLSReset` (case-insensitive).
    n : int
        Number of players, $n \ge 2$.

    Returns
    -------
    MemoryOneStrategy

    Raises
    ------
    ValueError
        If `name` is unknown or $n < 2$.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    lookup = {s.lower(): s for s in CLASSIC_STRATEGIES}
    canonical = lookup.get(str(name).lower())
    if canonical is None:
        raise ValueError(f"Unknown strategy '{name}'. Available: {list(CLASSIC_STRATEGIES)}")

    zeros = [0.0] * n
    ones = [1.0] * n
    last = [0.0] * (n - 1) + [1.0]
    if canonical == 'ALLC':
        p_c, p_d, first = ones, ones, 1.0
    elif canonical == 'ALLD':
        p_c, p_d, first = zeros, zeros, 0.0
    elif canonical == 'Repeat':
        p_c, p_d, first = ones, zeros, 1.0
    elif canonical == 'GrimTrigger':
        p_c, p_d, first = last, zeros, 1.0
    elif canonical == 'WSLS':
        p_c, p_d, first = last, last, 1.0
    else:
        reset = list(last)
        reset[0] = 1.0
        p_c, p_d, first = last, reset, 1.0
    return MemoryOneStrategy(n=n, p_c=p_c, p_d=p_d, first_move=first, name=canonical)


def sample_strategy(
    n: int,
    rng: np.random.Generator,
    first_move: float = sampled_first_move,
) -> MemoryOneStrategy:
    """
    Draws a memory-one strategy with all $2n$ entries i.i.d. uniform on $[0, 1]$.
    """
    vector = rng.random(2 * n)
    return MemoryOneStrategy.from_vector(vector, first_move=first_move, name='random')


@dataclass(frozen=True)
class StrategyProfile:
    """
    Ordered profile $(\\bm{p}_1, \\dots, \\bm{p}_n)$ of memory-one strategies, one per seat.

    Raises
    ------
    ValueError
        If a member strategy is defined for a different number of players than the profile length.
    """
    strategies: tuple[MemoryOneStrategy, ...]

    def __post_init__(self):
        strategies = tuple(self.strategies)
        if len(strategies) < 2:
            raise ValueError("a strategy profile needs at least 2 strategies")
        for seat, p in enumerate(strategies):
            if not isinstance(p, MemoryOneStrategy):
                raise TypeError(f"seat {seat} does not hold a MemoryOneStrategy")
            if p.n != len(strategies):
                raise ValueError(
                    f"strategy at seat {seat} is defined for n = {p.n} players, "
                    f"but the profile has {len(strategies)} seats"
                )
        object.__setattr__(self, 'strategies', strategies)

    @classmethod
    def from_strategies(cls, *strategies: MemoryOneStrategy) -> 'StrategyProfile':
        return cls(strategies=tuple(strategies))

    @property
    def n(self) -> int:
        return len(self.strategies)

    def __getitem__(self, seat: int) -> MemoryOneStrategy:
        return self.strategies[seat]

    def __len__(self) -> int:
        return len(self.strategies)

    def is_fully_mixed(self) -> bool:
        return all(p.is_fully_mixed() for p in self.strategies)

    def perturbed(self, delta: float) -> 'StrategyProfile':
        return StrategyProfile(tuple(p.perturbed(delta) for p in self.strategies))

    def replace(self, seat: int, strategy: MemoryOneStrategy) -> 'StrategyProfile':
        strategies = list(self.strategies)
        strategies[seat] = strategy
        return StrategyProfile(tuple(strategies))

    def initial_distribution(self) -> np.ndarray:
        """
        Distribution of the first-stage outcome when every player cooperates independently
        with probability `first_move`.
        """
        bits = outcome_bit_matrix(self.n)
        first = np.array([p.first_move for p in self.strategies])
        return np.prod(np.where(bits == 1, first, 1.0 - first), axis=1)
