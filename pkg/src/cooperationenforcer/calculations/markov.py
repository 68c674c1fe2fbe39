# %%
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from cooperationenforcer.calculations.game import (
    CapacityError,
    ErgodicityError,
    MemoryOneStrategy,
    PublicGoodsGame,
    StrategyProfile,
    outcome_bit_matrix,
    outcome_payoff_matrix,
)
from cooperationenforcer.utility.statistics import l1_distance
from cooperationenforcer.data.constants import (
    cesaro_diagnostic_warning,
    cesaro_horizon,
    max_players_dense,
    perturbation_delta,
    power_iteration_max_steps,
    stationary_residual_limit,
    stationary_tolerance,
)

logger = logging.getLogger(__name__)

LIMIT_KINDS = ('stationary-exact', 'cesaro', 'empirical')
PAIR_LABELS = ('cc', 'cd', 'dc', 'dd')
_distribution_tolerance = 1e-10


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TransitionMatrix:
    r"""
    Row-stochastic $2^n \times 2^n$ matrix of the joint Markov chain of a strategy profile.

    Entry $(\bm{o}, \bm{o}')$ is the probability that outcome $\bm{o}'$ follows outcome $\bm{o}$.
    The array is stored read-only.

    Raises
    ------
    ValueError
        If the matrix has the wrong shape, an entry outside $[0, 1]$ or a row not summing to 1.
    """
    n: int
    entries: np.ndarray

    def __post_init__(self):
        entries = _freeze(self.entries)
        size = 2 ** self.n
        if entries.shape != (size, size):
            raise ValueError(f"entries must have shape ({size}, {size}), got {entries.shape}")
        if np.any(entries < 0.0) or np.any(entries > 1.0):
            raise ValueError("all entries of a transition matrix must be in [0, 1]")
        if not np.allclose(entries.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
            raise ValueError("every row of a transition matrix must sum to 1")
        object.__setattr__(self, 'entries', entries)

    @property
    def size(self) -> int:
        return 2 ** self.n


@dataclass(frozen=True)
class LimitDistribution:
    r"""
    Probability vector $\bm{v}$ over the $2^n$ outcomes.

    Parameters
    ----------
    n : int
        Number of players.
    v : np.ndarray
        Probabilities, indexed by the outcome bits.
    kind : str
        `stationary-exact`, `cesaro` or `empirical`.
    diagnostic : float, optional
        Convergence diagnostic $\lVert \bar{v}(T) - \bar{v}(T/2) \rVert_1$ of a Cesaro average.
    """
    n: int
    v: np.ndarray
    kind: str
    diagnostic: Optional[float] = None

    def __post_init__(self):
        v = _freeze(self.v)
        if v.shape != (2 ** self.n,):
            raise ValueError(f"v must have length 2^n = {2 ** self.n}, got shape {v.shape}")
        if self.kind not in LIMIT_KINDS:
            raise ValueError(f"kind must be one of {LIMIT_KINDS}, got '{self.kind}'")
        if np.any(v < 0.0):
            raise ValueError("entries of a limit distribution must be nonnegative")
        if abs(v.sum() - 1.0) > _distribution_tolerance:
            raise ValueError(f"entries of a limit distribution must sum to 1, got {v.sum()}")
        object.__setattr__(self, 'v', v)

    @classmethod
    def point_mass(cls, n: int, bits: int, kind: str = 'cesaro') -> 'LimitDistribution':
        v = np.zeros(2 ** n)
        v[bits] = 1.0
        return cls(n=n, v=v, kind=kind)

    @property
    def mutual_cooperation(self) -> float:
        r"""$v_{c^n}$"""
        return float(self.v[-1])

    @property
    def mutual_defection(self) -> float:
        r"""$v_{d^n}$"""
        return float(self.v[0])


@dataclass(frozen=True)
class MarginalDistribution:
    r"""
    Marginal limit distribution $u_{a_i a_j, k}$ of a pair of players $(i, j)$.

    Row index of `u` is the pair action in the order `cc`, `cd`, `dc`, `dd`
    (first letter player $i$, second letter player $j$),
    column index is the number $k \in \{0, \dots, n-2\}$ of cooperators among the other $n-2$ players.
    """
    n: int
    i: int
    j: int
    u: np.ndarray

    def __post_init__(self):
        u = _freeze(self.u)
        if self.i == self.j:
            raise ValueError("i and j must be distinct players")
        if u.shape != (4, self.n - 1):
            raise ValueError(f"u must have shape (4, {self.n - 1}), got {u.shape}")
        if np.any(u < 0.0) or abs(u.sum() - 1.0) > _distribution_tolerance:
            raise ValueError("u must be nonnegative and sum to 1")
        object.__setattr__(self, 'u', u)

    def get(self, pair: str, k: int) -> float:
        """Returns $u_{pair, k}$ for `pair` one of `cc`, `cd`, `dc`, `dd`."""
        if pair not in PAIR_LABELS:
            raise ValueError(f"pair must be one of {PAIR_LABELS}, got '{pair}'")
        return float(self.u[PAIR_LABELS.index(pair), k])


def _check_players(n: int, max_players: int = max_players_dense) -> None:
    if n > max_players:
        raise CapacityError(
            f"n = {n} exceeds the dense state-space cap of {max_players} players "
            f"(2^n x 2^n transition matrix)"
        )


def lift_strategy(
    p: MemoryOneStrategy,
    i: int,
    n: int
) -> np.ndarray:
    r"""
    Maps the $2n$ components of a memory-one strategy onto the $2^n$ outcome space.

    Component $\bm{o}$ of the returned vector is
    $$
    p_{a_i(\bm{o}), \#_c(\bm{a}_{-i}(\bm{o}))}
    $$
    that is, the probability that player $i$ cooperates after outcome $\bm{o}$.

    Parameters
    ----------
    p : MemoryOneStrategy
        Strategy of player $i$.
    i : int
        Seat of the player.
    n : int
        Number of players.

    Returns
    -------
    np.ndarray
        Vector of length $2^n$.

    Raises
    ------
    ValueError
        If `p.n` differs from `n` or `i` is not a seat.
    """
    if p.n != n:
        raise ValueError(f"strategy is defined for {p.n} players, expected {n}")
    if not 0 <= i < n:
        raise ValueError(f"player index must be in [0, {n}), got {i}")
    bits = outcome_bit_matrix(n)
    own = bits[:, i]
    k = bits.sum(axis=1) - own
    return np.where(own == 1, np.asarray(p.p_c)[k], np.asarray(p.p_d)[k])


def lift_profile(profile: StrategyProfile) -> np.ndarray:
    """
    Returns the $2^n \\times n$ matrix whose column $i$ is `lift_strategy(profile[i], i, n)`.
    """
    return np.column_stack([
        lift_strategy(p, i, profile.n) for i, p in enumerate(profile.strategies)
    ])


def build_transition_matrix(
    profile: StrategyProfile,
    max_players: int = max_players_dense,
) -> TransitionMatrix:
    r"""
    Builds the transition matrix of the joint Markov chain of a strategy profile.

    Players act independently given the previous outcome, so that
    $$
    P_{\bm{o}, \bm{o}'} = \prod_{i=1}^{n} \begin{cases}
        q_i(\bm{o}) & \text{if } a_i(\bm{o}') = c \\
        1 - q_i(\bm{o}) & \text{if } a_i(\bm{o}') = d
    \end{cases}
    $$
    where $q_i$ is the lifted strategy of player $i$.

    Parameters
    ----------
    profile : StrategyProfile
        One strategy per seat.
    max_players : int
        Largest $n$ for which the dense matrix is built.

    Returns
    -------
    TransitionMatrix

    Raises
    ------
    CapacityError
        If $n$ exceeds `max_players`.
    """
    n = profile.n
    _check_players(n, max_players)
    lifted = lift_profile(profile)
    bits = outcome_bit_matrix(n)
    entries = np.ones((2 ** n, 2 ** n))
    for i in range(n):
        q = lifted[:, i][:, None]
        entries *= np.where(bits[:, i][None, :] == 1, q, 1.0 - q)
    return TransitionMatrix(n=n, entries=entries)


def is_ergodic(P: TransitionMatrix) -> bool:
    """
    True if the chain is irreducible, so that it has a unique stationary distribution.

    Checks strong connectivity of the digraph of positive transition probabilities.
    """
    if np.all(P.entries > 0.0):
        return True
    n_components, _ = connected_components(
        csr_matrix(P.entries > 0.0),
        directed=True,
        connection='strong',
    )
    return n_components == 1


def _power_iteration(
    entries: np.ndarray,
    tol: float,
    max_steps: int,
) -> np.ndarray:
    # lazy chain, same stationary distribution, aperiodic
    lazy = 0.5 * (entries + np.eye(entries.shape[0]))
    v = np.full(entries.shape[0], 1.0 / entries.shape[0])
    for _ in range(max_steps):
        v_next = v @ lazy
        if np.max(np.abs(v_next - v)) < tol:
            return v_next
        v = v_next
    return v


def stationary_exact(
    P: TransitionMatrix,
    tol: float = stationary_tolerance,
    max_steps: int = power_iteration_max_steps,
) -> LimitDistribution:
    r"""
    Computes the unique stationary distribution $\bm{v}^T P = \bm{v}^T$ of an ergodic chain.

    The linear system $(P^T - I)\bm{v} = 0$ is solved directly with its last equation
    replaced by the normalisation $\sum_o v_o = 1$.
    If the direct solve fails or its residual exceeds `tol`,
    power iteration on the lazy chain $(P + I)/2$ is used instead.

    See Also
    --------
    [`scipy.linalg.solve`](https://docs.scipy.org/doc/scipy/reference/generated/scipy.linalg.solve.html)
    [`cooperationenforcer.calculations.markov.limit_cesaro`][]

    Parameters
    ----------
    P : TransitionMatrix
        Transition matrix of an ergodic chain.
    tol : float
        Accepted residual $\lVert \bm{v}^T P - \bm{v}^T \rVert_\infty$.
    max_steps : int
        Step limit of the power iteration fallback.

    Returns
    -------
    LimitDistribution
        Of kind `stationary-exact`.

    Raises
    ------
    ErgodicityError
        If the chain is not irreducible.
    ValueError
        If the power iteration fallback ends with a residual above `stationary_residual_limit`.
    """
    if not is_ergodic(P):
        raise ErgodicityError(
            "the chain is not ergodic and has no unique stationary distribution; "
            "use limit_cesaro with an explicit initial distribution instead"
        )
    size = P.size
    A = P.entries.T - np.eye(size)
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        v = scipy.linalg.solve(A, b)
        residual = np.max(np.abs(v @ P.entries - v))
    except (scipy.linalg.LinAlgError, ValueError):
        residual = np.inf
    if not residual < tol:
        logger.warning(
            "direct stationary solve left residual %.3e > %.1e; falling back to power iteration",
            residual, tol,
        )
        v = _power_iteration(P.entries, tol=tol, max_steps=max_steps)
        residual = np.max(np.abs(v @ P.entries - v))
        if not residual < stationary_residual_limit:
            raise ValueError(
                f"power iteration stopped after {max_steps} steps with residual {residual:.3e}, "
                f"above the accepted {stationary_residual_limit:.1e}"
            )
    v = np.clip(v, 0.0, None)
    v = v / v.sum()
    return LimitDistribution(n=P.n, v=v, kind='stationary-exact')


def _power_sums(
    P: np.ndarray,
    T: int
) -> tuple[np.ndarray, np.ndarray]:
    """Returns $(\\sum_{t=1}^{T} P^t, P^T)$ by binary powering."""
    if T == 1:
        return P.copy(), P.copy()
    if T % 2 == 0:
        S, Q = _power_sums(P, T // 2)
        return S + Q @ S, Q @ Q
    S, Q = _power_sums(P, T - 1)
    Q = Q @ P
    return S + Q, Q


def limit_cesaro(
    P: TransitionMatrix,
    initial: np.ndarray,
    T: int = cesaro_horizon,
) -> LimitDistribution:
    r"""
    Computes the Cesaro average of the outcome distributions over the first $T$ stages:
    $$
    \bar{\bm{v}}(T) = \frac{1}{T} \sum_{t=1}^{T} \bm{v}(t), \qquad \bm{v}(t)^T = \bm{v}(0)^T P^t
    $$

    | Symbol           | Description                                  |
    |------------------|----------------------------------------------|
    | $\bm{v}(0)$      | `initial`, distribution of the first outcome |
    | $P$              | transition matrix                            |
    | $T$              | horizon                                      |

    The sum of matrix powers is evaluated by binary powering in $O(\log T)$ matrix products.
    The average also exists for reducible and periodic chains, where no unique stationary
    distribution does. The returned `diagnostic` is
    $\lVert \bar{\bm{v}}(T) - \bar{\bm{v}}(\lfloor T/2 \rfloor) \rVert_1$;
    for a convergent sequence it decays as $O(1/T)$.

    Parameters
    ----------
    P : TransitionMatrix
        Transition matrix.
    initial : np.ndarray
        Distribution over the $2^n$ outcomes.
    T : int
        Horizon, $T \ge 1$.

    Returns
    -------
    LimitDistribution
        Of kind `cesaro`. The diagnostic is `None` for $T = 1$.

    Raises
    ------
    ValueError
        If $T < 1$ or `initial` is not a distribution over the outcomes.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (P.size,):
        raise ValueError(f"initial must have length {P.size}, got shape {initial.shape}")
    if np.any(initial < 0.0) or abs(initial.sum() - 1.0) > _distribution_tolerance:
        raise ValueError("initial must be nonnegative and sum to 1")

    if T == 1:
        v = initial @ P.entries
        return LimitDistribution(n=P.n, v=v / v.sum(), kind='cesaro')

    half = T // 2
    S_half, P_half = _power_sums(P.entries, half)
    sum_half = initial @ S_half
    total = sum_half + (initial @ P_half) @ S_half
    if T % 2:
        total = total + initial @ (P_half @ P_half @ P.entries)
    average_half = sum_half / half
    average = total / T
    average = np.clip(average, 0.0, None)
    average = average / average.sum()
    diagnostic = l1_distance(average, average_half)
    if diagnostic > cesaro_diagnostic_warning:
        logger.debug("Cesaro average at T = %d has diagnostic %.3e", T, diagnostic)
    return LimitDistribution(n=P.n, v=average, kind='cesaro', diagnostic=diagnostic)


def simulate_empirical(
    profile: StrategyProfile,
    T: int,
    seed: int,
) -> LimitDistribution:
    """
    Empirical outcome frequencies of one sampled play of $T$ stages.

    The first outcome is drawn from the first moves of the strategies,
    every following outcome from the row of the transition matrix.
    The result is deterministic given `seed`.

    Parameters
    ----------
    profile : StrategyProfile
        One strategy per seat.
    T : int
        Number of stages, $T \\ge 1$.
    seed : int
        Seed of the `numpy.random.Generator`.

    Returns
    -------
    LimitDistribution
        Of kind `empirical`.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    P = build_transition_matrix(profile)
    rng = np.random.default_rng(seed)
    cumulative = np.cumsum(P.entries, axis=1)
    cumulative = cumulative / cumulative[:, -1:]
    rows = [row.tolist() for row in cumulative]
    last = P.size - 1

    first = np.array([p.first_move for p in profile.strategies])
    cooperate = rng.random(profile.n) < first
    state = int(np.sum(cooperate.astype(int) << np.arange(profile.n)))

    counts = [0] * P.size
    counts[state] += 1
    for u in rng.random(T - 1).tolist():
        state = min(bisect.bisect_right(rows[state], u), last)
        counts[state] += 1
    return LimitDistribution(n=profile.n, v=np.array(counts, dtype=float) / T, kind='empirical')


def limit_distribution(
    profile: StrategyProfile,
    method: str = 'cesaro',
    T: int = cesaro_horizon,
    delta: float = perturbation_delta,
    initial: Optional[np.ndarray] = None,
) -> LimitDistribution:
    r"""
    Computes a limit distribution of a strategy profile with one of three methods.

    | `method`     | computation                                                            |
    |--------------|------------------------------------------------------------------------|
    | `stationary` | `stationary_exact` of the chain (chain must be ergodic)                |
    | `cesaro`     | `limit_cesaro` from `initial` (default: the profile's first moves)     |
    | `perturbed`  | `stationary_exact` of the profile with every entry mapped to $\delta + (1-2\delta)p$ |

    Raises
    ------
    ValueError
        If `method` is unknown.
    """
    if method == 'stationary':
        return stationary_exact(build_transition_matrix(profile))
    if method == 'cesaro':
        if initial is None:
            initial = profile.initial_distribution()
        return limit_cesaro(build_transition_matrix(profile), initial, T)
    if method == 'perturbed':
        return stationary_exact(build_transition_matrix(profile.perturbed(delta)))
    raise ValueError(f"method must be 'stationary', 'cesaro' or 'perturbed', got '{method}'")


def expected_payoffs(
    game: PublicGoodsGame,
    v: LimitDistribution
) -> np.ndarray:
    r"""
    Expected payoffs $\pi_i = \bm{\pi}_i \cdot \bm{v}$ of all players under a limit distribution.

    Raises
    ------
    ValueError
        If the distribution and the game have different numbers of players.
    """
    if v.n != game.n:
        raise ValueError(f"distribution is over {v.n} players but the game has {game.n}")
    return v.v @ outcome_payoff_matrix(game)


def marginalize(
    v: LimitDistribution,
    i: int,
    j: int
) -> MarginalDistribution:
    r"""
    Computes the marginal limit distribution of the pair $(i, j)$:
    $$
    u_{a_i a_j, k} = \sum_{\bm{o}:\ a_i(\bm{o}) = a_i,\ a_j(\bm{o}) = a_j,\ \#_c(\bm{a}_{-ij}(\bm{o})) = k} v_{\bm{o}}
    $$

    Returns
    -------
    MarginalDistribution

    Raises
    ------
    ValueError
        If $i = j$ or a player index is out of range.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import Outcome
    from cooperationenforcer.calculations.markov import LimitDistribution, marginalize
    v = LimitDistribution.point_mass(3, Outcome.from_label('dcc').bits)
    marginalize(v, 0, 1).get('dc', 1)
    ```
    """
    n = v.n
    if i == j:
        raise ValueError("i and j must be distinct players")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"player indices must be in [0, {n}), got i={i}, j={j}")
    bits = outcome_bit_matrix(n)
    a_i, a_j = bits[:, i], bits[:, j]
    k = bits.sum(axis=1) - a_i - a_j
    pair = 2 * (1 - a_i) + (1 - a_j)
    u = np.zeros((4, n - 1))
    np.add.at(u, (pair, k), v.v)
    return MarginalDistribution(n=n, i=i, j=j, u=u)


def akin_residual(
    p: MemoryOneStrategy,
    i: int,
    v: LimitDistribution
) -> float:
    r"""
    Evaluates $(\bm{p} - \bm{p}^R) \cdot \bm{v}$ for the strategy at seat $i$,
    where $\bm{p}^R$ is the strategy that repeats its own previous action.

    For every limit distribution of a profile with $\bm{p}$ at seat $i$ the residual vanishes,
    irrespective of the other strategies and of the initial stage.
    """
    if p.n != v.n:
        raise ValueError(f"strategy is defined for {p.n} players but the distribution for {v.n}")
    repeat = outcome_bit_matrix(v.n)[:, i]
    return float((lift_strategy(p, i, v.n) - repeat) @ v.v)


def marginal_akin_coefficients(p: MemoryOneStrategy) -> np.ndarray:
    r"""
    Coefficients of Akin's identity for seat $i$ in terms of the marginal distribution $u_{a_i a_j, k}$:
    $$
    \sum_{k=0}^{n-2} \left[ (p_{c,k+1} - 1) u_{cc,k} + (p_{c,k} - 1) u_{cd,k}
        + p_{d,k+1} u_{dc,k} + p_{d,k} u_{dd,k} \right] = 0
    $$

    Returns
    -------
    np.ndarray
        Array of shape $(4, n-1)$ with rows `cc`, `cd`, `dc`, `dd`.
    """
    n = p.n
    p_c, p_d = np.asarray(p.p_c), np.asarray(p.p_d)
    k = np.arange(n - 1)
    return np.vstack([
        p_c[k + 1] - 1.0,
        p_c[k] - 1.0,
        p_d[k + 1],
        p_d[k],
    ])


def marginal_akin_residual(
    p: MemoryOneStrategy,
    u: MarginalDistribution
) -> float:
    r"""
    Right-hand side minus left-hand side of Akin's identity solved for the `cd` cell at $k = n-2$:
    $$
    (1 - p_{c,n-2}) u_{cd,n-2} = \sum_{(a_i a_j, k) \neq (cd, n-2)} b_{a_i a_j, k} u_{a_i a_j, k}
    $$
    where $b$ are the coefficients of
    [`marginal_akin_coefficients`][cooperationenforcer.calculations.markov.marginal_akin_coefficients]
    and `p` is the strategy of player `u.i`.
    """
    if p.n != u.n:
        raise ValueError(f"strategy is defined for {p.n} players but the marginal for {u.n}")
    coefficients = marginal_akin_coefficients(p)
    n = p.n
    lhs = (1.0 - p.p_c[n - 2]) * u.u[1, n - 2]
    rest = coefficients * u.u
    rhs = rest.sum() - rest[1, n - 2]
    return float(rhs - lhs)


def payoff_gap_coefficients(game: PublicGoodsGame) -> np.ndarray:
    r"""
    Grouped coefficients of $\pi_j - R_{c,n-1}$ in terms of $u_{a_i a_j, k}$:

    | cell         | coefficient              |
    |--------------|--------------------------|
    | $cc, k$      | $R_{c,k+1} - R_{c,n-1}$  |
    | $cd, k$      | $R_{d,k+1} - R_{c,n-1}$  |
    | $dc, k$      | $R_{c,k} - R_{c,n-1}$    |
    | $dd, k$      | $R_{d,k} - R_{c,n-1}$    |

    Returns
    -------
    np.ndarray
        Array of shape $(4, n-1)$.
    """
    table = game.payoff_table()
    k = np.arange(game.n - 1)
    return np.vstack([
        table[0][k + 1],
        table[1][k + 1],
        table[0][k],
        table[1][k],
    ]) - game.mutual_cooperation_payoff


def payoff_gap(
    game: PublicGoodsGame,
    u: MarginalDistribution
) -> float:
    r"""
    Computes $\pi_j - R_{c,n-1}$ from the marginal distribution of the pair $(i, j)$.

    Agrees with `expected_payoffs(game, v)[j] - R_{c,n-1}` for `u = marginalize(v, i, j)`.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    import numpy as np
    from cooperationenforcer.calculations.game import PublicGoodsGame
    from cooperationenforcer.calculations.markov import MarginalDistribution, payoff_gap
    u = np.zeros((4, 2))
    u[3, 0] = 1.0
    payoff_gap(PublicGoodsGame(n=3, r=2), MarginalDistribution(n=3, i=0, j=1, u=u))
    ```
    """
    if u.n != game.n:
        raise ValueError(f"marginal is over {u.n} players but the game has {game.n}")
    return float(np.sum(payoff_gap_coefficients(game) * u.u))

