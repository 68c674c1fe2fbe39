# %%
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from cooperationenforcer.calculations.game import (
    Action,
    InapplicableError,
    MemoryOneStrategy,
    PublicGoodsGame,
    StrategyProfile,
    sample_strategy,
    stage_payoff,
)
from cooperationenforcer.calculations.markov import (
    expected_payoffs,
    limit_distribution,
    marginal_akin_coefficients,
    payoff_gap_coefficients,
)
from cooperationenforcer.data.constants import (
    cesaro_horizon,
    payoff_bound_tolerance,
    sampler_margin,
    strictness_slack,
)

logger = logging.getLogger(__name__)

REGIMES = ('no-dilemma', 'enforcing-impossible', 'enforcing-exists')


@dataclass(frozen=True)
class Constraint:
    """One constraint of the enforcing conditions, `value` compared against `bound`."""
    name: str
    bound: float
    value: float
    satisfied: bool


@dataclass(frozen=True)
class EnforcementVerdict:
    """
    Report of [`check_enforcing`][cooperationenforcer.calculations.enforcement.check_enforcing].

    `overall` is true exactly when the game is applicable and every constraint is satisfied.
    """
    applicable: bool
    constraints: tuple[Constraint, ...]
    overall: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'constraints', tuple(self.constraints))
        object.__setattr__(
            self, 'overall',
            bool(self.applicable and all(c.satisfied for c in self.constraints))
        )

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.constraints if not c.satisfied]

    def to_dict(self) -> dict:
        return {
            'applicable': self.applicable,
            'overall': self.overall,
            'constraints': [
                {**asdict(c), 'bound': c.bound if np.isfinite(c.bound) else None}
                for c in self.constraints
            ],
        }


@dataclass(frozen=True)
class CollusionReport:
    r"""
    Average payoff of an alliance of $m$ players with $k$ cooperators among them,
    facing $n - m$ cooperating players.

    `threshold_crossed` is true if $r < n/m$, where collusion starts to pay.
    """
    m: int
    k: int
    collusive_avg: float
    gain: float
    threshold_crossed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def necessary_conditions(
    game: PublicGoodsGame,
    p: MemoryOneStrategy
) -> list[tuple[str, bool]]:
    """
    Evaluates the two necessary conditions of a cooperation enforcing strategy independently:

    - `p_c[n-2] < 1`: a strategy that keeps cooperating after a single defection cannot enforce.
    - `r/n > 1/2`: no cooperation enforcing strategy exists for $r \\le n/2$.
    """
    _check_dimensions(game, p)
    n = game.n
    return [
        ('p_c[n-2] < 1', p.p_c[n - 2] < 1.0),
        ('r/n > 1/2', game.r > n / 2),
    ]


def is_applicable(game: PublicGoodsGame) -> bool:
    """True if $r > n/2$, the strict existence threshold of cooperation enforcing strategies."""
    return game.r > game.n / 2


def _check_dimensions(game: PublicGoodsGame, p: MemoryOneStrategy) -> None:
    if p.n != game.n:
        raise ValueError(f"strategy is defined for {p.n} players but the game has {game.n}")


def _temptation(game: PublicGoodsGame) -> float:
    # R_{d,n-1} - R_{c,n-1} = 1 - r/n
    return stage_payoff(game, Action.DEFECT, game.n - 1) - game.mutual_cooperation_payoff


def theorem1_bounds(
    game: PublicGoodsGame,
    p_c_n2: float
) -> np.ndarray:
    r"""
    Computes the upper bounds on $p_{d,0}, \dots, p_{d,n-1}$ of a cooperation enforcing strategy
    with given $p_{c,n-2}$.

    With $R = R_{c,n-1}$ and $D = R_{d,n-1} - R_{c,n-1} = 1 - r/n$:
    $$
    p_{d,k} < \frac{(1 - p_{c,n-2})(R - R_{d,k})}{D} \quad (0 \le k \le n-2), \qquad
    p_{d,n-1} < \frac{(1 - p_{c,n-2})(R - R_{c,n-2})}{D}
    $$

    | Symbol      | Description                                                 |
    |-------------|-------------------------------------------------------------|
    | $p_{c,n-2}$ | cooperation probability after being the only other defector |
    | $R_{a,k}$   | stage payoff                                                |
    | $D$         | one-stage gain of defecting against $n-1$ cooperators       |

    Bounds above 1 do not constrain the probability.

    See Also
    --------
    [`cooperationenforcer.calculations.enforcement.enforcement_coefficients`][]

    Parameters
    ----------
    game : PublicGoodsGame
        The game, with $r > n/2$.
    p_c_n2 : float
        $p_{c,n-2} \in [0, 1)$.

    Returns
    -------
    np.ndarray
        The $n$ bounds, strictly positive for $p_{c,n-2} < 1$.

    Raises
    ------
    InapplicableError
        If $r \le n/2$.
    ValueError
        If `p_c_n2` is not in $[0, 1)$.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import PublicGoodsGame
    from cooperationenforcer.calculations.enforcement import theorem1_bounds
    theorem1_bounds(PublicGoodsGame(n=3, r=2), p_c_n2=0.0) # [3, 1, 2]
    ```
    """
    if not is_applicable(game):
        raise InapplicableError(
            f"cooperation enforcing strategies require r > n/2, got r = {game.r} for n = {game.n}"
        )
    if not 0.0 <= p_c_n2 < 1.0:
        raise ValueError(f"p_c_n2 must be in [0, 1), got {p_c_n2}")
    n = game.n
    table = game.payoff_table()
    R = game.mutual_cooperation_payoff
    scale = (1.0 - p_c_n2) / _temptation(game)
    bounds = scale * (R - table[1])
    bounds[n - 1] = scale * (R - table[0][n - 2])
    return bounds


def enforcement_coefficients(
    game: PublicGoodsGame,
    p: MemoryOneStrategy
) -> np.ndarray:
    r"""
    Coefficients $b_{a_i a_j, k}$ of $(1 - p_{c,n-2})(\pi_j - R_{c,n-1}) = \sum b_{a_i a_j, k} u_{a_i a_j, k}$
    for a strategy $\bm{p}$ at seat $i$ and any opponent $j$.

    The `cd` cell at $k = n-2$ is eliminated with Akin's identity, so that
    $$
    b = (1 - p_{c,n-2})\, g + D\, a
    $$
    with $g$ the payoff gap coefficients, $a$ the marginal Akin coefficients and
    $D = 1 - r/n$. The eliminated cell is returned as 0.
    If every coefficient except $b_{cc,n-2}$ and the eliminated one is negative,
    no opponent earns more than $R_{c,n-1}$.

    Returns
    -------
    np.ndarray
        Array of shape $(4, n-1)$ with rows `cc`, `cd`, `dc`, `dd`.
    """
    _check_dimensions(game, p)
    n = game.n
    q = 1.0 - p.p_c[n - 2]
    b = q * payoff_gap_coefficients(game) + _temptation(game) * marginal_akin_coefficients(p)
    b[1, n - 2] = 0.0
    return b


def check_enforcing(
    game: PublicGoodsGame,
    p: MemoryOneStrategy,
    slack: float = strictness_slack,
) -> EnforcementVerdict:
    r"""
    Checks whether a memory-one strategy satisfies the sufficient conditions of a
    cooperation enforcing strategy:

    1. it cooperates in the first stage,
    2. $p_{c,n-1} = 1$ and $p_{c,n-2} < 1$,
    3. every $p_{d,k}$ is strictly below its bound from
       [`theorem1_bounds`][cooperationenforcer.calculations.enforcement.theorem1_bounds].

    The entries $p_{c,k}$, $k \le n-3$, are unconstrained and reported as satisfied.
    Strict inequalities are tested with `slack`, so a value exactly at its bound fails.

    Warnings
    --------
    This certifies the sufficient region only. Strategies outside of it may still enforce cooperation.

    Parameters
    ----------
    game : PublicGoodsGame
        The game.
    p : MemoryOneStrategy
        The strategy to check.
    slack : float
        Margin of the strict inequalities.

    Returns
    -------
    EnforcementVerdict
        Not applicable (and not passing) if $r \le n/2$.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import PublicGoodsGame, classic_strategy
    from cooperationenforcer.calculations.enforcement import check_enforcing
    check_enforcing(PublicGoodsGame(n=3, r=2), classic_strategy('WSLS', 3)).overall
    ```
    """
    _check_dimensions(game, p)
    n = game.n
    applicable = is_applicable(game)
    constraints = [
        Constraint('first_move = 1', 1.0, p.first_move, abs(p.first_move - 1.0) <= slack),
        Constraint(f'p_c[{n - 1}] = 1', 1.0, p.p_c[n - 1], abs(p.p_c[n - 1] - 1.0) <= slack),
        Constraint(f'p_c[{n - 2}] < 1', 1.0, p.p_c[n - 2], p.p_c[n - 2] < 1.0 - slack),
    ]
    constraints += [
        Constraint(f'p_c[{k}] free', 1.0, p.p_c[k], True) for k in range(n - 2)
    ]
    if applicable and p.p_c[n - 2] < 1.0:
        bounds = theorem1_bounds(game, p.p_c[n - 2])
    else:
        bounds = np.full(n, np.nan)
    for k in range(n):
        satisfied = bool(np.isfinite(bounds[k]) and p.p_d[k] < bounds[k] - slack)
        constraints.append(Constraint(f'p_d[{k}] < bound', float(bounds[k]), p.p_d[k], satisfied))
    verdict = EnforcementVerdict(applicable=applicable, constraints=constraints)
    logger.debug("check_enforcing(n=%d, r=%g): overall=%s failed=%s", n, game.r, verdict.overall, verdict.failed)
    return verdict


def sample_enforcing(
    game: PublicGoodsGame,
    seed: Union[int, np.random.Generator, None] = None,
    margin: float = sampler_margin,
    slack: float = strictness_slack,
) -> MemoryOneStrategy:
    r"""
    Draws a strategy from the region certified by
    [`check_enforcing`][cooperationenforcer.calculations.enforcement.check_enforcing].

    | Entry                          | Distribution                                     |
    |--------------------------------|--------------------------------------------------|
    | $p_{c,n-1}$, first move        | 1                                                |
    | $p_{c,n-2}$                    | uniform on $[0, \min(1-\eta, 1-(s+\eta)/\min_k b_k^0)]$ |
    | $p_{c,k}$, $k \le n-3$         | uniform on $[0, 1]$                              |
    | $p_{d,k}$                      | uniform on $[0, \max(0, \min(1, b_k) - \eta)]$  |

    where $b_k$ are the bounds for the drawn $p_{c,n-2}$, $b_k^0$ the bounds at $p_{c,n-2} = 0$,
    $\eta$ is `margin` and $s$ is `slack`. Every drawn $p_{d,k}$ then sits below $b_k - s$.

    Raises
    ------
    InapplicableError
        If $r \le n/2$, or if the region is too narrow to keep every bound above $s + \eta$.
    """
    if not is_applicable(game):
        raise InapplicableError(
            f"cooperation enforcing strategies require r > n/2, got r = {game.r} for n = {game.n}"
        )
    n = game.n
    floor = min(theorem1_bounds(game, 0.0))
    # every bound scales with 1 - p_c[n-2]; cap it so the smallest stays above slack + margin
    cap = min(1.0 - margin, 1.0 - (slack + margin) / floor)
    if cap <= 0.0:
        raise InapplicableError(
            f"the enforcing region for n = {n}, r = {game.r} is narrower than slack + margin = {slack + margin:g}"
        )
    rng = np.random.default_rng(seed)
    p_c_n2 = rng.uniform(0.0, cap)
    bounds = theorem1_bounds(game, p_c_n2)
    p_c = list(rng.random(n - 2)) + [p_c_n2, 1.0]
    upper = np.maximum(0.0, np.minimum(1.0, bounds) - margin)
    p_d = rng.random(n) * upper
    return MemoryOneStrategy(n=n, p_c=p_c, p_d=p_d, first_move=1.0, name='sampled-enforcing')


def collusion_gain(
    game: PublicGoodsGame,
    m: int,
    k: int
) -> CollusionReport:
    r"""
    Computes the average payoff of an alliance of $m$ players, $k$ of whom cooperate,
    while the remaining $n - m$ players cooperate:
    $$
    \bar{\pi}_{m,k} = \frac{k R_{c, k+n-m-1} + (m-k) R_{d, k+n-m}}{m}
    $$
    and its gain over mutual cooperation
    $$
    \bar{\pi}_{m,k} - R_{c,n-1} = \frac{(m-k)(n - mr)}{mn}
    $$

    | Symbol | Description                           |
    |--------|---------------------------------------|
    | $m$    | alliance size, $2 \le m \le n$        |
    | $k$    | cooperators in the alliance           |

    The gain is positive only if $k < m$ and $r < n/m$.

    Raises
    ------
    ValueError
        If $m$ or $k$ is out of range.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    from cooperationenforcer.calculations.game import PublicGoodsGame
    from cooperationenforcer.calculations.enforcement import collusion_gain
    collusion_gain(PublicGoodsGame(n=4, r=1.8), m=2, k=0).gain # 0.1
    ```
    """
    n = game.n
    if not isinstance(m, (int, np.integer)) or not 2 <= m <= n:
        raise ValueError(f"m must be an integer in [2, {n}], got {m}")
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= m:
        raise ValueError(f"k must be an integer in [0, {m}], got {k}")
    total = 0.0
    if k > 0:
        total += k * stage_payoff(game, Action.COOPERATE, k + n - m - 1)
    if m - k > 0:
        total += (m - k) * stage_payoff(game, Action.DEFECT, k + n - m)
    collusive_avg = total / m
    gain = collusive_avg - game.mutual_cooperation_payoff
    closed_form = (m - k) * (n - m * game.r) / (m * n)
    if abs(gain - closed_form) > 1e-12:
        logger.warning("collusion gain %.17g differs from its closed form %.17g", gain, closed_form)
    return CollusionReport(
        m=int(m),
        k=int(k),
        collusive_avg=collusive_avg,
        gain=gain,
        threshold_crossed=game.r < n / m,
    )


def collusion_scan(game: PublicGoodsGame) -> list[CollusionReport]:
    """
    Collusion reports for every alliance size $2 \\le m \\le n$ and $0 \\le k < m$ cooperators.

    For $r > n/2$ every gain is non-positive, so that mutual cooperation is collusion resistant.
    """
    reports = [
        collusion_gain(game, m, k)
        for m in range(2, game.n + 1)
        for k in range(m)
    ]
    profitable = [(c.m, c.k) for c in reports if c.gain > 0]
    if profitable:
        logger.info("collusion pays for n=%d, r=%g at (m, k) = %s", game.n, game.r, profitable)
    return reports


@dataclass(frozen=True)
class Region:
    n: int
    r: float
    regime: str
    min_profitable_alliance: Optional[int]
    max_profitable_alliance: Optional[int]


def region_of(n: int, r: float) -> Region:
    r"""
    Classifies a point $(n, r)$ of the parameter plane:

    | Regime                 | Condition            |
    |------------------------|----------------------|
    | `no-dilemma`           | $r \le 1$ or $r \ge n$ |
    | `enforcing-impossible` | $1 < r \le n/2$      |
    | `enforcing-exists`     | $n/2 < r < n$        |

    Alliances of size $m$ with $r < n/m$ can profit from collusion; the smallest and largest such $m \ge 2$
    are reported (`None` if there is none).

    Raises
    ------
    ValueError
        If $n < 2$ or $r \le 0$.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if r <= 1 or r >= n:
        regime = 'no-dilemma'
    elif r <= n / 2:
        regime = 'enforcing-impossible'
    else:
        regime = 'enforcing-exists'
    sizes = [m for m in range(2, n + 1) if m * r < n]
    return Region(
        n=int(n),
        r=float(r),
        regime=regime,
        min_profitable_alliance=min(sizes) if sizes else None,
        max_profitable_alliance=max(sizes) if sizes else None,
    )


def wsls_threshold(n: int) -> float:
    r"""
    $\max\{n/2, 2n/(n+1)\}$, above which the Win-Stay Lose-Shift strategy that restarts
    cooperation after mutual defection (`WSLSReset`) is cooperation enforcing.
    For $n \ge 3$ this is $n/2$, the threshold of the plain `WSLS` as well.
    """
    return max(n / 2, 2 * n / (n + 1))


def grim_trigger_threshold(n: int) -> float:
    """$n/2$, above which Grim Trigger is cooperation enforcing."""
    return n / 2


@dataclass(frozen=True)
class PayoffBoundReport:
    max_opponent_payoff: float
    max_diagnostic: float
    violations: int
    samples: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def verify_payoff_bound(
    game: PublicGoodsGame,
    p: MemoryOneStrategy,
    seat: int = 0,
    n_profiles: int = 100,
    seed: Optional[int] = None,
    T: int = cesaro_horizon,
    tolerance: float = payoff_bound_tolerance,
) -> PayoffBoundReport:
    r"""
    Monte Carlo check that no opponent of `p` earns more than $R_{c,n-1}$.

    `n_profiles` opponent profiles are drawn with
    [`sample_strategy`][cooperationenforcer.calculations.game.sample_strategy];
    payoffs are computed from Cesaro averages of horizon $T$.
    An opponent payoff above $R_{c,n-1}$ + `tolerance` counts as a violation.
    """
    _check_dimensions(game, p)
    if not 0 <= seat < game.n:
        raise ValueError(f"seat must be in [0, {game.n}), got {seat}")
    rng = np.random.default_rng(seed)
    R = game.mutual_cooperation_payoff
    max_payoff, max_diagnostic, violations = -np.inf, 0.0, 0
    for _ in range(n_profiles):
        strategies = [sample_strategy(game.n, rng) for _ in range(game.n)]
        strategies[seat] = p
        v = limit_distribution(StrategyProfile(tuple(strategies)), method='cesaro', T=T)
        payoffs = np.delete(expected_payoffs(game, v), seat)
        max_payoff = max(max_payoff, float(payoffs.max()))
        max_diagnostic = max(max_diagnostic, v.diagnostic or 0.0)
        violations += int(np.any(payoffs > R + tolerance))
    if violations:
        logger.warning("%d of %d opponent profiles exceed the mutual cooperation payoff", violations, n_profiles)
    return PayoffBoundReport(
        max_opponent_payoff=max_payoff,
        max_diagnostic=max_diagnostic,
        violations=violations,
        samples=n_profiles,
    )


@dataclass(frozen=True)
class EquilibriumReport:
    mutual_cooperation: float
    payoffs: tuple[float, ...]
    max_deviation_payoff: float
    deviations: int
    holds: bool


def verify_equilibrium(
    game: PublicGoodsGame,
    profile: StrategyProfile,
    n_deviations: int = 1000,
    seed: Optional[int] = None,
    T: int = cesaro_horizon,
    tolerance: float = payoff_bound_tolerance,
) -> EquilibriumReport:
    r"""
    Checks that a profile of cooperation enforcing strategies is an equilibrium against
    sampled unilateral memory-one deviations.

    The profile itself must concentrate on mutual cooperation ($v_{c^n} > 1 - 10^{-6}$)
    with every player earning $R_{c,n-1}$. Each deviation replaces one seat, chosen in turn,
    by a strategy from [`sample_strategy`][cooperationenforcer.calculations.game.sample_strategy];
    the deviator must not earn more than $R_{c,n-1}$ + `tolerance`.
    """
    if profile.n != game.n:
        raise ValueError(f"profile has {profile.n} seats but the game has {game.n} players")
    rng = np.random.default_rng(seed)
    R = game.mutual_cooperation_payoff
    v = limit_distribution(profile, method='cesaro', T=T)
    payoffs = expected_payoffs(game, v)
    holds = v.mutual_cooperation > 1.0 - 1e-6 and bool(np.all(np.abs(payoffs - R) <= tolerance))

    max_deviation = -np.inf
    for d in range(n_deviations):
        seat = d % game.n
        deviant = profile.replace(seat, sample_strategy(game.n, rng))
        deviation_payoff = float(expected_payoffs(game, limit_distribution(deviant, method='cesaro', T=T))[seat])
        max_deviation = max(max_deviation, deviation_payoff)
    if n_deviations and max_deviation > R + tolerance:
        holds = False
    return EquilibriumReport(
        mutual_cooperation=v.mutual_cooperation,
        payoffs=tuple(float(x) for x in payoffs),
        max_deviation_payoff=float(max_deviation),
        deviations=n_deviations,
        holds=holds,
    )
