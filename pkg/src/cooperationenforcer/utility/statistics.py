# %%
import numpy as np


def l1_distance(
    x: np.ndarray,
    y: np.ndarray
) -> float:
    r"""
    Computes the $L_1$ distance $\sum_i |x_i - y_i|$ between two probability vectors.

    Raises
    ------
    ValueError
        If the vectors have different shapes.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"vectors must have the same shape, got {x.shape} and {y.shape}")
    return float(np.abs(x - y).sum())


def prefix_means(values: np.ndarray) -> np.ndarray:
    r"""
    Running means along the first axis, $\bar{x}_t = \frac{1}{t} \sum_{s=1}^{t} x_s$.

    Example
    -------
    ```pyodide install='cooperationenforcer'
    import numpy as np
    from cooperationenforcer.utility.statistics import prefix_means
    prefix_means(np.array([1.0, 0.0, 2.0])) # [1.0, 0.5, 1.0]
    ```
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or len(values) == 0:
        raise ValueError("values must be a non-empty array")
    stages = np.arange(1, len(values) + 1).reshape((-1,) + (1,) * (values.ndim - 1))
    return np.cumsum(values, axis=0) / stages


def binomial_interval(
    p: float,
    trials: int,
    sigmas: float = 3.0
) -> tuple[float, float]:
    r"""
    Given a success probability $p$ and a number of trials $N$,
    returns the interval of observed frequencies within `sigmas` standard deviations:
    $$
    p \pm k \sqrt{\frac{p(1-p)}{N}}
    $$

    | Symbol | Description            |
    |--------|------------------------|
    | $p$    | success probability    |
    | $N$    | number of trials       |
    | $k$    | number of standard deviations |

    Raises
    ------
    ValueError
        If $p$ is not a probability or $N < 1$.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    half_width = sigmas * np.sqrt(p * (1.0 - p) / trials)
    return p - half_width, p + half_width
