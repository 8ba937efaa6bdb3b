"""Binomial confidence intervals for sampled probabilities."""

import math
from functools import lru_cache
from typing import Tuple

from scipy import stats


@lru_cache(maxsize=16)
def z_score(confidence: float) -> float:
    """Two-sided normal quantile for a confidence level in (0, 1)."""
    if not 0 < confidence < 1:
        raise ValueError(f"Confidence level must be in (0, 1), got {confidence}")
    return float(stats.norm.ppf(1 - (1 - confidence) / 2))


def wilson_interval(successes: int, total: int, confidence: float = 0.95) -> Tuple[float, float]:
    """
    Wilson score interval for a binomial proportion.

    Keeps valid coverage when the proportion is near 0, which is where most
    tail probabilities of the distance live.

    Args:
        successes: Number of hits
        total: Number of trials
        confidence: Confidence level (default 95%)

    Returns:
        Tuple of (lower, upper), clipped to [0, 1]; (0.0, 1.0) when total is 0
    """
    if total == 0:
        return 0.0, 1.0
    if not 0 <= successes <= total:
        raise ValueError(f"successes={successes} is outside 0..{total}")

    z = z_score(confidence)
    p_hat = successes / total
    denominator = 1 + z ** 2 / total
    center = (p_hat + z ** 2 / (2 * total)) / denominator
    spread = z * math.sqrt(p_hat * (1 - p_hat) / total + z ** 2 / (4 * total ** 2)) / denominator
    lower = 0.0 if successes == 0 else max(0.0, center - spread)
    upper = 1.0 if successes == total else min(1.0, center + spread)
    return lower, upper


def standard_error(p: float, total: int) -> float:
    """sqrt(p (1 - p) / total)."""
    if total <= 0:
        raise ValueError(f"Sample size must be positive, got {total}")
    return math.sqrt(p * (1 - p) / total)
