import numpy as np
import pytest

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


def binomial_ci_halfwidth(p: float, n: int) -> float:
    """99% normal-approximation CI half-width for a frequency estimate."""
    return Z99 * np.sqrt(max(p * (1.0 - p), 1e-12) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
