"""Small statistics helpers for the experiment harness."""

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class MannKendallResult:
    s: int
    var_s: float
    z: float
    p_decreasing: float  # one-sided p-value against "no trend"

    def decreasing(self, alpha: float = 0.05) -> bool:
        return self.p_decreasing < alpha


def mann_kendall(values: list[float]) -> MannKendallResult:
    """Mann-Kendall trend statistic with the tie-corrected variance."""
    n = len(values)
    if n < 3:
        raise ValueError("need at least 3 points for a trend test")
    s = 0
    for i in range(n - 1):
        x = values[i]
        for j in range(i + 1, n):
            d = values[j] - x
            if d > 0:
                s += 1
            elif d < 0:
                s -= 1
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    tie_term = sum(t * (t - 1) * (2 * t + 5) for t in counts.values() if t > 1)
    var_s = (n * (n - 1) * (2 * n + 5) - tie_term) / 18.0
    if var_s <= 0:
        # all values identical: no evidence of any trend
        return MannKendallResult(s=s, var_s=0.0, z=0.0, p_decreasing=1.0)
    if s > 0:
        z = (s - 1) / math.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / math.sqrt(var_s)
    else:
        z = 0.0
    p_decreasing = 0.5 * math.erfc(-z / math.sqrt(2.0))  # P(N(0,1) <= z)
    return MannKendallResult(s=s, var_s=var_s, z=z, p_decreasing=p_decreasing)


def sample_mean_std(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1; 0.0 for a single value)."""
    n = len(values)
    if n == 0:
        raise ValueError("no values")
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)
