from __future__ import annotations

import math
from typing import NamedTuple

from scipy.stats import norm

from derailcast.errors import UndefinedStatisticError

SIGNIFICANCE_LEVEL = 0.1


class ZTest(NamedTuple):
    z: float
    p_value: float
    sided: str

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    @property
    def marker(self) -> str:
        return "*" if self.significant else ""


def two_proportion_z_test(
    acc_a: float, n_a: int, acc_b: float, n_b: int, sided: str = "one"
) -> ZTest:
    """Pooled two-proportion z-test of accuracy ``a`` against ``b``.

    One-sided tests the improvement direction (a > b).
    """
    if n_a < 1 or n_b < 1:
        raise ValueError("sample sizes must be >= 1")
    for acc in (acc_a, acc_b):
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy {acc} outside [0, 1]")
    if sided not in ("one", "two"):
        raise ValueError("sided must be 'one' or 'two'")
    pooled = (acc_a * n_a + acc_b * n_b) / (n_a + n_b)
    if pooled <= 0.0 or pooled >= 1.0:
        raise UndefinedStatisticError(f"pooled proportion {pooled} gives zero variance")
    se = math.sqrt(pooled * (1 - pooled) * (1 / n_a + 1 / n_b))
    z = (acc_a - acc_b) / se
    if sided == "one":
        p = float(norm.sf(z))
    else:
        p = float(2 * norm.sf(abs(z)))
    return ZTest(z, min(p, 1.0), sided)
