"""Sullivan-method life tables and the fertility summary indicators.

From a death-probability series q(0..a_max) the table fills survivors l,
deaths d, person-years at risk L = l - alpha*d, and cumulative person-years
T, closing with the analytic geometric tail beyond a_max where q stays
constant: sum of L from a_max on equals l_amax * (1 - q_amax/2) / q_amax.
Life expectancy is e = T / l; the radix l0 cancels out of it.

tfr sums age-specific fertility rates; mac is their rate-weighted mean age.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LifeTable:
    q: np.ndarray
    l: np.ndarray
    d: np.ndarray
    L: np.ndarray
    T: np.ndarray
    e: np.ndarray
    l0: float
    a_max: int


def build_life_table(q, alpha, a_max: int | None = None,
                     l0: float = 100000.0) -> LifeTable:
    """Fill the survivor, person-year, and expectancy series from q."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise DataError("q must be a non-empty series")
    if ((q < 0) | (q > 1)).any():
        raise DataError("death probabilities must lie in [0,1]")
    if a_max is None:
        a_max = q.size - 1
    elif a_max >= q.size:
        # constant extension of the last given probability
        q = np.concatenate([q, np.full(a_max - q.size + 1, q[-1])])
    else:
        raise DataError(f"a_max={a_max} truncates the {q.size}-term series")
    if q[a_max] == 0.0:
        raise DataError("q at the open age class must be positive (the tail diverges)")
    if l0 <= 0:
        raise DataError(f"radix must be positive, got {l0}")

    a = np.array([float(alpha(i)) for i in range(a_max + 1)])
    if ((a < 0) | (a > 1)).any():
        raise DataError("alpha values must lie in [0,1]")

    l = np.empty(a_max + 1)
    d = np.empty(a_max + 1)
    l[0] = l0
    for i in range(a_max):
        d[i] = l[i] * q[i]
        l[i + 1] = l[i] - d[i]
    d[a_max] = l[a_max] * q[a_max]
    L = l - a * d
    T = np.empty(a_max + 1)
    # Geometric tail: constant hazard beyond a_max, half-year credit past the
    # first open-class year (the first year keeps its own separation factor,
    # which collapses to l*(1-q/2)/q whenever alpha(a_max) == 1/2).
    qa = q[a_max]
    T[a_max] = L[a_max] + l[a_max] * (1.0 - qa) * (1.0 - qa / 2.0) / qa
    for i in range(a_max - 1, -1, -1):
        T[i] = T[i + 1] + L[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(l > 0, T / np.where(l > 0, l, 1.0), 0.0)
    return LifeTable(q=q, l=l, d=d, L=L, T=T, e=e, l0=float(l0), a_max=a_max)


def life_expectancy(q, a: int, alpha) -> float:
    """Remaining expected years at age a under the probability series q."""
    table = build_life_table(q, alpha)
    if not 0 <= a <= table.a_max:
        raise DataError(f"age {a} outside 0..{table.a_max}")
    if table.l[a] <= 0:
        raise DataError(f"no survivors at age {a}")
    return float(table.T[a] / table.l[a])


def _as_age_series(rates) -> dict[int, float]:
    if hasattr(rates, "items"):
        series = {int(a): float(v) for a, v in rates.items()}
    else:
        series = {a: float(v) for a, v in enumerate(rates)}
    for a, v in series.items():
        if a < 0 or v < 0:
            raise DataError(f"invalid fertility rate {v} at age {a}")
    return series


def tfr(rates) -> float:
    """Total fertility rate: the sum of the age-specific rates."""
    return sum(_as_age_series(rates).values())


def mac(rates) -> float:
    """Mean age at childbearing: rate-weighted mean of the ages."""
    series = _as_age_series(rates)
    total = sum(series.values())
    if total <= 0:
        raise DataError("mean childbearing age undefined for all-zero rates")
    return sum(a * v for a, v in series.items()) / total
