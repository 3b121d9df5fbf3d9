"""Event counts, average rates, and birthday-to-birthday probabilities.

The conversion between a year's event count and the probability that the
event hits an individual between two birthdays runs through the average
rate X / P_avg and the correction rate/(1 + alpha*rate), where alpha is the
expected fraction of the year of life spent before the event.  alpha = 1/2
throughout for model parametrisation; published death tables are matched
with alpha(0) = 0.923 and 1/2 at every other age.

farr_probability_model folds the same correction into census tables: the
denominator gains half the cohort leavers Q = D + E (internal migrants are
not cohort leavers), and the result averages the quotients of two
consecutive years, with the year index clamped at the last census year.
"""

from __future__ import annotations

import logging

from .errors import DataError
from .table import CensusTable

log = logging.getLogger(__name__)


def model_alpha(age: int) -> float:
    """Expected pre-event year fraction used for model parametrisation."""
    return 0.5


def death_table_alpha(alpha0: float = 0.923):
    """Profile matching published death tables: alpha0 at age 0, 1/2 above."""
    if not 0.0 <= alpha0 <= 1.0:
        raise DataError(f"alpha(0) must lie in [0,1], got {alpha0}")

    def alpha(age: int) -> float:
        return alpha0 if age == 0 else 0.5

    return alpha


def average_rate(X: CensusTable, P_avg: CensusTable) -> CensusTable:
    """Elementwise X / P_avg; events without exposure are an error."""
    if X.resolution != P_avg.resolution:
        raise DataError("count and exposure tables must share a resolution")
    out = {}
    for key, x in X.items():
        p = P_avg[key]
        if p <= 0:
            raise DataError(f"{X.name}: events at {key} but no exposure")
        out[key] = x / p
    return CensusTable(X.resolution, out, name=f"rate({X.name})")


def farr_probability(rate: float, alpha_a: float) -> float:
    """Probability between birthdays for an average event rate."""
    rate = float(rate)
    if rate < 0:
        raise DataError(f"negative rate {rate}")
    if not 0.0 <= alpha_a <= 1.0:
        raise DataError(f"alpha must lie in [0,1], got {alpha_a}")
    return rate / (1.0 + alpha_a * rate)


def invert_farr(q: float, P_avg: float, alpha_a: float) -> float:
    """Expected event count whose Farr probability is q."""
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise DataError(f"probability {q} outside [0,1]")
    if not 0.0 <= alpha_a <= 1.0:
        raise DataError(f"alpha must lie in [0,1], got {alpha_a}")
    if P_avg < 0:
        raise DataError(f"negative exposure {P_avg}")
    denom = 1.0 - alpha_a * q
    if denom <= 0.0:
        raise DataError("probability 1 with alpha 1 has no finite count")
    return P_avg * q / denom


def farr_probability_model(X: CensusTable, P: CensusTable, Q: CensusTable,
                           y_N: int | None = None,
                           diagnostics: dict | None = None) -> CensusTable:
    """Per-cell event probabilities from counts X, population P, leavers Q.

    For each year y the count is divided by the mid-year population plus
    half the leavers, and the probability is the mean of this quotient at y
    and at min(y+1, y_N).  Results are clipped into [0,1]; the number of
    clipped cells lands in diagnostics["clipped"] and in the log.
    """
    xres = X.resolution
    if xres.od or P.resolution.od or Q.resolution.od:
        raise DataError("probability tables have no origin-destination form")
    if y_N is None:
        y_N = P.resolution.years[1]
    if xres.years[1] > y_N:
        raise DataError(f"counts reach {xres.years[1]}, past the last census year {y_N}")
    if Q.resolution.years[0] > xres.years[0] or Q.resolution.years[1] < xres.years[1]:
        raise DataError("leaver table does not cover the count years")
    need_last = min(xres.years[1] + 1, y_N)
    if P.resolution.years[0] > xres.years[0] or P.resolution.years[1] < need_last:
        raise DataError("population table does not cover the count years")

    # single-year quotients X / (P_avg + Q/2)
    quotient: dict[tuple, float] = {}
    for (y, r, s, a), x in X.items():
        p_avg = (P[(y, r, s, a)] + P[(min(y + 1, y_N), r, s, a)]) / 2.0
        denom = p_avg + Q[(y, r, s, a)] / 2.0
        if denom <= 0:
            raise DataError(f"{X.name}: events at {(y, r, s, a)} but no exposure")
        quotient[(y, r, s, a)] = x / denom

    by_year: dict[int, set] = {}
    for (y, r, s, a) in quotient:
        by_year.setdefault(y, set()).add((r, s, a))

    out: dict[tuple, float] = {}
    clipped = 0
    for y in xres.year_list():
        y_next = min(y + 1, y_N)
        cells = by_year.get(y, set()) | by_year.get(y_next, set())
        for (r, s, a) in cells:
            v = 0.5 * quotient.get((y, r, s, a), 0.0) \
                + 0.5 * quotient.get((y_next, r, s, a), 0.0)
            if v > 1.0:
                clipped += 1
                v = 1.0
            out[(y, r, s, a)] = v
    if clipped:
        log.warning("%s: clipped %d probabilities above 1", X.name, clipped)
    if diagnostics is not None:
        diagnostics["clipped"] = diagnostics.get("clipped", 0) + clipped
    return CensusTable(xres, out, name=f"prob({X.name})")
