"""Demographic balance equations and the residual-immigrant inversion."""

from __future__ import annotations

import logging
import math

from .errors import DataError
from .table import CensusTable

log = logging.getLogger(__name__)


def project_population(p, b, i, d, e) -> float:
    """Next-year population from this year's stocks and flows."""
    for name, v in (("population", p), ("births", b), ("immigrants", i),
                    ("deaths", d), ("emigrants", e)):
        if v < 0:
            raise DataError(f"{name} must be non-negative, got {v}")
    out = p + b + i - d - e
    if out < 0:
        raise DataError(f"projected population {out} is negative; flows exceed stock")
    return out


def project_population_regional(p, b, i, d, e, dm) -> float:
    """Regional form: the net internal migration dm may be negative."""
    out = project_population(p, b, i, d, e) + dm
    if out < 0:
        raise DataError(f"projected population {out} is negative; flows exceed stock")
    return out


def net_internal_migration(M: CensusTable) -> dict:
    """Inflow minus outflow per region, keyed like an ageless plain table.

    Values are signed, so the result is a plain dict rather than a census
    table.  Flows from a region to itself cancel exactly.
    """
    if not M.resolution.od:
        raise DataError("net internal migration needs an origin-destination table")
    out: dict = {}
    for (y, r, s, r2), v in M.items():
        if r == r2:
            continue
        src = (y, r, s, 0)
        dst = (y, r2, s, 0)
        out[src] = out.get(src, 0.0) - v
        out[dst] = out.get(dst, 0.0) + v
    return out


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def residual_immigrants(P: CensusTable, B: CensusTable, D: CensusTable,
                        E: CensusTable, diagnostics: dict | None = None) -> CensusTable:
    """Immigrant counts backed out of the balance equation, per (year, region, sex).

    I(y) = round(P(y+1) - P(y) - B(y) + E(y) + D(y)).  Negative residuals are
    floored at zero and counted in diagnostics["floored"].
    """
    flows = {"B": B, "D": D, "E": E}
    years = B.resolution.years
    for name, t in flows.items():
        if t.resolution.od or len(t.resolution.ages) != 1:
            raise DataError(f"{name} must be a plain table without an age axis")
        if t.resolution.years != years:
            raise DataError(f"{name} years {t.resolution.years} differ from {years}")
        if t.resolution.level != P.resolution.level:
            raise DataError(f"{name} level {t.resolution.level} differs from population")
        if t.resolution.sexes != P.resolution.sexes:
            raise DataError(f"{name} sex domain differs from population")
    if P.resolution.od or len(P.resolution.ages) != 1:
        raise DataError("population must be a plain table without an age axis")
    py0, py1 = P.resolution.years
    if py0 > years[0] or py1 < years[1] + 1:
        raise DataError(
            f"population years {py0}..{py1} must cover {years[0]}..{years[1] + 1}")

    cells = set()
    for t in (B, D, E):
        cells.update((y, r, s) for (y, r, s, _) in t.keys())
    for (y, r, s, _) in P.keys():
        if years[0] <= y <= years[1]:
            cells.add((y, r, s))
        if years[0] <= y - 1 <= years[1]:
            cells.add((y - 1, r, s))

    floored = 0
    entries = {}
    for (y, r, s) in sorted(cells):
        residual = (P[(y + 1, r, s, 0)] - P[(y, r, s, 0)] - B[(y, r, s, 0)]
                    + E[(y, r, s, 0)] + D[(y, r, s, 0)])
        value = round_half_away(residual)
        if value < 0:
            floored += 1
            value = 0
        if value:
            entries[(y, r, s, 0)] = value
    if floored:
        log.warning("floored %d negative immigrant residuals to zero", floored)
    if diagnostics is not None:
        diagnostics["floored"] = diagnostics.get("floored", 0) + floored
    return CensusTable(B.resolution, entries, integer=True, name="I")
