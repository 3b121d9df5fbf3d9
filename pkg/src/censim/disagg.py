"""One-sided disaggregation: proportional shares and Huntington-Hill seats.

proportional_disaggregate splits a non-negative amount along positive
weights.  huntington_hill does the same in integers with a divisor draw
loop: priorities start at the weights themselves, and after each award the
winner's priority drops to p/sqrt(w(w+1)) where w counts its awards so far.
Ties prefer the larger weight, then the lower index, compared with exact
float equality (priorities derive deterministically from the weights, so no
epsilon is needed).  For integer weights, k*sum(p) awards are handed out as
k*p up front and only the remainder runs through the draw loop; in
particular x = k*sum(p) returns k*p exactly.

disaggregate_table applies either method fiber by fiber: each coarse source
cell is split over the finer keys of the target resolution that aggregate
back onto it, weighted by a distribution table.  The distribution may be
coarser than the target along any dimension; each fine key is projected
onto the distribution's resolution to find its weight (region to the
distribution's level, age to the containing distribution class, sex dropped
when the distribution is sexless, year matched directly or broadcast from a
single-year distribution).  key_dims names the dimensions along which the
distribution follows the source's own indexing rather than refining it.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError
from .regions import RegionManifest, coarser_or_equal, parent_region
from .table import NO_SEX, CensusTable, ResolutionSpec

_METHODS = ("proportional", "huntington_hill")


def _check_weights(p) -> list[float]:
    p = [float(v) for v in p]
    if not p:
        raise DataError("empty weight vector")
    for v in p:
        if not math.isfinite(v) or v < 0:
            raise DataError(f"negative or non-finite weight {v}")
    if math.fsum(p) <= 0:
        raise DataError("weights sum to zero")
    return p


def proportional_disaggregate(x: float, p) -> list[float]:
    """Split x along p: output j is p_j * x / sum(p)."""
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise DataError(f"cannot disaggregate {x}")
    p = _check_weights(p)
    total = math.fsum(p)
    return [v * x / total for v in p]


def _draw_loop(x: int, p: np.ndarray, w: np.ndarray) -> None:
    # priorities recomputed from integers each award, no error accumulation
    denom = np.sqrt(np.where(w > 0, w * (w + 1.0), 1.0))
    v = np.where(w > 0, p / denom, p)
    for _ in range(x):
        top = np.flatnonzero(v == v.max())
        j = top[0] if top.size == 1 else top[np.argmax(p[top])]
        w[j] += 1
        v[j] = p[j] / math.sqrt(w[j] * (w[j] + 1.0))


def huntington_hill(x: int, p) -> list[int]:
    """Integer split of x along p with the Huntington-Hill draw loop."""
    xf = float(x)
    if not xf.is_integer() or xf < 0:
        raise DataError(f"cannot split {x!r} into integer parts")
    x = int(xf)
    p = np.asarray(_check_weights(p), dtype=float)
    w = np.zeros(len(p), dtype=np.int64)
    if all(v.is_integer() for v in p.tolist()):
        total = int(p.sum())
        k, x = divmod(x, total)
        if k:
            w += k * p.astype(np.int64)
    _draw_loop(x, p, w)
    return [int(v) for v in w]


def _age_refinement(coarse: ResolutionSpec, fine: ResolutionSpec, what: str) -> dict[int, int]:
    """Map each fine age class to the coarse class containing it."""
    out: dict[int, int] = {}
    for lo in fine.ages:
        _, hi = fine.age_bounds(lo)
        try:
            parent = coarse.age_class_of(lo)
        except DataError:
            raise DataError(f"{what}: age class {lo} not covered") from None
        p_lo, p_hi = coarse.age_bounds(parent)
        if p_hi is not None and (hi is None or hi > p_hi):
            raise DataError(
                f"{what}: age class [{lo},{'inf' if hi is None else hi}) straddles "
                f"[{p_lo},{p_hi})")
        out[lo] = parent
    return out


def disaggregate_table(source: CensusTable, distribution: CensusTable, key_dims,
                       target: ResolutionSpec, method: str,
                       regions: RegionManifest | None = None,
                       uniform_fallback: bool = False) -> CensusTable:
    """Split each source cell over the target keys aggregating back onto it."""
    src = source.resolution
    dist = distribution.resolution
    if src.od or dist.od or target.od:
        raise DataError("origin-destination tables cannot be disaggregated")
    if method not in _METHODS:
        raise DataError(f"unknown method {method!r}; expected one of {_METHODS}")
    if target.years != src.years:
        raise DataError("the year range is never disaggregated; target must match source")
    if not coarser_or_equal(src.level, target.level):
        raise DataError(
            f"source level {src.level!r} is not coarser than target {target.level!r}")
    if src.sexes and src.sexes != target.sexes:
        raise DataError("a sexed source fixes the target's sex domain")
    if not coarser_or_equal(dist.level, target.level):
        raise DataError(
            f"distribution level {dist.level!r} does not cover target {target.level!r}")

    key_dims = tuple(key_dims)
    unknown = set(key_dims) - {"year", "region", "sex", "age"}
    if unknown:
        raise DataError(f"unknown key dimensions {sorted(unknown)}")
    single_year = dist.years[0] == dist.years[1]
    if "year" in key_dims:
        if dist.years[0] > src.years[0] or dist.years[1] < src.years[1]:
            raise DataError("distribution does not cover the source years")
    elif not single_year:
        raise DataError("a distribution without a year key must hold a single year")
    if "sex" in key_dims and not dist.sexes:
        raise DataError("key dimension sex needs a sexed distribution")
    if "age" in key_dims and dist.ages == (0,) and dist.open_age == 0:
        raise DataError("key dimension age needs a distribution with an age axis")

    # region fibers: fine codes under each coarse code
    refine_regions = target.level != src.level
    fine_by_coarse: dict[str, tuple[str, ...]] = {}
    if refine_regions:
        if regions is not None and regions.has_level(target.level):
            def fiber_regions(r):
                if r not in fine_by_coarse:
                    fine_by_coarse[r] = regions.descendants(r, src.level, target.level)
                return fine_by_coarse[r]
        elif dist.level == target.level:
            groups: dict[str, list[str]] = {}
            for code in {k[1] for k in distribution.keys()}:
                groups.setdefault(parent_region(code, target.level, src.level), []).append(code)
            fine_by_coarse = {r: tuple(sorted(cs)) for r, cs in groups.items()}

            def fiber_regions(r):
                return fine_by_coarse.get(r, ())
        else:
            raise DataError(
                "refining the region axis beyond the distribution's level needs "
                "a region manifest")

    # age fibers and weight projections
    to_source_class = _age_refinement(src, target, "target")
    ages_by_coarse: dict[int, list[int]] = {}
    for fine_age, coarse_age in to_source_class.items():
        ages_by_coarse.setdefault(coarse_age, []).append(fine_age)
    to_dist_class = _age_refinement(dist, target, "distribution")

    region_to_dist: dict[str, str] = {}

    def dist_weight(y, r, s, a):
        if dist.years[0] <= y <= dist.years[1]:
            py = y
        elif single_year:
            py = dist.years[0]
        else:
            raise DataError(f"distribution covers no year usable for {y}")
        pr = region_to_dist.get(r)
        if pr is None:
            pr = region_to_dist.setdefault(r, parent_region(r, target.level, dist.level))
        ps = s if dist.sexes else NO_SEX
        return distribution[(py, pr, ps, to_dist_class[a])]

    out: dict[tuple, float] = {}
    hh = method == "huntington_hill"
    for (y, r, s, a), x in source.items():
        if hh and not float(x).is_integer():
            raise DataError(f"{source.name}: non-integer value {x} at {(y, r, s, a)}")
        fiber = [
            (y, fr, fs, fa)
            for fr in (fiber_regions(r) if refine_regions else (r,))
            for fs in (target.sex_domain if not src.sexes else (s,))
            for fa in ages_by_coarse.get(a, ())
        ]
        if not fiber:
            raise DataError(f"{source.name}: no target keys under cell {(y, r, s, a)}")
        weights = [dist_weight(*key) for key in fiber]
        if not any(weights):
            if not uniform_fallback:
                raise DataError(
                    f"{source.name}: all-zero distribution under cell {(y, r, s, a)}")
            weights = [1.0] * len(fiber)
        shares = huntington_hill(int(x), weights) if hh else \
            proportional_disaggregate(x, weights)
        for key, share in zip(fiber, shares):
            if share:
                out[key] = float(share)
    return CensusTable(target, out, integer=hh, name=source.name)
