"""Stochastic cohort microsimulator.

People are stored as parallel numpy arrays and advanced one calendar year at
a time.  A person counted with completed age a at the census on Jan 1 faces
the probability-table row for age a during that year; newborns and
immigrants join at the end of the step they arrive in and face no events
until the next year.  Every random decision comes from a fixed slot of a
counter-based SplitMix64 substream keyed by (run seed, person id, year), so
results are reproducible across platforms and insensitive to processing
order.

Events within a person-year: death, emigration and (for females) birth and
internal migration each get an occurrence draw and a uniform time in the
year.  The earliest terminal event (death or emigration, death winning exact
ties) ends the year; a birth or internal move happens only if it falls
strictly before that.  Deaths and emigrations are attributed to the region
the person occupies at the event time.

Monthly stepping replays the same drawn events in time order, applying
newborns and immigrants at the end of the month they arrive in; because all
draws are keyed by (person, year) up front, the censuses on Jan 1 are
identical to annual stepping by construction.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .balance import round_half_away
from .disagg import huntington_hill
from .errors import DataError
from .rng import stream_array, uniform, uniform_array
from .table import CensusTable, ResolutionSpec, SEXES

IM_MODES = ("none", "interregional", "biregional", "full")
STEPS = ("year", "month")

# substream slots, one per decision in a person-year
S_DEATH_U, S_DEATH_T = 0, 1
S_EMIG_U, S_EMIG_T = 2, 3
S_BIRTH_U, S_BIRTH_T = 4, 5
S_IE_U, S_IE_T = 6, 7
S_DEST = 8
S_NEWBORN_SEX = 9
S_OFFSET = 11
S_ARRIVAL = 12

MALE_SHARE = 0.513234  # long-run share of male newborns

_FULL_AGES = tuple(range(101))
EVENT_NAMES = ("B", "D", "E", "I", "IE", "II", "OD")


@dataclass(frozen=True)
class ScenarioConfig:
    t0: int
    te: int
    step: str = "year"
    scale: float = 1.0
    runs: int = 1
    im_mode: str = "none"
    seed: int = 0
    male_share: float = MALE_SHARE

    def __post_init__(self):
        if self.t0 >= self.te:
            raise DataError(f"start year {self.t0} must precede end year {self.te}")
        if self.step not in STEPS:
            raise DataError(f"unknown step {self.step!r}, expected one of {STEPS}")
        if not 0 < self.scale <= 1:
            raise DataError(f"scale must lie in (0,1], got {self.scale}")
        if self.runs < 1:
            raise DataError("need at least one run")
        if self.im_mode not in IM_MODES:
            raise DataError(f"unknown im_mode {self.im_mode!r}, expected one of {IM_MODES}")
        if not 0 <= self.male_share <= 1:
            raise DataError("male share must be a probability")


@dataclass(frozen=True)
class SimParams:
    """Loaded parameter tables for one scenario.

    population: integer census covering the start year.
    birth_p/death_p/emig_p: annual event probabilities by (year, region,
    sex, age); birth probabilities apply to females only.
    immigrants: expected external arrivals by (year, region, sex, age).
    ie_p: internal-emigration probabilities, required unless im_mode is none.
    od / ii / m_by_age: destination sources for the interregional,
    biregional and full modes; m_by_age maps an age-class lower bound to an
    origin-destination table.
    """

    population: CensusTable
    birth_p: CensusTable
    death_p: CensusTable
    emig_p: CensusTable
    immigrants: CensusTable
    ie_p: CensusTable | None = None
    od: CensusTable | None = None
    ii: CensusTable | None = None
    m_by_age: dict | None = None


@dataclass
class SimulationState:
    year: int
    regions: tuple
    pid: np.ndarray
    sex: np.ndarray          # 0 = m, 1 = f
    birth_year: np.ndarray
    birth_frac: np.ndarray
    region: np.ndarray       # index into regions
    next_pid: int


@dataclass(frozen=True)
class RunOutput:
    census: CensusTable
    births: CensusTable
    deaths: CensusTable
    emigrants: CensusTable
    immigrants: CensusTable
    internal_out: CensusTable
    internal_in: CensusTable
    od: CensusTable


def _require(cond: bool, message: str):
    if not cond:
        raise DataError(message)


def _check_person_table(t: CensusTable, what: str, level: str, years: tuple,
                        probability: bool, sexes=SEXES):
    _require(not t.resolution.od, f"{what} must be a plain table")
    _require(t.resolution.level == level,
             f"{what} is at level {t.resolution.level}, expected {level}")
    _require(t.resolution.ages == _FULL_AGES and t.resolution.open_age == 100,
             f"{what} must carry single ages 0..100+")
    for s in sexes:
        _require(s in t.resolution.sex_domain, f"{what} lacks sex {s!r}")
    y0, y1 = t.resolution.years
    _require(y0 <= years[0] and y1 >= years[1],
             f"{what} years {y0}..{y1} do not cover {years[0]}..{years[1]}")
    if probability:
        for key, v in t.items():
            if v > 1.0:
                raise DataError(f"{what} value {v} at {key} is not a probability")


def validate_coverage(config: ScenarioConfig, params: SimParams):
    """Every lookup the run will make must be answerable before stepping."""
    P = params.population
    level = P.resolution.level
    _require(not P.resolution.od, "population must be a plain table")
    _require(P.integer, "population must be integer-valued")
    _require(P.resolution.ages == _FULL_AGES and P.resolution.open_age == 100,
             "population must carry single ages 0..100+")
    _require(P.resolution.sexes == SEXES, "population must carry both sexes")
    _require(P.resolution.years[0] <= config.t0 <= P.resolution.years[1],
             f"population does not cover start year {config.t0}")

    span = (config.t0, config.te - 1)
    _check_person_table(params.birth_p, "birth probabilities", level, span,
                        probability=True, sexes=("f",))
    _check_person_table(params.death_p, "death probabilities", level, span,
                        probability=True)
    _check_person_table(params.emig_p, "emigration probabilities", level, span,
                        probability=True)
    _check_person_table(params.immigrants, "immigrants", level, span,
                        probability=False)
    if config.im_mode != "none":
        _require(params.ie_p is not None,
                 "internal-emigration probabilities required for this im_mode")
        _check_person_table(params.ie_p, "internal-emigration probabilities",
                            level, span, probability=True)
    if config.im_mode == "interregional":
        _require(params.od is not None, "od table required for interregional mode")
        _require(params.od.resolution.od, "od table must be origin-destination")
        _require(params.od.resolution.level == level, "od table level mismatch")
        y0, y1 = params.od.resolution.years
        _require(y0 <= span[0] and y1 >= span[1],
                 f"od years {y0}..{y1} do not cover {span[0]}..{span[1]}")
    if config.im_mode == "biregional":
        _require(params.ii is not None, "ii table required for biregional mode")
        _check_person_table(params.ii, "internal immigrants", level, span,
                            probability=False)
    if config.im_mode == "full":
        _require(bool(params.m_by_age),
                 "per-age od tables required for full mode")
        lows = sorted(params.m_by_age)
        _require(lows[0] == 0, "per-age od tables must start at age 0")
        for lo in lows:
            t = params.m_by_age[lo]
            _require(t.resolution.od, f"flow table for ages {lo}+ must be od")
            _require(t.resolution.level == level,
                     f"flow table for ages {lo}+ level mismatch")
            y0, y1 = t.resolution.years
            _require(y0 <= span[0] and y1 >= span[1],
                     f"flow table for ages {lo}+ does not cover {span[0]}..{span[1]}")


def _master_regions(params: SimParams) -> tuple:
    """Union of all regions any table mentions, including pure destinations."""
    regions = set()
    for (_, r, _, _) in params.population.keys():
        regions.add(r)
    for (_, r, _, _) in params.immigrants.keys():
        regions.add(r)
    if params.od is not None:
        for (_, r, _, r2) in params.od.keys():
            regions.add(r)
            regions.add(r2)
    if params.ii is not None:
        for (_, r, _, _) in params.ii.keys():
            regions.add(r)
    for t in (params.m_by_age or {}).values():
        for (_, r, _, r2) in t.keys():
            regions.add(r)
            regions.add(r2)
    if not regions:
        raise DataError("no regions present in the parameter tables")
    return tuple(sorted(regions))


def init_population(P: CensusTable, scale: float, seed: int, year: int | None = None,
                    regions: tuple | None = None) -> SimulationState:
    """Materialize people from the census, apportioned so scaling is exact."""
    _require(P.integer, "population must be integer-valued")
    _require(not P.resolution.od, "population must be a plain table")
    if year is None:
        year = P.resolution.years[0]
    if regions is None:
        regions = tuple(sorted({r for (_, r, _, _) in P.keys()}))
    region_index = {r: i for i, r in enumerate(regions)}

    cells = [(key, v) for key, v in P.items() if key[0] == year]
    total_raw = sum(v for _, v in cells)
    total = round_half_away(scale * total_raw)
    if total < 1:
        raise DataError(f"scaled population {scale} * {total_raw} is below one person")
    counts = huntington_hill(total, [v for _, v in cells])

    n = sum(counts)
    pid = np.empty(n, dtype=np.uint64)
    sex = np.empty(n, dtype=np.int8)
    birth_year = np.empty(n, dtype=np.int32)
    region = np.empty(n, dtype=np.int32)
    pos = 0
    next_pid = 1
    for ((_, r, s, age), _), c in zip(cells, counts):
        if not c:
            continue
        sl = slice(pos, pos + c)
        pid[sl] = np.arange(next_pid, next_pid + c, dtype=np.uint64)
        sex[sl] = SEXES.index(s)
        birth_year[sl] = year - age - 1
        region[sl] = region_index[r]
        pos += c
        next_pid += c
    handles = stream_array(seed, pid, year)
    birth_frac = uniform_array(handles, S_OFFSET)
    return SimulationState(year=year, regions=regions, pid=pid, sex=sex,
                           birth_year=birth_year, birth_frac=birth_frac,
                           region=region, next_pid=next_pid)


def census_counts(state: SimulationState) -> dict:
    """Population by (year, region, sex, age) at the state's census date."""
    age = np.minimum(state.year - state.birth_year - 1, 100)
    code = (state.region.astype(np.int64) * 2 + state.sex) * 101 + age
    counts = np.bincount(code, minlength=len(state.regions) * 2 * 101)
    entries = {}
    for flat in np.flatnonzero(counts):
        a = int(flat % 101)
        s = (flat // 101) % 2
        r = flat // 202
        entries[(state.year, state.regions[r], SEXES[s], a)] = int(counts[flat])
    return entries


def _grid(table: CensusTable, year: int, regions: tuple) -> np.ndarray:
    """Dense (region, sex, age) lookup plane for one year of a sparse table."""
    out = np.zeros((len(regions), 2, 101))
    have = table.resolution.sex_domain
    for ri, r in enumerate(regions):
        for si, s in enumerate(SEXES):
            if s not in have:
                continue
            for a in range(101):
                out[ri, si, a] = table[(year, r, s, a)]
    return out


class _DestinationPicker:
    """Per-year cache of cumulative destination weights for one im_mode."""

    def __init__(self, mode: str, params: SimParams, year: int, regions: tuple):
        self.mode = mode
        self.params = params
        self.year = year
        self.regions = regions
        self._cache: dict = {}

    def _weights(self, origin: int, sex: int, age: int) -> np.ndarray:
        y = self.year
        regions = self.regions
        s = SEXES[sex]
        if self.mode == "interregional":
            od = self.params.od
            row = np.array([od[(y, regions[origin], s, r2)] for r2 in regions])
        elif self.mode == "biregional":
            ii = self.params.ii
            row = np.array([ii[(y, r2, s, age)] for r2 in regions])
        else:
            lows = sorted(self.params.m_by_age)
            cls = lows[bisect_right(lows, age) - 1]
            od = self.params.m_by_age[cls]
            row = np.array([od[(y, regions[origin], s, r2)] for r2 in regions])
        row[origin] = 0.0  # a move always leaves the origin
        return row

    def pick(self, origin: int, sex: int, age: int, u: float) -> int:
        if self.mode == "interregional":
            key = (origin, sex)
        elif self.mode == "biregional":
            key = (sex, age, origin)
        else:
            key = (origin, sex, age)
        cum = self._cache.get(key)
        if cum is None:
            cum = np.cumsum(self._weights(origin, sex, age))
            self._cache[key] = cum
        total = cum[-1]
        if total <= 0:
            raise DataError(
                f"no internal-migration destinations for ({self.year}, "
                f"{self.regions[origin]}, {SEXES[sex]}, {age})")
        return int(np.searchsorted(cum, u * total, side="right"))


def _month_of(frac: np.ndarray) -> np.ndarray:
    return np.minimum((frac * 12).astype(np.int64), 11)


def step_year(state: SimulationState, params: SimParams, config: ScenarioConfig,
              seed: int):
    """Advance the state across one calendar year.

    Returns (new_state, events) where events maps table names to key->count
    dicts for the year just simulated.
    """
    y = state.year
    regions = state.regions
    n_regions = len(regions)
    n = len(state.pid)

    g_death = _grid(params.death_p, y, regions)
    g_emig = _grid(params.emig_p, y, regions)
    g_birth = _grid(params.birth_p, y, regions)
    g_ie = _grid(params.ie_p, y, regions) if config.im_mode != "none" else None

    events = {name: {} for name in EVENT_NAMES}

    def tally(mask, region_arr, sex_arr, age_arr, table):
        code = ((region_arr[mask].astype(np.int64) * 2 + sex_arr[mask])
                * 101 + age_arr[mask])
        counts = np.bincount(code, minlength=n_regions * 202)
        for flat in np.flatnonzero(counts):
            a = int(flat % 101)
            s = (flat // 101) % 2
            r = flat // 202
            key = (y, regions[r], SEXES[s], a)
            table[key] = table.get(key, 0) + int(counts[flat])

    if n:
        h = stream_array(seed, state.pid, y)
        age = y - state.birth_year - 1
        la = np.minimum(age, 100)
        idx = (state.region, state.sex, la)

        u_death = uniform_array(h, S_DEATH_U)
        u_emig = uniform_array(h, S_EMIG_U)
        u_birth = uniform_array(h, S_BIRTH_U)
        t_death = uniform_array(h, S_DEATH_T)
        t_emig = uniform_array(h, S_EMIG_T)
        t_birth = uniform_array(h, S_BIRTH_T)

        dies = u_death < g_death[idx]
        emigrates = u_emig < g_emig[idx]
        births_drawn = (state.sex == 1) & (u_birth < g_birth[idx])
        if g_ie is not None:
            u_ie = uniform_array(h, S_IE_U)
            t_ie = uniform_array(h, S_IE_T)
            moves_drawn = u_ie < g_ie[idx]
        else:
            t_ie = np.full(n, np.inf)
            moves_drawn = np.zeros(n, dtype=bool)

        td = np.where(dies, t_death, np.inf)
        te = np.where(emigrates, t_emig, np.inf)
        terminal = np.minimum(td, te)
        is_death = dies & (td <= te)
        is_emig = emigrates & (te < td)
        gives_birth = births_drawn & (t_birth < terminal)
        moves = moves_drawn & (t_ie < terminal)

        dest = np.full(n, -1, dtype=np.int32)
        if moves.any():
            picker = _DestinationPicker(config.im_mode, params, y, regions)
            for i in np.flatnonzero(moves):
                u = uniform(int(h[i]), S_DEST)
                dest[i] = picker.pick(int(state.region[i]), int(state.sex[i]),
                                      int(la[i]), u)

        final_region = np.where(moves, dest, state.region)

        tally(is_death, final_region, state.sex, la, events["D"])
        tally(is_emig, final_region, state.sex, la, events["E"])
        tally(moves, state.region, state.sex, la, events["IE"])
        tally(moves, dest, state.sex, la, events["II"])
        for i in np.flatnonzero(moves):
            key = (y, regions[state.region[i]], SEXES[state.sex[i]],
                   regions[dest[i]])
            events["OD"][key] = events["OD"].get(key, 0) + 1

        # newborns: region is the mother's location at the birth instant
        mother_idx = np.flatnonzero(gives_birth)
        moved_first = moves[mother_idx] & (t_ie[mother_idx] < t_birth[mother_idx])
        nb_region = np.where(moved_first, dest[mother_idx],
                             state.region[mother_idx]).astype(np.int32)
        u_sex = uniform_array(h[mother_idx], S_NEWBORN_SEX)
        nb_sex = np.where(u_sex < config.male_share, 0, 1).astype(np.int8)
        nb_pid = np.arange(state.next_pid, state.next_pid + len(mother_idx),
                           dtype=np.uint64)
        next_pid = state.next_pid + len(mother_idx)
        nb_frac = t_birth[mother_idx]
        for r, s in zip(nb_region, nb_sex):
            key = (y, regions[r], SEXES[s], 0)
            events["B"][key] = events["B"].get(key, 0) + 1

        keep = ~(is_death | is_emig)
    else:
        keep = np.zeros(0, dtype=bool)
        final_region = state.region
        nb_pid = np.empty(0, dtype=np.uint64)
        nb_sex = np.empty(0, dtype=np.int8)
        nb_region = np.empty(0, dtype=np.int32)
        nb_frac = np.empty(0)
        next_pid = state.next_pid

    # immigrants for the year, apportioned from the scaled profile
    im_cells = sorted((key, v) for key, v in params.immigrants.items()
                      if key[0] == y)
    im_pid = np.empty(0, dtype=np.uint64)
    im_sex = np.empty(0, dtype=np.int8)
    im_birth_year = np.empty(0, dtype=np.int32)
    im_region = np.empty(0, dtype=np.int32)
    if im_cells:
        total = round_half_away(config.scale * sum(v for _, v in im_cells))
        if total > 0:
            counts = huntington_hill(total, [v for _, v in im_cells])
            region_index = {r: i for i, r in enumerate(regions)}
            sexes, birth_years, origins = [], [], []
            for ((_, r, s, a), _), c in zip(im_cells, counts):
                if not c:
                    continue
                events["I"][(y, r, s, a)] = c
                sexes.extend([SEXES.index(s)] * c)
                birth_years.extend([y - a] * c)
                origins.extend([region_index[r]] * c)
            im_pid = np.arange(next_pid, next_pid + len(origins), dtype=np.uint64)
            next_pid += len(origins)
            im_sex = np.array(sexes, dtype=np.int8)
            im_birth_year = np.array(birth_years, dtype=np.int32)
            im_region = np.array(origins, dtype=np.int32)
    if len(im_pid):
        im_h = stream_array(seed, im_pid, y)
        im_frac = uniform_array(im_h, S_OFFSET)
        im_arrival = uniform_array(im_h, S_ARRIVAL)
    else:
        im_frac = np.empty(0)
        im_arrival = np.empty(0)

    nb_birth_year = np.full(len(nb_pid), y, dtype=np.int32)
    if config.step == "month":
        # walk the twelve buckets so additions enter at their month boundary
        parts = []
        nb_m = _month_of(nb_frac)
        im_m = _month_of(im_arrival)
        for m in range(12):
            nb_in = nb_m == m
            im_in = im_m == m
            parts.append((nb_pid[nb_in], nb_sex[nb_in], nb_birth_year[nb_in],
                          nb_frac[nb_in], nb_region[nb_in]))
            parts.append((im_pid[im_in], im_sex[im_in], im_birth_year[im_in],
                          im_frac[im_in], im_region[im_in]))
    else:
        parts = [(nb_pid, nb_sex, nb_birth_year, nb_frac, nb_region),
                 (im_pid, im_sex, im_birth_year, im_frac, im_region)]

    new_pid = np.concatenate([state.pid[keep]] + [p[0] for p in parts])
    new_sex = np.concatenate([state.sex[keep]] + [p[1] for p in parts])
    new_birth_year = np.concatenate([state.birth_year[keep]]
                                    + [p[2] for p in parts])
    new_birth_frac = np.concatenate([state.birth_frac[keep]]
                                    + [p[3] for p in parts])
    new_region = np.concatenate([final_region[keep].astype(np.int32)]
                                + [p[4] for p in parts])

    # canonical order keeps next year's draws independent of assembly order
    order = np.argsort(new_pid)
    new_state = SimulationState(
        year=y + 1, regions=regions, pid=new_pid[order], sex=new_sex[order],
        birth_year=new_birth_year[order], birth_frac=new_birth_frac[order],
        region=new_region[order], next_pid=next_pid)
    return new_state, events


def run(config: ScenarioConfig, params: SimParams) -> list:
    """Simulate all Monte Carlo runs; run k is seeded with seed xor k."""
    validate_coverage(config, params)
    regions = _master_regions(params)
    level = params.population.resolution.level

    outputs = []
    for k in range(config.runs):
        seed_k = (config.seed ^ k) & ((1 << 64) - 1)
        state = init_population(params.population, config.scale, seed_k,
                                year=config.t0, regions=regions)
        census = dict(census_counts(state))
        acc = {name: {} for name in EVENT_NAMES}
        for _ in range(config.t0, config.te):
            state, events = step_year(state, params, config, seed_k)
            for name, table in events.items():
                acc[name].update(table)
            census.update(census_counts(state))

        census_res = ResolutionSpec((config.t0, config.te), level,
                                    ages=_FULL_AGES, open_age=100)
        span = (config.t0, config.te - 1)
        aged_res = ResolutionSpec(span, level, ages=_FULL_AGES, open_age=100)
        birth_res = ResolutionSpec(span, level, ages=(0,), open_age=None)
        od_res = ResolutionSpec(span, level, od=True)
        outputs.append(RunOutput(
            census=CensusTable(census_res, census, integer=True, name="P"),
            births=CensusTable(birth_res, acc["B"], integer=True, name="B"),
            deaths=CensusTable(aged_res, acc["D"], integer=True, name="D"),
            emigrants=CensusTable(aged_res, acc["E"], integer=True, name="E"),
            immigrants=CensusTable(aged_res, acc["I"], integer=True, name="I"),
            internal_out=CensusTable(aged_res, acc["IE"], integer=True, name="IE"),
            internal_in=CensusTable(aged_res, acc["II"], integer=True, name="II"),
            od=CensusTable(od_res, acc["OD"], integer=True, name="M"),
        ))
    return outputs
