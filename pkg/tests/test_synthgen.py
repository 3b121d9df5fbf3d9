import pytest

from censim.errors import DataError
from censim.synthgen import SynthSpec, degrade, generate_truth
from censim.table import CensusTable, ResolutionSpec

SPEC = SynthSpec(regions=("10101", "10102", "20101"), level="municipalities",
                 years=(2000, 2004), base=500.0, seed=3)


@pytest.fixture(scope="module")
def bundle():
    return generate_truth(SPEC)


def sum_by(table, pick):
    out = {}
    for key, v in table.items():
        g = pick(key)
        out[g] = out.get(g, 0) + v
    return out


def test_regeneration_is_bit_identical(bundle):
    again = generate_truth(SPEC)
    for name, t in bundle.items():
        if name == "m_by_age":
            assert {lo: dict(x.items()) for lo, x in t.items()} == \
                {lo: dict(x.items()) for lo, x in again[name].items()}
        else:
            assert t == again[name], name


def test_seed_changes_the_bundle():
    other = generate_truth(SynthSpec(regions=SPEC.regions, level=SPEC.level,
                                     years=SPEC.years, base=SPEC.base, seed=4))
    assert dict(other["P"].items()) != dict(generate_truth(SPEC)["P"].items())


def test_balance_holds_exactly_everywhere(bundle):
    pop = sum_by(bundle["P"], lambda k: (k[0], k[1], k[2]))
    flows = {name: sum_by(bundle[name], lambda k: (k[0], k[1], k[2]))
             for name in ("B", "D", "E", "I", "IE", "II")}
    y0, y1 = SPEC.years
    for y in range(y0, y1):
        for r in SPEC.regions:
            for s in ("m", "f"):
                key = (y, r, s)
                residual = (pop.get((y + 1, r, s), 0) - pop.get(key, 0)
                            - flows["B"].get(key, 0) - flows["I"].get(key, 0)
                            - flows["II"].get(key, 0) + flows["D"].get(key, 0)
                            + flows["E"].get(key, 0) + flows["IE"].get(key, 0))
                assert residual == 0, key


def test_births_by_child_sex_match_births_by_mother_age(bundle):
    by_child = sum_by(bundle["B"], lambda k: (k[0], k[1]))
    by_mother = sum_by(bundle["B_m"], lambda k: (k[0], k[1]))
    assert by_child == by_mother
    assert all(k[2] == "f" for k in bundle["B_m"].keys())


def test_flow_tables_are_consistent(bundle):
    assert bundle["IE"].total() == bundle["II"].total() == bundle["M"].total()
    merged = {}
    for t in bundle["m_by_age"].values():
        for k, v in t.items():
            merged[k] = merged.get(k, 0) + v
    assert merged == dict(bundle["M"].items())
    assert all(k[1] != k[3] for k in bundle["M"].keys())


def test_tables_are_integer_and_nonnegative(bundle):
    for name, t in bundle.items():
        if name == "m_by_age":
            continue
        assert t.integer
        assert all(float(v).is_integer() and v >= 0 for v in
                   dict(t.items()).values())


def test_degrade_five_year_classes_sum(bundle):
    P = bundle["P"]
    target = ResolutionSpec(SPEC.years, SPEC.level,
                            ages=tuple(range(0, 101, 5)), open_age=100)
    coarse = degrade(P, target)
    assert coarse.resolution == target
    picked = (2001, "10101", "f")
    want = sum(P[(2001, "10101", "f", a)] for a in range(15, 20))
    assert coarse[(2001, "10101", "f", 15)] == want
    assert coarse.total() == P.total()


def test_degrade_drops_sex_by_summation(bundle):
    P = bundle["P"]
    target = ResolutionSpec(SPEC.years, SPEC.level, sexes=(),
                            ages=tuple(range(101)), open_age=100)
    coarse = degrade(P, target)
    key = (2000, "10102", "-", 40)
    assert coarse[key] == P[(2000, "10102", "m", 40)] + P[(2000, "10102", "f", 40)]


def test_degrade_levels_and_years(bundle):
    P = bundle["P"]
    target = ResolutionSpec((2001, 2002), "districts",
                            ages=tuple(range(101)), open_age=100)
    coarse = degrade(P, target)
    assert coarse[(2001, "101", "m", 30)] == \
        P[(2001, "10101", "m", 30)] + P[(2001, "10102", "m", 30)]
    assert coarse.resolution.years == (2001, 2002)
    assert not any(k[0] == 2000 for k in coarse.keys())


def test_degrade_to_ageless_total(bundle):
    B = bundle["B"]
    target = ResolutionSpec((2000, 2003), "country", sexes=(), ages=(0,),
                            open_age=None)
    # the births table is already ageless; only region and sex collapse
    coarse = degrade(B, target)
    assert coarse.total() == B.total()

    P = bundle["P"]
    aged = ResolutionSpec(SPEC.years, SPEC.level, ages=(0,), open_age=0)
    flat = degrade(P, aged)
    assert flat[(2000, "10101", "m", 0)] == \
        sum(v for k, v in P.items() if k[:3] == (2000, "10101", "m"))


def test_degrade_rejects_incomparable_targets(bundle):
    P = bundle["P"]
    with pytest.raises(DataError):
        degrade(P, ResolutionSpec(SPEC.years, "municipalities_districts",
                                  ages=tuple(range(101)), open_age=100))
    with pytest.raises(DataError):
        degrade(P, ResolutionSpec(SPEC.years, SPEC.level, sexes=("f",),
                                  ages=tuple(range(101)), open_age=100))
    with pytest.raises(DataError):
        degrade(P, ResolutionSpec((1990, 2004), SPEC.level,
                                  ages=tuple(range(101)), open_age=100))
    banded = degrade(P, ResolutionSpec(SPEC.years, SPEC.level,
                                       ages=tuple(range(0, 101, 20)),
                                       open_age=100))
    with pytest.raises(DataError, match="straddles"):
        degrade(banded, ResolutionSpec(SPEC.years, SPEC.level,
                                       ages=(0, 30, 60, 100), open_age=100))


def test_degrade_od_levels(bundle):
    M = bundle["M"]
    target = ResolutionSpec((2000, 2003), "districts", od=True)
    coarse = degrade(M, target)
    assert coarse.total() == M.total()
    # flows between municipalities of one district become district self-flows
    assert coarse[(2000, "101", "m", "101")] == \
        M[(2000, "10101", "m", "10102")] + M[(2000, "10102", "m", "10101")]


def test_spec_validation():
    with pytest.raises(DataError):
        SynthSpec(regions=("10101",), level="municipalities", years=(2000, 2002))
    with pytest.raises(DataError):
        SynthSpec(regions=("10101", "banana"), level="municipalities",
                  years=(2000, 2002))
    with pytest.raises(DataError):
        SynthSpec(regions=("10101", "10102"), level="municipalities",
                  years=(2002, 2002))
    with pytest.raises(DataError):
        SynthSpec(regions=("10101", "10102"), level="municipalities",
                  years=(2000, 2002), base=0.0)
