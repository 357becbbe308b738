from fractions import Fraction

import numpy as np
import pytest

from transversal.errors import InvarianceViolation, ResourceBudgetError, UsageError
from transversal.oracle import (
    CANONICAL_SYSTEMS,
    CyclicSystem,
    exact_basic_inequality,
    exact_campbell,
    exact_covolume,
    exact_injective_cover,
    exact_intensity,
    exact_inverse,
    exact_kac_covolume,
    exact_mecke,
    exact_partition_of_unity,
    exact_transverse,
    is_coset_system,
    random_system,
    random_test_table,
)

Z4_POINT = CANONICAL_SYSTEMS["z4_one_point"]
Z4_COSET = CANONICAL_SYSTEMS["z4_coset"]
Z4_APERIODIC = CANONICAL_SYSTEMS["z4_aperiodic"]
Z2_TWO_ORBITS = CANONICAL_SYSTEMS["z2_two_orbits"]
TEST_SYSTEMS = list(CANONICAL_SYSTEMS.values())


def test_transverse_single_point():
    mu_y = exact_transverse(Z4_POINT)
    assert mu_y == {(0, 0): Fraction(1, 4)}


def test_transverse_two_returns():
    mu_y = exact_transverse(Z4_COSET)
    assert sum(mu_y.values()) == Fraction(1, 2)
    assert set(mu_y.values()) == {Fraction(1, 4)}


def test_transverse_two_orbits():
    mu_y = exact_transverse(Z2_TWO_ORBITS)
    assert set(mu_y.values()) == {Fraction(1, 4)}
    assert exact_intensity(Z2_TWO_ORBITS) == Fraction(1, 2)


def test_inverse_roundtrip_is_identity():
    for sys in TEST_SYSTEMS:
        assert exact_inverse(sys, exact_transverse(sys)) == sys.mu_map()


def test_inverse_is_linear():
    sys = Z4_COSET
    nu = exact_transverse(sys)
    tripled = {y: 3 * v for y, v in nu.items()}
    expected = {x: 3 * v for x, v in sys.mu_map().items()}
    assert exact_inverse(sys, tripled) == expected


def test_inverse_single_atom_fixed_by_roundtrip():
    sys = Z4_POINT
    nu = {(0, 0): Fraction(1, 4)}
    result = exact_inverse(sys, nu)
    assert result == sys.mu_map()
    assert sum(result.values()) == 1


def test_injective_cover_single_point_section():
    cover = exact_injective_cover(Z4_POINT)
    assert len(cover) == 4
    for piece in cover:
        assert len(piece) == 1


def test_injective_cover_properties():
    for sys in TEST_SYSTEMS + [random_system(np.random.default_rng(i)) for i in range(20)]:
        cover = exact_injective_cover(sys)
        assert len(cover) <= sys.n
        seen = set()
        images = set()
        for piece in cover:
            assert not (piece & seen)
            seen |= piece
            img = [sys.act(g, y) for g, y in piece]
            assert len(set(img)) == len(img)  # injective
            assert not (images & set(img))  # images disjoint
            images |= set(img)
        assert images == set(sys.states())  # images partition X


def test_partition_of_unity_rows():
    for sys in TEST_SYSTEMS:
        rho = exact_partition_of_unity(sys)
        for x in sys.states():
            row = sum(rho.get((g, x), Fraction(0)) for g in sys.return_set(x))
            assert row == 1
        # zero off the return sets
        for (g, x), val in rho.items():
            assert g in sys.return_set(x) or val == 0


def test_covolume_examples():
    res = exact_covolume(Z4_POINT, 2)
    assert res.value == Fraction(1, 4) == exact_intensity(Z4_POINT)
    res = exact_covolume(Z4_COSET, 2)
    assert res.value == Fraction(1, 2) == exact_intensity(Z4_COSET)
    res = exact_covolume(Z4_APERIODIC, 2)
    assert res.via_intersection == res.via_kac == Fraction(3, 4)
    assert res.value > exact_intensity(Z4_APERIODIC)


def test_covolume_both_ways_agree_r123():
    rng = np.random.default_rng(42)
    systems = TEST_SYSTEMS + [random_system(rng) for _ in range(15)]
    for sys in systems:
        for r in (1, 2, 3):
            res = exact_covolume(sys, r)
            assert res.via_intersection == res.via_kac
        assert exact_covolume(sys, 1).value == 1  # I^1 is the total mass


def test_covolume_budget_guard():
    big = CyclicSystem(
        n=8,
        orbit_weights=tuple(Fraction(1, 32) for _ in range(4)),
        cross_section=tuple((0,) for _ in range(4)),
    )
    with pytest.raises(ResourceBudgetError):
        exact_covolume(big, 3)


def test_mecke_random_tables():
    rng = np.random.default_rng(1)
    for sys in TEST_SYSTEMS:
        for _ in range(100):
            f = random_test_table(rng, sys)
            lhs, rhs = exact_mecke(sys, f)
            assert lhs == rhs


def test_mecke_zero_function():
    assert exact_mecke(Z4_COSET, {}) == (0, 0)


def test_mecke_soundness_detects_perturbation():
    sys = Z4_APERIODIC
    nu = exact_transverse(sys)
    bad = dict(nu)
    bad[(0, 0)] *= 2
    rng = np.random.default_rng(2)
    witnessed = False
    for _ in range(100):
        f = random_test_table(rng, sys)
        lhs, rhs = exact_mecke(sys, f, nu=bad)
        if lhs != rhs:
            witnessed = True
            break
    assert witnessed
    with pytest.raises(InvarianceViolation) as err:
        exact_inverse(sys, bad)
    assert err.value.witness is not None


def test_campbell_identity_random_tables():
    rng = np.random.default_rng(3)
    for sys in TEST_SYSTEMS:
        for _ in range(100):
            f = random_test_table(rng, sys)
            lhs, rhs = exact_campbell(sys, f)
            assert lhs == rhs


def test_basic_inequality_coset_cases():
    for sys in (Z4_POINT, Z4_COSET, Z2_TWO_ORBITS):
        table = exact_basic_inequality(sys, 2)
        assert table.coset
        assert table.holds and table.all_equal


def test_basic_inequality_strict_case():
    table = exact_basic_inequality(Z4_APERIODIC, 2)
    assert not table.coset
    assert table.holds and not table.all_equal
    row = table.rows[0]
    assert row.higher == Fraction(3, 4) and row.lower == Fraction(1, 2)


def test_basic_inequality_random_systems():
    rng = np.random.default_rng(4)
    for _ in range(40):
        sys = random_system(rng)
        table = exact_basic_inequality(sys, 2)
        assert table.holds
        assert table.all_equal == table.coset


def test_coset_predicate():
    assert is_coset_system(Z4_COSET)
    assert is_coset_system(Z4_POINT)
    assert not is_coset_system(Z4_APERIODIC)
    mixed = CyclicSystem(
        n=4,
        orbit_weights=(Fraction(1, 8), Fraction(1, 8)),
        cross_section=((0,), (0, 2)),
    )
    assert not is_coset_system(mixed)  # cosets of different subgroups


def test_monotonicity_under_growing_section():
    rng = np.random.default_rng(5)
    for _ in range(25):
        sys = random_system(rng, max_n=6)
        o = int(rng.integers(0, sys.num_orbits))
        missing = [p for p in range(sys.n) if p not in sys.cross_section[o]]
        if not missing:
            continue
        grown = list(list(p) for p in sys.cross_section)
        grown[o].append(missing[0])
        bigger = CyclicSystem(
            n=sys.n,
            orbit_weights=sys.orbit_weights,
            cross_section=tuple(tuple(sorted(p)) for p in grown),
        )
        assert exact_intensity(bigger) >= exact_intensity(sys)
        for r in (1, 2):
            assert exact_kac_covolume(bigger, r) >= exact_kac_covolume(sys, r)


def test_system_validation():
    with pytest.raises(UsageError):
        CyclicSystem(n=4, orbit_weights=(Fraction(1, 4),), cross_section=((),))
    with pytest.raises(UsageError):
        CyclicSystem(n=4, orbit_weights=(Fraction(1, 3),), cross_section=((0,),))
    with pytest.raises(UsageError):
        CyclicSystem(n=0, orbit_weights=(Fraction(1, 1),), cross_section=((0,),))
    Z4_POINT.check_invariance()  # never raises on a valid system


def test_return_sets():
    assert Z4_COSET.return_set((0, 1)) == (1, 3)
    assert Z4_APERIODIC.return_set((0, 0)) == (0, 3)
