import numpy as np
import pytest

from transversal.errors import PreconditionError, UsageError
from transversal.geometry import cyclic_config, real_config
from transversal.voronoi import (
    cell_at_identity,
    cyclic_cell_counts,
    tessellate,
)


def test_cell_between_neighbours():
    P = real_config([-1, 0, 2], R=10, exact=True)
    res = cell_at_identity(P)
    assert res.measure == pytest.approx(1.5)
    assert not res.truncated


def test_lone_point_cell_fills_window():
    P = real_config([0.0], R=5, exact=True)
    res = cell_at_identity(P)
    assert res.measure == pytest.approx(10.0)
    assert res.truncated and res.lower_bound


def test_one_sided_truncation():
    P = real_config([-2.0, 0.0], R=5, exact=True)
    res = cell_at_identity(P)
    # left edge at -1, right edge clipped at the window
    assert res.measure == pytest.approx(6.0)
    assert res.truncated


def test_cyclic_tie_goes_to_smaller_difference():
    counts = cyclic_cell_counts(4, [0, 2])
    # residue 1 ties between 0 and 2; difference 1-0=1 beats 1-2=3
    assert counts == {0: 2, 2: 2}
    res = cell_at_identity(cyclic_config([0, 2], 4))
    assert res.measure == 2.0 and not res.truncated


def test_identity_required():
    with pytest.raises(PreconditionError):
        cell_at_identity(real_config([1.0, 2.0], R=5))
    with pytest.raises(PreconditionError):
        cell_at_identity(cyclic_config([1], 4))


def test_tessellate_z6():
    assert tessellate(cyclic_config([0, 3], 6)) == {0: 3.0, 3: 3.0}


def test_tessellate_unit_lattice_interior_cells():
    P = real_config(np.arange(-5, 6), R=5, exact=True)
    cells = tessellate(P)
    for p in range(-4, 5):
        assert cells[float(p)] == pytest.approx(1.0)
    assert cells[-5.0] == cells[5.0] == pytest.approx(0.5)


def test_tessellate_full_group():
    assert tessellate(cyclic_config(range(5), 5)) == {i: 1.0 for i in range(5)}


def test_partition_sums_real_line():
    rng = np.random.default_rng(3)
    for _ in range(25):
        pts = rng.uniform(-9, 9, rng.integers(1, 20))
        P = real_config(pts, R=9)
        assert abs(sum(tessellate(P).values()) - 18.0) < 1e-12


def test_partition_sums_cyclic():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        k = int(rng.integers(1, n + 1))
        pts = rng.choice(n, size=k, replace=False)
        assert sum(cyclic_cell_counts(n, pts).values()) == n


def test_monotone_nesting_real_line():
    rng = np.random.default_rng(7)
    for _ in range(50):
        extra = rng.uniform(-9, 9, rng.integers(1, 8))
        base = np.concatenate(([0.0], rng.uniform(-9, 9, rng.integers(0, 8))))
        small = real_config(base, R=9)
        large = real_config(np.concatenate((base, extra)), R=9)
        assert cell_at_identity(small).measure >= cell_at_identity(large).measure - 1e-12


def test_monotone_nesting_cyclic_exhaustive():
    for n in (4, 5, 6):
        for mask in range(1, 2**n):
            pts = [i for i in range(n) if (mask >> i) & 1]
            if 0 not in pts:
                continue
            counts = cyclic_cell_counts(n, pts)
            for extra in range(n):
                if extra in pts:
                    continue
                bigger = cyclic_cell_counts(n, pts + [extra])
                assert bigger[0] <= counts[0]


def test_equivariance_cyclic_exhaustive():
    for n in (5, 6):
        for mask in range(1, 2**n):
            pts = [i for i in range(n) if (mask >> i) & 1]
            base = cyclic_cell_counts(n, pts)
            for g in range(n):
                shifted = cyclic_cell_counts(n, [(p + g) % n for p in pts])
                assert shifted == {(p + g) % n: c for p, c in base.items()}


def test_real_line_grid_crosscheck():
    # random exact-rational configurations against a brute-force grid count
    rng = np.random.default_rng(11)
    R, M = 8.0, 64_000
    grid = np.linspace(-R + R / M, R - R / M, M)
    step = 2.0 * R / M
    for _ in range(12):
        pts = np.unique(np.concatenate(([0.0], rng.integers(-127, 128, 10) / 16.0)))
        pts = pts[np.abs(pts) <= R]
        P = real_config(pts, R=R, exact=True)
        nearest = np.argmin(np.abs(grid[:, None] - pts[None, :]), axis=1)
        brute = np.count_nonzero(pts[nearest] == 0.0) * step
        assert abs(cell_at_identity(P).measure - brute) <= 2.0 * step


def test_volume_monte_carlo_2d():
    rng = np.random.default_rng(5)
    pts = [(x, y) for x in range(-3, 4) for y in range(-3, 4)]
    P = real_config(pts, R=3.5, d=2, exact=True)
    res = cell_at_identity(P, rng=rng, n_volume_samples=40_000)
    assert res.measure == pytest.approx(1.0, abs=0.1)
    sub = real_config([p for p in pts if p[0] % 2 == 0], R=3.5, d=2, exact=True)
    bigger = cell_at_identity(sub, rng=rng, n_volume_samples=40_000)
    assert bigger.measure >= res.measure - 0.1


def test_volume_requires_rng_in_2d():
    P = real_config([(0.0, 0.0), (1.0, 1.0)], R=2, d=2, exact=True)
    with pytest.raises(UsageError):
        cell_at_identity(P)


def test_tessellate_rejects_higher_dimensions():
    P = real_config([(0.0, 0.0)], R=2, d=2)
    with pytest.raises(UsageError):
        tessellate(P)
