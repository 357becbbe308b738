"""Point configurations on the groups R^d and Z_n.

Everything downstream works with finite, canonically ordered point sets: the
truncation of a locally finite subset of the group to a bounded window.  The
two supported groups are the additive groups R^d (Haar measure = Lebesgue,
window = the box [-R, R]^d) and Z_n (Haar measure = counting measure, window =
the whole group).

All values are immutable after construction; they can be shared freely
between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .errors import GroupMismatchError, UsageError, WindowMismatchError

#: Matching tolerance (group length units) for configurations whose points are
#: not represented exactly.  Continuous models almost surely have no
#: near-coincidences at this scale; exact configs bypass it entirely.
TOLERANCE = 1e-9


@dataclass(frozen=True)
class RealGroup:
    """The additive group R^d with Lebesgue Haar measure."""

    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise UsageError(f"dimension must be >= 1, got d={self.d}")


@dataclass(frozen=True)
class CyclicGroup:
    """The cyclic group Z_n with counting Haar measure."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"group order must be >= 1, got n={self.n}")


Group = Union[RealGroup, CyclicGroup]


@dataclass(frozen=True)
class Window:
    """Symmetric box window [-R, R]^d for real groups."""

    R: float

    def __post_init__(self):
        if not (self.R > 0) or not np.isfinite(self.R):
            raise UsageError(f"window radius must be positive and finite, got R={self.R}")

    def measure(self, d: int = 1) -> float:
        return (2.0 * self.R) ** d


@dataclass(frozen=True)
class GroupPoint:
    """A single group element: a coordinate tuple for R^d, a residue for Z_n.

    Z_n residues are reduced to the canonical range [0, n); real coordinates
    must be finite.
    """

    group: Group
    value: Union[tuple, int]

    def __post_init__(self):
        if isinstance(self.group, CyclicGroup):
            object.__setattr__(self, "value", int(self.value) % self.group.n)
        else:
            coords = tuple(float(c) for c in (
                self.value if isinstance(self.value, (tuple, list, np.ndarray)) else (self.value,)
            ))
            if len(coords) != self.group.d:
                raise UsageError(
                    f"point has {len(coords)} coordinates, group has d={self.group.d}"
                )
            if not all(np.isfinite(c) for c in coords):
                raise UsageError(f"real coordinates must be finite, got {coords}")
            object.__setattr__(self, "value", coords)


def identity(group: Group) -> GroupPoint:
    if isinstance(group, CyclicGroup):
        return GroupPoint(group, 0)
    return GroupPoint(group, (0.0,) * group.d)


def canonical_order(a: GroupPoint, b: GroupPoint) -> int:
    """Total order used everywhere for tie-breaking: -1, 0 or 1.

    Lexicographic on coordinates for R^d, natural order of canonical residues
    for Z_n.  Deterministic and consistent across runs.
    """
    if a.group != b.group:
        raise GroupMismatchError(f"cannot compare points of {a.group} and {b.group}")
    if a.value < b.value:
        return -1
    if a.value > b.value:
        return 1
    return 0


def _dedup_sorted_1d(values: np.ndarray, tol: float) -> np.ndarray:
    """Greedy left-to-right dedup of a sorted 1-d array: keep a point iff it is
    more than tol above the last kept point."""
    if len(values) < 2:
        return values
    gaps = np.diff(values)
    if np.all(gaps > tol):  # fast path: nothing to merge
        return values
    keep = np.empty(len(values), dtype=bool)
    keep[0] = True
    last = values[0]
    for i in range(1, len(values)):
        if values[i] - last > tol:
            keep[i] = True
            last = values[i]
        else:
            keep[i] = False
    return values[keep]


def _lexsorted_rows(arr: np.ndarray) -> np.ndarray:
    order = np.lexsort(arr.T[::-1])
    return arr[order]


def _dedup_sorted_rows(arr: np.ndarray, tol: float) -> np.ndarray:
    """Dedup lexicographically sorted rows; rows within tol in every coordinate
    of an already-kept row (with first coordinate within tol) are dropped."""
    if len(arr) == 0:
        return arr
    kept = [arr[0]]
    for row in arr[1:]:
        dup = False
        for prev in reversed(kept):
            if row[0] - prev[0] > tol:
                break
            if np.max(np.abs(row - prev)) <= tol:
                dup = True
                break
        if not dup:
            kept.append(row)
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class Config:
    """A finite point configuration inside a window.

    points are stored as a read-only numpy array: shape (k,) of floats sorted
    ascending for R^1, shape (k, d) of floats in lexicographic row order for
    R^d, shape (k,) of canonical residues sorted ascending for Z_n.  The exact
    flag records that the stored values are exact (integers or identically
    computed irrationals), in which case set operations use equality instead
    of the tolerance.
    """

    group: Group
    window: Optional[Window]
    points: np.ndarray
    exact: bool

    def __post_init__(self):
        self.points.flags.writeable = False

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_real(self) -> bool:
        return isinstance(self.group, RealGroup)

    def window_measure(self) -> float:
        if isinstance(self.group, CyclicGroup):
            return float(self.group.n)
        return self.window.measure(self.group.d)

    def group_points(self) -> list:
        if isinstance(self.group, CyclicGroup):
            return [GroupPoint(self.group, int(p)) for p in self.points]
        if self.group.d == 1:
            return [GroupPoint(self.group, (float(p),)) for p in self.points]
        return [GroupPoint(self.group, tuple(float(c) for c in row)) for row in self.points]

    def contains_identity(self, tol: float = TOLERANCE) -> bool:
        if len(self.points) == 0:
            return False
        if isinstance(self.group, CyclicGroup):
            return bool(self.points[0] == 0)
        if self.exact:
            tol = 0.0
        if self.group.d == 1:
            i = np.searchsorted(self.points, 0.0)
            for j in (i - 1, i):
                if 0 <= j < len(self.points) and abs(self.points[j]) <= tol:
                    return True
            return False
        return bool(np.any(np.all(np.abs(self.points) <= tol, axis=1)))

    def equals(self, other: "Config") -> bool:
        """Bitwise equality of group, window and point arrays."""
        return (
            self.group == other.group
            and self.window == other.window
            and self.exact == other.exact
            and self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )


def real_config(points: Iterable, R: float, d: int = 1, exact: bool = False) -> Config:
    """Build a canonical R^d configuration: validated, sorted, deduplicated.

    Points outside the closed box [-R, R]^d are rejected.
    """
    group = RealGroup(d)
    window = Window(float(R))
    arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0) if d == 1 else arr.reshape(0, d)
    if d == 1:
        arr = arr.reshape(-1)
    else:
        arr = arr.reshape(-1, d)
    if not np.all(np.isfinite(arr)):
        raise UsageError("configuration points must be finite (no NaN/inf)")
    if arr.size and np.max(np.abs(arr)) > R + 1e-12:
        raise UsageError(f"configuration point outside window radius R={R}")
    tol = 0.0 if exact else TOLERANCE
    if d == 1:
        arr = np.sort(arr)
        arr = _dedup_sorted_1d(arr, tol)
    else:
        arr = _lexsorted_rows(arr)
        arr = _dedup_sorted_rows(arr, tol)
    return Config(group=group, window=window, points=arr, exact=exact)


def cyclic_config(residues: Iterable, n: int) -> Config:
    """Build a canonical Z_n configuration (always exact)."""
    group = CyclicGroup(n)
    arr = np.asarray(sorted({int(r) % n for r in residues}), dtype=np.int64)
    return Config(group=group, window=None, points=arr, exact=True)


def _check_same_group(a: Config, b: Config):
    if a.group != b.group:
        raise GroupMismatchError(f"configs live on different groups: {a.group} vs {b.group}")


def intersect(a: Config, b: Config) -> Config:
    """Points present in both configurations.

    Exact configs match by equality; otherwise points match when within
    TOLERANCE (max-norm in R^d), each point matched at most once.  The
    surviving coordinates are taken from the left operand.
    """
    _check_same_group(a, b)
    if isinstance(a.group, CyclicGroup):
        common = sorted(set(a.points.tolist()) & set(b.points.tolist()))
        return cyclic_config(common, a.group.n)
    if a.window != b.window:
        raise WindowMismatchError(f"windows differ: {a.window} vs {b.window}")
    exact = a.exact and b.exact
    tol = 0.0 if exact else TOLERANCE
    d = a.group.d
    if d == 1:
        out = _intersect_sorted_1d(a.points, b.points, tol)
    else:
        out = _intersect_sorted_rows(a.points, b.points, tol)
    return Config(group=a.group, window=a.window, points=out, exact=exact)


def _intersect_sorted_1d(pa: np.ndarray, pb: np.ndarray, tol: float) -> np.ndarray:
    out = []
    i = j = 0
    while i < len(pa) and j < len(pb):
        diff = pa[i] - pb[j]
        if abs(diff) <= tol:
            out.append(pa[i])
            i += 1
            j += 1
        elif diff < 0:
            i += 1
        else:
            j += 1
    return np.asarray(out, dtype=float)


def _intersect_sorted_rows(pa: np.ndarray, pb: np.ndarray, tol: float) -> np.ndarray:
    out = []
    used = np.zeros(len(pb), dtype=bool)
    j_lo = 0
    for row in pa:
        while j_lo < len(pb) and pb[j_lo][0] < row[0] - tol:
            j_lo += 1
        j = j_lo
        while j < len(pb) and pb[j][0] <= row[0] + tol:
            if not used[j] and np.max(np.abs(row - pb[j])) <= tol:
                used[j] = True
                out.append(row)
                break
            j += 1
    if not out:
        return np.empty((0, pa.shape[1]))
    return np.array(out)


def difference_set(a: Config, b: Config, K: Optional[Window] = None) -> Config:
    """The set {p - q : p in a, q in b}, truncated to K and deduplicated.

    For Z_n the differences are exact residues and K is ignored (the window is
    the whole group).
    """
    _check_same_group(a, b)
    if isinstance(a.group, CyclicGroup):
        n = a.group.n
        diffs = {(int(p) - int(q)) % n for p in a.points for q in b.points}
        return cyclic_config(diffs, n)
    if K is None:
        raise UsageError("difference_set on a real group requires a window K")
    exact = a.exact and b.exact
    tol = 0.0 if exact else TOLERANCE
    d = a.group.d
    if len(a) == 0 or len(b) == 0:
        empty = np.empty(0) if d == 1 else np.empty((0, d))
        return Config(group=a.group, window=K, points=empty, exact=exact)
    if d == 1:
        vals = _window_diffs_1d(a.points, b.points, -K.R, K.R)
        vals.sort()
        vals = _dedup_sorted_1d(vals, tol)
    else:
        rows = []
        for p in a.points:
            diff = p[None, :] - b.points
            inside = np.all(np.abs(diff) <= K.R, axis=1)
            if np.any(inside):
                rows.append(diff[inside])
        if rows:
            vals = _dedup_sorted_rows(_lexsorted_rows(np.concatenate(rows)), tol)
        else:
            vals = np.empty((0, d))
    return Config(group=a.group, window=K, points=vals, exact=exact)


def _window_diffs_1d(pa: np.ndarray, pb: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """All differences p - q with p in pa, q in pb landing in [lo, hi] (closed).

    Only the q's inside [p - hi, p - lo] are touched, so the cost is
    proportional to the output size."""
    j0 = np.searchsorted(pb, pa - hi, side="left")
    j1 = np.searchsorted(pb, pa - lo, side="right")
    counts = j1 - j0
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    reps = np.repeat(pa, counts)
    starts = np.repeat(j0, counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return reps - pb[starts + within]


def count_in_box(cfg: Config, radius: float) -> int:
    """Number of configuration points inside the closed box [-radius, radius]^d."""
    if isinstance(cfg.group, CyclicGroup):
        return len(cfg)
    if cfg.group.d == 1:
        lo = np.searchsorted(cfg.points, -radius, side="left")
        hi = np.searchsorted(cfg.points, radius, side="right")
        return int(hi - lo)
    return int(np.sum(np.all(np.abs(cfg.points) <= radius, axis=1)))


def restrict(cfg: Config, radius: float) -> Config:
    """The sub-configuration inside the closed box [-radius, radius]^d."""
    if isinstance(cfg.group, CyclicGroup):
        return cfg
    window = Window(radius)
    if cfg.group.d == 1:
        lo = np.searchsorted(cfg.points, -radius, side="left")
        hi = np.searchsorted(cfg.points, radius, side="right")
        pts = cfg.points[lo:hi]
    else:
        pts = cfg.points[np.all(np.abs(cfg.points) <= radius, axis=1)]
    return Config(group=cfg.group, window=window, points=pts.copy(), exact=cfg.exact)


def config_to_json(cfg: Config) -> dict:
    if isinstance(cfg.group, CyclicGroup):
        return {
            "group": {"type": "Z", "n": cfg.group.n},
            "points": [int(p) for p in cfg.points],
            "exact": True,
        }
    return {
        "group": {"type": "R", "d": cfg.group.d},
        "points": cfg.points.tolist(),
        "R": cfg.window.R,
        "exact": cfg.exact,
    }


def config_from_json(data: Union[str, dict]) -> Config:
    obj = json.loads(data) if isinstance(data, str) else data
    g = obj["group"]
    if g["type"] == "Z":
        return cyclic_config(obj["points"], g["n"])
    return real_config(obj["points"], obj["R"], d=g["d"], exact=obj["exact"])
