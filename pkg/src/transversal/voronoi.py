"""Equivariant Voronoi tessellation and the measure of the identity's cell.

Cells follow the nearest-point rule with ties broken through the canonical
order: a point x belongs to the cell of the nearest p that minimizes x - p in
the canonical order among all nearest candidates.  The scheme is equivariant,
monotone under configuration growth, and partitions the group.  Measures are
exact on R^1 (interval midpoints) and on Z_n (enumeration); in R^d for d >= 2
the cell volume is estimated by Monte Carlo and the caller supplies the RNG
stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, UsageError
from .geometry import Config, CyclicGroup, TOLERANCE

#: Default Monte-Carlo sample count for cell volumes in dimension >= 2.
DEFAULT_VOLUME_SAMPLES = 100_000


@dataclass(frozen=True)
class VoronoiCellResult:
    """Measure of one cell, with a certified-lower-bound flag.

    measure is in Haar units: length^d on R^d, point count on Z_n.  When the
    cell touches the window boundary the reported measure is the measure of
    cell-within-window and is a lower bound for the untruncated cell.
    """

    measure: float
    truncated: bool

    @property
    def lower_bound(self) -> bool:
        return self.truncated


def cyclic_cell_counts(n: int, points) -> dict:
    """Exact Z_n tessellation: residue count of every cell.

    Each x in Z_n is assigned to the point p minimizing the cyclic distance
    min(|x-p| mod n, |p-x| mod n); ties go to the p whose difference x - p
    (canonical residue) is smallest.  Pure integer arithmetic, reused by the
    exact oracle.
    """
    pts = sorted({int(p) % n for p in points})
    if not pts:
        raise PreconditionError("cannot tessellate an empty configuration")
    counts = {p: 0 for p in pts}
    for x in range(n):
        best_p = None
        best = (n + 1, n + 1)  # (cyclic distance, canonical difference)
        for p in pts:
            r = (x - p) % n
            dist = min(r, n - r)
            key = (dist, r)
            if key < best:
                best = key
                best_p = p
        counts[best_p] += 1
    return counts


def _real_line_edges(points: np.ndarray, R: float):
    """Cell edges of a sorted R^1 configuration: midpoints, clipped to [-R, R]."""
    mids = (points[:-1] + points[1:]) / 2.0
    left = np.concatenate(([-R], mids))
    right = np.concatenate((mids, [R]))
    return left, right


def cell_at_identity(
    P: Config,
    rng: np.random.Generator | None = None,
    n_volume_samples: int = DEFAULT_VOLUME_SAMPLES,
) -> VoronoiCellResult:
    """Measure of the cell of the identity in the configuration P.

    Requires the identity to be a point of P (the Kac integrand is only
    evaluated at Palm configurations).
    """
    if len(P) == 0 or not P.contains_identity():
        raise PreconditionError("cell_at_identity requires the identity to be a point of P")
    if isinstance(P.group, CyclicGroup):
        counts = cyclic_cell_counts(P.group.n, P.points)
        return VoronoiCellResult(measure=float(counts[0]), truncated=False)
    if P.group.d == 1:
        return _cell_at_identity_1d(P)
    if rng is None:
        raise UsageError("cell_at_identity in d >= 2 needs an explicit rng for reproducibility")
    return _cell_at_identity_nd(P, rng, n_volume_samples)


def _cell_at_identity_1d(P: Config) -> VoronoiCellResult:
    pts = P.points
    R = P.window.R
    tol = 0.0 if P.exact else TOLERANCE
    i = int(np.searchsorted(pts, 0.0, side="left"))
    # locate the identity entry, then its strict neighbours
    if not (i < len(pts) and abs(pts[i]) <= tol):
        i -= 1
    p_minus = pts[i - 1] if i - 1 >= 0 else None
    p_plus = pts[i + 1] if i + 1 < len(pts) else None
    truncated = False
    if p_minus is None:
        left = -R
        truncated = True
    else:
        left = p_minus / 2.0
    if p_plus is None:
        right = R
        truncated = True
    else:
        right = p_plus / 2.0
    return VoronoiCellResult(measure=float(right - left), truncated=truncated)


def _cell_at_identity_nd(P: Config, rng: np.random.Generator, n_samples: int) -> VoronoiCellResult:
    pts = P.points
    R = P.window.R
    d = P.group.d
    id_idx = int(np.argmin(np.max(np.abs(pts), axis=1)))
    samples = rng.uniform(-R, R, size=(n_samples, d))
    # squared distances sample-by-point; P is small compared to n_samples
    d2 = np.sum((samples[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    nearest = np.min(d2, axis=1)
    assigned = np.argmin(d2, axis=1) == id_idx
    ties = np.sum(d2 == nearest[:, None], axis=1) > 1
    for i in np.nonzero(ties)[0]:  # measure-zero event; resolved by canonical order
        cand = np.nonzero(d2[i] == nearest[i])[0]
        diffs = samples[i][None, :] - pts[cand]
        order = np.lexsort(diffs.T[::-1])
        assigned[i] = cand[order[0]] == id_idx
    frac = float(np.count_nonzero(assigned)) / n_samples
    measure = frac * (2.0 * R) ** d
    truncated = False
    if np.any(assigned):
        own = samples[assigned]
        dist = np.sqrt(nearest[assigned])
        margin = R - np.max(np.abs(own), axis=1)
        truncated = bool(np.any(margin < dist))
    else:
        truncated = True
    return VoronoiCellResult(measure=measure, truncated=truncated)


def tessellate(P: Config) -> dict:
    """Map each point of P to its cell measure (R^1 and Z_n only).

    Cell measures sum to the window measure exactly on Z_n and to within
    floating-point roundoff on R^1; shifting P permutes cells with measures
    preserved.
    """
    if len(P) == 0:
        raise PreconditionError("cannot tessellate an empty configuration")
    if isinstance(P.group, CyclicGroup):
        return {p: float(c) for p, c in cyclic_cell_counts(P.group.n, P.points).items()}
    if P.group.d != 1:
        raise UsageError("tessellate supports R^1 and Z_n only")
    left, right = _real_line_edges(P.points, P.window.R)
    return {float(p): float(r - l) for p, l, r in zip(P.points, left, right)}
