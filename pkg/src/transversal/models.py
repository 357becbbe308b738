"""The model zoo: concrete systems with ambient and Palm samplers.

Each model describes a measure-preserving action with a chosen cross section,
exposed through two samplers: sample_ambient draws a state from the invariant
measure and reports its return-time configuration, sample_palm draws from the
normalized transverse (Palm) measure, whose configurations always contain the
identity.  Batch variants draw many samples with one fixed pattern of RNG
consumption; estimators use the batch path exclusively so that results are
reproducible and independent of how work is chunked.

Models:
  Lattice     the totally periodic case; return sets are lattice cosets.
  CutProject  points of a planar lattice cut along a window strip and
              projected; the default instance is the sqrt(2) scheme with
              window [0, 1].
  Poisson     the stationary Poisson process with its zero-cell cross section
              (Palm draws add the identity to a fresh sample).
  Suspension  flow under a two-valued roof over an irrational rotation; the
              roof is 2 on a base set of measure epsilon and 1 elsewhere.
  Extension   an auxiliary label glued onto any inner model; return sets are
              untouched, realizing a factor that preserves every transverse
              invariant.
  Cyclic      a finite exact system from the oracle module.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ResourceBudgetError, UsageError
from .geometry import (
    Config,
    CyclicGroup,
    RealGroup,
    TOLERANCE,
    cyclic_config,
    real_config,
)
from .oracle import CyclicSystem, exact_covolume, exact_intensity, exact_transverse

SQRT2 = math.sqrt(2.0)
#: Rotation angle of the suspension base transformation.
GOLDEN_ROTATION = (math.sqrt(5.0) - 1.0) / 2.0
#: Generators of the default planar lattice {(m + n*sqrt2, m - n*sqrt2)}.
DEFAULT_CUTPROJECT_BASIS = ((1.0, 1.0), (SQRT2, -SQRT2))

#: Size guard for lattice/strip enumerations.
ENUMERATION_BUDGET = 5_000_000


@dataclass(frozen=True)
class Lattice:
    basis: Tuple[Tuple[float, ...], ...] = ((1.0,),)
    R: float = 50.0

    @property
    def d(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class CutProject:
    basis: Tuple[Tuple[float, float], Tuple[float, float]] = DEFAULT_CUTPROJECT_BASIS
    w_lo: float = 0.0
    w_hi: float = 1.0
    R: float = 100.0


@dataclass(frozen=True)
class Poisson:
    rate: float = 1.0
    d: int = 1
    R: float = 50.0


@dataclass(frozen=True)
class Suspension:
    epsilon: float = 0.1
    alpha: float = GOLDEN_ROTATION
    R: float = 100.0


@dataclass(frozen=True)
class Extension:
    inner: "ModelSpec"


@dataclass(frozen=True)
class Cyclic:
    system: CyclicSystem


ModelSpec = Union[Lattice, CutProject, Poisson, Suspension, Extension, Cyclic]


@dataclass(frozen=True)
class AmbientSample:
    label: object
    returns: Config


@dataclass(frozen=True)
class PalmSample:
    label: object
    returns: Config


# ---------------------------------------------------------------------------
# Validation and plumbing.


def _near_rational(x: float, max_den: int = 10_000, tol: float = 1e-9) -> bool:
    approx = Fraction(x).limit_denominator(max_den)
    return abs(x - float(approx)) < tol


def validate_spec(spec: ModelSpec) -> None:
    """Raise UsageError naming the offending field when a spec is invalid."""
    if isinstance(spec, Lattice):
        b = np.asarray(spec.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise UsageError("basis: lattice basis must be a square matrix")
        if abs(np.linalg.det(b)) < 1e-12:
            raise UsageError("basis: lattice basis is singular")
        _require_radius(spec.R)
    elif isinstance(spec, CutProject):
        (g1, h1), (g2, h2) = spec.basis
        det = g1 * h2 - g2 * h1
        if abs(det) < 1e-12:
            raise UsageError("basis: cut-and-project lattice basis is singular")
        if g1 == 0 or g2 == 0 or _near_rational(g2 / g1):
            raise UsageError("basis: G-projection is not injective (rational slope)")
        if h1 == 0 or h2 == 0 or _near_rational(h2 / h1):
            raise UsageError("basis: H-projection is not dense (rational slope)")
        if not spec.w_lo < spec.w_hi:
            raise UsageError(f"w_lo/w_hi: window [{spec.w_lo}, {spec.w_hi}] is empty")
        _require_radius(spec.R)
    elif isinstance(spec, Poisson):
        if not spec.rate > 0:
            raise UsageError(f"rate: Poisson rate must be positive, got {spec.rate}")
        if spec.d < 1:
            raise UsageError(f"d: dimension must be >= 1, got {spec.d}")
        _require_radius(spec.R)
    elif isinstance(spec, Suspension):
        if not 0 < spec.epsilon < 1:
            raise UsageError(f"epsilon: must lie in (0, 1), got {spec.epsilon}")
        if not 0 < spec.alpha < 1 or _near_rational(spec.alpha):
            raise UsageError(f"alpha: rotation must be irrational in (0, 1), got {spec.alpha}")
        _require_radius(spec.R)
    elif isinstance(spec, Extension):
        validate_spec(spec.inner)
    elif isinstance(spec, Cyclic):
        spec.system.check_invariance()
    else:
        raise UsageError(f"unknown model spec {spec!r}")


def _require_radius(R: float):
    if not (R > 0) or not np.isfinite(R):
        raise UsageError(f"R: window radius must be positive and finite, got {R}")


def group_of(spec: ModelSpec):
    if isinstance(spec, Lattice):
        return RealGroup(spec.d)
    if isinstance(spec, (CutProject, Suspension)):
        return RealGroup(1)
    if isinstance(spec, Poisson):
        return RealGroup(spec.d)
    if isinstance(spec, Extension):
        return group_of(spec.inner)
    return CyclicGroup(spec.system.n)


def window_radius(spec: ModelSpec) -> float:
    if isinstance(spec, Extension):
        return window_radius(spec.inner)
    if isinstance(spec, Cyclic):
        return float(spec.system.n)
    return spec.R


def with_window_radius(spec: ModelSpec, R: float) -> ModelSpec:
    """A copy of spec truncating configurations at radius R."""
    if isinstance(spec, Extension):
        return Extension(inner=with_window_radius(spec.inner, R))
    if isinstance(spec, Cyclic):
        return spec
    return dataclasses.replace(spec, R=R)


def model_name(spec: ModelSpec) -> str:
    if isinstance(spec, Extension):
        return f"extension({model_name(spec.inner)})"
    return type(spec).__name__.lower()


def spec_to_dict(spec: ModelSpec) -> dict:
    """Canonical description used for hashing and serialization."""
    if isinstance(spec, Lattice):
        return {"variant": "lattice", "basis": [list(r) for r in spec.basis], "R": spec.R}
    if isinstance(spec, CutProject):
        return {
            "variant": "cutproject",
            "basis": [list(r) for r in spec.basis],
            "w_lo": spec.w_lo,
            "w_hi": spec.w_hi,
            "R": spec.R,
        }
    if isinstance(spec, Poisson):
        return {"variant": "poisson", "rate": spec.rate, "d": spec.d, "R": spec.R}
    if isinstance(spec, Suspension):
        return {
            "variant": "suspension",
            "epsilon": spec.epsilon,
            "alpha": spec.alpha,
            "R": spec.R,
        }
    if isinstance(spec, Extension):
        return {"variant": "extension", "inner": spec_to_dict(spec.inner)}
    sys = spec.system
    return {
        "variant": "cyclic",
        "n": sys.n,
        "orbit_weights": [str(w) for w in sys.orbit_weights],
        "cross_section": [list(p) for p in sys.cross_section],
    }


# ---------------------------------------------------------------------------
# Lattice enumeration.


def _integer_range(lo: float, hi: float) -> np.ndarray:
    return np.arange(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)


def _lattice_points_1d(b: float, offset: float, R: float) -> np.ndarray:
    ks = _integer_range((-R + offset) / b, (R + offset) / b)
    return ks * b - offset


def _lattice_points_nd(basis: np.ndarray, offset: np.ndarray, R: float) -> np.ndarray:
    d = basis.shape[0]
    est = (2.0 * R + 2.0 * float(np.abs(basis).sum())) ** d / abs(np.linalg.det(basis))
    if est > ENUMERATION_BUDGET:
        raise ResourceBudgetError(
            f"lattice enumeration needs ~{est:.0f} points, budget is {ENUMERATION_BUDGET}"
        )
    inv = np.linalg.inv(basis.T)
    corners = np.array(
        [[(R if (i >> j) & 1 else -R) for j in range(d)] for i in range(2**d)]
    )
    pre = (corners + offset) @ inv.T
    ranges = [
        _integer_range(pre[:, j].min() - 1.0, pre[:, j].max() + 1.0) for j in range(d)
    ]
    grids = np.meshgrid(*ranges, indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=1)
    pts = ks @ basis - offset
    inside = np.all(np.abs(pts) <= R + 1e-12, axis=1)
    return pts[inside]


# ---------------------------------------------------------------------------
# Cut-and-project strip enumeration.


def enumerate_strip(
    basis, g_lo: float, g_hi: float, h_lo: float, h_hi: float
) -> Tuple[np.ndarray, np.ndarray]:
    """All lattice points m*v1 + n*v2 with G-coordinate in [g_lo, g_hi] and
    H-coordinate in [h_lo, h_hi]; boundaries are inclusive to ~1e-9.

    Returns (gs, hs) sorted by the G-coordinate.  Cost is linear in the
    output; the expected count (strip area / covolume) is budget-guarded.
    """
    (g1, h1), (g2, h2) = basis
    det = g1 * h2 - g2 * h1
    est = (g_hi - g_lo) * (h_hi - h_lo) / abs(det)
    if est > ENUMERATION_BUDGET:
        raise ResourceBudgetError(
            f"strip enumeration needs ~{est:.0f} points (window too large for basis); "
            f"budget is {ENUMERATION_BUDGET}"
        )
    corners_m = [
        (h2 * g - g2 * h) / det for g in (g_lo, g_hi) for h in (h_lo, h_hi)
    ]
    ms = _integer_range(min(corners_m) - 1.0, max(corners_m) + 1.0)
    if len(ms) == 0:
        return np.empty(0), np.empty(0)

    def n_interval(lo, hi, a, b):
        # lo <= m*a + n*b <= hi, solved for n (b is nonzero after validation)
        lo_n = (lo - ms * a) / b
        hi_n = (hi - ms * a) / b
        if b < 0:
            lo_n, hi_n = hi_n, lo_n
        return lo_n, hi_n

    lo1, hi1 = n_interval(g_lo, g_hi, g1, g2)
    lo2, hi2 = n_interval(h_lo, h_hi, h1, h2)
    n_lo = np.ceil(np.maximum(lo1, lo2) - 1e-9).astype(np.int64)
    n_hi = np.floor(np.minimum(hi1, hi2) + 1e-9).astype(np.int64)
    counts = np.maximum(0, n_hi - n_lo + 1)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0), np.empty(0)
    m_rep = np.repeat(ms, counts)
    starts = np.repeat(n_lo, counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    n_rep = starts + within
    gs = m_rep * g1 + n_rep * g2
    hs = m_rep * h1 + n_rep * h2
    order = np.argsort(gs, kind="stable")
    return gs[order], hs[order]


@lru_cache(maxsize=64)
def _strip_cache(basis, g_lo, g_hi, h_lo, h_hi):
    gs, hs = enumerate_strip(basis, g_lo, g_hi, h_lo, h_hi)
    gs.flags.writeable = False
    hs.flags.writeable = False
    return gs, hs


def _cp_covolume(basis) -> float:
    (g1, h1), (g2, h2) = basis
    return abs(g1 * h2 - g2 * h1)


# ---------------------------------------------------------------------------
# Suspension orbits.


def _suspension_points(
    epsilon: float, alpha: float, zs: np.ndarray, R: float, with_fills: bool = False
) -> List[np.ndarray]:
    """Return-time points {S_k(z)} within [-R-1, R+1] for each z, where the
    cumulative sums S_k walk the roof r = 1 + 1_{[1-eps, 1)} along the
    rotation orbit.  with_fills also inserts S_k + 1 wherever the roof step
    is 2 (the enlarged, completely periodic cross section)."""
    count = len(zs)
    K = int(math.ceil(R)) + 3
    ks = np.arange(K)
    fwd_roof = 1.0 + (np.mod(zs[None, :] + ks[:, None] * alpha, 1.0) >= 1.0 - epsilon)
    bwd_roof = 1.0 + (np.mod(zs[None, :] - (ks[:, None] + 1) * alpha, 1.0) >= 1.0 - epsilon)
    s_fwd = np.cumsum(fwd_roof, axis=0)  # S_1 .. S_K
    s_bwd = -np.cumsum(bwd_roof, axis=0)  # S_-1 .. S_-K
    out = []
    for i in range(count):
        pts = [s_bwd[::-1, i], np.array([0.0]), s_fwd[:, i]]
        if with_fills:
            fwd_fill = np.concatenate(([0.0], s_fwd[:-1, i]))[fwd_roof[:, i] == 2.0] + 1.0
            bwd_fill = s_bwd[:, i][bwd_roof[:, i] == 2.0] + 1.0
            pts += [fwd_fill, bwd_fill]
        out.append(np.sort(np.concatenate(pts)))
    return out


# ---------------------------------------------------------------------------
# Samplers.


def sample_ambient(spec: ModelSpec, rng: np.random.Generator) -> AmbientSample:
    return sample_ambient_batch(spec, rng, 1)[0]


def sample_palm(spec: ModelSpec, rng: np.random.Generator) -> PalmSample:
    return sample_palm_batch(spec, rng, 1)[0]


def sample_ambient_batch(
    spec: ModelSpec, rng: np.random.Generator, count: int
) -> List[AmbientSample]:
    if isinstance(spec, Lattice):
        return _ambient_lattice(spec, rng, count)
    if isinstance(spec, CutProject):
        return _ambient_cutproject(spec, rng, count)
    if isinstance(spec, Poisson):
        return _ambient_poisson(spec, rng, count)
    if isinstance(spec, Suspension):
        return _ambient_suspension(spec, rng, count)
    if isinstance(spec, Extension):
        inner = sample_ambient_batch(spec.inner, rng, count)
        aux = rng.spawn(1)[0].random(count)
        return [AmbientSample(label=(s.label, float(a)), returns=s.returns) for s, a in zip(inner, aux)]
    if isinstance(spec, Cyclic):
        return _ambient_cyclic(spec, rng, count)
    raise UsageError(f"unknown model spec {spec!r}")


def sample_palm_batch(
    spec: ModelSpec, rng: np.random.Generator, count: int
) -> List[PalmSample]:
    if isinstance(spec, Lattice):
        return _palm_lattice(spec, count)
    if isinstance(spec, CutProject):
        return _palm_cutproject(spec, rng, count)
    if isinstance(spec, Poisson):
        return _palm_poisson(spec, rng, count)
    if isinstance(spec, Suspension):
        return _palm_suspension(spec, rng, count)
    if isinstance(spec, Extension):
        inner = sample_palm_batch(spec.inner, rng, count)
        aux = rng.spawn(1)[0].random(count)
        return [PalmSample(label=(s.label, float(a)), returns=s.returns) for s, a in zip(inner, aux)]
    if isinstance(spec, Cyclic):
        return _palm_cyclic(spec, rng, count)
    raise UsageError(f"unknown model spec {spec!r}")


def _ambient_lattice(spec: Lattice, rng, count):
    basis = np.asarray(spec.basis, dtype=float)
    R = spec.R
    out = []
    if spec.d == 1:
        b = abs(basis[0, 0])
        us = rng.uniform(0.0, b, size=count)
        for u in us:
            pts = _lattice_points_1d(b, float(u), R)
            out.append(AmbientSample(label=float(u), returns=real_config(pts, R)))
        return out
    coeffs = rng.random(size=(count, spec.d))
    for c in coeffs:
        offset = c @ basis
        pts = _lattice_points_nd(basis, offset, R)
        out.append(AmbientSample(label=tuple(offset), returns=real_config(pts, R, d=spec.d)))
    return out


def _palm_lattice(spec: Lattice, count):
    basis = np.asarray(spec.basis, dtype=float)
    R = spec.R
    exact = bool(np.all(basis == np.round(basis)))
    if spec.d == 1:
        pts = _lattice_points_1d(abs(basis[0, 0]), 0.0, R)
        cfg = real_config(pts, R, exact=exact)
    else:
        pts = _lattice_points_nd(basis, np.zeros(spec.d), R)
        cfg = real_config(pts, R, d=spec.d, exact=exact)
    # the Palm measure of the totally periodic model is a point mass
    return [PalmSample(label=None, returns=cfg) for _ in range(count)]


def _ambient_cutproject(spec: CutProject, rng, count):
    (g1, h1), (g2, h2) = spec.basis
    R = spec.R
    sg = abs(g1) + abs(g2)
    sh = abs(h1) + abs(h2)
    gs, hs = _strip_cache(spec.basis, -R - sg, R + sg, -sh - spec.w_hi, sh - spec.w_lo)
    xi = rng.random(count)
    eta = rng.random(count)
    ss = xi * g1 + eta * g2
    ts = xi * h1 + eta * h2
    out = []
    for s, t in zip(ss, ts):
        mask = (
            (hs >= t - spec.w_hi - 1e-12)
            & (hs <= t - spec.w_lo + 1e-12)
            & (np.abs(gs - s) <= R + 1e-12)
        )
        out.append(
            AmbientSample(label=(float(s), float(t)), returns=real_config(gs[mask] - s, R))
        )
    return out


def _palm_cutproject(spec: CutProject, rng, count):
    R = spec.R
    width = spec.w_hi - spec.w_lo
    gs, hs = _strip_cache(spec.basis, -R, R, -width, width)
    ws = rng.uniform(spec.w_lo, spec.w_hi, size=count)
    out = []
    for w in ws:
        mask = (hs >= w - spec.w_hi - 1e-12) & (hs <= w - spec.w_lo + 1e-12)
        out.append(PalmSample(label=float(w), returns=real_config(gs[mask], R)))
    return out


def _ambient_poisson(spec: Poisson, rng, count):
    R = spec.R
    enlarged = R + 10.0 / spec.rate
    mean = spec.rate * (2.0 * enlarged) ** spec.d
    ns = rng.poisson(mean, size=count)
    total = int(ns.sum())
    flat = rng.uniform(-enlarged, enlarged, size=(total, spec.d))
    splits = np.cumsum(ns)[:-1]
    out = []
    for chunk in np.split(flat, splits):
        inside = np.all(np.abs(chunk) <= R, axis=1)
        pts = chunk[inside] if spec.d > 1 else chunk[inside, 0]
        out.append(AmbientSample(label=None, returns=real_config(pts, R, d=spec.d)))
    return out


def _palm_poisson(spec: Poisson, rng, count):
    # Slivnyak sampler: a fresh ambient draw with the identity adjoined.
    R = spec.R
    enlarged = R + 10.0 / spec.rate
    mean = spec.rate * (2.0 * enlarged) ** spec.d
    ns = rng.poisson(mean, size=count)
    total = int(ns.sum())
    flat = rng.uniform(-enlarged, enlarged, size=(total, spec.d))
    splits = np.cumsum(ns)[:-1]
    origin = np.zeros((1, spec.d))
    out = []
    for chunk in np.split(flat, splits):
        pts = np.concatenate((chunk[np.all(np.abs(chunk) <= R, axis=1)], origin))
        if spec.d == 1:
            pts = pts[:, 0]
        out.append(PalmSample(label=None, returns=real_config(pts, R, d=spec.d)))
    return out


def _ambient_suspension(spec: Suspension, rng, count):
    eps = spec.epsilon
    mix = rng.random(count)
    z_flat = rng.random(count)
    z_tall = 1.0 - eps + eps * rng.random(count)
    zs = np.where(mix < 1.0 / (1.0 + eps), z_flat, z_tall)
    roofs = 1.0 + (zs >= 1.0 - eps)
    ts = roofs * rng.random(count)
    orbit = _suspension_points(eps, spec.alpha, zs, spec.R)
    out = []
    for z, t, pts in zip(zs, ts, orbit):
        shifted = pts - t
        inside = np.abs(shifted) <= spec.R
        out.append(
            AmbientSample(label=(float(z), float(t)), returns=real_config(shifted[inside], spec.R))
        )
    return out


def _palm_suspension(spec: Suspension, rng, count):
    zs = rng.random(count)
    orbit = _suspension_points(spec.epsilon, spec.alpha, zs, spec.R)
    out = []
    for z, pts in zip(zs, orbit):
        inside = np.abs(pts) <= spec.R
        out.append(
            PalmSample(label=float(z), returns=real_config(pts[inside], spec.R, exact=True))
        )
    return out


def sample_palm_tilde_batch(
    spec: Suspension, rng: np.random.Generator, count: int
) -> List[PalmSample]:
    """Palm samples of the enlarged cross section Y-tilde = Y union (Z_eps x {1}).

    Its transverse measure has total mass 1, split 1/(1+eps) on the base sheet
    and eps/(1+eps) on the second sheet; the return sets are cosets of the
    integers, built here from the roof orbit with the gap-2 fill points.
    """
    if not isinstance(spec, Suspension):
        raise UsageError("the enlarged cross section is defined for suspensions only")
    eps = spec.epsilon
    mix = rng.random(count)
    z_flat = rng.random(count)
    z_tall = 1.0 - eps + eps * rng.random(count)
    base_sheet = mix < 1.0 / (1.0 + eps)
    zs = np.where(base_sheet, z_flat, z_tall)
    orbit = _suspension_points(eps, spec.alpha, zs, spec.R, with_fills=True)
    out = []
    for z, on_base, pts in zip(zs, base_sheet, orbit):
        shifted = pts if on_base else pts - 1.0
        inside = np.abs(shifted) <= spec.R
        out.append(
            PalmSample(
                label=(float(z), 0 if on_base else 1),
                returns=real_config(shifted[inside], spec.R, exact=True),
            )
        )
    return out


def _cyclic_states_and_probs(spec: Cyclic):
    sys = spec.system
    states = sys.states()
    probs = np.array([float(sys.mu(x)) for x in states])
    return states, probs / probs.sum()


def _ambient_cyclic(spec: Cyclic, rng, count):
    sys = spec.system
    states, probs = _cyclic_states_and_probs(spec)
    idx = rng.choice(len(states), size=count, p=probs)
    out = []
    for i in idx:
        x = states[int(i)]
        out.append(AmbientSample(label=x, returns=cyclic_config(sys.return_set(x), sys.n)))
    return out


def _palm_cyclic(spec: Cyclic, rng, count):
    sys = spec.system
    mu_y = exact_transverse(sys)
    ys = list(mu_y)
    probs = np.array([float(v) for v in mu_y.values()])
    idx = rng.choice(len(ys), size=count, p=probs / probs.sum())
    out = []
    for i in idx:
        y = ys[int(i)]
        out.append(PalmSample(label=y, returns=cyclic_config(sys.return_set(y), sys.n)))
    return out


# ---------------------------------------------------------------------------
# Analytic golden values.


@dataclass(frozen=True)
class AnalyticValues:
    """Closed-form invariants a model is known to have; absent fields are
    simply unknown, never guessed."""

    intensity: Optional[float] = None
    covolume: Tuple[Tuple[int, float], ...] = ()
    covolume_upper: Optional[float] = None  # certified upper bound for I^2
    covolume_infinite: bool = False  # I^2 known to be infinite

    def covolume_for(self, r: int) -> Optional[float]:
        for rr, v in self.covolume:
            if rr == r:
                return v
        return None


@lru_cache(maxsize=128)
def analytic_values(spec: ModelSpec) -> AnalyticValues:
    if isinstance(spec, Lattice):
        iota = 1.0 / abs(float(np.linalg.det(np.asarray(spec.basis, dtype=float))))
        return AnalyticValues(
            intensity=iota,
            covolume=tuple((r, iota ** (r - 1)) for r in range(1, 5)),
        )
    if isinstance(spec, CutProject):
        # window mass over lattice covolume; checked at runtime against the
        # counting estimator and the shift-invariance statistics
        iota = (spec.w_hi - spec.w_lo) / _cp_covolume(spec.basis)
        return AnalyticValues(intensity=iota)
    if isinstance(spec, Poisson):
        return AnalyticValues(intensity=spec.rate, covolume=((1, 1.0),), covolume_infinite=True)
    if isinstance(spec, Suspension):
        return AnalyticValues(
            intensity=1.0 / (1.0 + spec.epsilon), covolume=((1, 1.0),), covolume_upper=1.0
        )
    if isinstance(spec, Extension):
        return analytic_values(spec.inner)
    if isinstance(spec, Cyclic):
        sys = spec.system
        covs = []
        for r in (1, 2, 3):
            if (sys.n**r) * (len(sys.states()) ** r) <= 200_000:
                covs.append((r, float(exact_covolume(sys, r).value)))
        return AnalyticValues(intensity=float(exact_intensity(sys)), covolume=tuple(covs))
    raise UsageError(f"unknown model spec {spec!r}")


# ---------------------------------------------------------------------------
# Return-times probe.


@dataclass(frozen=True)
class LambdaProbeResult:
    """Minimum nonzero magnitude over the empirical k-fold sum set of pooled
    Palm return points, truncated to the window."""

    min_gap: float
    pooled_points: int
    k: int
    n_samples: int
    pool_capped: bool = False


#: Base-set cap before forming k-fold sums (k >= 2); the full pool is always
#: used for k = 1.
SUMSET_BASE_CAP = 4000


def lambda_probe(
    spec: ModelSpec, k: int, n_samples: int, rng: np.random.Generator
) -> LambdaProbeResult:
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    samples = sample_palm_batch(spec, rng, n_samples)
    group = group_of(spec)
    if isinstance(group, CyclicGroup):
        pool = set()
        for s in samples:
            pool.update(int(p) for p in s.returns.points)
        current = set(pool)
        for _ in range(k - 1):
            current = {(a + b) % group.n for a in current for b in pool}
        nonzero = [min(g, group.n - g) for g in current if g != 0]
        gap = float(min(nonzero)) if nonzero else float("inf")
        return LambdaProbeResult(gap, len(pool), k, n_samples)
    if group.d != 1:
        raise UsageError("lambda_probe supports R^1 and Z_n models")
    R = window_radius(spec)
    pool = np.unique(np.concatenate([s.returns.points for s in samples]))
    pooled_points = len(pool)
    capped = False
    base = pool
    current = pool
    if k > 1 and len(base) > SUMSET_BASE_CAP:
        base = base[np.linspace(0, len(base) - 1, SUMSET_BASE_CAP).astype(int)]
        current = base
        capped = True
    for _ in range(k - 1):
        sums = (current[:, None] + base[None, :]).ravel()
        sums = sums[np.abs(sums) <= R]
        current = np.unique(sums)
        if len(current) > 500_000:
            current = current[np.linspace(0, len(current) - 1, 500_000).astype(int)]
            capped = True
    mags = np.abs(current)
    nonzero = mags[mags > TOLERANCE]
    gap = float(nonzero.min()) if len(nonzero) else float("inf")
    return LambdaProbeResult(gap, pooled_points, k, n_samples, pool_capped=capped)
