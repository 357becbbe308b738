"""Monte-Carlo estimators of intensity and intersection covolume.

Two independent routes to the covolume are implemented: the Kac route
(transverse-weighted Voronoi cell of the identity in r-fold intersections of
Palm return sets) and the alternate route (counting the difference set of two
independent ambient return sets, the intensity of the order-2 intersection
cross section in the product action).  Their agreement on every finite-
covolume model is the module's core consistency check.  A statistical
shift-invariance checker certifies the Palm samplers, and report helpers
cover the basic inequality and the enlarged-cross-section monotonicity bound.

Determinism contract: a fixed number of work chunks (not tied to the thread
count) each get an independent child RNG, and partial moments are merged by a
pairwise tree in fixed chunk order, so identical (spec, seed, n, R) give
bit-identical estimates for any thread count.  Exact finite models (Cyclic)
skip sampling entirely and evaluate the finite expectation, which reproduces
the oracle values to float precision.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import InvariantViolation, UsageError
from .geometry import (
    CyclicGroup,
    TOLERANCE,
    Window,
    count_in_box,
    difference_set,
    intersect,
    restrict,
)
from .models import (
    Cyclic,
    Extension,
    ModelSpec,
    Suspension,
    analytic_values,
    group_of,
    sample_ambient_batch,
    sample_palm_batch,
    sample_palm_tilde_batch,
    validate_spec,
    window_radius,
    with_window_radius,
)
from .oracle import exact_intensity, exact_kac_covolume, exact_mecke, random_test_table
from .voronoi import DEFAULT_VOLUME_SAMPLES, cell_at_identity

#: Fixed chunk count for the parallel map-reduce; results must not depend on
#: the number of worker threads, so this never does either.
N_CHUNKS = 64


@dataclass(frozen=True)
class Estimate:
    """A Monte-Carlo result with its truncation diagnostics.

    truncated_fraction is the fraction of samples whose cell or count was
    clipped by the window; any clipping makes the value a certified lower
    bound (we never extrapolate).  Exact-enumeration estimates report the
    number of enumerated atoms as n and zero stderr.
    """

    value: float
    stderr: float
    n: int
    R: float
    truncated_fraction: float = 0.0

    @property
    def is_lower_bound(self) -> bool:
        return self.truncated_fraction > 0


@dataclass(frozen=True)
class MeckeReport:
    lhs: Estimate
    rhs: Estimate
    z_score: float
    test_function_id: str


@dataclass(frozen=True)
class TestFunction:
    """Product test function phi_a(g) * psi_b(configuration).

    phi_a is the triangle bump max(0, 1 - |g|/a); psi_b is 1, the point count
    in [-b, b], or the nearest-positive-gap clipped at b.
    """

    __test__ = False  # not a pytest class

    a: float
    psi: str  # "one" | "count" | "gap"
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.psi not in ("one", "count", "gap"):
            raise UsageError(f"unknown psi family {self.psi!r}")
        if not self.a > 0:
            raise UsageError(f"bump half-width must be positive, got a={self.a}")
        if self.psi != "one" and not self.b > 0:
            raise UsageError(f"psi={self.psi} needs b > 0, got b={self.b}")

    @property
    def id(self) -> str:
        if self.psi == "one":
            return f"phi{self.a:g}_one"
        return f"phi{self.a:g}_{self.psi}{self.b:g}"

    @property
    def support(self) -> float:
        return self.a + self.b


def parse_test_function(f_id: str) -> TestFunction:
    try:
        head, tail = f_id.split("_", 1)
        a = float(head.removeprefix("phi"))
        for name in ("count", "gap"):
            if tail.startswith(name):
                return TestFunction(a=a, psi=name, b=float(tail.removeprefix(name)))
        if tail == "one":
            return TestFunction(a=a, psi="one")
    except ValueError:
        pass
    raise UsageError(f"cannot parse test function id {f_id!r}")


def builtin_test_functions() -> List[TestFunction]:
    """The canonical battery of 20 test functions (max support 20)."""
    ones = [TestFunction(a, "one") for a in (1, 2, 3, 5, 8, 12, 20)]
    counts = [
        TestFunction(a, "count", b)
        for a, b in ((2, 2), (2, 8), (5, 5), (5, 10), (8, 4), (3, 12), (10, 10))
    ]
    gaps = [
        TestFunction(a, "gap", b)
        for a, b in ((2, 3), (5, 5), (5, 10), (8, 8), (3, 6), (12, 3))
    ]
    return ones + counts + gaps


# ---------------------------------------------------------------------------
# Chunked, reproducible map-reduce.


def _chunk_sizes(n: int) -> List[int]:
    base, rem = divmod(n, N_CHUNKS)
    return [base + (1 if i < rem else 0) for i in range(N_CHUNKS)]


def _run_chunks(worker, rng: np.random.Generator, n: int, threads: int) -> list:
    """Run worker(chunk_rng, size) over fixed chunks; results in chunk order."""
    sizes = _chunk_sizes(n)
    rngs = rng.spawn(N_CHUNKS)

    def job(i: int):
        if sizes[i] == 0:
            return None
        return worker(rngs[i], sizes[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, range(N_CHUNKS)))
    return [job(i) for i in range(N_CHUNKS)]


def _moments(values: np.ndarray) -> Tuple[int, float, float]:
    n = len(values)
    if n == 0:
        return (0, 0.0, 0.0)
    mean = float(values.mean())
    m2 = float(np.sum((values - mean) ** 2))
    return (n, mean, m2)


def _combine(a, b):
    # Chan's parallel update of (count, mean, sum of squared deviations)
    n1, m1, s1 = a
    n2, m2, s2 = b
    if n1 == 0:
        return b
    if n2 == 0:
        return a
    n = n1 + n2
    delta = m2 - m1
    return (n, m1 + delta * n2 / n, s1 + s2 + delta * delta * n1 * n2 / n)


def _tree_reduce(items: list):
    while len(items) > 1:
        items = [
            _combine(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
            for i in range(0, len(items), 2)
        ]
    return items[0]


def _mc_mean(worker, rng, n, threads) -> Tuple[float, float, float]:
    """Mean, stderr (ddof=1) and flagged fraction of a chunked sample stream.

    worker(chunk_rng, size) returns (values array, flagged count)."""
    partials = _run_chunks(worker, rng, n, threads)
    moments = [_moments(p[0]) for p in partials if p is not None]
    flagged = sum(p[1] for p in partials if p is not None)
    count, mean, m2 = _tree_reduce(moments)
    m2 = max(0.0, m2)  # guard float drift in the combine
    stderr = math.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0
    return mean, stderr, flagged / count


# ---------------------------------------------------------------------------
# Intensity.


def _haar_box_measure(spec: ModelSpec, K_radius: float) -> float:
    group = group_of(spec)
    if isinstance(group, CyclicGroup):
        return float(group.n)
    return (2.0 * K_radius) ** group.d


def estimate_intensity(
    spec: ModelSpec,
    K_radius: float,
    n: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
) -> Estimate:
    """Mean number of ambient return points per unit Haar measure of the
    counting box [-K, K]^d."""
    validate_spec(spec)
    if isinstance(_base_spec(spec), Cyclic):
        return _exact_cyclic_intensity(spec)
    R = window_radius(spec)
    if K_radius > R:
        raise UsageError(f"K_radius={K_radius} exceeds the window radius R={R}")
    if n < 2:
        raise UsageError(f"need n >= 2 samples, got {n}")
    mK = _haar_box_measure(spec, K_radius)

    def worker(chunk_rng, size):
        samples = sample_ambient_batch(spec, chunk_rng, size)
        values = np.array([count_in_box(s.returns, K_radius) for s in samples]) / mK
        return values, 0

    mean, stderr, _ = _mc_mean(worker, rng, n, threads)
    return Estimate(value=mean, stderr=stderr, n=n, R=R, truncated_fraction=0.0)


# ---------------------------------------------------------------------------
# Covolume, Kac route.


def estimate_covolume_kac(
    spec: ModelSpec,
    r: int,
    n: int,
    R: float,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    empirical_intensity: bool = False,
    intensity_K_radius: Optional[float] = None,
    cell_volume_samples: int = DEFAULT_VOLUME_SAMPLES,
) -> Estimate:
    """I^r as iota^r times the mean Voronoi cell of the identity over r-fold
    intersections of independent Palm return sets.

    iota defaults to the model's analytic intensity so covolume noise is
    decoupled from intensity noise; empirical_intensity forces the fully
    empirical path (with error propagation for the product).
    """
    validate_spec(spec)
    if r < 1:
        raise UsageError(f"order must be >= 1, got r={r}")
    if isinstance(_base_spec(spec), Cyclic):
        return _exact_cyclic_kac(spec, r)
    if n < 2:
        raise UsageError(f"need n >= 2 samples, got {n}")
    spec_r = with_window_radius(spec, R)

    iota_se = 0.0
    if empirical_intensity:
        k_rad = intensity_K_radius if intensity_K_radius is not None else R / 4.0
        iota_est = estimate_intensity(spec_r, k_rad, n, rng.spawn(1)[0], threads=threads)
        iota, iota_se = iota_est.value, iota_est.stderr
    else:
        iota = analytic_values(spec).intensity
        if iota is None:
            raise UsageError("model has no analytic intensity; use empirical_intensity=True")

    def worker(chunk_rng, size):
        samples = sample_palm_batch(spec_r, chunk_rng, r * size)
        values = np.empty(size)
        flagged = 0
        for i in range(size):
            cfgs = [samples[i * r + j].returns for j in range(r)]
            inter = reduce(intersect, cfgs)
            if not inter.contains_identity():
                raise InvariantViolation("Palm intersection lost the identity")
            cell = cell_at_identity(inter, rng=chunk_rng, n_volume_samples=cell_volume_samples)
            values[i] = cell.measure
            flagged += cell.truncated
        return values, flagged

    mean_cell, se_cell, trunc = _mc_mean(worker, rng, n, threads)
    value = (iota**r) * mean_cell
    var = ((iota**r) * se_cell) ** 2
    if empirical_intensity:
        var += (r * (iota ** (r - 1)) * mean_cell * iota_se) ** 2
    return Estimate(value=value, stderr=math.sqrt(var), n=n, R=R, truncated_fraction=trunc)


# ---------------------------------------------------------------------------
# Covolume, alternate route (difference sets).


def estimate_covolume_alt(
    spec: ModelSpec,
    n: int,
    K_radius: float,
    R: float,
    rng: np.random.Generator,
    *,
    threads: int = 1,
) -> Estimate:
    """I as the intensity of the order-2 intersection cross section: the mean
    count of the difference set of two independent ambient return sets per
    unit measure of [-K, K].

    A pair is flagged (lower bound) when its difference set changes after
    shrinking both sources away from the window boundary, i.e. when the count
    is truncation-sensitive; difference counts from truncated configurations
    never overcount."""
    validate_spec(spec)
    if isinstance(_base_spec(spec), Cyclic):
        return _exact_cyclic_alt(spec)
    if n < 2:
        raise UsageError(f"need n >= 2 samples, got {n}")
    if K_radius > R:
        raise UsageError(f"K_radius={K_radius} exceeds the window radius R={R}")
    spec_r = with_window_radius(spec, R)
    K = Window(K_radius)
    mK = _haar_box_measure(spec, K_radius)
    probe_R = R - K_radius

    def worker(chunk_rng, size):
        samples = sample_ambient_batch(spec_r, chunk_rng, 2 * size)
        values = np.empty(size)
        flagged = 0
        for i in range(size):
            a, b = samples[2 * i].returns, samples[2 * i + 1].returns
            diffs = difference_set(a, b, K)
            values[i] = len(diffs) / mK
            if probe_R <= 0:
                flagged += 1
                continue
            inner = difference_set(restrict(a, probe_R), restrict(b, probe_R), K)
            same = len(inner) == len(diffs) and (
                len(diffs) == 0 or np.max(np.abs(inner.points - diffs.points)) <= TOLERANCE
            )
            flagged += not same
        return values, flagged

    mean, stderr, trunc = _mc_mean(worker, rng, n, threads)
    return Estimate(value=mean, stderr=stderr, n=n, R=R, truncated_fraction=trunc)


# ---------------------------------------------------------------------------
# Shift-invariance (Mecke) checker.


def _phi(ts: np.ndarray, a: float) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(ts) / a)


def _psi(points: np.ndarray, fn: TestFunction, shift: float = 0.0) -> float:
    """psi_b evaluated on the configuration shifted by -shift (points - shift),
    computed in place through searchsorted."""
    if fn.psi == "one":
        return 1.0
    if fn.psi == "count":
        lo = np.searchsorted(points, shift - fn.b, side="left")
        hi = np.searchsorted(points, shift + fn.b, side="right")
        return float(hi - lo)
    idx = np.searchsorted(points, shift + TOLERANCE, side="right")
    if idx >= len(points):
        return fn.b
    return float(min(fn.b, points[idx] - shift))


def _psi_at_shifts(points: np.ndarray, fn: TestFunction, shifts: np.ndarray) -> np.ndarray:
    """Vectorized psi_b of the configuration shifted by each of `shifts`."""
    if fn.psi == "one":
        return np.ones(len(shifts))
    if fn.psi == "count":
        lo = np.searchsorted(points, shifts - fn.b, side="left")
        hi = np.searchsorted(points, shifts + fn.b, side="right")
        return (hi - lo).astype(float)
    idx = np.searchsorted(points, shifts + TOLERANCE, side="right")
    vals = np.full(len(shifts), fn.b, dtype=float)
    inside = idx < len(points)
    vals[inside] = np.minimum(fn.b, points[idx[inside]] - shifts[inside])
    return vals


def mecke_check(
    spec: ModelSpec,
    f: Union[TestFunction, str],
    n: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
) -> MeckeReport:
    """Statistically compare both periodizations of f over Palm samples.

    lhs averages sum_g phi(-g) psi(shifted configuration), rhs averages
    psi(configuration) sum_g phi(g); for a correct Palm sampler the two agree
    and the z-score is consistent with zero.  The sides use independent
    sample streams so their stderrs are independent.
    """
    validate_spec(spec)
    fn = parse_test_function(f) if isinstance(f, str) else f
    if isinstance(_base_spec(spec), Cyclic):
        return _exact_cyclic_mecke(spec, fn)
    if n < 2:
        raise UsageError(f"need n >= 2 samples, got {n}")
    R = window_radius(spec)
    if fn.support > R / 2.0:
        raise UsageError(
            f"test function support a+b={fn.support} exceeds R/2={R / 2.0}; shrink it or grow R"
        )
    iota = analytic_values(spec).intensity

    def worker_lhs(chunk_rng, size):
        samples = sample_palm_batch(spec, chunk_rng, size)
        values = np.empty(size)
        for i, s in enumerate(samples):
            pts = s.returns.points
            lo = np.searchsorted(pts, -fn.a, side="left")
            hi = np.searchsorted(pts, fn.a, side="right")
            gs = pts[lo:hi]
            values[i] = float(np.sum(_phi(-gs, fn.a) * _psi_at_shifts(pts, fn, gs)))
        return values, 0

    def worker_rhs(chunk_rng, size):
        samples = sample_palm_batch(spec, chunk_rng, size)
        values = np.empty(size)
        for i, s in enumerate(samples):
            pts = s.returns.points
            lo = np.searchsorted(pts, -fn.a, side="left")
            hi = np.searchsorted(pts, fn.a, side="right")
            gs = pts[lo:hi]
            # same product-then-sum structure as the lhs worker, so that a
            # deterministic configuration makes the two sides exactly equal
            values[i] = float(np.sum(_phi(gs, fn.a) * _psi(pts, fn)))
        return values, 0

    mean_l, se_l, _ = _mc_mean(worker_lhs, rng, n, threads)
    mean_r, se_r, _ = _mc_mean(worker_rhs, rng, n, threads)
    lhs = Estimate(value=iota * mean_l, stderr=iota * se_l, n=n, R=R)
    rhs = Estimate(value=iota * mean_r, stderr=iota * se_r, n=n, R=R)
    return MeckeReport(lhs=lhs, rhs=rhs, z_score=_z(lhs, rhs), test_function_id=fn.id)


def _z(lhs: Estimate, rhs: Estimate) -> float:
    sigma = math.hypot(lhs.stderr, rhs.stderr)
    diff = abs(lhs.value - rhs.value)
    if sigma == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / sigma


# ---------------------------------------------------------------------------
# Reports.


@dataclass(frozen=True)
class InequalityRow:
    r: int
    covolume: Estimate
    lower: Optional[float]  # iota * I^{r-1}
    margin_z: Optional[float]  # one-sided z of covolume - lower


@dataclass(frozen=True)
class InequalityReport:
    intensity: float
    rows: Tuple[InequalityRow, ...]


def inequality_report(
    spec: ModelSpec,
    r_max: int,
    n: int,
    R: float,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    cell_volume_samples: int = DEFAULT_VOLUME_SAMPLES,
) -> InequalityReport:
    """Kac estimates of I^r for r = 1..r_max with one-sided z margins of
    I^r >= iota * I^{r-1}."""
    if r_max < 2:
        raise UsageError(f"r_max must be >= 2, got {r_max}")
    validate_spec(spec)
    iota = analytic_values(spec).intensity
    if iota is None:
        iota = estimate_intensity(spec, window_radius(spec) / 4.0, n, rng.spawn(1)[0]).value
    estimates = {}
    for r in range(1, r_max + 1):
        estimates[r] = estimate_covolume_kac(
            spec, r, n, R, rng, threads=threads, cell_volume_samples=cell_volume_samples
        )
    rows = [InequalityRow(r=1, covolume=estimates[1], lower=None, margin_z=None)]
    for r in range(2, r_max + 1):
        lower = iota * estimates[r - 1].value
        margin = estimates[r].value - lower
        sigma = math.hypot(estimates[r].stderr, iota * estimates[r - 1].stderr)
        if sigma == 0.0:
            z = 0.0 if margin == 0.0 else math.copysign(math.inf, margin)
        else:
            z = margin / sigma
        rows.append(InequalityRow(r=r, covolume=estimates[r], lower=lower, margin_z=z))
    return InequalityReport(intensity=iota, rows=tuple(rows))


@dataclass(frozen=True)
class MonotonicityReport:
    i_y: Estimate
    i_ytilde: Estimate


def monotonicity_report(
    spec: ModelSpec,
    n: int,
    R: float,
    rng: np.random.Generator,
    *,
    threads: int = 1,
) -> MonotonicityReport:
    """Kac covolumes of the suspension cross section Y and of its completely
    periodic enlargement Y-tilde; monotonicity forces I_Y <= I_Ytilde = 1."""
    base = _base_spec(spec)
    if not isinstance(base, Suspension):
        raise UsageError("monotonicity_report needs a Suspension model")
    if n < 2:
        raise UsageError(f"need n >= 2 samples, got {n}")
    i_y = estimate_covolume_kac(spec, 2, n, R, rng, threads=threads)
    tilde_spec = with_window_radius(base, R)

    def worker(chunk_rng, size):
        samples = sample_palm_tilde_batch(tilde_spec, chunk_rng, 2 * size)
        values = np.empty(size)
        flagged = 0
        for i in range(size):
            inter = intersect(samples[2 * i].returns, samples[2 * i + 1].returns)
            if not inter.contains_identity():
                raise InvariantViolation("Palm intersection lost the identity")
            cell = cell_at_identity(inter)
            values[i] = cell.measure
            flagged += cell.truncated
        return values, flagged

    # iota(Y-tilde) = 1 exactly: one point of the enlarged section per unit length
    mean_cell, se_cell, trunc = _mc_mean(worker, rng, n, threads)
    i_tilde = Estimate(value=mean_cell, stderr=se_cell, n=n, R=R, truncated_fraction=trunc)
    return MonotonicityReport(i_y=i_y, i_ytilde=i_tilde)


# ---------------------------------------------------------------------------
# Exact evaluation for finite cyclic models: the expectation over the finite
# state space replaces sampling, so these reproduce the oracle exactly.


def _base_spec(spec: ModelSpec) -> ModelSpec:
    while isinstance(spec, Extension):
        spec = spec.inner
    return spec


def _exact_cyclic_intensity(spec: ModelSpec) -> Estimate:
    sys = _base_spec(spec).system
    value = float(exact_intensity(sys))
    return Estimate(value=value, stderr=0.0, n=len(sys.states()), R=float(sys.n))


def _exact_cyclic_kac(spec: ModelSpec, r: int) -> Estimate:
    sys = _base_spec(spec).system
    value = float(exact_kac_covolume(sys, r))
    return Estimate(value=value, stderr=0.0, n=len(sys.y_states()) ** r, R=float(sys.n))


def _exact_cyclic_alt(spec: ModelSpec) -> Estimate:
    sys = _base_spec(spec).system
    total = Fraction(0)
    states = sys.states()
    for x in states:
        rx = set(sys.return_set(x))
        for z in states:
            diffs = {(g - h) % sys.n for g in rx for h in sys.return_set(z)}
            total += sys.mu(x) * sys.mu(z) * len(diffs)
    value = float(total / sys.n)
    return Estimate(value=value, stderr=0.0, n=len(states) ** 2, R=float(sys.n))


def _exact_cyclic_mecke(spec: ModelSpec, fn: TestFunction) -> MeckeReport:
    sys = _base_spec(spec).system
    seed = zlib.crc32(fn.id.encode())
    table = random_test_table(np.random.default_rng(seed), sys)
    lhs_val, rhs_val = exact_mecke(sys, table)
    lhs = Estimate(value=float(lhs_val), stderr=0.0, n=len(sys.states()), R=float(sys.n))
    rhs = Estimate(value=float(rhs_val), stderr=0.0, n=len(sys.states()), R=float(sys.n))
    return MeckeReport(lhs=lhs, rhs=rhs, z_score=_z(lhs, rhs), test_function_id=fn.id)
