"""Acceptance suite: one test per criterion, printed as one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s`.  Sample sizes follow the
stated criteria; everything is seed-pinned and deterministic.
"""

import math

import numpy as np
import pytest

from transversal.cli import main as cli_main
from transversal.estimators import (
    builtin_test_functions,
    estimate_covolume_alt,
    estimate_covolume_kac,
    estimate_intensity,
    inequality_report,
    mecke_check,
    monotonicity_report,
)
from transversal.models import (
    SQRT2,
    Cyclic,
    CutProject,
    Extension,
    Lattice,
    Poisson,
    Suspension,
    enumerate_strip,
    lambda_probe,
)
from transversal.oracle import CANONICAL_SYSTEMS, verification_suite

SEED = 20260809
TOL = 1e-12


def rng(offset=0):
    return np.random.default_rng(SEED + offset)


def report(num, ok, detail):
    line = f"[criterion-{num}] {'PASS' if ok else 'FAIL'} — {detail}"
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="module")
def oracle_suite():
    return verification_suite(SEED, trials=200)


def test_criterion_1_oracle_exactness(oracle_suite):
    # >= 200 random systems, Kac = direct covolume exactly for r in {1,2,3},
    # exact round trips, Campbell and Mecke on 100 random tables each.
    failed = [r.name for r in oracle_suite if not r.passed]
    wanted = {
        "covolume_two_routes_equal",
        "transverse_roundtrip_identity",
        "campbell_identity",
        "mecke_identity",
        "injective_cover_and_partition",
    }
    names = {r.name for r in oracle_suite}
    ok = not failed and wanted <= names
    report(1, ok, f"oracle exactness on 200+ random systems; failures: {failed or 'none'}")


def test_criterion_2_lattice_equality():
    results = []
    for basis, iota in ((((1.0,),), 1.0), (((2.0,),), 0.5)):
        spec = Lattice(basis=basis, R=50.0)
        est = estimate_covolume_kac(spec, 2, 2000, 50.0, rng(2))
        results.append(
            est.stderr == 0.0
            and est.truncated_fraction == 0.0
            and abs(est.value - iota) < TOL
        )
    report(2, all(results), f"I^2 = iota with zero variance for Z and 2Z: {results}")


ZOO = (
    Lattice(basis=((1.0,),), R=100.0),
    Lattice(basis=((2.0,),), R=100.0),
    CutProject(R=100.0),
    Poisson(rate=1.0, R=100.0),
    Suspension(epsilon=0.1, R=100.0),
    Extension(inner=CutProject(R=100.0)),
    Cyclic(system=CANONICAL_SYSTEMS["z4_aperiodic"]),
)


def test_criterion_3_basic_inequality(oracle_suite):
    margins = {}
    ok = True
    for spec in ZOO:
        rep = inequality_report(spec, 3, 10_000, 100.0, rng(3))
        zs = [row.margin_z for row in rep.rows if row.margin_z is not None]
        margins[type(spec).__name__] = [round(z, 2) if math.isfinite(z) else z for z in zs]
        ok &= all(z >= -3.0 for z in zs)
    exact = {r.name: r.passed for r in oracle_suite}
    ok &= exact["basic_inequality"] and exact["equality_iff_coset"]
    report(3, ok, f"margins (z) per model: {margins}; oracle exact inequality + coset iff")


def test_criterion_4_suspension_no_gap():
    spec = Suspension(epsilon=0.1, R=200.0)
    n = 100_000
    iota_hat = estimate_intensity(spec, 20.0, n, rng(4))
    i_hat = estimate_covolume_kac(spec, 2, n, 200.0, rng(5))
    mono = monotonicity_report(spec, n, 200.0, rng(6))

    ok_iota = abs(iota_hat.value - 1.0 / 1.1) <= 3.0 * iota_hat.stderr + TOL
    gap_sigma = math.hypot(iota_hat.stderr, i_hat.stderr)
    ok_above = iota_hat.value + 3.0 * gap_sigma < i_hat.value
    ok_upper = i_hat.value <= 1.0 + 3.0 * i_hat.stderr + TOL
    ok_tilde = abs(mono.i_ytilde.value - 1.0) <= 3.0 * mono.i_ytilde.stderr + TOL
    mono_sigma = math.hypot(mono.i_y.stderr, mono.i_ytilde.stderr)
    ok_mono = mono.i_y.value <= mono.i_ytilde.value + 3.0 * mono_sigma + TOL

    ok = ok_iota and ok_above and ok_upper and ok_tilde and ok_mono
    report(
        4,
        ok,
        f"iota={iota_hat.value:.5f} (target {1 / 1.1:.5f}), I={i_hat.value:.5f}, "
        f"I_tilde={mono.i_ytilde.value:.5f}; iota<I: {ok_above}, I<=1: {ok_upper}, "
        f"I_Y<=I_tilde: {ok_mono}",
    )


def test_criterion_5_cut_and_project():
    spec = CutProject(R=100.0)
    # brute-force density of the model set over [-10^4, 10^4]
    gs, _ = enumerate_strip(spec.basis, -1e4, 1e4, 0.0, 1.0)
    density = len(gs) / 2e4

    iota_hat = estimate_intensity(spec, 20.0, 20_000, rng(7))
    ok_density = abs(iota_hat.value - density) <= 3.0 * iota_hat.stderr + TOL
    ok_formula = abs(density - 1.0 / (2.0 * SQRT2)) < 1e-3

    kac = estimate_covolume_kac(spec, 2, 40_000, 200.0, rng(8))
    sep_sigma = math.hypot(iota_hat.stderr, kac.stderr)
    ok_above = kac.value - iota_hat.value >= 3.0 * sep_sigma

    sweep = [estimate_covolume_kac(spec, 2, 20_000, R, rng(9)) for R in (50.0, 100.0, 200.0)]
    tail_sigma = math.hypot(sweep[-1].stderr, sweep[-2].stderr)
    ok_stable = abs(sweep[-1].value - sweep[-2].value) <= 3.0 * tail_sigma + TOL

    alt = estimate_covolume_alt(spec, 20_000, 20.0, 200.0, rng(10))
    agree_sigma = math.hypot(kac.stderr, alt.stderr)
    ok_agree = abs(kac.value - alt.value) <= 3.0 * agree_sigma + TOL

    ok = ok_density and ok_formula and ok_above and ok_stable and ok_agree
    report(
        5,
        ok,
        f"iota={iota_hat.value:.5f} vs density={density:.5f}; I_kac={kac.value:.4f} "
        f"I_alt={alt.value:.4f}; sweep={[round(e.value, 4) for e in sweep]}; "
        f"above: {ok_above}, stable: {ok_stable}, agree: {ok_agree}",
    )


def test_criterion_6_poisson_divergence():
    spec = Poisson(rate=1.0, R=25.0)
    iota_hat = estimate_intensity(spec, 10.0, 10_000, rng(11))
    ok_iota = abs(iota_hat.value - 1.0) <= 3.0 * iota_hat.stderr + TOL
    sweep = [estimate_covolume_kac(spec, 2, 5000, R, rng(12)) for R in (25.0, 50.0, 100.0)]
    ok_flagged = all(e.truncated_fraction > 0.99 for e in sweep)
    ok_growth = all(b.value >= 1.5 * a.value for a, b in zip(sweep, sweep[1:]))
    ok = ok_iota and ok_flagged and ok_growth
    report(
        6,
        ok,
        f"iota={iota_hat.value:.4f}; I(R)={[round(e.value, 2) for e in sweep]}; "
        f"flagged: {[round(e.truncated_fraction, 4) for e in sweep]}",
    )


def test_criterion_7_mecke_certification():
    n = 100_000
    summary = {}
    ok = True
    for spec, name in (
        (Poisson(rate=1.0, R=40.0), "poisson"),
        (CutProject(R=40.0), "cutproject"),
    ):
        stream = rng(13 if name == "poisson" else 14)
        zs = [
            mecke_check(spec, fn, n, stream).z_score for fn in builtin_test_functions()
        ]
        over3 = sum(1 for z in zs if abs(z) > 3.0)
        over5 = sum(1 for z in zs if abs(z) > 5.0)
        summary[name] = {"max|z|": round(max(abs(z) for z in zs), 2), ">3": over3, ">5": over5}
        ok &= over3 <= 1 and over5 == 0
    report(7, ok, f"20 test functions x n=10^5 per model: {summary}")


def test_criterion_8_factor_invariance():
    checks = []
    for spec in (Lattice(basis=((1.0,),), R=40.0), CutProject(R=40.0), Poisson(rate=1.0, R=40.0)):
        wrapped = Extension(inner=spec)
        checks.append(
            estimate_intensity(spec, 10.0, 400, rng(15))
            == estimate_intensity(wrapped, 10.0, 400, rng(15))
        )
        checks.append(
            estimate_covolume_kac(spec, 2, 400, 40.0, rng(16))
            == estimate_covolume_kac(wrapped, 2, 400, 40.0, rng(16))
        )
        checks.append(
            estimate_covolume_alt(spec, 400, 10.0, 40.0, rng(17))
            == estimate_covolume_alt(wrapped, 400, 10.0, 40.0, rng(17))
        )
        checks.append(
            mecke_check(spec, "phi5_count10", 400, rng(18))
            == mecke_check(wrapped, "phi5_count10", 400, rng(18))
        )
        checks.append(
            inequality_report(spec, 2, 400, 40.0, rng(19))
            == inequality_report(wrapped, 2, 400, 40.0, rng(19))
        )
        checks.append(
            lambda_probe(spec, 1, 100, rng(20)) == lambda_probe(wrapped, 1, 100, rng(20))
        )
    sus = Suspension(epsilon=0.1, R=40.0)
    checks.append(
        monotonicity_report(sus, 400, 40.0, rng(21))
        == monotonicity_report(Extension(inner=sus), 400, 40.0, rng(21))
    )
    cyc = Cyclic(system=CANONICAL_SYSTEMS["z4_coset"])
    checks.append(
        estimate_covolume_kac(cyc, 2, 10, 0.0, rng(22))
        == estimate_covolume_kac(Extension(inner=cyc), 2, 10, 0.0, rng(22))
    )
    report(8, all(checks), f"{sum(checks)}/{len(checks)} estimator outputs bit-identical")


def test_criterion_9_cli_determinism(tmp_path):
    cfg = tmp_path / "det.toml"
    cfg.write_text(
        """
[model]
variant = "cutproject"
R = 60.0

[experiment]
id = "det"
estimator = "kac"
r = 2
n = 1500
seed = 97
"""
    )
    outs = []
    for threads in (1, 4):
        path = tmp_path / f"run{threads}.csv"
        code = cli_main(["run", str(cfg), "--csv", str(path), "--threads", str(threads)])
        assert code == 0
        outs.append(path.read_bytes())
    run_ok = outs[0] == outs[1]

    sweeps = []
    for threads in (1, 2):
        path = tmp_path / f"sweep{threads}.csv"
        code = cli_main(
            ["sweep", str(cfg), "--param", "R", "--values", "40,60",
             "--csv", str(path), "--threads", str(threads)]
        )
        assert code == 0
        sweeps.append(path.read_bytes())
    sweep_ok = sweeps[0] == sweeps[1]
    report(9, run_ok and sweep_ok, f"run bytes equal: {run_ok}, sweep bytes equal: {sweep_ok}")
