"""Experiment runner: TOML configs in, CSV rows and a JSON sidecar out.

Subcommands:
  run    CONFIG.toml   one experiment (any estimator, incl. the oracle suite)
  sweep  CONFIG.toml   repeat an experiment along one parameter axis
  oracle               the exact verification suite on random finite systems

The CSV schema is fixed: experiment_id, model, estimator, r, n, R, K, seed,
value, stderr, truncated_fraction, lower_bound, wall_ms.  The CSV is byte
identical for a fixed config and seed regardless of --threads; the wall_ms
column is therefore pinned to 0 and real timings live in the JSON sidecar.
Exit codes: 0 success, 1 usage or resource errors, 2 an --assert threshold
was violated.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import InvarianceViolation, ResourceBudgetError, UsageError
from .estimators import (
    builtin_test_functions,
    estimate_covolume_alt,
    estimate_covolume_kac,
    estimate_intensity,
    inequality_report,
    mecke_check,
    monotonicity_report,
    parse_test_function,
)
from .geometry import config_to_json
from .models import (
    Cyclic,
    CutProject,
    Extension,
    Lattice,
    ModelSpec,
    Poisson,
    Suspension,
    analytic_values,
    lambda_probe,
    model_name,
    sample_ambient_batch,
    sample_palm_batch,
    spec_to_dict,
    validate_spec,
    window_radius,
    with_window_radius,
)
from .oracle import CyclicSystem, verification_suite

CSV_HEADER = [
    "experiment_id",
    "model",
    "estimator",
    "r",
    "n",
    "R",
    "K",
    "seed",
    "value",
    "stderr",
    "truncated_fraction",
    "lower_bound",
    "wall_ms",
]

#: Tolerance added to every 3-sigma assertion so exact (zero-variance)
#: estimates are not rejected by float roundoff.
ASSERT_ABS_TOL = 1e-12


# ---------------------------------------------------------------------------
# Config parsing.


def parse_model(block: dict) -> ModelSpec:
    variant = block.get("variant")
    if variant is None:
        raise UsageError("model.variant is required")
    R = float(block.get("R", 50.0))
    if variant == "lattice":
        basis = block.get("basis", [[1.0]])
        spec = Lattice(basis=tuple(tuple(float(v) for v in row) for row in basis), R=R)
    elif variant == "cutproject":
        kwargs = {}
        if "basis" in block:
            kwargs["basis"] = tuple(tuple(float(v) for v in row) for row in block["basis"])
        spec = CutProject(
            w_lo=float(block.get("w_lo", 0.0)),
            w_hi=float(block.get("w_hi", 1.0)),
            R=R,
            **kwargs,
        )
    elif variant == "poisson":
        spec = Poisson(rate=float(block.get("rate", 1.0)), d=int(block.get("d", 1)), R=R)
    elif variant == "suspension":
        kwargs = {}
        if "alpha" in block:
            kwargs["alpha"] = float(block["alpha"])
        spec = Suspension(epsilon=float(block.get("epsilon", 0.1)), R=R, **kwargs)
    elif variant == "extension":
        inner = block.get("inner")
        if inner is None:
            raise UsageError("model.inner is required for an extension model")
        spec = Extension(inner=parse_model(inner))
    elif variant == "cyclic":
        system = CyclicSystem(
            n=int(block["n"]),
            orbit_weights=tuple(Fraction(w) for w in block["orbit_weights"]),
            cross_section=tuple(tuple(int(p) for p in ph) for ph in block["cross_section"]),
        )
        spec = Cyclic(system=system)
    else:
        raise UsageError(f"model.variant: unknown variant {variant!r}")
    validate_spec(spec)
    return spec


@dataclass
class Experiment:
    id: str
    estimator: str
    spec: ModelSpec
    seed: int
    n: int
    r: int
    r_max: int
    k: int
    K_radius: float
    f: str
    trials: int
    expect_verdict: Optional[str]


ESTIMATORS = (
    "intensity",
    "kac",
    "alt",
    "mecke",
    "inequality",
    "monotonicity",
    "lambda-probe",
    "oracle-suite",
)


def parse_config(path: str) -> tuple:
    """Parse a TOML experiment file into (Experiment, output block)."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    if "model" not in raw:
        raise UsageError("config needs a [model] block")
    spec = parse_model(raw["model"])
    exp = raw.get("experiment", {})
    estimator = exp.get("estimator")
    if estimator not in ESTIMATORS:
        raise UsageError(f"experiment.estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if "seed" not in exp:
        raise UsageError("experiment.seed is mandatory (reproducibility is a hard requirement)")
    R = window_radius(spec)
    out = raw.get("output", {})
    return Experiment(
        id=str(exp.get("id", "experiment")),
        estimator=estimator,
        spec=spec,
        seed=int(exp["seed"]),
        n=int(exp.get("n", 1000)),
        r=int(exp.get("r", 2)),
        r_max=int(exp.get("r_max", 3)),
        k=int(exp.get("k", 1)),
        K_radius=float(exp.get("K_radius", R / 10.0)),
        f=str(exp.get("f", "all")),
        trials=int(exp.get("trials", 50)),
        expect_verdict=exp.get("expect_verdict"),
    ), out


def model_hash(spec: ModelSpec) -> str:
    canon = json.dumps(spec_to_dict(spec), sort_keys=True)
    return hashlib.sha1(canon.encode()).hexdigest()[:10]


# ---------------------------------------------------------------------------
# Row assembly.


def _row(exp: Experiment, estimator: str, *, value, stderr=0.0, r="", n="", R="", K="",
         truncated=0.0, lower=False, suffix=""):
    return {
        "experiment_id": exp.id + suffix,
        "model": f"{model_name(exp.spec)}:{model_hash(exp.spec)}",
        "estimator": estimator,
        "r": r,
        "n": n,
        "R": R,
        "K": K,
        "seed": exp.seed,
        "value": value,
        "stderr": stderr,
        "truncated_fraction": truncated,
        "lower_bound": "true" if lower else "false",
        "wall_ms": 0,
    }


def _estimate_row(exp: Experiment, estimator: str, est, *, r="", K="", suffix=""):
    return _row(
        exp,
        estimator,
        value=est.value,
        stderr=est.stderr,
        r=r,
        n=est.n,
        R=est.R,
        K=K,
        truncated=est.truncated_fraction,
        lower=est.is_lower_bound,
        suffix=suffix,
    )


def run_experiment(exp: Experiment, threads: int = 1, rng: Optional[np.random.Generator] = None):
    """Execute one experiment; returns (rows, report dict, assertion failures)."""
    if rng is None:
        rng = np.random.default_rng(exp.seed)
    rows: List[dict] = []
    report: dict = {"estimator": exp.estimator, "model": spec_to_dict(exp.spec)}
    failures: List[str] = []
    golden = analytic_values(exp.spec)
    R = window_radius(exp.spec)

    def check(ok: bool, msg: str):
        if not ok:
            failures.append(msg)

    if exp.estimator == "intensity":
        est = estimate_intensity(exp.spec, exp.K_radius, exp.n, rng, threads=threads)
        rows.append(_estimate_row(exp, "intensity", est, K=exp.K_radius))
        report["estimate"] = est.__dict__ | {"is_lower_bound": est.is_lower_bound}
        if golden.intensity is not None:
            check(
                abs(est.value - golden.intensity) <= 3 * est.stderr + ASSERT_ABS_TOL,
                f"intensity {est.value} is not within 3 sigma of {golden.intensity}",
            )

    elif exp.estimator == "kac":
        est = estimate_covolume_kac(exp.spec, exp.r, exp.n, R, rng, threads=threads)
        rows.append(_estimate_row(exp, "kac", est, r=exp.r))
        report["estimate"] = est.__dict__ | {"is_lower_bound": est.is_lower_bound}
        known = golden.covolume_for(exp.r)
        if known is not None:
            check(
                abs(est.value - known) <= 3 * est.stderr + ASSERT_ABS_TOL,
                f"kac covolume {est.value} is not within 3 sigma of {known}",
            )
        if exp.r == 2 and golden.covolume_upper is not None:
            check(
                est.value <= golden.covolume_upper + 3 * est.stderr + ASSERT_ABS_TOL,
                f"kac covolume {est.value} exceeds the certified bound {golden.covolume_upper}",
            )

    elif exp.estimator == "alt":
        est = estimate_covolume_alt(exp.spec, exp.n, exp.K_radius, R, rng, threads=threads)
        rows.append(_estimate_row(exp, "alt", est, r=2, K=exp.K_radius))
        report["estimate"] = est.__dict__ | {"is_lower_bound": est.is_lower_bound}
        known = golden.covolume_for(2)
        if known is not None and not est.is_lower_bound:
            check(
                abs(est.value - known) <= 3 * est.stderr + ASSERT_ABS_TOL,
                f"alt covolume {est.value} is not within 3 sigma of {known}",
            )

    elif exp.estimator == "mecke":
        fns = builtin_test_functions() if exp.f == "all" else [parse_test_function(exp.f)]
        reports = []
        for fn in fns:
            rep = mecke_check(exp.spec, fn, exp.n, rng, threads=threads)
            reports.append(rep)
            suffix = f":{rep.test_function_id}"
            rows.append(_estimate_row(exp, "mecke_lhs", rep.lhs, suffix=suffix))
            rows.append(_estimate_row(exp, "mecke_rhs", rep.rhs, suffix=suffix))
            rows.append(
                _row(exp, "mecke_z", value=rep.z_score, n=exp.n, R=R, suffix=suffix)
            )
        report["mecke"] = [
            {"f": r.test_function_id, "lhs": r.lhs.value, "rhs": r.rhs.value, "z": r.z_score}
            for r in reports
        ]
        over3 = sum(1 for r in reports if abs(r.z_score) > 3)
        check(
            all(abs(r.z_score) <= 5 for r in reports),
            "a shift-invariance z-score exceeded 5",
        )
        if len(reports) > 1:
            check(over3 <= 1, f"{over3} of {len(reports)} z-scores exceeded 3")

    elif exp.estimator == "inequality":
        rep = inequality_report(exp.spec, exp.r_max, exp.n, R, rng, threads=threads)
        for row in rep.rows:
            rows.append(_estimate_row(exp, "kac", row.covolume, r=row.r))
            if row.margin_z is not None:
                rows.append(
                    _row(exp, "ineq_margin_z", value=row.margin_z, r=row.r, n=exp.n, R=R)
                )
                check(
                    row.margin_z >= -3,
                    f"basic inequality violated at r={row.r}: margin z={row.margin_z}",
                )
        report["inequality"] = {
            "intensity": rep.intensity,
            "rows": [
                {"r": t.r, "covolume": t.covolume.value, "lower": t.lower, "margin_z": t.margin_z}
                for t in rep.rows
            ],
        }

    elif exp.estimator == "monotonicity":
        rep = monotonicity_report(exp.spec, exp.n, R, rng, threads=threads)
        rows.append(_estimate_row(exp, "monotonicity_y", rep.i_y, r=2))
        rows.append(_estimate_row(exp, "monotonicity_ytilde", rep.i_ytilde, r=2))
        sigma = math.hypot(rep.i_y.stderr, rep.i_ytilde.stderr)
        margin = rep.i_ytilde.value - rep.i_y.value
        z = margin / sigma if sigma > 0 else (0.0 if margin == 0 else math.copysign(math.inf, margin))
        rows.append(_row(exp, "monotonicity_margin_z", value=z, r=2, n=exp.n, R=R))
        report["monotonicity"] = {"i_y": rep.i_y.value, "i_ytilde": rep.i_ytilde.value, "z": z}
        check(
            abs(rep.i_ytilde.value - 1.0) <= 3 * rep.i_ytilde.stderr + ASSERT_ABS_TOL,
            f"enlarged-section covolume {rep.i_ytilde.value} is not 1 within 3 sigma",
        )
        check(z >= -3, f"monotonicity violated: I_Y exceeds I_Ytilde by z={-z}")

    elif exp.estimator == "lambda-probe":
        res = lambda_probe(exp.spec, exp.k, exp.n, rng)
        rows.append(
            _row(exp, "lambda_probe", value=res.min_gap, r=exp.k, n=res.pooled_points, R=R)
        )
        report["lambda_probe"] = res.__dict__

    elif exp.estimator == "oracle-suite":
        results = verification_suite(exp.seed, trials=exp.trials)
        for res in results:
            rows.append(
                _row(
                    exp,
                    "oracle",
                    value=1.0 if res.passed else 0.0,
                    n=exp.trials,
                    suffix=f":{res.name}",
                )
            )
            check(res.passed, f"oracle check failed: {res.name} ({res.detail})")
        report["oracle"] = [r.__dict__ for r in results]

    else:  # pragma: no cover - guarded by parse_config
        raise UsageError(f"unknown estimator {exp.estimator!r}")

    return rows, report, failures


# ---------------------------------------------------------------------------
# Sweep.

_MODEL_PARAMS = ("rate", "epsilon", "w_lo", "w_hi")
_EXPERIMENT_PARAMS = ("n", "r", "k", "K_radius", "r_max")


def apply_parameter(exp: Experiment, param: str, value: float) -> Experiment:
    import dataclasses as dc

    if param == "R":
        return dc.replace(exp, spec=with_window_radius(exp.spec, float(value)))
    if param in _EXPERIMENT_PARAMS:
        cast = int if param in ("n", "r", "k", "r_max") else float
        return dc.replace(exp, **{param: cast(value)})
    if param in _MODEL_PARAMS:
        spec = exp.spec
        if isinstance(spec, Extension):
            raise UsageError(f"cannot sweep {param} through an extension wrapper")
        return dc.replace(exp, spec=dc.replace(spec, **{param: float(value)}))
    raise UsageError(f"unknown sweep parameter {param!r}")


def sweep_verdict(values: List[float], stderrs: List[float]) -> str:
    if len(values) < 2:
        return "stable"
    if all(b >= 1.5 * a for a, b in zip(values, values[1:])):
        return "diverging"
    gap = abs(values[-1] - values[-2])
    if gap <= 3.0 * math.hypot(stderrs[-1], stderrs[-2]) + ASSERT_ABS_TOL:
        return "stable"
    return "mixed"


def run_sweep(exp: Experiment, param: str, values: List[float], threads: int = 1):
    rows: List[dict] = []
    reports = []
    failures: List[str] = []
    seeds = np.random.SeedSequence(exp.seed).spawn(len(values))
    primary: List[dict] = []
    for value, seed_seq in zip(values, seeds):
        import dataclasses as dc

        sub = apply_parameter(exp, param, value)
        sub = dc.replace(sub, id=f"{exp.id}:{param}={value:g}", seed=exp.seed)
        sub_rows, report, sub_failures = run_experiment(
            sub, threads=threads, rng=np.random.default_rng(seed_seq)
        )
        rows.extend(sub_rows)
        reports.append({param: value, "report": report})
        failures.extend(sub_failures)
        primary.append(sub_rows[0])
    verdict = sweep_verdict(
        [float(r["value"]) for r in primary], [float(r["stderr"]) for r in primary]
    )
    if exp.expect_verdict is not None and verdict != exp.expect_verdict:
        failures.append(f"sweep verdict {verdict!r} != expected {exp.expect_verdict!r}")
    return rows, {"sweep": reports, "verdict": verdict}, failures, verdict


# ---------------------------------------------------------------------------
# Output.


def write_csv(rows: List[dict], path: Optional[str]):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    data = buf.getvalue()
    if path is None:
        sys.stdout.write(data)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(data)


def write_json(payload: dict, path: Optional[str]):
    if path:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, default=str)


def dump_configs(spec: ModelSpec, seed: int, path: str, count: int = 3):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    payload = {
        "ambient": [config_to_json(s.returns) for s in sample_ambient_batch(spec, rng, count)],
        "palm": [config_to_json(s.returns) for s in sample_palm_batch(spec, rng, count)],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


# ---------------------------------------------------------------------------
# Entry points.


def _add_common(p):
    p.add_argument("--threads", type=int, default=1, help="worker threads (results identical)")
    p.add_argument("--assert", dest="do_assert", action="store_true",
                   help="exit 2 when an acceptance threshold is violated")
    p.add_argument("--csv", default=None, help="override the CSV output path")
    p.add_argument("--json", dest="json_path", default=None, help="override the JSON sidecar path")


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="transversal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a TOML config")
    p_run.add_argument("config")
    p_run.add_argument("--dump-configs", default=None, help="dump sampled configurations as JSON")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter over a list of values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    _add_common(p_sweep)

    p_oracle = sub.add_parser("oracle", help="run the exact verification suite")
    p_oracle.add_argument("--all", action="store_true", help="run every check (default)")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--trials", type=int, default=50)
    _add_common(p_oracle)

    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse_args(argv)
        t0 = time.perf_counter()
        if args.command == "oracle":
            results = verification_suite(args.seed, trials=args.trials)
            rows = []
            exp = Experiment(
                id="oracle", estimator="oracle-suite", spec=Cyclic(_DUMMY_SYSTEM),
                seed=args.seed, n=args.trials, r=1, r_max=1, k=1, K_radius=1.0, f="",
                trials=args.trials, expect_verdict=None,
            )
            failures = []
            for res in results:
                rows.append(
                    _row(exp, "oracle", value=1.0 if res.passed else 0.0,
                         n=args.trials, suffix=f":{res.name}")
                )
                status = "pass" if res.passed else "FAIL"
                print(f"[oracle] {res.name}: {status} ({res.detail})")
                if not res.passed:
                    failures.append(res.name)
            write_csv(rows, args.csv)
            write_json(
                {"oracle": [r.__dict__ for r in results],
                 "wall_ms": int(1000 * (time.perf_counter() - t0)),
                 "version": __version__},
                args.json_path,
            )
            if failures:
                print(f"error: {len(failures)} oracle checks failed", file=sys.stderr)
                return 2
            return 0

        exp, out = parse_config(args.config)
        csv_path = args.csv if args.csv is not None else out.get("csv")
        json_path = args.json_path if args.json_path is not None else out.get("json")

        if args.command == "run":
            rows, report, failures = run_experiment(exp, threads=args.threads)
            verdict = None
        else:
            values = [float(v) for v in args.values.split(",")]
            rows, report, failures, verdict = run_sweep(exp, args.param, values, args.threads)
            print(f"[sweep] verdict: {verdict}")

        write_csv(rows, csv_path)
        write_json(
            {
                "experiment": {
                    "id": exp.id, "estimator": exp.estimator, "seed": exp.seed,
                    "model": spec_to_dict(exp.spec),
                },
                "report": report,
                "verdict": verdict,
                "wall_ms": int(1000 * (time.perf_counter() - t0)),
                "version": __version__,
            },
            json_path,
        )
        if args.command == "run" and args.dump_configs:
            dump_configs(exp.spec, exp.seed, args.dump_configs)

        if args.do_assert and failures:
            for msg in failures:
                print(f"assertion failed: {msg}", file=sys.stderr)
            return 2
        return 0
    except (UsageError, ResourceBudgetError, InvarianceViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except tomllib.TOMLDecodeError as exc:
        print(f"error: config does not parse: {exc}", file=sys.stderr)
        return 1


_DUMMY_SYSTEM = CyclicSystem(n=2, orbit_weights=(Fraction(1, 2),), cross_section=((0,),))


if __name__ == "__main__":
    sys.exit(main())
