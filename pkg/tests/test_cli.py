import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from transversal.cli import CSV_HEADER, main, parse_config, sweep_verdict


def write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


LATTICE_TOML = """
[model]
variant = "lattice"
basis = [[1.0]]
R = 40.0

[experiment]
id = "{id}"
estimator = "{estimator}"
n = {n}
K_radius = 10.0
r = 2
seed = 7
"""


def run_cli(*args):
    return main(list(args))


def test_run_intensity_and_csv_schema(tmp_path):
    cfg = write(tmp_path / "c.toml", LATTICE_TOML.format(id="x", estimator="intensity", n=400))
    out = tmp_path / "out.csv"
    assert run_cli("run", cfg, "--csv", str(out), "--assert") == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0].keys()) == CSV_HEADER
    assert rows[0]["estimator"] == "intensity"
    assert float(rows[0]["value"]) == 1.0
    assert rows[0]["wall_ms"] == "0"
    assert rows[0]["lower_bound"] == "false"


def test_seed_is_mandatory(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "lattice"

[experiment]
estimator = "intensity"
""",
    )
    assert run_cli("run", cfg) == 1


def test_malformed_window_names_field(tmp_path, capsys):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "cutproject"
w_lo = 2.0
w_hi = 1.0

[experiment]
estimator = "kac"
seed = 1
""",
    )
    assert run_cli("run", cfg) == 1
    assert "w_lo" in capsys.readouterr().err


def test_unparseable_config(tmp_path):
    cfg = write(tmp_path / "c.toml", "not [valid\ntoml==")
    assert run_cli("run", cfg) == 1


def test_threads_do_not_change_bytes(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "cutproject"
R = 50.0

[experiment]
id = "det"
estimator = "kac"
r = 2
n = 1500
seed = 3
""",
    )
    out1, out4 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli("run", cfg, "--csv", str(out1), "--threads", "1") == 0
    assert run_cli("run", cfg, "--csv", str(out4), "--threads", "4") == 0
    assert out1.read_bytes() == out4.read_bytes()


def test_sweep_poisson_diverges(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "poisson"
rate = 1.0
R = 25.0

[experiment]
id = "div"
estimator = "kac"
r = 2
n = 600
seed = 11
expect_verdict = "diverging"
""",
    )
    out = tmp_path / "s.csv"
    assert run_cli("sweep", cfg, "--param", "R", "--values", "25,50,100",
                   "--csv", str(out), "--assert") == 0
    rows = list(csv.DictReader(out.open()))
    values = [float(r["value"]) for r in rows]
    assert values[1] >= 1.5 * values[0] and values[2] >= 1.5 * values[1]
    assert all(r["lower_bound"] == "true" for r in rows)


def test_sweep_lattice_constant_is_stable(tmp_path):
    cfg = write(tmp_path / "c.toml", LATTICE_TOML.format(id="flat", estimator="kac", n=300))
    out = tmp_path / "s.csv"
    assert run_cli("sweep", cfg, "--param", "R", "--values", "20,30,40", "--csv", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert len({r["value"] for r in rows}) == 1


def test_sweep_verdict_mismatch_fails_assert(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "poisson"
rate = 1.0
R = 25.0

[experiment]
id = "bad"
estimator = "kac"
r = 2
n = 400
seed = 11
expect_verdict = "stable"
""",
    )
    assert run_cli("sweep", cfg, "--param", "R", "--values", "25,50", "--assert") == 2


def test_verdict_logic():
    assert sweep_verdict([1.0, 2.0, 4.0], [0.0, 0.0, 0.0]) == "diverging"
    assert sweep_verdict([1.0, 1.0, 1.0], [0.01, 0.01, 0.01]) == "stable"
    assert sweep_verdict([1.0, 1.3, 1.2], [0.001, 0.001, 0.001]) == "mixed"


def test_mecke_rows_and_json(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "poisson"
rate = 1.0
R = 40.0

[experiment]
id = "m"
estimator = "mecke"
n = 500
f = "phi5_count10"
seed = 5
""",
    )
    out, sidecar = tmp_path / "m.csv", tmp_path / "m.json"
    assert run_cli("run", cfg, "--csv", str(out), "--json", str(sidecar)) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["estimator"] for r in rows] == ["mecke_lhs", "mecke_rhs", "mecke_z"]
    payload = json.loads(sidecar.read_text())
    assert payload["report"]["mecke"][0]["f"] == "phi5_count10"
    assert "wall_ms" in payload


def test_inequality_and_monotonicity_rows(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "suspension"
epsilon = 0.1
R = 50.0

[experiment]
id = "mono"
estimator = "monotonicity"
n = 800
seed = 9
""",
    )
    out = tmp_path / "mono.csv"
    assert run_cli("run", cfg, "--csv", str(out), "--assert") == 0
    estimators = [r["estimator"] for r in csv.DictReader(out.open())]
    assert estimators == ["monotonicity_y", "monotonicity_ytilde", "monotonicity_margin_z"]

    cfg2 = write(tmp_path / "c2.toml", LATTICE_TOML.format(id="iq", estimator="inequality", n=300))
    out2 = tmp_path / "iq.csv"
    assert run_cli("run", cfg2, "--csv", str(out2), "--assert") == 0
    rows = list(csv.DictReader(out2.open()))
    assert [r["estimator"] for r in rows] == ["kac", "kac", "ineq_margin_z", "kac", "ineq_margin_z"]


def test_lambda_probe_row(tmp_path):
    cfg = write(tmp_path / "c.toml", LATTICE_TOML.format(id="lp", estimator="lambda-probe", n=50))
    out = tmp_path / "lp.csv"
    assert run_cli("run", cfg, "--csv", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["estimator"] == "lambda_probe"
    assert float(rows[0]["value"]) == 1.0


def test_oracle_subcommand(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert run_cli("oracle", "--all", "--seed", "7", "--trials", "5", "--csv", str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert all(float(r["value"]) == 1.0 for r in rows)
    assert "covolume_two_routes_equal: pass" in capsys.readouterr().out


def test_dump_configs(tmp_path):
    cfg = write(tmp_path / "c.toml", LATTICE_TOML.format(id="d", estimator="intensity", n=100))
    dump = tmp_path / "configs.json"
    assert run_cli("run", cfg, "--csv", str(tmp_path / "d.csv"), "--dump-configs", str(dump)) == 0
    payload = json.loads(dump.read_text())
    assert len(payload["ambient"]) == 3 and len(payload["palm"]) == 3
    for c in payload["palm"]:
        assert 0.0 in c["points"]
        assert c["R"] == 40.0


def test_cyclic_model_config(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "cyclic"
n = 4
orbit_weights = ["1/4"]
cross_section = [[0, 1]]

[experiment]
id = "cyc"
estimator = "kac"
r = 2
n = 10
seed = 1
""",
    )
    out = tmp_path / "cyc.csv"
    assert run_cli("run", cfg, "--csv", str(out), "--assert") == 0
    rows = list(csv.DictReader(out.open()))
    assert float(rows[0]["value"]) == 0.75


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "transversal.cli", "oracle", "--trials", "2", "--seed", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0


def test_shipped_configs_parse():
    for path in sorted(Path(__file__).resolve().parent.parent.glob("configs/*.toml")):
        exp, out = parse_config(str(path))
        assert exp.estimator
        assert out.get("csv") or True


def test_parse_config_rejects_unknown_estimator(tmp_path):
    cfg = write(
        tmp_path / "c.toml",
        """
[model]
variant = "lattice"

[experiment]
estimator = "nope"
seed = 1
""",
    )
    with pytest.raises(Exception):
        parse_config(cfg)
