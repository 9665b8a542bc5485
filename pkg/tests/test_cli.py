import csv
import io
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memnoise.cli import main
from memnoise.config import EXPERIMENTS, ConfigError, build_schedule, load_config, named_gate
from memnoise.tables import format_value, read_csv, write_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
experiment = "minimal_scaling"
seed = 3
output = "out"

[system]
n_qubits = 1
couplings = ["X"]

[reservoir]
kind = "vacuum_cubic"
R0 = 1e-6

[sweep]
parameter = "n"
values = [2, 4, 8, 16]

[params]
epsilon = 1e-3
m = 10.0
"""


def _write(tmp_path, text, name="cfg.toml"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def test_list_names_six_experiments(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in lines] == list(EXPERIMENTS)


def test_list_csv(capsys):
    assert main(["list", "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["name"]
    assert [r[0] for r in rows[1:]] == list(EXPERIMENTS)
    assert all(len(r) == 1 for r in rows)


def test_run_minimal_scaling(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", cfg]) == 0
    out = tmp_path / "out"
    header, rows = read_csv(out / "minimal_scaling.csv")
    assert "fitted_exponent" in header
    k = float(rows[0][header.index("fitted_exponent")])
    assert k == pytest.approx(1.5, abs=0.05)
    assert [int(r[0]) for r in rows] == [2, 4, 8, 16]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and "wall_time_s" in manifest
    assert (out / "minimal_scaling.dat").read_text().startswith("# n ")
    assert (out / "minimal_scaling.png").stat().st_size > 0


def test_rerun_is_byte_identical(tmp_path, monkeypatch):
    cfg = _write(tmp_path, MINIMAL)
    main(["run", "--no-plots", cfg])
    first = (tmp_path / "out" / "minimal_scaling.csv").read_bytes()
    monkeypatch.setenv("MEMNOISE_WORKERS", "2")
    main(["run", "--no-plots", cfg])
    assert (tmp_path / "out" / "minimal_scaling.csv").read_bytes() == first


def test_missing_reservoir_section(tmp_path, capsys):
    text = MINIMAL.replace('[reservoir]\nkind = "vacuum_cubic"\nR0 = 1e-6\n', "")
    assert main(["run", _write(tmp_path, text)]) == 2
    assert "reservoir" in capsys.readouterr().err


def test_missing_key_named(tmp_path, capsys):
    text = MINIMAL.replace("n_qubits = 1\n", "")
    assert main(["validate", _write(tmp_path, text)]) == 2
    assert "n_qubits" in capsys.readouterr().err


def test_unknown_experiment(tmp_path, capsys):
    text = MINIMAL.replace('"minimal_scaling"', '"nonsense"')
    assert main(["run", _write(tmp_path, text)]) == 2
    assert "nonsense" in capsys.readouterr().err


def test_empty_sweep_rejected(tmp_path):
    text = MINIMAL.replace("values = [2, 4, 8, 16]", "values = []")
    assert main(["validate", _write(tmp_path, text)]) == 2


def test_malformed_toml(tmp_path):
    assert main(["validate", _write(tmp_path, "experiment = \n")]) == 2


def test_numeric_rejection(tmp_path, capsys):
    text = MINIMAL.replace('kind = "vacuum_cubic"\nR0 = 1e-6', 'kind = "lorentzian"\nD = 1.0\ntau_c = 1.0')
    assert main(["run", _write(tmp_path, text)]) == 3
    assert "vacuum_cubic" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    (tmp_path / "blocker").write_text("a file, not a directory")
    text = MINIMAL.replace('output = "out"', 'output = "blocker/out"')
    assert main(["run", _write(tmp_path, text)]) == 4


def test_validate_example_configs(capsys):
    for f in sorted(CONFIGS.glob("*.toml")):
        assert main(["validate", str(f)]) == 0
    assert capsys.readouterr().out.count("ok:") == len(EXPERIMENTS)


def test_tabulated_reservoir_file(tmp_path):
    (tmp_path / "r.dat").write_text("0 0\n1 1\n2 8\n")
    text = MINIMAL.replace('kind = "vacuum_cubic"\nR0 = 1e-6',
                           'kind = "tabulated"\nfile = "r.dat"\nlow_frequency_exponent = 3')
    cfg = load_config(_write(tmp_path, text))
    assert cfg.reservoir["kind"] == "tabulated"


def test_named_gates():
    from scipy.linalg import expm
    assert np.allclose(expm(-1j * named_gate("CNOT01", 2)), np.eye(4)[[0, 1, 3, 2]], atol=1e-12)
    assert np.allclose(expm(-1j * named_gate("X0", 1)), [[0, 1], [1, 0]], atol=1e-12)
    with pytest.raises(ConfigError):
        named_gate("CNOT02", 2)


def test_kicked_schedule_from_config():
    cfg = load_config(CONFIGS / "kicked_memory.toml")
    sch = build_schedule(cfg)
    assert len(sch.kicks) == 17 and sch.tau == 1.0


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    s = format_value(x)
    assert float(s) == x
    assert "e" in s


def test_csv_writer(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b", "c"], [[1, 0.1, "x"], [2, math.nan, True]])
    assert (tmp_path / "t.csv").read_text() == (
        "a,b,c\n1,1.0000000000000001e-01,x\n2,nan,true\n")


def test_core_never_imports_matplotlib():
    code = ("import sys, memnoise.cli, memnoise.errormap, memnoise.faultmap, "
            "memnoise.minimal, memnoise.decoupling, memnoise.oracle, memnoise.experiments; "
            "print('matplotlib' in sys.modules)")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "MPLBACKEND": "Agg"})
    assert out.stdout.strip() == "False"
