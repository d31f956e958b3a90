import json
import textwrap

import pytest

from spatial_age_epi.cli import OUTPUT_ENV, main

MINIMAL = """
scenario: markov_sir
N: 400
K: 4
T: 2.0
seed: 5
simulation: {replications: 2}
observe: {dt: 0.5, age_dt: 0.5}
"""


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def test_simulate_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", write(tmp_path, MINIMAL), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"observables.csv", "age_field.csv", "events_000.jsonl", "events_001.jsonl", "metadata.json", "timing.json"} <= names
    first = (out / "observables.csv").read_text().splitlines()[0]
    assert first.startswith("# ") and json.loads(first[2:])["seed"] == 5
    meta = json.loads((out / "events_000.jsonl").read_text().splitlines()[0])["metadata"]
    assert meta["config_sha256"] and meta["replication"] == 0


def test_outputs_byte_identical(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / d / "solve")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file() and p.name != "timing.json")
    assert len(files) >= 8
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_seed_override_changes_events(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
    a = (tmp_path / "a" / "events_000.jsonl").read_text().splitlines()[1:]
    b = (tmp_path / "b" / "events_000.jsonl").read_text().splitlines()[1:]
    assert a != b


def test_config_error_names_field(tmp_path, capsys):
    cfg = write(tmp_path, "scenario: markov_sir\nN: 5\nK: 10\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "field 'K'" in capsys.readouterr().err
    cfg = write(tmp_path, "scenario: markov_sir\nkernel: {type: gaussian, amplitude: 1.0, sigmaa: 0.2}\n", "d.yaml")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "kernel.sigmaa" in capsys.readouterr().err


def test_model_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "h: 0.5\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "ContractionFailure" in capsys.readouterr().err


def test_solve_both_reports_discrepancy(tmp_path):
    cfg = write(tmp_path, """
        scenario: markov_sir_age_density
        K: 3
        T: 0.2
        h: 0.002
        observe: {dt: 0.1, age_dt: 0.1}
        solve: {method: both, time_stride: 10, age_stride: 10}
    """)
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    disc = json.loads((out / "discrepancy.json").read_text())["max_abs_difference"]
    assert disc["boundary_vs_infection_rate"] < 1e-8
    assert disc["age_field"] < 1e-3
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["atomic_duration_law"] is False


def test_atomic_duration_metadata(tmp_path):
    cfg = write(tmp_path, """
        scenario: deterministic_period
        K: 2
        T: 0.1
        h: 0.005
        observe: {dt: 0.05, age_dt: 0.05}
    """)
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out), "--method", "pde"]) == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["atomic_duration_law"] is True and meta["survival"] == "right_continuous"


def test_sis_equilibrium_subcritical(tmp_path):
    cfg = write(tmp_path, """
        model: SIS
        K: 4
        T: 1.0
        kernel: {type: constant, b: 0.5}
        infectivity: {type: constant_until_death, c: 1.0, duration: {type: exponential, rate: 1.0}}
        initial: {infected: {type: constant, value: 0.1}}
    """)
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out), "--method", "sis-equilibrium"]) == 0
    rows = [r.split(",") for r in (out / "equilibrium.csv").read_text().splitlines()[2:]]
    assert len(rows) == 4 and all(float(r[3]) == 0.0 for r in rows)


def test_output_env_override(tmp_path, monkeypatch):
    cfg = write(tmp_path, MINIMAL + f"output_dir: {tmp_path / 'cfg'}\n")
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["solve", "--config", cfg]) == 0
    assert (tmp_path / "env" / "limit_fields.csv").exists() and not (tmp_path / "cfg").exists()
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "limit_fields.csv").exists()


def test_converge(tmp_path):
    cfg = write(tmp_path, """
        scenario: markov_sir
        T: 1.0
        observe: {dt: 0.5, age_dt: 0.5}
        ladder: [{N: 100, K: 2, replications: 2}, {N: 400, K: 2, replications: 2}]
        threads: 1
    """)
    out = tmp_path / "o"
    assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert [r["N"] for r in rep["rungs"]] == [100, 400]
    assert "total_seconds" in json.loads((out / "timing.json").read_text())


def test_missing_config_argument():
    with pytest.raises(SystemExit):
        main(["simulate"])
