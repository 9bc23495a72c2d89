import csv
import io
import json
import subprocess
import sys

import pytest

from ncoop import __version__, cli


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return p


SMALL = {"experiment": "sumrate-sweep", "name": "small",
         "channel": {"seed": 3, "n_trials": 3}, "snr_db": [0.0, 10.0]}


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", str(write(tmp_path, SMALL))]) == 0
    assert capsys.readouterr().out.strip() == "valid"


def test_rho_out_of_range_names_line(tmp_path, capsys):
    text = '{\n  "experiment": "wideband-sweep",\n  "channel": {\n    "L": 8,\n    "rho": 1.2\n  }\n}\n'
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert cli.main(["validate", str(p)]) == 1
    err = capsys.readouterr().err
    assert "line 5: channel.rho: value 1.2 outside [0,1)" in err


def test_unknown_scheme_is_named(tmp_path, capsys):
    doc = dict(SMALL, schemes=["coop", "magic"])
    assert cli.main(["validate", str(write(tmp_path, doc))]) == 1
    err = capsys.readouterr().err
    assert "schemes[1]" in err and "'magic'" in err


@pytest.mark.parametrize("doc, field", [
    ({"experiment": "nope"}, "experiment"),
    (dict(SMALL, extra=1), "extra"),
    (dict(SMALL, channel={"L": 4}), "channel.L"),
    (dict(SMALL, budget=[1, 1]), "budget"),
    ({"experiment": "wideband-sweep", "schemes": ["highsnr"], "mu": 2.0}, "mu"),
])
def test_invalid_configs(tmp_path, doc, field):
    with pytest.raises(cli.ConfigError) as e:
        cli.load_config(write(tmp_path, doc))
    assert e.value.field == field


def test_malformed_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{\n "experiment": \n}')
    with pytest.raises(cli.ConfigError) as e:
        cli.load_config(p)
    assert e.value.line == 3


def test_run_outputs(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "o" / "small.csv").read_bytes().decode())))
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    assert len(rows) == 1 + 3 * 2 * 2
    doc = json.loads((tmp_path / "o" / "small.json").read_text())
    assert doc["complete"] and doc["n_trials_completed"] == 3
    assert doc["trial_seeds"] == cli.trial_seeds(3, 3)
    means = {(r["scheme"], r["snr_or_mu"]): r["mean"] for r in doc["summary"]}
    assert means[("coop", 10.0)] >= means[("noncoop", 10.0)]


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, dict(SMALL, experiment="wideband-sweep", channel={"L": 8, "seed": 1, "n_trials": 2},
                               schemes=["dual", "equal-power"], gap_at_rate=4.0))
    outs = []
    for d in ("a", "b"):
        assert cli.run(cfg, tmp_path / d, stream=io.StringIO()) == 0
        outs.append(((tmp_path / d / "small.csv").read_bytes(), (tmp_path / d / "small.json").read_bytes()))
    assert outs[0] == outs[1]


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.run(write(tmp_path, dict(SMALL, channel={"n_trials": 1})), stream=io.StringIO()) == 0
    assert (tmp_path / "env" / "small.csv").exists()


def test_partial_results_on_failure(tmp_path, monkeypatch, capsys):
    calls = []
    real = cli.RUNNERS["sumrate-sweep"]

    def flaky(cfg, seed):
        calls.append(seed)
        if len(calls) == 2:
            raise FloatingPointError("boom")
        return real(cfg, seed)

    monkeypatch.setitem(cli.RUNNERS, "sumrate-sweep", flaky)
    assert cli.main(["run", str(write(tmp_path, SMALL)), "--out", str(tmp_path)]) == 2
    doc = json.loads((tmp_path / "small.json").read_text())
    assert not doc["complete"] and doc["n_trials_completed"] == 1
    assert "boom" in doc["error"] and "boom" in capsys.readouterr().err


def test_horizontal_gaps():
    summary = [{"scheme": s, "snr_or_mu": x, "metric": "rate", "mean": m}
               for s, off in (("a", 0.0), ("b", 3.0)) for x, m in ((0.0 + off, 1.0), (10.0 + off, 3.0))]
    assert cli.horizontal_gaps(summary, "a", 2.0) == {"b": pytest.approx(3.0)}
    assert cli.horizontal_gaps(summary, "a", 9.0) == {"b": None}


def test_version_and_module_entry():
    out = subprocess.run([sys.executable, "-m", "ncoop", "version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__
