from __future__ import annotations

import json
import subprocess
import sys

import pytest

from mixlab import cli
from mixlab.forms import Certificate


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectral_path3(capsys, tmp_path):
    code, out, _ = _run(capsys, "spectral", "--graph", "path:3", "--form", "rw", "--out", str(tmp_path))
    assert code == 0
    assert abs(json.loads(out)["gap"] - 1) < 1e-12


def test_certify_octopus_example(capsys):
    code, out, _ = _run(capsys, "certify", "--lemma", "octopus", "--group", "n=2,l=2", "--samples", "50", "--seed", "7", "--out", "none")
    data = json.loads(out)
    assert code == 0 and data["passed"] and len(data["certificates"]) == 50


def test_experiment_t_cyc_writes_table(capsys, tmp_path):
    code, _, err = _run(capsys, "experiment", "t-cyc", "--graph", "hamming:n=8,l=2", "--replicas", "200", "--seed", "1", "--out", str(tmp_path))
    assert code == 0
    (run,) = list(tmp_path.iterdir())
    header = (run / "tables" / "t_cyc.csv").read_text().splitlines()[0]
    assert header == "t,success_count,replicas,p_hat,ci_lo,ci_hi"
    for name in ("config.json", "record.json", "timing.json"):
        assert (run / name).exists()


def test_usage_errors_exit_one(capsys):
    assert _run(capsys, "certify", "--lemma", "nonsense", "--out", "none")[0] == 1
    assert _run(capsys, "spectral", "--graph", "blob:3", "--out", "none")[0] == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["spectral", "--no-such-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_cap_violation_names_the_cap(capsys):
    code, _, err = _run(capsys, "experiment", "tmix", "--graph", "k9", "--out", "none")
    assert code == 1 and "45000" in err.replace(",", "").replace("_", "")


def test_failed_certificate_exits_two(capsys, monkeypatch):
    def failing(*args, **kwargs):
        return [Certificate("octopus", "S(4)", {"states": 24}, 2.0, -1.0, 1e-8, "dense", False, extra={"sample": 0})]

    monkeypatch.setattr(cli, "octopus_certificates", failing)
    code, out, _ = _run(capsys, "certify", "--lemma", "octopus", "--out", "none")
    assert code == 2 and json.loads(out)["passed"] is False


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"subcommand": "spectral", "graph": "path:3", "form": "rw"}))
    code, out, _ = _run(capsys, "spectral", "--config", str(cfg), "--out", "none")
    assert code == 0 and abs(json.loads(out)["gap"] - 1) < 1e-12
    code, out, _ = _run(capsys, "spectral", "--config", str(cfg), "--graph", "k3", "--out", "none")
    assert abs(json.loads(out)["gap"] - 3) < 1e-12


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"graph": "path:3", "colour": "red"}))
    assert _run(capsys, "spectral", "--config", str(cfg), "--out", "none")[0] == 1
    cfg.write_text(json.dumps({"subcommand": "graph", "graph": "path:3"}))
    assert _run(capsys, "spectral", "--config", str(cfg), "--out", "none")[0] == 1


def test_replay_from_config_reproduces_record(capsys, tmp_path):
    code, _, _ = _run(capsys, "certify", "--lemma", "lumping", "--graph", "cycle4", "--k", "2", "--out", str(tmp_path / "a"))
    assert code == 0
    (run,) = list((tmp_path / "a").iterdir())
    code, _, _ = _run(capsys, "certify", "--config", str(run / "config.json"), "--out", str(tmp_path / "b"))
    (again,) = list((tmp_path / "b").iterdir())
    assert (run / "record.json").read_bytes() == (again / "record.json").read_bytes()


def test_seed_changes_monte_carlo_but_not_exact(capsys):
    sims = [json.loads(_run(capsys, "experiment", "tv-bound", "--graph", "cycle4", "--t", "0.3", "--replicas", "2000", "--seed", s, "--out", "none")[1]) for s in ("1", "2")]
    assert sims[0]["empirical_tv"] != sims[1]["empirical_tv"]
    certs = [_run(capsys, "certify", "--lemma", "final-comparison", "--group", "n=2,l=2", "--seed", s, "--out", "none")[1] for s in ("1", "2")]
    assert certs[0] == certs[1]


def test_workers_do_not_change_output(capsys):
    outs = [_run(capsys, "simulate", "--process", "ip", "--graph", "cycle4", "--t", "0.5", "--replicas", "400", "--seed", "3", "--workers", w, "--out", "none")[1] for w in ("1", "3")]
    assert outs[0] == outs[1]


def test_mixlab_cache(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("MIXLAB_CACHE", str(tmp_path))
    first = _run(capsys, "spectral", "--graph", "cycle5", "--form", "ip", "--out", "none")[1]
    assert any(tmp_path.iterdir())
    second = _run(capsys, "spectral", "--graph", "cycle5", "--form", "ip", "--out", "none")[1]
    assert first == second


def test_boolean_flags_accept_values(capsys):
    bare = _run(capsys, "congestion", "--graph", "path:3", "--lift", "--out", "none")[1]
    explicit = _run(capsys, "congestion", "--graph", "path:3", "--lift", "yes", "--out", "none")[1]
    plain = _run(capsys, "congestion", "--graph", "path:3", "--lift", "false", "--out", "none")[1]
    assert bare == explicit != plain


@pytest.mark.parametrize("argv", [
    ["graph", "--catalog", "4"],
    ["measure", "--kind", "mu-power", "--group", "n=3,l=2", "--t", "4"],
    ["congestion", "--graph", "path:3", "--lift"],
    ["simulate", "--process", "ex", "--graph", "path:4", "--subset", "0,1", "--replicas", "50"],
    ["simulate", "--process", "rw", "--graph", "cycle5", "--replicas", "50"],
    ["experiment", "tmix", "--graph", "k3"],
    ["experiment", "pipeline", "--group", "n=2,l=2"],
    ["experiment", "lsi", "--graph", "cycle4", "--k", "2", "--trials", "3"],
    ["certify", "--lemma", "aldous", "--max-vertices", "4"],
    ["certify", "--lemma", "canonical-paths", "--graph", "star:4"],
    ["certify", "--lemma", "hamming-reduction", "--graph", "hamming:n=2,l=2"],
    ["certify", "--lemma", "proof-chain", "--group", "n=1,l=3"],
])
def test_every_subcommand_runs(capsys, argv):
    code, out, _ = _run(capsys, *argv, "--out", "none")
    assert code == 0, out
    json.loads(out)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mixlab.cli", "spectral", "--graph", "k2", "--out", "none"], capture_output=True, text=True)
    assert proc.returncode == 0 and abs(json.loads(proc.stdout)["gap"] - 2) < 1e-12
    help_text = subprocess.run([sys.executable, "-m", "mixlab.cli", "--help"], capture_output=True, text=True).stdout
    assert "MIXLAB_CACHE" in help_text
