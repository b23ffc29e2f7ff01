import json
import math

import pytest

from twisted_torsion import cli


def write_config(path, **changes):
    cfg = json.loads(json.dumps({k: v for k, v in cli.DEFAULT_CONFIG.items()}))
    for key, val in changes.items():
        cfg[key] = val
    path.write_text(json.dumps(cfg))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_check_identities_deterministic(tmp_path):
    cfg = write_config(tmp_path / "c.json", identity={"samples": 60, "max_n": 4, "zeta_hat_models": 6})
    assert run("check-identities", "--config", cfg, "--out", tmp_path / "a") == cli.EXIT_PASS
    assert run("check-identities", "--config", cfg, "--out", tmp_path / "b") == cli.EXIT_PASS
    a = (tmp_path / "a" / "identities.txt").read_bytes()
    assert a == (tmp_path / "b" / "identities.txt").read_bytes()
    assert b"verdict: PASS" in a


def test_tolerance_override_echoed(tmp_path):
    cfg = write_config(tmp_path / "c.json", identity={"samples": 5, "max_n": 2, "zeta_hat_models": 2})
    assert run("check-identities", "--config", cfg, "--out", tmp_path, "--tolerance", "identity_tol=1e-9") == 0
    assert "identity_tol=1e-09" in (tmp_path / "identities.txt").read_text().splitlines()[0]


@pytest.mark.parametrize("change", [
    {"model": {"n": 1, "curvature": [0.0]}},
    {"model": {"n": 1, "curvature": [-1.0]}},
    {"p_grid": []},
    {"p_grid": [16, 8]},
    {"unknown_key": 1},
    {"schema": 2},
    {"model": {"n": 1, "curvature": [1.0], "volume": 1.0}},
])
def test_config_errors(tmp_path, change, capsys):
    cfg = write_config(tmp_path / "c.json", **change)
    assert run("torsion", "--config", cfg, "--out", tmp_path) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_bad_tolerance_flags(tmp_path):
    assert run("check-identities", "--out", tmp_path, "--tolerance", "nonsense") == cli.EXIT_CONFIG
    assert run("check-identities", "--out", tmp_path, "--tolerance", "bogus=1") == cli.EXIT_CONFIG
    assert run("check-identities", "--out", tmp_path, "--tolerance", "identity_tol=x") == cli.EXIT_CONFIG


def test_parametrix_command(tmp_path):
    assert run("parametrix", "--out", tmp_path) == cli.EXIT_PASS
    text = (tmp_path / "parametrix.txt").read_text()
    assert "operator degree: 2" in text and "verdict: PASS" in text
    assert run("parametrix", "--out", tmp_path, "--jmax", 5) == cli.EXIT_CONFIG


def test_parametrix_twisted_max_degree_part_b_free(tmp_path):
    model = {"n": 2, "curvature": [2 * math.pi, 2 * math.pi], "volume": 1.0, "three_form": [[1, 2, 3, 0.5]]}
    bare = dict(model, three_form=[])
    texts = []
    for name, m in (("tw", model), ("bare", bare)):
        cfg = write_config(tmp_path / f"{name}.json", model=m, p_grid=[4])
        assert run("parametrix", "--config", cfg, "--out", tmp_path / name, "--jmax", 1) == cli.EXIT_PASS
        texts.append((tmp_path / name / "parametrix.txt").read_text())
    assert "max-degree part B-free: yes" in texts[0]
    top = [t.split("max-degree part:\n")[1].split("Theta_0:")[0] for t in texts]
    assert top[0] == top[1]


def test_spectrum_cache(tmp_path, capsys):
    assert run("spectrum", "--out", tmp_path, "--p", 8) == cli.EXIT_PASS
    first = capsys.readouterr().out
    assert "computed" in first and "kernel=[8, 0]" in first
    files = list((tmp_path / "spectra").glob("*.json"))
    assert len(files) == 1
    before = files[0].read_bytes()
    assert run("spectrum", "--out", tmp_path, "--p", 8) == cli.EXIT_PASS
    assert "cache-hit" in capsys.readouterr().out
    assert files[0].read_bytes() == before
    assert not list((tmp_path / "spectra").glob("*.tmp"))


def test_uncertified_cutoff_exit(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", cutoff=3, p_grid=[8])
    assert run("spectrum", "--config", cfg, "--out", tmp_path) == cli.EXIT_CERT
    assert "suggested cutoff K=" in capsys.readouterr().err


def test_torsion_reference(tmp_path):
    cfg = write_config(tmp_path / "c.json", p_grid=[8, 16])
    assert run("torsion", "--config", cfg, "--out", tmp_path) == cli.EXIT_PASS
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0].split(",") == cli.regularizer.REPORT_COLUMNS
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(row["theta_prime0"]) == pytest.approx(4 * math.log(8), rel=1e-9)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["header"]["certified"] and doc["verdict"]["pass"]
