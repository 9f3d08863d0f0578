import json

import pytest

from radcom import cli


def run(argv, tmp_path, capsys):
    code = cli.main(list(argv) + ["--out-dir", str(tmp_path)])
    return code, capsys.readouterr()


def test_validate_prints_checkable_constants(tmp_path, capsys):
    code, out = run(["validate", "--config", "default"], tmp_path, capsys)
    assert code == 0
    text = out.out
    for token in ("149.896229", "0.149896229", "4.16666667e-06", " 40"):
        assert token in text
    assert not list(tmp_path.iterdir())


def test_unknown_flag_exits_1(tmp_path, capsys):
    code, out = run(["validate", "--nope"], tmp_path, capsys)
    assert code == 1 and "usage" in out.err


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"B_c": 60e6}')
    code, out = run(["validate", "--config", str(bad)], tmp_path, capsys)
    assert code == 1 and "B_c" in out.err
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert run(["validate", "--config", str(empty)], tmp_path, capsys)[0] == 1


def test_runtime_error_exits_2(tmp_path, capsys):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"targets": [{"d": -5}]}))
    code, out = run(["detect", "--scene", str(scene)], tmp_path, capsys)
    assert code == 2


def test_detect_writes_csv_and_manifest(tmp_path, capsys):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"targets": [{"d": 70}], "interferers": [{"d": 70, "tau": 0}]}))
    code, out = run(["detect", "--scene", str(scene), "--seed", "4"], tmp_path, capsys)
    assert code == 0
    lines = (tmp_path / "detect.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash:") and lines[1] == "# seed: 4"
    assert lines[3] == "bin,frequency_hz,range_m,power_db,threshold_db,detected"
    detected = [l for l in lines[4:] if l.endswith(",1")]
    assert len(detected) == 2
    manifest = json.loads((tmp_path / "detect.manifest.json").read_text())
    assert manifest["master_seed"] == 4 and manifest["command"] == "detect"
    assert manifest["config_hash"] in lines[0]


def test_outputs_are_byte_identical_on_rerun(tmp_path, capsys):
    argv = ["contention", "--M", "2,5", "--runs", "20", "--workers", "1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(argv + ["--out-dir", str(a)]) == 0
    assert cli.main(argv + ["--out-dir", str(b)]) == 0
    for name in ("contention.csv", "contention_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_environment_overrides(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "77")
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["analyze", "--lanes", "1-2", "--separations", "50,100"]) == 0
    csv = (tmp_path / "env" / "analyze.csv").read_text()
    assert "# seed: 77" in csv
    closed = json.loads((tmp_path / "env" / "analyze.json").read_text())
    assert closed["m_max"] == 40


def test_sweep_command(tmp_path, capsys):
    code, _ = run(["sweep", "--tau", "0.5e-6,10e-6", "--d", "70", "--runs", "3",
                   "--workers", "1"], tmp_path, capsys)
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[3].split(",")[:3] == ["tau", "d", "p_false_alarm"]
    assert len(lines) == 6
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["points"] == 2 and summary["interference_false_alarms"] > 0


def test_number_formatting():
    assert cli.fmt(1 / 3) == "0.333333333"
    assert cli.fmt(True) == "1" and cli.fmt(7) == "7"
    assert cli._ints("1-3,6") == [1, 2, 3, 6]
    assert cli._range("10:30:10") == [10.0, 20.0, 30.0]
