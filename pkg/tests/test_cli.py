import json
import socket

import jsonschema
import numpy as np
import pytest
from PIL import Image

from cotnav.cli import ConfigError, ablation_settings, main
from cotnav.episode import read_trace, trace_schema

SMALL = ["--size", "40", "--rooms", "3", "--max-steps", "120"]


def run_cli(*args):
    return main([str(a) for a in args])


def test_run_writes_expected_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli("run", "--episodes", 3, "--seed", 1, "--scorer", "oracle", *SMALL, "--out", out) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert {"sr", "spl", "episodes", "warnings"} <= set(report["summary"])
    assert report["summary"]["episodes"] == 3
    assert [e["seed"] for e in report["episodes"]] == [1, 2, 3]
    assert sorted(p.name for p in (out / "traces").iterdir()) == [
        "episode_0000.jsonl", "episode_0001.jsonl", "episode_0002.jsonl"]
    assert len(list((out / "renders").glob("*.ppm"))) == 3
    assert "sr" in (out / "table.txt").read_text()
    schema = trace_schema()
    for trace in (out / "traces").iterdir():
        for rec in read_trace(trace):
            jsonschema.validate(rec, schema)


def test_run_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("run", "--episodes", 2, "--seed", 5, *SMALL, "--out", out) == 0
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()


def dead_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_dead_endpoint_falls_back(tmp_path):
    out = tmp_path / "dead"
    rc = run_cli("run", "--episodes", 1, "--scorer", "remote", "--endpoint",
                 f"http://127.0.0.1:{dead_port()}", "--timeout", 1, "--size", 40, "--rooms", 2,
                 "--max-steps", 15, "--out", out)
    assert rc == 0
    s = json.loads((out / "metrics.json").read_text())["summary"]
    assert s["fallback_events"] == s["scorer_calls"] > 0
    assert s["warnings"] == s["fallback_events"]


def test_ablation_settings_counts():
    assert ablation_settings([]) == [{}]
    assert len(ablation_settings(["use_history"])) == 2
    assert len(ablation_settings(["cot_level", "use_history", "use_topdown_map"])) == 16
    with pytest.raises(ConfigError):
        ablation_settings(["colour"])


def test_ablate_rows(tmp_path):
    out = tmp_path / "ab"
    assert run_cli("ablate", "--axes", "use_history", "--episodes", 1, *SMALL, "--out", out) == 0
    data = json.loads((out / "ablation.json").read_text())
    assert [r["setting"] for r in data["rows"]] == [{"use_history": True}, {"use_history": False}]
    table = (out / "table.txt").read_text().splitlines()
    assert len(table) == 4


def test_ablate_without_axes_matches_run(tmp_path):
    run_out, ab_out = tmp_path / "r", tmp_path / "a"
    assert run_cli("run", "--episodes", 2, *SMALL, "--out", run_out) == 0
    assert run_cli("ablate", "--episodes", 2, *SMALL, "--out", ab_out) == 0
    rows = json.loads((ab_out / "ablation.json").read_text())["rows"]
    summary = json.loads((run_out / "metrics.json").read_text())["summary"]
    assert len(rows) == 1
    row = dict(rows[0])
    assert row.pop("setting") == {}
    assert row == summary


def test_render_outputs(tmp_path):
    out = tmp_path / "run"
    run_cli("run", "--episodes", 1, *SMALL, "--out", out)
    trace = out / "traces" / "episode_0000.jsonl"
    img_dir = tmp_path / "img"
    assert run_cli("render", trace, "--out", img_dir) == 0
    for name in ("occupancy.pgm", "value.pgm", "confidence.pgm", "trajectory.ppm"):
        assert (img_dir / name).stat().st_size > 0
    summary = read_trace(trace)[-1]
    values = np.array(summary["values"])
    pix = np.asarray(Image.open(img_dir / "value.pgm"))
    assert np.array_equal(pix, np.rint(255 * values).astype(np.uint8))


def test_render_rejects_empty_trace(tmp_path, capsys):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert run_cli("render", empty) != 0
    assert "empty" in capsys.readouterr().err


def test_validate_world(tmp_path, capsys):
    good = tmp_path / "good.txt"
    good.write_text("#######\n#S...T#\n#######\n")
    bad = tmp_path / "bad.txt"
    bad.write_text("#######\n#S.#.T#\n#######\n")
    assert run_cli("validate-world", good, "--success-radius", 0.1) == 0
    assert run_cli("validate-world", bad, "--success-radius", 0.1) == 1
    malformed = tmp_path / "m.txt"
    malformed.write_text("###\n#S#\n###\n")
    assert run_cli("validate-world", malformed) == 2


def test_print_config_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "explorer": {"max_steps": 77}}))
    assert run_cli("run", "--config", cfg, "--no-history", "--cot", "basic", "--print-config") == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["seed"] == 9
    assert resolved["explorer"]["max_steps"] == 77
    assert resolved["explorer"]["use_history"] is False
    assert resolved["explorer"]["cot_level"] == "basic"


def test_bad_config_is_an_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run_cli("run", "--config", cfg) == 2
    assert run_cli("run", "--scorer", "remote", "--print-config") == 2
    assert run_cli("run", "--episodes", 0, "--print-config") == 2
