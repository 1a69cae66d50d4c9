import json
from pathlib import Path

import pytest

from cli import main
from utils.output_writer import OutputWriter, read_csv, read_json


def _config(tmp_path, model=None, run=None, name="config.json") -> str:
    record = {
        "MODEL_CONFIG": {"kernel": "standard_erw", "d": 2, "p": 0.75, "ell": [1.0, 0.0], **(model or {})},
        "RUN_CONFIG": {"horizon": 300, "replicas": 4, "master_seed": 5, "threads": 1, **(run or {})},
    }
    path = tmp_path / name
    path.write_text(json.dumps(record))
    return str(path)


def test_validate_reports_standard_constants(tmp_path, capsys) -> None:
    assert main(["validate", "--config", _config(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "K = 1" in out
    assert "lambda = 0.25" in out
    assert "(h, r) = (0.25, 0.5)" in out


def test_validate_rejects_p_below_half(tmp_path) -> None:
    assert main(["validate", "--config", _config(tmp_path, model={"p": 0.4})]) == 2


def test_malformed_config_exits_2(tmp_path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["validate", "--config", str(path)]) == 2


def test_condition_violation_exits_1(tmp_path) -> None:
    config = _config(tmp_path, model={"kernel": "generalized", "table": "point_mass_e1"})
    assert main(["validate", "--config", config]) == 1


def test_simulate_writes_per_horizon_outputs(tmp_path) -> None:
    out = tmp_path / "run"
    config = _config(tmp_path, run={"horizons": [100, 300]})
    assert main(["simulate", "--config", config, "--out", str(out), "--quiet"]) == 0
    for n in (100, 300):
        stats = read_json(out / f"h{n}" / "stats.json")
        assert stats["horizon"] == n
        assert len(stats["replicas"]) == 4
        assert all("taus" in record for record in stats["replicas"])
        assert read_csv(out / f"h{n}" / "blocks.csv")
    manifest = read_json(out / "manifest.json")
    assert set(manifest["hashes"]) == {"h100/stats.json", "h100/blocks.csv", "h300/stats.json", "h300/blocks.csv"}
    assert len(manifest["seeds"][0]["replicas"]) == 4
    assert not (tmp_path / "run.partial").exists()


def test_simulate_is_reproducible(tmp_path) -> None:
    config = _config(tmp_path)
    hashes = []
    for name in ("a", "b"):
        assert main(["simulate", "--config", config, "--out", str(tmp_path / name), "--quiet"]) == 0
        hashes.append(read_json(tmp_path / name / "manifest.json")["hashes"])
    assert hashes[0] == hashes[1]


def test_parallel_run_matches_sequential(tmp_path) -> None:
    config = _config(tmp_path, run={"replicas": 16})
    hashes = {}
    for name, threads in (("one", "1"), ("rerun", "1"), ("many", "8")):
        assert main(["simulate", "--config", config, "--out", str(tmp_path / name), "--threads", threads, "--quiet"]) == 0
        hashes[name] = read_json(tmp_path / name / "manifest.json")["hashes"]
    assert hashes["one"] == hashes["rerun"] == hashes["many"]


def test_trajectory_dump(tmp_path) -> None:
    config = json.loads(Path(_config(tmp_path)).read_text())
    config["OUTPUT_CONFIG"] = {"trajectory_dump": True}
    path = tmp_path / "dump.json"
    path.write_text(json.dumps(config))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "run"), "--quiet"]) == 0
    rows = read_csv(tmp_path / "run" / "h300" / "trajectories" / "replica_00000.csv")
    assert len(rows) == 301


def test_analyze_straight_line_speed(tmp_path) -> None:
    out = tmp_path / "run"
    config = _config(tmp_path, model={"kernel": "generalized", "table": "point_mass_e1"})
    assert main(["simulate", "--config", config, "--out", str(out), "--quiet"]) == 0
    assert main(["analyze", "--stats", str(out), "--quiet"]) == 0
    speed = read_json(out / "reports" / "h300" / "speed.json")
    assert speed["estimate"] == [1.0, 0.0]
    assert read_json(out / "reports" / "h300" / "direct_speed.json")["estimate"] == 1.0


def test_analyze_emits_all_reports(tmp_path) -> None:
    out = tmp_path / "run"
    config = _config(tmp_path, run={"horizons": [300, 600, 1200], "replicas": 30})
    assert main(["simulate", "--config", config, "--out", str(out), "--quiet"]) == 0
    assert main(["analyze", "--stats", str(out), "--quiet"]) == 0
    reports = out / "reports"
    for name in ("speed", "covariance", "direct_speed", "clt", "regen_tail", "local_time", "escape",
                 "advance", "lag_autocorrelation"):
        assert (reports / "h1200" / f"{name}.json").exists(), name
    for name in ("range_exponent", "regeneration_rate", "escape"):
        assert (reports / f"{name}.json").exists(), name
    assert (reports / "range_exponent_range_loglog.csv").exists()


def test_analyze_missing_inputs_exit_3(tmp_path) -> None:
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["analyze", "--config", _config(tmp_path), "--stats", str(empty), "--quiet"]) == 3


def test_print_defaults(capsys) -> None:
    assert main(["print-defaults"]) == 0
    assert "MODEL_CONFIG" in json.loads(capsys.readouterr().out)


def test_checks_subset(tmp_path) -> None:
    out = tmp_path / "checks"
    assert main(["checks", "--config", _config(tmp_path), "--only", "hand_traces", "--out", str(out), "--quiet"]) == 0
    assert read_json(out / "summary.json") == {"hand_traces": True}
    assert read_json(out / "hand_traces.json")["notes"]["backtrack"][0] == 4
    assert "throughput" in read_json(out / "manifest.json")["diagnostics"]


def test_determinism_check_compares_one_and_eight_workers(tmp_path) -> None:
    out = tmp_path / "checks"
    assert main(["checks", "--config", _config(tmp_path), "--only", "determinism", "--out", str(out), "--quiet"]) == 0
    notes = read_json(out / "determinism.json")["notes"]
    assert notes["threads_1"] == notes["threads_1_rerun"] == notes["threads_8"]


def test_writer_discards_partial_output_on_error(tmp_path) -> None:
    target = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with OutputWriter(target) as writer:
            writer.write_json("a.json", {"x": 1})
            raise RuntimeError("interrupted")
    assert not target.exists()
    assert not (tmp_path / "out.partial").exists()


def test_writer_respects_formats(tmp_path) -> None:
    with OutputWriter(tmp_path / "out", formats=["csv"]) as writer:
        writer.write_json("skipped.json", {})
        writer.write_json("kept.json", {}, force=True)
        writer.write_csv("rows.csv", ["a"], [[1]])
    assert not (tmp_path / "out" / "skipped.json").exists()
    assert (tmp_path / "out" / "kept.json").exists()
    assert (tmp_path / "out" / "rows.csv").read_text() == "a\n1\n"


@pytest.mark.slow
def test_full_checks_suite_passes(tmp_path) -> None:
    assert main(["checks", "--out", str(tmp_path / "checks"), "--quiet"]) == 0
