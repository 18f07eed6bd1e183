import json

import numpy as np
import pytest

from swarmslam.cli import main
from swarmslam.grid import load_pgm
from swarmslam.scenarios import data_path


@pytest.fixture(scope="module")
def corridor_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--mission", data_path("mission_corridor.json"), "--out", str(out)]) == 0
    return out


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_writes_outputs(corridor_run, capsys):
    names = {p.name for p in corridor_run.iterdir()}
    assert {"trajectories.csv", "packets.csv", "graph_pre.json", "graph_post.json", "scans.csv",
            "map_pre.csv", "map_post.csv", "summary.json"} <= names
    summary = json.loads((corridor_run / "summary.json").read_text())
    assert summary["poses"] == 6 and summary["completed"] is True


def test_simulate_seed_override_is_deterministic(tmp_path, capsys):
    m = data_path("mission_corridor.json")
    for d in ("a", "b"):
        assert main(["simulate", "--mission", m, "--out", str(tmp_path / d), "--seed", "7"]) == 0
    for f in ("trajectories.csv", "packets.csv", "graph_post.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_eval_reports_rmse(corridor_run, capsys):
    capsys.readouterr()
    rc = main(["eval", "--graph", str(corridor_run / "graph_post.json"), "--world", data_path("corridor.json"),
               "--scans", str(corridor_run / "scans.csv")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["poses"] == 6
    assert 0 <= out["rmse_poses"] < 0.5
    assert 0 <= out["rmse_map"] < 0.2 and out["map_points"] > 0


@pytest.mark.parametrize("fmt", ["pgm", "csv", "svg"])
def test_export_formats(corridor_run, tmp_path, fmt, capsys):
    dest = tmp_path / f"map.{fmt}"
    rc = main(["export", "--graph", str(corridor_run / "graph_post.json"), "--scans",
               str(corridor_run / "scans.csv"), "--world", data_path("corridor.json"),
               "--format", fmt, "--out", str(dest)])
    assert rc == 0 and dest.exists()
    if fmt == "pgm":
        assert load_pgm(dest).cells.size > 1
    elif fmt == "csv":
        assert dest.read_text().startswith("x,y\n")
    else:
        assert "drone-0" in dest.read_text()


def test_icp_bench_csv(capsys):
    assert main(["icp-bench", "--sizes", "32,64,96", "--repeats", "2", "--backend", "python"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "size,ms_mean,ms_std,ms_median"
    assert [int(r.split(",")[0]) for r in lines[1:4]] == [32, 64, 96]


def test_slam_bench_csv(capsys):
    assert main(["slam-bench", "--poses", "20,40", "--constraints", "4", "--repeats", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and lines[0].count(",") >= 2


def test_bandwidth_check(capsys):
    assert main(["bandwidth", "--n", "4"]) == 0
    assert "OK" in capsys.readouterr().out
    assert main(["bandwidth", "--n", "4", "--capacity", "10", "--check"]) == 3
    assert main(["bandwidth", "--n", "4", "--capacity", "10"]) == 0


def test_missing_file_is_json_error(tmp_path, capsys):
    assert main(["simulate", "--mission", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    err = _err(capsys)
    assert "none.json" in err["message"]


def test_malformed_mission_is_json_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--mission", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "message" in _err(capsys)


def test_bad_scan_dump_is_json_error(corridor_run, tmp_path, capsys):
    bad = tmp_path / "scans.csv"
    bad.write_text("wrong,header\n")
    rc = main(["eval", "--graph", str(corridor_run / "graph_post.json"), "--world", data_path("corridor.json"),
               "--scans", str(bad)])
    assert rc == 2 and _err(capsys)["error"] == "ValueError"


def test_bad_int_list_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["icp-bench", "--sizes", "a,b"])
    assert exc.value.code == 2
