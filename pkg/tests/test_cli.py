import json
import math

import numpy as np
import pytest

from pathfuse.camera import save_ray_table, write_mask
from pathfuse.cli import EXIT_ASSERT, EXIT_NO_PATH, EXIT_OK, EXIT_PARSE, main, parse_ordering, parse_strategy
from pathfuse.sim import render_observation, synthesize_world


@pytest.fixture(scope="module")
def files(tmp_path_factory, small_camera):
    d = tmp_path_factory.mktemp("cli")
    save_ray_table(small_camera, d / "calib.txt")
    w = synthesize_world("corridor", {"width": 2.0}, 0)
    write_mask(d / "corridor.pgm", render_observation(w, w.start, small_camera))
    write_mask(d / "dark.pgm", np.zeros((60, 80), bool))
    write_mask(d / "wrong.pgm", np.zeros((10, 10), bool))
    (d / "world.json").write_text(json.dumps({"scenario_kind": "open", "params": {"size": 12.0}, "seed": 0}))
    (d / "mission.json").write_text(json.dumps({"checkpoints": [{"x": 0.0, "z": 2.5, "radius": 0.5}], "difficulty": 2, "time_limit": 10}))
    return d


SMALL_CAM = ["--set", "camera.width=80", "--set", "camera.height_px=60", "--set", "camera.f=30",
             "--set", "camera.cx=39.5", "--set", "camera.cy=29.5"]


def test_parse_helpers():
    assert parse_strategy("nf@10", 1.0) == ("No Fusion (beta=10)", "no_fusion", 10.0)
    assert parse_strategy("angular", 1.0)[1] == "angular"
    assert parse_ordering("angular>es>nf") == ["angular", "euclidean", "no_fusion"]


def test_plan_corridor(files, tmp_path, capsys):
    out = tmp_path / "d.json"
    svg = tmp_path / "p.svg"
    args = ["plan", "--mask", str(files / "corridor.pgm"), "--calib", str(files / "calib.txt"), "--out", str(out), "--svg", str(svg)]
    assert main(args) == EXIT_OK
    d = json.loads(out.read_text())
    assert d["status"] == "ok" and len(d["representatives"]) >= 1
    end = np.array(d["selected"])[-1]
    assert abs(math.atan2(end[0], end[1])) < math.radians(15)
    assert "<svg" in svg.read_text()[:500]


def test_plan_dark_mask_is_no_path(files, capsys):
    args = ["plan", "--mask", str(files / "dark.pgm"), "--calib", str(files / "calib.txt"), "--set", "grid.unknown_cost=1.0"]
    assert main(args) == EXIT_NO_PATH
    assert "no path" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [
        ["--calib", "missing.txt"],
        ["--goal-bearing", "4"],
        ["--set", "planner.nope=1"],
        ["--ci"],
    ],
)
def test_plan_parse_errors(files, extra, capsys):
    args = ["plan", "--mask", str(files / "corridor.pgm")] + extra
    if "--calib" not in extra:
        args += ["--calib", str(files / "calib.txt")]
    assert main(args) == EXIT_PARSE
    assert capsys.readouterr().err


def test_plan_shape_mismatch(files, capsys):
    assert main(["plan", "--mask", str(files / "wrong.pgm"), "--calib", str(files / "calib.txt")]) == EXIT_PARSE


def test_unknown_flag_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        main(["plan", "--bogus"])
    assert e.value.code == EXIT_PARSE


def test_simulate_and_replay(files, tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    args = ["simulate", "--world", str(files / "world.json"), "--mission", str(files / "mission.json"), "--log", str(log)] + SMALL_CAM
    assert main(args) == EXIT_OK
    last = capsys.readouterr().out.strip().splitlines()[-1]
    assert last == "score=2 outcome=success"
    assert main(["replay", "--log", str(log), "--out-dir", str(tmp_path / "frames")]) == EXIT_OK
    n = int(capsys.readouterr().out.strip().split("=")[1])
    assert n == len(list((tmp_path / "frames").glob("frame_*.svg"))) == len(log.read_text().splitlines()) - 2


def test_simulate_bad_world(tmp_path, capsys):
    assert main(["simulate", "--world", str(tmp_path / "none.json")]) == EXIT_PARSE


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("suite")
    assert main(["make-suite", "--out-dir", str(d), "--n", "6"]) == EXIT_OK
    return d


def test_bench_table_and_ordering(suite_dir, tmp_path, capsys):
    out = tmp_path / "t.csv"
    js = tmp_path / "t.json"
    args = ["bench", "--suite", str(suite_dir), "--strategies", "nf@1,angular", "--out", str(out), "--json", str(js)] + SMALL_CAM
    assert main(args) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "Method,PIP,PIR,PSA"
    assert lines[1].startswith("No Fusion (beta=1),-,-,")
    assert json.loads(js.read_text())[1]["strategy"] == "angular"
    # An ordering that cannot hold: a strategy strictly better than itself.
    code = main(args + ["--assert-ordering", "angular>angular"])
    assert code == EXIT_ASSERT
    assert "ordering violated" in capsys.readouterr().err
    assert main(args + ["--assert-ordering", "angular>km"]) == EXIT_PARSE


def test_sweeps(suite_dir, tmp_path, capsys):
    svg = tmp_path / "pr.svg"
    args = ["sweep", "--kind", "threshold", "--values", "0,0.5,2", "--suite", str(suite_dir), "--svg", str(svg)] + SMALL_CAM
    assert main(args) == EXIT_OK
    rows = capsys.readouterr().out.splitlines()
    assert rows[0].startswith("threshold,precision,recall") and len(rows) == 4
    assert "<svg" in svg.read_text()[:500]
    assert main(["sweep", "--kind", "threshold", "--values", "1,0", "--suite", str(suite_dir)]) == EXIT_PARSE
    assert main(["sweep", "--kind", "beta", "--values", "0,1", "--suite", str(suite_dir), "--set", "sampler.M=16"] + SMALL_CAM) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "beta,psa,stderr"


def test_ci_determinism(suite_dir, tmp_path, capsys):
    args = ["bench", "--ci", "--seed", "5", "--suite", str(suite_dir), "--strategies", "nf,es"] + SMALL_CAM
    assert main(args) == EXIT_OK
    first = capsys.readouterr().out
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out == first


def test_bench_four_strategies_four_rows(suite_dir, capsys):
    assert main(["bench", "--suite", str(suite_dir), "--strategies", "nf,km,es,angular"] + SMALL_CAM) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 5


def test_single_branch_suite_psa_one(tmp_path, capsys):
    from pathfuse.costmap import CostMap, GridSpec, save_costmap

    save_costmap(CostMap.filled(GridSpec(), 0.0), tmp_path / "free.txt")
    case = {"costmap": "free.txt", "branches": [{"polyline": [[0, -1], [0, 6]], "width": 2.0}], "correct_branch": 0, "goal_direction": [0, 1]}
    for i in range(2):
        (tmp_path / f"c{i}.json").write_text(json.dumps(case))
    assert main(["bench", "--suite", str(tmp_path), "--strategies", "nf,km,es,angular"]) == EXIT_OK
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert [r.split(",")[-1] for r in rows] == ["100.0"] * 4


def test_sweep_row_counts(suite_dir, capsys):
    base = ["sweep", "--suite", str(suite_dir), "--set", "sampler.M=16"] + SMALL_CAM
    assert main(base + ["--kind", "threshold", "--values", "0.5"]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 2
    assert main(base + ["--kind", "beta", "--values", "0.1,1,10"]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 4


def test_simulate_corridor_and_lethal_ring(tmp_path, capsys):
    from pathfuse.costmap import CostMap, GridSpec, save_costmap

    (tmp_path / "corridor.json").write_text(json.dumps({"scenario_kind": "corridor", "params": {"length": 8.0}, "seed": 0}))
    assert main(["simulate", "--world", str(tmp_path / "corridor.json")] + SMALL_CAM) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("outcome=success")
    spec = GridSpec(0.05, 120, 120, (-3.0, -3.0), 0.0)
    x, z = spec.centers()
    r = np.hypot(x, z)
    save_costmap(CostMap(spec, np.where((r > 0.6) & (r < 1.0), 1.0, 0.0)), tmp_path / "ring.txt")
    (tmp_path / "ring.json").write_text(json.dumps({"grid": "ring.txt", "annotations": []}))
    (tmp_path / "m.json").write_text(json.dumps({"checkpoints": [{"x": 0.0, "z": 2.5}], "time_limit": 15}))
    args = ["simulate", "--world", str(tmp_path / "ring.json"), "--mission", str(tmp_path / "m.json"), "--log", str(tmp_path / "a.jsonl")]
    assert main(args + SMALL_CAM) == EXIT_OK
    assert capsys.readouterr().out.strip().startswith("score=0 ")
    args[-1] = str(tmp_path / "b.jsonl")
    assert main(args + SMALL_CAM) == EXIT_OK
    assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()
