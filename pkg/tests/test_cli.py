import csv
import io
import json

import pytest

from corrtrack import gradcheck
from corrtrack.cli import main
from corrtrack.io_formats import parse_mot_file, write_mot_results
from test_metrics import switch_fixture


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def crossing(tmp_path, capsys):
    def make(mode="orthogonal", preset="crossing"):
        d = tmp_path / f"{preset}-{mode}"
        code, out, _ = run(capsys, "scenario", "--preset", preset, "--feature-mode", mode, "--out-dir", str(d))
        assert code == 0 and json.loads(out)["gt_rows"] > 0
        return d
    return make


def track(capsys, d, out, *extra):
    return run(capsys, "track", "--dets", str(d / "det.txt"), "--features", str(d / "det_features.txt"),
               "--out", str(out), *extra)


def evaluate(capsys, gt, res, fmt="json"):
    code, out, _ = run(capsys, "eval", "--gt", str(gt), "--res", str(res), "--format", fmt)
    assert code == 0
    return json.loads(out)["overall"] if fmt == "json" else out


def test_scenario_writes_files(crossing):
    d = crossing()
    assert {p.name for p in d.iterdir()} == {"gt.txt", "det.txt", "det_features.txt", "scenario.cfg"}


def test_scenario_from_config(tmp_path, capsys, crossing):
    d = crossing()
    code, _, _ = run(capsys, "scenario", "--config", str(d / "scenario.cfg"), "--out-dir", str(tmp_path / "again"))
    assert code == 0
    assert (tmp_path / "again" / "gt.txt").read_bytes() == (d / "gt.txt").read_bytes()


def test_track_single_object(tmp_path, capsys, crossing):
    d = crossing(preset="single")
    code, out, _ = track(capsys, d, tmp_path / "res.txt", "--alpha", "0.5", "--tau-loss", "30")
    assert code == 0
    summary = json.loads(out)
    assert set(summary) == {"frames", "detections", "rejected_rows", "result_rows", "tracks_created",
                            "tracks_removed", "wall_time_s"}
    assert summary["tracks_created"] == 1
    assert {r.id for r in parse_mot_file((tmp_path / "res.txt").read_text().splitlines())} == {1}


def test_track_deterministic(tmp_path, capsys, crossing):
    d = crossing()
    track(capsys, d, tmp_path / "a.txt")
    track(capsys, d, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_crossing_orthogonal_no_switches(tmp_path, capsys, crossing):
    d = crossing("orthogonal")
    track(capsys, d, tmp_path / "res.txt")
    assert evaluate(capsys, d / "gt.txt", tmp_path / "res.txt")["idsw"] == 0


def test_crossing_identical_appearance_only_switches(tmp_path, capsys, crossing):
    d = crossing("identical")
    track(capsys, d, tmp_path / "res.txt", "--alpha", "0")
    assert evaluate(capsys, d / "gt.txt", tmp_path / "res.txt")["idsw"] >= 1


def test_eval_perfect_and_fixture(tmp_path, capsys):
    gt, hyp = switch_fixture()
    (tmp_path / "gt.txt").write_text(write_mot_results(gt))
    (tmp_path / "res.txt").write_text(write_mot_results(hyp))
    assert evaluate(capsys, tmp_path / "gt.txt", tmp_path / "gt.txt")["mota"] == 1.0
    m = evaluate(capsys, tmp_path / "gt.txt", tmp_path / "res.txt")
    assert m["mota"] == pytest.approx(0.7) and m["idsw"] == 1
    text = evaluate(capsys, tmp_path / "gt.txt", tmp_path / "res.txt", "csv")
    assert text.splitlines()[0] == "MOTA,IDF1,MT,ML,FP,FN,IDSW"


def test_missing_input(tmp_path, capsys):
    code, _, err = run(capsys, "track", "--dets", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "r.txt"))
    assert code == 2 and "nope.txt" in err
    code, _, _ = run(capsys, "eval", "--gt", str(tmp_path / "nope.txt"), "--res", str(tmp_path / "nope.txt"))
    assert code == 2


def test_parse_error(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("1,-1,10,20,30,40\n1,-1,x,20,30,40\n")
    code, _, err = run(capsys, "track", "--dets", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "r.txt"))
    assert code == 3 and "line 2" in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--colour", "red"])
    assert exc.value.code != 0


def test_bench_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--operator", "both", "--sizes", "16x16", "--radius", "1-3",
                       "--channels", "2", "--repeats", "3", "--out", str(tmp_path / "b.csv"))
    assert code == 0 and (tmp_path / "b.csv").read_text() == out
    rows = list(csv.DictReader(io.StringIO(out)))
    local = [r for r in rows if r["operator"] == "local_correlation"]
    assert len(local) == 3 and [int(r["flops"]) for r in local] == sorted(int(r["flops"]) for r in local)
    assert len(rows) == 6


def test_bench_ratio_column(capsys):
    code, out, _ = run(capsys, "bench", "--operator", "local", "--sizes", "64x64", "--radius", "5",
                       "--channels", "1", "--repeats", "3")
    (row,) = csv.DictReader(io.StringIO(out))
    assert row["flops_ratio"] == "33.8512"


def test_bench_repeats_validated(capsys):
    code, _, err = run(capsys, "bench", "--operator", "local", "--sizes", "8x8", "--repeats", "2")
    assert code == 3 and "repeats" in err


def test_gradcheck_default_and_seeded(capsys):
    code, out, _ = run(capsys, "gradcheck")
    report = json.loads(out)
    assert code == 0 and report["failed"] == []
    assert set(report["max_relative_error"]) == set(gradcheck.COMPONENTS)
    assert all(v < 1e-4 for v in report["max_relative_error"].values())
    _, a, _ = run(capsys, "gradcheck", "--seed", "7")
    _, b, _ = run(capsys, "gradcheck", "--seed", "7")
    assert a == b


def test_gradcheck_negative_control(capsys, monkeypatch):
    monkeypatch.setitem(gradcheck.GRADIENT_HOOKS, "aggregation", lambda g: -g)
    code, out, err = run(capsys, "gradcheck")
    assert code == 1
    assert json.loads(out)["failed"] == ["aggregation"]
    assert "aggregation" in err
