import csv
import json

import numpy as np
import pytest

from junctionfield import pnm
from junctionfield.cli import build_parser, config_from_args, main
from junctionfield.core import Config
from junctionfield.evaluation import make_sample, save_dataset

from conftest import render_junction

FAST = ["--patch-size", "9", "--n-iter", "10", "--n-init", "3", "--stride", "2"]


@pytest.fixture
def junction_pgm(tmp_path):
    img = render_junction(21, np.deg2rad([30, 150, 260]), (10.2, 9.7), [0.1, 0.5, 0.9])
    path = tmp_path / "j.pgm"
    pnm.write(path, img)
    return path


def test_analyze_writes_outputs(tmp_path, junction_pgm, capsys):
    out = tmp_path / "o"
    assert main(["analyze", str(junction_pgm), "--out-dir", str(out)] + FAST) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["j_boundary.pgm", "j_field.json", "j_smooth.pgm", "j_vertices.csv"]
    dump = json.loads((out / "j_field.json").read_text())
    assert dump["patch_size"] == 9 and dump["M"] == 3
    p = dump["patches"][0]
    assert len(p["angles"]) == 3 and len(p["vertex"]) == 2 and np.shape(p["colors"]) == (3, 3, 1)
    raw, maxval = pnm.decode((out / "j_boundary.pgm").read_bytes())
    assert maxval == 65535 and raw.shape == (21, 21)
    _, maxval = pnm.decode((out / "j_smooth.pgm").read_bytes())
    assert maxval == 255
    with open(out / "j_vertices.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "score", "angles_deg"]
    assert len(rows) >= 2 and len(rows[1][3].split()) == 3


def test_analyze_is_byte_deterministic(tmp_path, junction_pgm):
    for d in ("a", "b"):
        assert main(["analyze", str(junction_pgm), "--out-dir", str(tmp_path / d), "--seed", "7"] + FAST) == 0
    for name in ("j_boundary.pgm", "j_field.json", "j_smooth.pgm", "j_vertices.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_smooth_only_and_color(tmp_path, rng):
    img = np.repeat(render_junction(15, (0.5, 2.5, 4.5), (7, 7), [0.1, 0.5, 0.9])[:, :, None], 3, axis=2)
    img[:, :, 1] *= 0.5
    pnm.write(tmp_path / "c.ppm", img)
    out = tmp_path / "o"
    assert main(["smooth", str(tmp_path / "c.ppm"), "--out-dir", str(out)] + FAST) == 0
    assert [p.name for p in out.iterdir()] == ["c_smooth.ppm"]
    assert pnm.read(out / "c_smooth.ppm").shape == (15, 15, 3)


def test_log_csv(tmp_path, junction_pgm):
    log = tmp_path / "log.csv"
    assert main(["analyze", str(junction_pgm), "--out-dir", str(tmp_path), "--log-csv", str(log)] + FAST) == 0
    assert len(log.read_text().strip().splitlines()) == 11


@pytest.mark.parametrize("extra", [["--m", "5"], ["--patch-size", "10"], ["--color-model", "cubic"],
                                   ["--threads", "0"], ["--lambda-b", "-1"]])
def test_invalid_flags_exit_nonzero(tmp_path, junction_pgm, extra, capsys):
    assert main(["analyze", str(junction_pgm), "--out-dir", str(tmp_path)] + FAST + extra) == 2
    assert "error" in capsys.readouterr().err


def test_unreadable_input(tmp_path, capsys):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    assert main(["analyze", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert main(["analyze", str(tmp_path / "missing.pgm"), "--out-dir", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_image_smaller_than_patch(tmp_path):
    pnm.write(tmp_path / "s.pgm", np.zeros((5, 5)))
    assert main(["analyze", str(tmp_path / "s.pgm"), "--out-dir", str(tmp_path)]) == 2


def test_flag_defaults_equal_config_defaults():
    args = build_parser().parse_args(["analyze", "x.pgm"])
    assert config_from_args(args) == Config()
    help_text = build_parser()._subparsers._group_actions[0].choices["analyze"].format_help()
    for flag in ("--patch-size", "--m", "--color-model", "--lambda-b", "--lambda-c", "--stride", "--eta", "--delta",
                 "--n-init", "--n-iter", "--lr-vertex", "--lr-angle", "--angle-samples", "--vertex-samples",
                 "--reinit-every", "--gamma", "--nu-d", "--nu-e", "--threads", "--seed", "--out-dir", "--log-csv"):
        assert flag in help_text
    assert "(default: 21)" in help_text and "(default: 0.5)" in help_text


def test_dataset_and_eval(tmp_path, capsys):
    assert main(["dataset", "gen", "--seed", "3", "--out", str(tmp_path / "d"), "--per-type", "1"]) == 0
    assert len(list((tmp_path / "d").glob("*.pgm"))) == 3
    s = make_sample(3, 0, seed=3)
    gt = tmp_path / "d" / "type3_000.json"
    pnm.write(tmp_path / "perfect.pgm", s.truth.boundary.astype(float), bits=16)
    capsys.readouterr()
    assert main(["eval", "boundaries", "--pred", str(tmp_path / "perfect.pgm"), "--gt", str(gt)]) == 0
    assert "F=1.000000" in capsys.readouterr().out
    with open(tmp_path / "v.csv", "w") as fh:
        fh.write("x,y,score,angles_deg\n")
        for v in s.truth.vertices:
            fh.write(f"{v.x},{v.y},1.0,{' '.join(str(np.rad2deg(a)) for a in v.angles)}\n")
    assert main(["eval", "vertices", "--pred", str(tmp_path / "v.csv"), "--gt", str(gt), "--match-dist", "1"]) == 0
    assert "F=1.000000" in capsys.readouterr().out
    assert main(["eval", "vertices", "--pred", str(tmp_path / "nope.csv"), "--gt", str(gt)]) == 2


def test_sweep_csv(tmp_path):
    save_dataset([make_sample(3, 0)], tmp_path / "d")
    out = tmp_path / "s.csv"
    assert main(["sweep", "--sigma-list", "0,0.2", "--data", str(tmp_path / "d"), "--count", "1", "--csv", str(out)]
                + FAST) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["sigma"] for r in rows] == ["0.0", "0.2"]
    assert all(0 <= float(r["F"]) <= 1 for r in rows)
    assert main(["sweep", "--sigma-list", "a,b"] + FAST) == 2


def test_four_angle_model_detects_crossing(tmp_path):
    y, x = np.mgrid[0:33, 0:33]
    pnm.write(tmp_path / "x.pgm", np.where((x >= 16) ^ (y >= 16), 0.8, 0.2))
    assert main(["analyze", str(tmp_path / "x.pgm"), "--out-dir", str(tmp_path), "--m", "4", "--patch-size", "11",
                 "--n-iter", "100"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "x_vertices.csv")))
    best = max(rows, key=lambda r: float(r["score"]))
    assert np.hypot(float(best["x"]) - 15.5, float(best["y"]) - 15.5) <= 2
    assert len(best["angles_deg"].split()) == 4
