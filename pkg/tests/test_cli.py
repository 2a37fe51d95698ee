import json

import pytest

from rotinv.cli import main
from rotinv.geometry import PointCloud
from rotinv.io import write_xyzn
from rotinv.shapes import ShapeSpec, make_shape

TINY_CFG = """# tiny run for CLI tests
train_per_class = 3
test_per_class = 2
n_points = 64
epochs = 1
k = 4
m = 8
local_dims = 8, 8
global_dims = 8, 8
classifier_dims = 8
"""


@pytest.fixture
def ellipsoid(tmp_path):
    path = tmp_path / "shape.xyzn"
    write_xyzn(path, make_shape(ShapeSpec("ellipsoid", 256, 0.0, seed=1)))
    return path


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


def test_no_arguments(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 2


def test_verify_passes(ellipsoid, capsys):
    assert main(["verify", str(ellipsoid), "--trials", "20", "--tol", "1e-6"]) == 0
    out = capsys.readouterr().out
    assert out.count("pass") == 3


def test_verify_fails_on_tight_tolerance(ellipsoid):
    assert main(["verify", str(ellipsoid), "--trials", "3", "--tol", "1e-20"]) == 1


def test_verify_degenerate(tmp_path):
    path = tmp_path / "cube.xyzn"
    corners = [(x, y * 0.999, z * 0.998) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    write_xyzn(path, PointCloud(corners))
    assert main(["verify", str(path), "--trials", "2", "--m", "8", "--k", "3", "--normals-k", "3"]) == 1


def test_verify_json(ellipsoid, tmp_path):
    out = tmp_path / "checks.json"
    assert main(["verify", str(ellipsoid), "--trials", "2", "--json", str(out)]) == 0
    data = json.loads(out.read_text())
    assert [c["check"] for c in data["checks"]] == ["pairwise", "svd", "features"]


def test_extract_is_deterministic(ellipsoid, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["extract", str(ellipsoid), str(a), "--k", "8"]) == 0
    assert main(["extract", str(ellipsoid), str(b), "--k", "8"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 2 + 256 * 8 + 256


def test_extract_estimates_missing_normals(tmp_path):
    src = tmp_path / "pts.xyzn"
    write_xyzn(src, PointCloud(make_shape(ShapeSpec("box", 128, 0.0)).points))
    assert main(["extract", str(src), str(tmp_path / "o.csv"), "--k", "4", "--m", "16"]) == 0


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.xyzn"
    bad.write_text("0 0 0\n1 2\n")
    assert main(["verify", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_train_eval_round(cfg, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        assert main(["train", "--config", str(cfg), "--seed", "3", "--out-dir", str(out)]) == 0
    assert (out1 / "model.ckpt").read_bytes() == (out2 / "model.ckpt").read_bytes()
    assert (out1 / "training_curve.png").read_bytes() == (out2 / "training_curve.png").read_bytes()
    assert main(["eval", str(out1 / "model.ckpt"), "z/SO3", "--out-dir", str(out1)]) == 0
    report = json.loads((out1 / "eval_z_SO3.json").read_text())
    assert report["condition"] == "z/SO3" and report["seed"] == 3


def test_eval_bad_condition(cfg, tmp_path):
    assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert main(["eval", str(tmp_path / "model.ckpt"), "SO3/z"]) == 2


def test_flags_override_config(cfg, tmp_path):
    assert main(["train", "--config", str(cfg), "--epochs", "2", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "config.json").read_text())["epochs"] == 2


def test_protocol_reports_are_byte_identical(cfg, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["protocol", "--all", "--config", str(cfg), "--seed", "5", "--out-dir", str(d)]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert {"protocol.json", "protocol.csv", "protocol_accuracy.png"} <= set(names)
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name
    data = json.loads((dirs[0] / "protocol.json").read_text())
    assert [r["condition"] for r in data["lgr"]] == ["z/z", "z/SO3", "SO3/SO3"]
    assert all(r["runtime_s"] is None for r in data["lgr"])


def test_protocol_timing(cfg, tmp_path):
    assert main(["protocol", "--condition", "z/z", "--config", str(cfg), "--timing",
                 "--out-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "protocol.json").read_text())
    assert data["lgr"][0]["runtime_s"] > 0


def test_ablate(cfg, tmp_path, capsys):
    assert main(["ablate", "fusion", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "ablation_fusion.csv").read_text().splitlines()) == 4
    assert (tmp_path / "ablation_fusion.png").exists()
    assert "attention" in capsys.readouterr().out


def test_ablate_unknown_suite(capsys):
    assert main(["ablate", "widths"]) == 2
