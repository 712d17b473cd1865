import csv
import json
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from seifertvp import plugctl as pc
from seifertvp.denjoyvp import TAU


def cfg(tmp_path, **kw):
    return replace(pc.SuiteConfig(out=str(tmp_path), grid="20x10x4"), **kw)


def test_diophantine_suite_passes(tmp_path):
    code, report = pc.run_suite(cfg(tmp_path, suite="diophantine"))
    assert code == pc.EXIT_OK and report["passed"]
    names = [c["name"] for c in report["suites"]["diophantine"]["checks"]]
    assert any("fib" in n for n in names)
    assert (tmp_path / "report_diophantine.json").exists()


def test_report_embeds_version_and_config(tmp_path):
    _, report = pc.run_suite(cfg(tmp_path, suite="profiles"))
    assert report["version"] == pc.__version__
    assert report["config"]["suite"] == "profiles" and report["config"]["seed"] == 0


@pytest.mark.parametrize("suite", ["pl", "bordism"])
def test_same_seed_gives_identical_bytes(tmp_path, suite):
    path = tmp_path / f"report_{suite}.json"
    pc.run_suite(cfg(tmp_path, suite=suite, seed=7))
    first = path.read_bytes()
    pc.run_suite(cfg(tmp_path, suite=suite, seed=7))
    assert path.read_bytes() == first


def test_report_keys_are_sorted(tmp_path):
    pc.run_suite(cfg(tmp_path, suite="profiles"))
    text = (tmp_path / "report_profiles.json").read_text(encoding="utf-8")
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert text == pc.report_json(data)


def test_zero_cv_fails_with_witness(tmp_path):
    code, report = pc.run_suite(cfg(tmp_path, suite="vpfields", cv=0.0))
    assert code == pc.EXIT_FAIL
    (check,) = report["suites"]["vpfields"]["checks"]
    assert not check["passed"] and check["detail"]["witness"] is not None
    assert json.loads((tmp_path / "report_vpfields.json").read_text())["passed"] is False


def test_calibrated_vpfields_pass(tmp_path):
    code, report = pc.run_suite(cfg(tmp_path, suite="vpfields"))
    assert code == pc.EXIT_OK
    assert report["suites"]["vpfields"]["checks"][0]["name"] == "calibration"


# -- exit codes through main ---------------------------------------------------------------


def test_main_unknown_suite_is_usage_error(tmp_path):
    assert pc.main(["--suite", "nope", "--out", str(tmp_path)]) == pc.EXIT_USAGE


def test_main_bad_grid_is_usage_error(tmp_path):
    assert pc.main(["--suite", "profiles", "--grid", "ten", "--out", str(tmp_path)]) == pc.EXIT_USAGE


def test_main_negative_tol_is_usage_error(tmp_path):
    assert pc.main(["--suite", "profiles", "--tol", "-1", "--out", str(tmp_path)]) == pc.EXIT_USAGE


def test_main_help_exits_zero(capsys):
    assert pc.main(["--help"]) == pc.EXIT_OK
    assert "--suite" in capsys.readouterr().out


def test_main_pass_and_fail_codes(tmp_path, capsys):
    assert pc.main(["--suite", "diophantine", "--out", str(tmp_path)]) == pc.EXIT_OK
    assert pc.main(["--suite", "vpfields", "--cv", "0", "--grid", "20x10x4",
                    "--out", str(tmp_path)]) == pc.EXIT_FAIL
    out = capsys.readouterr().out
    assert "PASS  diophantine." in out and "FAIL  vpfields.vz_exceeds_abs_hz" in out


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert pc.main(["--suite", "profiles", "--out", str(blocker / "sub")]) == pc.EXIT_IO
    assert pc.main(["--emit", "contours", "--out", str(blocker / "sub")]) == pc.EXIT_IO


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"suite": "pl", "seed": 3, "out": str(tmp_path / "o")}))
    ns = pc._parser().parse_args(["--config", str(conf), "--seed", "5"])
    c = pc.config_from_args(ns)
    assert (c.suite, c.seed, c.out) == ("pl", 5, str(tmp_path / "o"))


def test_config_file_unknown_key(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"suite": "pl", "colour": "red"}))
    assert pc.main(["--config", str(conf)]) == pc.EXIT_USAGE
    conf.write_text("{not json")
    assert pc.main(["--config", str(conf)]) == pc.EXIT_USAGE
    assert pc.main(["--config", str(tmp_path / "missing.json")]) == pc.EXIT_IO


def test_unknown_artifact_kind(tmp_path):
    assert pc.emit_artifacts("hologram", cfg(tmp_path))[0] == pc.EXIT_USAGE


# -- artifacts ------------------------------------------------------------------------------------


def test_contours_csv_has_header_and_singular_level(tmp_path):
    code, (path,) = pc.emit_artifacts("contours", cfg(tmp_path, format="csv"), {"n": 201})
    assert code == pc.EXIT_OK
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    assert len(header) >= 3 and body
    lvl = header.index("level")
    zero = [r for r in body if float(r[lvl]) == 0.0]
    assert zero


def test_contours_json_level_zero_is_circle(tmp_path):
    _, (path,) = pc.emit_artifacts("contours", cfg(tmp_path, format="json"), {"n": 201})
    data = json.loads(open(path).read())
    zero = [k for k in data if float(k) == 0.0]
    assert zero
    # the r = 2 contour, drawn in the (r, z) half-plane
    pts = np.concatenate([np.asarray(line) for line in data[zero[0]]])
    assert np.allclose(pts[:, 0], 2.0, atol=1e-2)


def test_contours_svg_is_plain_polylines(tmp_path):
    _, (path,) = pc.emit_artifacts("contours", cfg(tmp_path, format="svg"), {"n": 101})
    root = ET.parse(path).getroot()
    assert root.get("version") == "1.1"
    polys = [el for el in root.iter() if el.tag.endswith("polyline")]
    assert polys and all(el.get("points") for el in polys)


def test_trajectory_ends_on_top(tmp_path):
    code, (path,) = pc.emit_artifacts("trajectory", cfg(tmp_path, format="csv"))
    assert code == pc.EXIT_OK
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:4] == ["t", "r", "theta", "z"]
    last = dict(zip(header, map(float, rows[-1])))
    assert abs(last["z"] - 1.0) < 1e-6
    # floats carry 17 significant digits
    assert any(len(v.lstrip("-").replace(".", "").lstrip("0")) >= 16 for v in rows[2])


def test_denjoy_orbit_rotation(tmp_path):
    code, (path,) = pc.emit_artifacts("denjoy_orbit", cfg(tmp_path), {"iterations": 10_000})
    data = json.loads(open(path).read())
    assert code == pc.EXIT_OK
    assert abs(data["rotation_estimate"] - (TAU - 1)) < 1e-3
    assert data["target"] == pytest.approx(0.6180339887498949)


def test_denjoy_orbit_seeded(tmp_path):
    a = pc.emit_artifacts("denjoy_orbit", cfg(tmp_path / "a", seed=4), {"iterations": 1000})[1][0]
    b = pc.emit_artifacts("denjoy_orbit", cfg(tmp_path / "b", seed=4), {"iterations": 1000})[1][0]
    c = pc.emit_artifacts("denjoy_orbit", cfg(tmp_path / "c", seed=5), {"iterations": 1000})[1][0]
    assert open(a, "rb").read() == open(b, "rb").read() != open(c, "rb").read()


def test_bad_artifact_params_are_usage_errors(tmp_path):
    assert pc.emit_artifacts("denjoy_orbit", cfg(tmp_path), {"iterations": 10})[0] == pc.EXIT_USAGE


def test_calibration_artifact(tmp_path):
    code, (path,) = pc.emit_artifacts("calibration", cfg(tmp_path), {"stability": False})
    data = json.loads(open(path).read())
    assert code == pc.EXIT_OK
    assert data["C_v"] > data["C_min"] > 0


def test_grid_flag_order_matches_gridspec():
    g = pc.SuiteConfig(grid="30x7x4").grid_spec()
    assert (g.n_theta, g.n_z, g.n_phi) == (30, 7, 4)
