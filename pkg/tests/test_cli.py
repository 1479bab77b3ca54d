import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from righthand import cli
from righthand.errors import (MalformedConfig, OutOfRangeParameter, ResolutionTooLarge,
                              StepUnderflow, UnknownKey)
from righthand.geometry import read_curve


def _main(capsys, argv):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _strip(record):
    record = dict(record)
    record.pop("wall_time")
    return record


@pytest.fixture(scope="module")
def curve_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("curves")
    status, record = cli.run(cli.make_plan({"cmd": "fibers", "out_dir": str(d), "n": 512}))
    assert status == 0 and len(record["result"]["files"]) == 8
    return d


def test_parse_config_examples():
    plan = cli.parse_config('{"cmd":"lkomega","field":"hopf","method":"direct",'
                            '"orbit_seed":[1,0,0,0],"nodes":128}')
    assert plan.cmd == "lkomega" and plan.params["nodes"] == 128
    with pytest.raises(MalformedConfig):
        cli.parse_config('{"field": "hopf"}')
    with pytest.raises(OutOfRangeParameter):
        cli.parse_config('{"cmd":"ulam","res":[8,8,8],"tau":5.0,"spc":16,"seed":7}')


def test_parse_config_errors():
    with pytest.raises(MalformedConfig, match="line 2, column 17"):
        cli.parse_config('{"cmd": "ulam",\n "res": [8, 8, 8}')
    with pytest.raises(UnknownKey, match="horizn"):
        cli.parse_config('{"cmd": "flowlink", "horizn": 40}')
    with pytest.raises(MalformedConfig):
        cli.parse_config('{"cmd": "nope"}')
    with pytest.raises(MalformedConfig):
        cli.parse_config('{"cmd": "link"}')
    with pytest.raises(ResolutionTooLarge):
        cli.parse_config('{"cmd": "ulam", "res": [100, 100, 100]}')
    with pytest.raises(OutOfRangeParameter):
        cli.parse_config('{"cmd": "flowlink", "delta": 2.5}')
    with pytest.raises(OutOfRangeParameter):
        cli.parse_config('{"cmd": "lkomega", "method": "kernel", "S": 0}')


def test_plan_echoes_defaults():
    plan = cli.make_plan({"cmd": "certify", "field": "antihopf"})
    inputs = plan.inputs()
    assert inputs["orbits"] == 3 and inputs["volume_samples"] == 4096
    assert cli.make_plan(inputs).params == plan.params


def test_link_fibers(capsys, curve_dir):
    code, out, _ = _main(capsys, ["link", "--curve", str(curve_dir / "hopf_fiber_a.xyz"),
                                  "--curve", str(curve_dir / "hopf_fiber_b.xyz")])
    record = json.loads(out)
    assert code == 0 and record["status"] == 0
    res = record["result"]
    assert abs(res["value"] - 1) < 1e-3 and res["integer"] == 1 and res["crossing"] == 1
    assert res["method"] == "gauss_integral" and res["stderr"] >= 0


@pytest.mark.parametrize("prefix, expected", [("antihopf_fiber", -1), ("torus_2_4", 2),
                                              ("hopf_link", 1)])
def test_link_templates(capsys, curve_dir, prefix, expected):
    code, out, _ = _main(capsys, ["link", "--method", "cross",
                                  "--curve", str(curve_dir / f"{prefix}_a.xyz"),
                                  "--curve", str(curve_dir / f"{prefix}_b.xyz")])
    res = json.loads(out)["result"]
    assert code == 0 and abs(res["integer"]) == abs(expected)
    if prefix == "antihopf_fiber":
        assert res["integer"] == -1


def test_fiber_files_are_on_the_sphere(curve_dir):
    c = read_curve(curve_dir / "hopf_fiber_a.xyz")
    assert c.closed and np.allclose(np.linalg.norm(c.vertices, axis=1), 1, atol=1e-12)


def test_kernel_s_zero_exit_2(capsys):
    code, out, err = _main(capsys, ["lkomega", "--field", "hopf", "--method", "kernel", "--S", "0"])
    assert code == 2 and out == ""
    assert json.loads(err)["error"]["type"] == "OutOfRangeParameter"


def test_missing_curve_file_exit_2(capsys, tmp_path):
    code, out, err = _main(capsys, ["link", "--curve", str(tmp_path / "a.xyz"),
                                    "--curve", str(tmp_path / "b.xyz")])
    assert code == 2 and json.loads(out)["error"]["type"] == "FileNotFoundError"
    assert "FileNotFoundError" in err


def test_numerical_failure_exit_3(monkeypatch):
    def boom(p, plan):
        raise StepUnderflow("forced")
    monkeypatch.setitem(cli.RUNNERS, "reconstruct", boom)
    status, record = cli.run(cli.make_plan({"cmd": "reconstruct"}))
    assert status == 3 and record["error"]["type"] == "StepUnderflow"


def test_certify_verdicts(capsys):
    for field, verdict in (("hopf", "certified_positive"), ("antihopf", "certified_negative")):
        code, out, _ = _main(capsys, ["certify", "--field", field, "--orbits", "3",
                                      "--volume-samples", "1024"])
        assert code == 0 and json.loads(out)["result"]["verdict"] == verdict


def test_determinism_and_self_description(capsys):
    argv = ["lkomega", "--field", "conformal:f=default", "--measure", "volume",
            "--n-samples", "2000", "--seed", "11"]
    _, first, _ = _main(capsys, argv)
    _, second, _ = _main(capsys, argv)
    a, b = json.loads(first), json.loads(second)
    assert cli.dump_record(_strip(a)) == cli.dump_record(_strip(b))
    assert a["version"] and a["inputs"]["seed"] == 11
    status, again = cli.run(cli.make_plan(a["inputs"]))
    assert status == 0 and _strip(json.loads(cli.dump_record(again))) == _strip(a)


def test_reconstruct_conformal(capsys):
    code, out, _ = _main(capsys, ["reconstruct", "--field", "conformal:f=default",
                                  "--samples", "200"])
    res = json.loads(out)["result"]
    assert code == 0 and res["nu_defect"] < 1e-8 and res["omega_defect"] < 1e-8
    assert res["max_angle_to_hopf"] < 1e-6


def test_ulam_then_lpmin(capsys, tmp_path):
    chain = tmp_path / "chain.json"
    code, out, _ = _main(capsys, ["ulam", "--field", "hopf", "--res", "6,6,6", "--chain", str(chain)])
    assert code == 0 and json.loads(out)["result"]["n_cells"] == 216
    code, out, _ = _main(capsys, ["lpmin", "--chain", str(chain)])
    res = json.loads(out)["result"]
    assert code == 0 and res["value"] > 0 and res["feasibility_residual"] <= 1e-7


def test_flowlink_sweep_csv_and_cache(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("RIGHTHAND_CACHE", str(tmp_path / "cache"))
    out_csv = tmp_path / "sweep.csv"
    code, out, _ = _main(capsys, ["flowlink", "--field", "hopf", "--p", "1,0.2,0.3,0.1",
                                  "--q", "0.1,0.3,1,0.2", "--horizon", "31.5,63",
                                  "--csv", str(out_csv), "--output", str(tmp_path / "r.json")])
    assert code == 0 and out == ""
    record = json.loads((tmp_path / "r.json").read_text())
    assert len(record["result"]["sweep"]) == 2
    assert abs(record["result"]["value"] - 1 / (4 * np.pi**2)) < 0.1 / (4 * np.pi**2)
    with open(out_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["horizon"]) for r in rows] == [31.5, 63.0]
    assert len(list((tmp_path / "cache").iterdir())) == 4


def test_run_config_from_stdin():
    config = json.dumps({"cmd": "lkomega", "field": "antihopf", "nodes": 64})
    proc = subprocess.run([sys.executable, "-m", "righthand.cli", "run", "--config", "-"],
                          input=config, capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["value"] == pytest.approx(-1 / (4 * np.pi**2))


def test_run_bad_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"cmd": "ulam", "res": [8, 8, 8], "tau": 5.0}')
    proc = subprocess.run([sys.executable, "-m", "righthand.cli", "run", "--config", str(bad)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 2 and "OutOfRangeParameter" in proc.stderr
