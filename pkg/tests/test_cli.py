import json

from gridsim.cli import bundled_recipes, main


def test_bundled_recipes_present():
    assert {"fig3_network", "fig4_compute", "fig5_hybrid", "selfheal_demo"} <= set(bundled_recipes())


def test_validate_recipe_ok(capsys):
    assert main(["validate", "--config", "fig3_network"]) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_bad_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"platform": {"node_count": 5}, "workload": {}, "policies": ["ncda"],
                               "seeds": [0], "checkpoint": {"W": 2.5}, "erasure": {"k": 3, "n": 2}}))
    assert main(["validate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "convergence domain" in err and "ErasureParams" in err


def test_malformed_json_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  oops\n}")
    assert main(["validate", "--config", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_config_exit_1(capsys):
    assert main(["validate", "--config", "no_such_recipe"]) == 1


def test_run_and_compare(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["run", "--config", "fig5_hybrid", "--out", str(out), "--nodes", "20", "--jobs", "30",
               "--seeds", "0-1", "--policy", "ncda,rr", "--traces"])
    assert rc == 0
    assert (out / "jobs.csv").exists() and len(list((out / "traces").iterdir())) == 4
    plot = tmp_path / "plot.csv"
    assert main(["compare", str(out / "summary.json"), "--out", str(plot)]) == 0
    assert "ncda" in capsys.readouterr().out
    assert plot.read_text().startswith("workload_class,")


def test_run_unwritable_output_exit_2(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["run", "--config", "fig3_network", "--out", str(blocker / "x"), "--jobs", "1"]) == 2
