import csv
import json
import subprocess
import sys

import pytest

from mflab import cli
from mflab.report import emit_plot_script


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("MFLAB_OUTDIR", str(tmp_path))
    return tmp_path


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def report(outdir, name):
    return json.loads((outdir / f"{name}.json").read_text())


def test_landscape_report(outdir, capsys):
    code, out, _ = run(["landscape", "--set", "model.beta=1.5"], capsys)
    assert code == 0 and f"seed: {cli.DEFAULT_SEED}" in out
    r = report(outdir, "landscape")
    assert r["schema"] == "v1" and r["subcommand"] == "landscape"
    assert r["result"]["two_k"] == 4
    assert r["result"]["m"] == pytest.approx(0.0, abs=1e-12)
    assert r["result"]["lambda"] == pytest.approx(2.7, abs=1e-6)
    assert r["config"]["model.beta"] == 1.5 and "system.alpha" in r["config"]


def test_critical_beta_report(outdir, capsys):
    assert run(["critical-beta", "--set", "model.J=1"], capsys)[0] == 0
    assert report(outdir, "critical-beta")["result"]["beta_c"] == pytest.approx(1.5, abs=1e-8)


def test_walk_dist_csv(outdir, capsys):
    assert run(["walk-dist", "--set", "run.n=2", "--set", "system.kind=constant-field",
                "--set", "system.field=constant:0.5"], capsys)[0] == 0
    rows = list(csv.reader(open(outdir / "walk-dist_distribution.csv")))
    assert rows[0] == ["k", "log_prob", "prob"]
    assert [(int(k), float(p)) for k, _, p in rows[1:]] == [(-2, 0.25), (0, 0.5), (2, 0.25)]


def test_config_file_and_overrides(outdir, tmp_path, capsys):
    conf = tmp_path / "exp.conf"
    conf.write_text("# torus example\nsystem.kind = torus-rotation\nsystem.alpha=0.6180339887\n"
                    "model.beta = 1.0\nrun.n_grid = 200, 400\n")
    assert run(["walk-mdp", "--config", str(conf), "--set", "run.t=0.5"], capsys)[0] == 0
    r = report(outdir, "walk-mdp")
    assert r["config"]["run.n_grid"] == [200, 400] and r["config"]["run.t"] == 0.5
    assert r["result"]["a"] == pytest.approx(2 / 3, abs=1e-6)
    assert set(r["result"]["verdict"]) == {"target", "grid", "r", "err", "trend", "window"}


def test_validation_lists_every_key(outdir, capsys):
    code, _, err = run(["walk-dist", "--set", "model.beta=-1", "--set", "run.n=0",
                        "--set", "colour=blue", "--set", "system.field=square"], capsys)
    assert code == 2
    e = json.loads(err)["error"]
    assert e["type"] == "config"
    assert set(e["keys"]) == {"model.beta", "run.n", "colour", "system.field"}


def test_alpha_checked_after_classification(outdir, capsys):
    code, _, err = run(["verify-mdp", "--set", "model.beta=1.5", "--set", "run.alpha=0.7"], capsys)
    assert code == 2 and "run.alpha" in json.loads(err)["error"]["keys"]


def test_numerical_errors_pass_through(outdir, capsys):
    code, _, err = run(["critical-beta", "--set", "system.kind=constant-field",
                        "--set", "system.field=constant:0.3"], capsys)
    assert code == 1
    e = json.loads(err)["error"]
    assert e["type"] == "UnsupportedBranchError" and e["subcommand"] == "critical-beta"


def test_byte_identical_outputs(tmp_path, monkeypatch, capsys):
    outputs = []
    for name in ("a", "b"):
        monkeypatch.setenv("MFLAB_OUTDIR", str(tmp_path / name))
        assert run(["magnetization-dist", "--set", "run.n=12", "--set", "run.samples=500"], capsys)[0] == 0
        outputs.append(((tmp_path / name / "magnetization-dist.json").read_bytes(),
                        (tmp_path / name / "magnetization-dist_distribution.csv").read_bytes()))
    assert outputs[0] == outputs[1]
    monkeypatch.setenv("MFLAB_OUTDIR", str(tmp_path / "c"))
    run(["magnetization-dist", "--set", "run.n=12", "--set", "run.samples=500", "--set", "run.seed=7"], capsys)
    other = json.loads((tmp_path / "c" / "magnetization-dist.json").read_text())
    assert other["seed"] == 7
    assert other["result"]["sample_mean_magnetization"] != \
        json.loads(outputs[0][0])["result"]["sample_mean_magnetization"]


@pytest.mark.parametrize("args", [
    ["verify-mdp", "--set", "run.n_grid=200,400", "--set", "run.alpha=0.75"],
    ["scaling-check", "--set", "model.beta=1.5", "--set", "run.alpha=0.8", "--set", "run.n_grid=1000,10000"],
    ["hs-check", "--set", "run.n=8"],
    ["clt-density", "--set", "model.beta=1.5"],
])
def test_other_subcommands(outdir, capsys, args):
    assert run(args, capsys)[0] == 0
    r = report(outdir, args[0])
    for name in r["tables"].values():
        assert (outdir / name).exists()
    if args[0] == "hs-check":
        assert r["result"]["max_abs_error"] <= 1e-8
    if args[0] == "clt-density":
        assert r["result"]["total_mass"] == pytest.approx(1.0, abs=1e-8)


def test_plot_scripts(outdir, capsys):
    run(["landscape", "--set", "model.beta=1.5"], capsys)
    run(["walk-mdp", "--set", "run.n_grid=100,200"], capsys)
    run(["scaling-check", "--set", "model.beta=1.5", "--set", "run.alpha=0.8", "--set", "run.n_grid=100,1000"],
        capsys)
    land = emit_plot_script(outdir / "landscape.json").read_text()
    assert "G(s)" in land and "ax.set_xlim(-1, 1)" in land
    verdict = emit_plot_script(outdir / "walk-mdp.json").read_text()
    assert "axhline" in verdict and "r_n" in verdict
    scaling = emit_plot_script(outdir / "scaling-check.json").read_text()
    assert "loglog" in scaling
    for text in (land, verdict, scaling):
        compile(text, "plot", "exec")
    # scripts are written, never run: no image appears
    assert not list(outdir.glob("*.png"))


def test_plot_script_rejects_unknown_schema(tmp_path, capsys):
    bad = tmp_path / "r.json"
    bad.write_text(json.dumps({"schema": "v0", "subcommand": "landscape"}))
    code, _, err = run(["plot-script", str(bad)], capsys)
    assert code == 2 and "schema" in json.loads(err)["error"]["message"]


def test_console_entry_point(tmp_path):
    env = {"MFLAB_OUTDIR": str(tmp_path), "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "mflab", "critical-beta"], capture_output=True, text=True,
                          env=env)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "critical-beta.json").exists()
