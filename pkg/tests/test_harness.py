import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc import Box, ConvergenceError, Kernel, ValidationError
from lrperc.electro import grid_network, network_to_csv
from lrperc.harness import cli
from lrperc.harness.config import OUTPUT_ENV, load_spec, output_dir, spec_from_dict
from lrperc.harness.recipes import Bundle, RECIPES
from lrperc.harness.runner import make_pool, run_experiment
from lrperc.harness.threshold import (AT_MIN, coupled_densities, estimate_threshold,
                                      supercritical_beta, threshold_to_csv)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SPEC = """
experiment = "exp-normal1"
replicas = 3
seed = 11
output = "out"

[kernel]
d = 1
s = 1.5
beta = 2.0

[params]
Ns = [16]
"""


def test_load_spec(tmp_path):
    spec = load_spec(write(tmp_path, "a.toml", SPEC))
    assert spec.experiment == "exp-normal1" and spec.replicas == 3 and spec.seed == 11
    assert spec.kernel == Kernel(1, 1.5, 2.0)
    assert spec.params == {"Ns": [16]}
    moved = spec_from_dict({**spec.to_dict(), "output": "elsewhere", "workers": 4})
    assert moved.digest() == spec.digest()
    assert spec_from_dict({**spec.to_dict(), "seed": 12}).digest() != spec.digest()


def test_table_kernel_forms():
    for rows in ([[1, 0.5], [2, 0.25]], [[[1], 0.5], [[2], 0.25]]):
        spec = spec_from_dict({"experiment": "exp-criti",
                               "kernel": {"form": "table", "d": 1, "s": 2.0, "beta": 1.0,
                                          "table": rows}})
        assert float(spec.kernel.prob(np.array([[2]]))[0]) == 0.25


@pytest.mark.parametrize("data", [
    {"experiment": "exp-normal1", "colour": 1},
    {"replicas": 2},
    {"experiment": "exp-normal1", "replicas": -1},
    {"experiment": "exp-normal1", "kernel": {"d": 1, "s": 1.5}},
    {"experiment": "exp-normal1", "kernel": {"d": 1, "s": 0.5, "beta": 1.0}},
    {"experiment": "exp-normal1", "kernel": {"form": "power", "d": 1, "s": 1.5, "beta": 1.0}},
])
def test_spec_errors(data):
    with pytest.raises(ValidationError):
        spec_from_dict(data)


def test_bad_toml(tmp_path):
    with pytest.raises(ValidationError):
        load_spec(write(tmp_path, "bad.toml", "experiment = \n"))


def test_unknown_experiment_and_params():
    with pytest.raises(ValidationError):
        run_experiment(spec_from_dict({"experiment": "exp-nothing"}), write=False)
    with pytest.raises(ValidationError):
        run_experiment(spec_from_dict({"experiment": "exp-criti", "params": {"epsilon": 1}}),
                       write=False)


def test_output_override(tmp_path, monkeypatch):
    spec = spec_from_dict({"experiment": "exp-normal1", "output": "x"})
    assert output_dir(spec) == "x"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert output_dir(spec) == str(tmp_path)
    assert output_dir(spec, "y") == "y"


def test_zero_replicas_valid_manifest(tmp_path):
    spec = spec_from_dict({"experiment": "exp-normal1", "replicas": 0})
    bundle, manifest = run_experiment(spec, out=str(tmp_path))
    assert bundle.tables["normal1.csv"] == "N,threshold,fraction,stderr,replicas\n"
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == json.loads(json.dumps(manifest))
    assert on_disk["complete"] and on_disk["replicas"] == 0
    assert on_disk["spec_hash"] == spec.digest()
    assert set(on_disk["files"]) == {"normal1.csv", "summary.json"}
    assert on_disk["seed_algorithm"] == "philox-blake2b-v1"


def test_flow_energy_deterministic(tmp_path):
    spec = spec_from_dict({"experiment": "exp-flow-energy", "params": {"Ls": [1, 2]}})
    run_experiment(spec, out=str(tmp_path / "a"))
    run_experiment(spec, out=str(tmp_path / "b"))
    for name in ("flow_energy.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "flow_energy.csv").read_text().splitlines()
    assert rows[0] == "schedule,L,q,energy,recursion_bound,n_edges,nonzero_residuals"
    assert all(r.endswith(",0") for r in rows[1:])


def test_connectprob_frequencies_exceed_bound():
    spec = spec_from_dict({"experiment": "exp-connectprob", "replicas": 2000, "seed": 1})
    bundle, _ = run_experiment(spec, write=False)
    lines = bundle.tables["connectprob.csv"].splitlines()
    assert lines[0] == "l,size,capped,frequency,stderr,exact_mean,bound"
    for line in lines[1:]:
        _, _, _, freq, _, _, bound = line.split(",")
        assert float(freq) >= float(bound)


def flaky_job(i):
    if i == 1:
        raise ConvergenceError("stuck", iterations=5, residual=1.0)
    return i * i


def test_pool_records_failures():
    b = Bundle()
    assert make_pool(1)(flaky_job, [(0,), (1,), (2,)], b) == [0, None, 4]
    assert b.failures[0]["index"] == 1 and "ConvergenceError" in b.failures[0]["error"]


def test_workers_do_not_change_results():
    base = {"experiment": "exp-criti", "replicas": 4, "seed": 3,
            "kernel": {"d": 1, "s": 1.5, "beta": 1.0}, "params": {"N": 64}}
    one, _ = run_experiment(spec_from_dict(base), write=False)
    two, _ = run_experiment(spec_from_dict({**base, "workers": 2}), write=False)
    assert one.tables == two.tables


def test_stderr_shrinks_with_replicas():
    se = {}
    for reps in (25, 100):
        spec = spec_from_dict({"experiment": "exp-criti", "replicas": reps, "seed": 2,
                               "params": {"N": 64, "eps": [0.0]}})
        bundle, _ = run_experiment(spec, write=False)
        se[reps] = float(bundle.tables["criti.csv"].splitlines()[1].split(",")[2])
    assert 1.4 < se[25] / se[100] < 2.8


def test_every_recipe_listed():
    assert len(RECIPES) == 10
    assert all(name.startswith("exp-") for name in RECIPES)


# -- threshold estimator --------------------------------------------------------------

def eta_family(beta):
    return Kernel(1, 1.5, beta)


def test_threshold_saturated_family():
    sat = Kernel(1, 1.5, 1.0, {(1,): 0.999999, (2,): 0.999999})
    est = estimate_threshold(lambda b: sat, [0.1, 0.2, 0.3], (32, 64), 4, 0)
    assert est.status == AT_MIN and est.beta_c == 0.1


def test_threshold_errors():
    with pytest.raises(ValidationError):
        estimate_threshold(eta_family, [0.3, 0.2], (32, 64), 2, 0)
    with pytest.raises(ValidationError):
        estimate_threshold(eta_family, [0.2, 0.3], (64, 32), 2, 0)


@settings(max_examples=15)
@given(st.integers(0, 10**6))
def test_coupled_densities_monotone(seed):
    betas = np.linspace(0.05, 1.5, 12)
    dens = coupled_densities(eta_family, betas, Box(1, 128), seed)
    assert np.all(np.diff(dens) >= 0)


def test_threshold_stable_when_box_doubles():
    betas = np.linspace(0.1, 0.8, 15)
    small = estimate_threshold(eta_family, betas, (64, 256), 40, 1)
    big = estimate_threshold(eta_family, betas, (128, 512), 40, 1)
    print(f"beta_c {small.beta_c:.3f} [{small.lo:.3f}, {small.hi:.3f}] -> "
          f"{big.beta_c:.3f} [{big.lo:.3f}, {big.hi:.3f}]")
    assert small.status == big.status == "ok"
    assert big.lo <= small.hi and small.lo <= big.hi
    assert supercritical_beta(big) > big.beta_c
    assert threshold_to_csv(big).splitlines()[0] == \
        "beta,density_N128,stderr_N128,density_N512,stderr_N512"


# -- command line -----------------------------------------------------------------------

def test_cli_pipeline(tmp_path, capsys):
    cfg = str(tmp_path / "cfg.csv")
    assert cli.main(["sample", "--d", "1", "--N", "64", "--s", "1.5", "--beta", "1.0",
                     "--seed", "3", "--out", cfg]) == 0
    blob = str(tmp_path / "cfg.bin")
    assert cli.main(["sample", "--d", "2", "--N", "16", "--s", "3", "--beta", "1.0",
                     "--binary", "--centered", "--out", blob]) == 0
    assert cli.main(["clusters", cfg]) == 0
    assert capsys.readouterr().out.startswith("root,size\n")
    assert cli.main(["clusters", blob, "--M", "4", "--threshold", "2"]) == 0
    capsys.readouterr()
    assert cli.main(["renorm", cfg, "--M", "8", "--threshold", "3"]) == 0
    assert capsys.readouterr().out.strip()
    assert cli.main(["flow", "--C", "2,2"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["edges"] == 6 and rec["flow_edges"] == 3 and rec["nonzero_residuals"] == 0
    assert rec["energy"]["2.0"] == pytest.approx(3.0)


def test_cli_resist_and_walk(tmp_path, capsys):
    net = write(tmp_path, "net.csv", network_to_csv(grid_network(5, 1)))
    assert cli.main(["resist", net, "--source", "0", "--sink", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["resistance"] == pytest.approx(4.0)
    assert cli.main(["walk", net, "--start", "2", "--boundary", "0,4", "--replicas", "400",
                     "--check"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["identity"] == pytest.approx(0.5)
    assert abs(rec["estimate"] - 0.5) <= 3 * rec["stderr"]
    split = write(tmp_path, "split.csv", "# vertices=4\nu,v,conductance\n0,1,1.0\n2,3,1.0\n")
    assert cli.main(["resist", split, "--source", "0", "--sink", "3"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["resistance"] is None and rec["disconnected"]


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["sample", "--N", "8", "--s", "0.5", "--beta", "1"]) == 2
    assert cli.main(["resist", str(tmp_path / "missing.csv"), "--source", "0", "--sink", "1"]) == 2
    assert cli.main(["experiment", "run", write(tmp_path, "x.toml", "experiment = 'nope'\n")]) == 2
    net = write(tmp_path, "grid.csv", network_to_csv(grid_network(12, 2)))
    assert cli.main(["resist", net, "--source", "0", "--sink", "143", "--tol", "1e-300"]) == 3
    err = capsys.readouterr().err
    assert "error:" in err and "not converged" in err


def test_cli_experiment(tmp_path, capsys):
    assert cli.main(["experiment", "list"]) == 0
    listed = capsys.readouterr().out.splitlines()
    assert [ln.split("\t")[0] for ln in listed] == sorted(RECIPES)
    spec = write(tmp_path, "s.toml", SPEC)
    assert cli.main(["experiment", "run", spec, "--output", str(tmp_path / "res")]) == 0
    assert json.loads(capsys.readouterr().out)["complete"] is True
    assert sorted(os.listdir(tmp_path / "res")) == ["manifest.json", "normal1.csv", "summary.json"]
