import json

import pytest

from covspectra.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, EXIT_USAGE, resolve_config, run


def _csv_body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# {")
    return lines[1:]


def test_edges_phi_4(tmp_path, capsys):
    assert run(["edges", "--phi", "4", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "o_scale [1, 9]" in text and "rescaled [0.5, 4.5]" in text
    doc = json.loads((tmp_path / "edges.json").read_text())
    assert doc["config"]["phi"] == 4
    [c] = doc["components"]
    assert c["o_scale"] == pytest.approx([1.0, 9.0], abs=1e-9)
    assert c["rescaled"] == pytest.approx([0.5, 4.5], abs=1e-9)
    assert doc["zero_mass"] == pytest.approx(0.75)


def test_solve_outputs_transforms(tmp_path):
    assert run(["solve", "--z", "1,0.5", "--out", str(tmp_path)]) == EXIT_OK
    [sol] = json.loads((tmp_path / "solve.json").read_text())["solutions"]
    assert sol["residual"] < 1e-10


def test_density_csv(tmp_path):
    assert run(["density", "--phi", "1", "--grid", "0.5,3.5,7", "--out", str(tmp_path)]) == EXIT_OK
    body = _csv_body(tmp_path / "density.csv")
    assert body[0] == "E,rho" and len(body) == 8


def test_usage_errors(tmp_path, capsys):
    assert run(["edges", "--bogus"]) == EXIT_USAGE
    assert run(["nope"]) == EXIT_USAGE
    assert run(["simulate", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "requires --seed" in capsys.readouterr().err


def test_runtime_error_exit(tmp_path):
    assert run(["edges", "--spectrum", '{"atoms": [[1, 0]]}', "--out", str(tmp_path)]) == EXIT_ERROR


def test_failed_check_exit(tmp_path, capsys):
    # 20 atoms cannot get within 0.02 in Kolmogorov distance
    code = run(["check-global", "--M", "400", "--N", "20", "--seed", "1", "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"phi": 4.0, "spectrum": "identity"}))
    cfg = resolve_config("edges", {"config": str(cfg_path)})
    assert cfg["phi"] == 4.0
    cfg = resolve_config("edges", {"config": str(cfg_path), "phi": 2.0})
    assert cfg["phi"] == 2.0
    cfg_path.write_text(json.dumps({"phii": 4.0}))
    assert run(["edges", "--config", str(cfg_path), "--out", str(tmp_path)]) == EXIT_USAGE


def test_simulate_writes_replicas(tmp_path):
    args = ["simulate", "--M", "30", "--N", "20", "--replicas", "2", "--seed", "7", "--out", str(tmp_path)]
    assert run(args) == EXIT_OK
    body = _csv_body(tmp_path / "eigenvalues_0001.csv")
    assert body[0] == "lambda" and len(body) == 21


def test_spikes_estimate_from_file(tmp_path):
    sim = ["simulate", "--M", "300", "--N", "300", "--seed", "3", "--out", str(tmp_path)]
    spec = '{"spikes": [[4, 1]], "M": 300}'
    assert run(sim + ["--spectrum", spec]) == EXIT_OK
    code = run(
        ["spikes-estimate", "--eigenvalues", str(tmp_path / "eigenvalues_0000.csv"), "--method", "gap", "--out", str(tmp_path)]
    )
    assert code == EXIT_OK
    body = _csv_body(tmp_path / "spike_estimates.csv")
    assert body[0].startswith("ell,alpha_true,alpha_hat_B")
    assert abs(float(body[1].split(",")[2]) - 4.0) < 1.0


def test_spikes_rate_deterministic(tmp_path):
    outs = []
    for name, threads in (("a", "1"), ("b", "2")):
        out = tmp_path / name
        args = ["spikes-rate", "--N", "50,100,200", "--replicas", "4", "--seed", "11", "--threads", threads]
        run(args + ["--out", str(out)])
        outs.append(_csv_body(out / "spikes_rate.csv"))
    assert outs[0] == outs[1]
    assert outs[0][0] == "probe,empirical_median,envelope,pass"


@pytest.mark.slow
def test_reproduce_figure(tmp_path):
    assert run(["reproduce-figure", "--seed", "1", "--bins", "20", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("figure_a_M400_N40000.csv", "figure_b_M400_N400.csv", "figure_c_M40000_N400.csv"):
        body = _csv_body(tmp_path / name)
        assert body[0] == "bin_lo,bin_hi,count,density" and len(body) == 21
