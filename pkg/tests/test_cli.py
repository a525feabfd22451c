import csv
import json

import pytest

from multicause.cli import main

MODEL = {
    "theta": {"mu1": 50, "mu2": 50, "sigma1": 15, "sigma2": 15, "rho": 0.6},
    "structure": "hierarchical",
    "causes": [
        {"code": 1, "priority": 1, "variant": "mcar", "params": {"p": 0.25}},
        {"code": 2, "priority": 2, "variant": "nmar_logistic_centered",
         "params": {"tau_a": 0.14285714285714285, "tau_b": 50}},
    ],
}


@pytest.fixture
def model_file(tmp_path):
    f = tmp_path / "model.json"
    f.write_text(json.dumps(MODEL))
    return f


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_dataset_and_latent(tmp_path, model_file):
    out, latent = tmp_path / "d.csv", tmp_path / "l.csv"
    assert main(["simulate", "--model-file", str(model_file), "--n", "50", "--seed", "1",
                 "--out", str(out), "--latent-out", str(latent)]) == 0
    rows, lrows = _rows(out), _rows(latent)
    assert len(rows) == len(lrows) == 50
    for r, lr in zip(rows, lrows):
        assert (r["y2"] == "") == (r["m2"] != "0")
        assert lr["y2_latent"] != ""
        if r["y2"]:
            assert r["y2"] == lr["y2_latent"]


def test_simulate_theta_file_overrides(tmp_path, model_file):
    theta = tmp_path / "theta.json"
    theta.write_text(json.dumps({"mu1": 0, "mu2": 0, "sigma1": 1, "sigma2": 1, "rho": 0}))
    out = tmp_path / "d.csv"
    assert main(["simulate", "--theta-file", str(theta), "--model-file", str(model_file),
                 "--n", "20", "--seed", "1", "--out", str(out)]) == 0
    assert all(abs(float(r["y1"])) < 10 for r in _rows(out))


def test_simulate_config_error_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"causes": [{"code": 1, "variant": "mcar", "params": {"q": 0.2}}]}))
    out = tmp_path / "d.csv"
    assert main(["simulate", "--model-file", str(bad), "--n", "5", "--seed", "1", "--out", str(out)]) == 1
    assert "causes[0].params.p" in capsys.readouterr().err
    assert not out.exists()


def test_simulate_write_failure(tmp_path, model_file):
    out = tmp_path / "nope" / "d.csv"
    assert main(["simulate", "--model-file", str(model_file), "--n", "5", "--seed", "1", "--out", str(out)]) == 2


@pytest.fixture
def data_file(tmp_path, model_file):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--model-file", str(model_file), "--n", "100", "--seed", "42", "--out", str(out)]) == 0
    return out


def test_fit_full_and_semi_direct_agree(tmp_path, model_file, data_file):
    outs = {}
    for kind in ("full", "semi-direct"):
        outs[kind] = tmp_path / f"{kind}.json"
        assert main(["fit", "--data", str(data_file), "--model-file", str(model_file),
                     "--likelihood", kind, "--out", str(outs[kind])]) == 0
    full, semi = (json.loads(outs[k].read_text()) for k in ("full", "semi-direct"))
    assert full["converged"] and semi["likelihood"] == "semi-direct"
    for name in ("mu1", "mu2", "sigma1", "sigma2", "rho"):
        assert full["theta"][name] == pytest.approx(semi["theta"][name], abs=1e-3)
    assert "p1" in full["estimates"] and "p1" not in semi["estimates"]


def test_fit_probe_reports_condition(tmp_path, model_file, data_file):
    out = tmp_path / "f.json"
    assert main(["fit", "--data", str(data_file), "--model-file", str(model_file),
                 "--likelihood", "direct", "--probe", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["hessian"]["eigenvalues"]) == 5
    assert doc["hessian"]["condition"] >= 1.0


def test_fit_incompatible_structure(tmp_path, data_file):
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps(dict(MODEL, structure="flat")))
    assert main(["fit", "--data", str(data_file), "--model-file", str(flat),
                 "--likelihood", "semi-direct", "--out", str(tmp_path / "f.json")]) == 3
    assert main(["fit", "--data", str(data_file), "--model-file", str(flat), "--unknown-causes",
                 "--likelihood", "semi-direct", "--out", str(tmp_path / "f.json")]) == 3


def test_fit_bad_likelihood_flag(tmp_path, model_file, data_file):
    assert main(["fit", "--data", str(data_file), "--model-file", str(model_file),
                 "--likelihood", "partial", "--out", str(tmp_path / "f.json")]) == 1


def test_fit_nonconvergence_still_writes(tmp_path, model_file, data_file, monkeypatch):
    import multicause.cli as cli
    from multicause.estimation import MaximizeOptions

    real = cli.FitOptions
    monkeypatch.setattr(cli, "FitOptions", lambda **kw: real(maximize=MaximizeOptions(max_iter_per_dim=2,
                                                                                       restarts=0), **kw))
    out = tmp_path / "f.json"
    assert main(["fit", "--data", str(data_file), "--model-file", str(model_file), "--out", str(out)]) == 4
    assert json.loads(out.read_text())["converged"] is False


def _fit_with_cause1(tmp_path, cause1):
    doc = {"structure": "hierarchical", "estimates": {"mu1": 0.0, "p1": 0.25},
           "causes": [dict({"code": 1, "priority": 1}, **cause1)]}
    f = tmp_path / "fit.json"
    f.write_text(json.dumps(doc))
    return f


def test_curves_mcar_constant(tmp_path):
    fit = _fit_with_cause1(tmp_path, {"variant": "mcar", "params": {"p": 0.25}})
    out = tmp_path / "c.csv"
    assert main(["curves", "--fit", str(fit), "--grid", "0:100:5", "--reference-p", "0.25", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [float(r["y1"]) for r in rows] == [0, 25, 50, 75, 100]
    assert all(float(r["p_cause1"]) == 0.25 and float(r["reference_p"]) == 0.25 for r in rows)


def test_curves_flat_affine_and_single_step(tmp_path):
    fit = _fit_with_cause1(tmp_path, {"variant": "mar_logistic_affine",
                                      "params": {"tau_a_prime": 0.0, "tau_b_prime": 1.0986122886681098}})
    out = tmp_path / "c.csv"
    assert main(["curves", "--fit", str(fit), "--grid", "10:20:1", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1 and float(rows[0]["y1"]) == 10.0
    assert float(rows[0]["p_cause1"]) == pytest.approx(0.25, abs=1e-15)


def test_curves_errors(tmp_path):
    fit = _fit_with_cause1(tmp_path, {"variant": "nmar_logistic_centered", "params": {"tau_a": 1, "tau_b": 0}})
    out = tmp_path / "c.csv"
    assert main(["curves", "--fit", str(fit), "--grid", "0:1:2", "--out", str(out)]) == 1
    good = _fit_with_cause1(tmp_path, {"variant": "mcar", "params": {"p": 0.25}})
    assert main(["curves", "--fit", str(good), "--grid", "0:1", "--out", str(out)]) == 1
    assert main(["curves", "--fit", str(good), "--grid", "0:1:0", "--out", str(out)]) == 1
    assert not out.exists()


@pytest.mark.parametrize("prop", ["1", "2", "3", "4", "pmar"])
def test_verify_expected_polarity(tmp_path, prop):
    out = tmp_path / "v.json"
    assert main(["verify", "--prop", prop, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["matches_expectation"]
    assert (doc["witness"] is not None) == (prop in ("2", "4"))


def test_verify_bad_flag():
    assert main(["verify", "--prop", "9"]) == 1


def test_verify_wrong_polarity(monkeypatch, tmp_path):
    import multicause.cli as cli
    from multicause.oracle import PropertyVerdict

    monkeypatch.setattr(cli, "check_proposition", lambda p: PropertyVerdict("3", False, {"x": 1}, 1.0))
    assert main(["verify", "--prop", "3", "--out", str(tmp_path / "v.json")]) == 5


def test_scenario_outputs(tmp_path):
    out = tmp_path / "s"
    assert main(["scenario", "--id", "i", "--reps", "1", "--seed", "5", "--arms", "known", "--out-dir", str(out)]) == 0
    rmse = _rows(out / "rmse.csv")
    assert list(rmse[0]) == ["arm", "mu1", "mu2", "sigma1", "sigma2", "rho", "tau1a_prime", "tau1b_prime", "p",
                             "tau2a", "tau2b"]
    assert rmse[0]["arm"] == "known" and rmse[0]["p"] == "x" and rmse[0]["tau1a_prime"] == "x"
    est = {r["parameter"]: float(r["estimate"]) for r in _rows(out / "estimates.csv")}
    assert float(rmse[0]["mu1"]) == pytest.approx(abs(est["mu1"] - 50.0))
    assert _rows(out / "boxplot.csv")[0].keys() == {"arm", "parameter", "rep", "estimate"}
    assert json.loads((out / "summary.json").read_text())["scenario"] == "i"


@pytest.mark.parametrize("argv", [
    ["scenario", "--id", "iv", "--out-dir", "x"],
    ["scenario", "--id", "i", "--reps", "0", "--out-dir", "x"],
    ["scenario", "--id", "i", "--arms", "both", "--out-dir", "x"],
    ["simulate"],
    [],
])
def test_bad_flags_exit_1(argv):
    assert main(argv) == 1
