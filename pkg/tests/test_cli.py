import json

import numpy as np

from martidro import cli, objectives
from martidro.objectives import ObjectiveReport


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_verify_passes_and_reports_schema(tmp_path):
    status = cli.main(["verify", "--out", str(tmp_path), "--set", "instances=5"])
    assert status == 0
    header, rows = read_csv(tmp_path / "duality_report.csv")
    assert header == ["instance_id", "dual", "primal_lower", "closed_form", "gap"]
    assert len(rows) == 5
    for row in rows:
        assert float(row[4]) <= 5e-3
    config = json.loads((tmp_path / "run_config.json").read_text())
    assert config["command"] == "verify" and config["threads"] >= 1


def test_verify_detects_wrong_sign_tikhonov(tmp_path, monkeypatch):
    true_perturbed = objectives.perturbed_value

    def corrupted(beta, data, weight, cfg):
        report = true_perturbed(beta, data, weight, cfg)
        broken = report.empirical_loss - report.tikhonov_term + report.penalty_term
        return ObjectiveReport(report.empirical_loss, -report.tikhonov_term,
                               report.penalty_term, broken, report.regime)

    monkeypatch.setattr(objectives, "perturbed_value", corrupted)
    status = cli.main(["verify", "--out", str(tmp_path), "--set", "instances=5"])
    assert status == 1


def test_verify_rejects_large_instances(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path), "--set", "n_max=50"]) == 1


def test_train_regression_outputs_and_ridge_equivalence(tmp_path):
    status = cli.main([
        "train-regression", "--out", str(tmp_path), "--seed", "3",
        "--set", "epsilon=0", "--set", "n_iter=5000", "--set", "xi_grid=[0.0,0.3]",
    ])
    assert status == 0
    header, rows = read_csv(tmp_path / "betas.csv")
    assert header == ["method", "index", "value"]
    betas = {}
    for method, idx, value in rows:
        betas.setdefault(method, []).append(float(value))
    # with zero slack the robust fit is ridge
    assert np.linalg.norm(np.array(betas["martingale"]) - np.array(betas["ridge"])) <= 1e-4

    header, rows = read_csv(tmp_path / "rmse_vs_attack.csv")
    assert header == ["method", "xi", "rmse"]
    clean = {m: float(r) for m, x, r in rows if float(x) == 0.0}
    attacked = {m: float(r) for m, x, r in rows if float(x) == 0.3}
    for method in ("ols", "ridge", "martingale"):
        assert attacked[method] >= clean[method]


def test_train_regression_is_byte_deterministic(tmp_path):
    args = ["train-regression", "--seed", "1", "--set", "n_iter=300", "--set", "xi_grid=[0.0,0.2]"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    for name in ("betas.csv", "rmse_vs_attack.csv", "duality_report.csv"):
        f1, f2 = out1 / name, out2 / name
        if f1.exists():
            assert f1.read_bytes() == f2.read_bytes()


def test_train_mlp_is_byte_deterministic(tmp_path):
    args = ["train-mlp", "--seed", "4", "--set", "epochs=2", "--set", "n_train_raw=60"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    for name in ("trace.csv", "perturb_norms.csv", "boundary.csv", "model_martingale.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_train_mlp_outputs(tmp_path):
    status = cli.main([
        "train-mlp", "--out", str(tmp_path), "--set", "epochs=3", "--set", "n_train_raw=100",
    ])
    assert status == 0
    header, rows = read_csv(tmp_path / "perturb_norms.csv")
    assert header == ["model", "step", "norm"]
    mart_norms = [float(r[2]) for r in rows if r[0] == "martingale"]
    assert mart_norms and max(mart_norms) <= 1.0 + 1e-9
    header, rows = read_csv(tmp_path / "trace.csv")
    assert header == ["model", "epoch", "robust_loss"]
    assert {r[0] for r in rows} == {"erm", "dro", "martingale"}
    header, rows = read_csv(tmp_path / "boundary.csv")
    assert header == ["model", "x1", "x2", "pred"]
    for name in ("erm", "dro", "martingale"):
        assert (tmp_path / f"model_{name}.json").exists()


def test_erm_proxy_equals_plain_sgd_trace(tmp_path):
    import math

    from martidro.advtrain import Mlp
    from martidro.dataio import gen_two_ring

    assert cli.main([
        "train-mlp", "--out", str(tmp_path), "--seed", "2",
        "--set", "epochs=2", "--set", "n_train_raw=80", "--set", "batch_size=1",
    ]) == 0
    _, rows = read_csv(tmp_path / "trace.csv")
    erm_trace = [float(r[2]) for r in rows if r[0] == "erm"]

    cfg = json.loads((tmp_path / "run_config.json").read_text())
    data = gen_two_ring(80, 1.6, seed=2)
    classes, labels = np.unique(data.targets, return_inverse=True)
    net = Mlp((2, 4, 3, 2, 2), seed=102)
    step = 0
    expected = []
    for epoch in range(2):
        order = np.random.default_rng((2, epoch)).permutation(data.n_samples)
        vals = []
        for i in order:
            loss, gw, gb, _ = net.forward_backward(data.features[i : i + 1], labels[i : i + 1])
            vals.append(loss)
            t = cfg["step0"] / math.sqrt(step + 1.0)
            for l in range(len(net.weights)):
                net.weights[l] -= t * gw[l]
                net.biases[l] -= t * gb[l]
            step += 1
        expected.append(float(np.mean(vals)))
    assert np.allclose(erm_trace, expected, atol=1e-6)


def test_attack_eval_outputs(tmp_path):
    assert cli.main(["train-mlp", "--out", str(tmp_path), "--set", "epochs=2", "--set", "n_train_raw=80"]) == 0
    status = cli.main([
        "attack-eval", "--out", str(tmp_path), "--set", "n_test_raw=120",
        "--set", "xi_grid=[0.0,0.2]", "--set", "dro_gammas=[4.0]",
    ])
    assert status == 0
    header, rows = read_csv(tmp_path / "attack_results.csv")
    assert header == ["model", "attack", "xi", "metric"]
    # clean rows agree across attack kinds at xi=0
    for model in ("erm", "dro", "martingale"):
        clean = {r[1]: float(r[3]) for r in rows if r[0] == model and float(r[2]) == 0.0}
        assert clean["pgm"] == clean["fgsm"]


def test_sweep_emits_one_boundary_per_slack(tmp_path):
    status = cli.main([
        "sweep", "--out", str(tmp_path), "--set", "epochs=1", "--set", "n_train_raw=60",
        "--set", "epsilon_grid=[0.2,0.3,1.5]",
    ])
    assert status == 0
    for eps in ("0.2", "0.3", "1.5"):
        assert (tmp_path / f"boundary_eps_{eps}.csv").exists()


def test_svg_emission(tmp_path):
    assert cli.main([
        "train-regression", "--out", str(tmp_path), "--set", "n_iter=200",
        "--set", "xi_grid=[0.0,0.5]", "--set", "svg=true",
    ]) == 0
    svg = (tmp_path / "rmse_vs_attack.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 3


def test_weight_specs(tmp_path):
    # diagonal weighting as an inline list
    assert cli.main([
        "train-regression", "--out", str(tmp_path / "diag"), "--set", "n_iter=200",
        "--set", "xi_grid=[0.0]", "--set", f"weight={[1.0] * 13}",
    ]) == 0
    # weighting loaded from a CSV matrix file
    qpath = tmp_path / "q.csv"
    qpath.write_text("\n".join(",".join("1.0" if i == j else "0.0" for j in range(13)) for i in range(13)))
    assert cli.main([
        "train-regression", "--out", str(tmp_path / "file"), "--set", "n_iter=200",
        "--set", "xi_grid=[0.0]", "--set", f"weight={qpath}",
    ]) == 0
    a = (tmp_path / "diag" / "betas.csv").read_bytes()
    b = (tmp_path / "file" / "betas.csv").read_bytes()
    assert a == b  # both specs describe the identity weighting


def test_config_file_and_flag_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"instances": 3, "n_max": 4}))
    status = cli.main([
        "verify", "--config", str(cfg_path), "--out", str(tmp_path), "--set", "instances=2",
    ])
    assert status == 0
    _, rows = read_csv(tmp_path / "duality_report.csv")
    assert len(rows) == 2  # flag overrode the file value
    echoed = json.loads((tmp_path / "run_config.json").read_text())
    assert echoed["instances"] == 2 and echoed["n_max"] == 4


def test_toml_config(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text("instances = 2\nseed = 7\n")
    assert cli.main(["verify", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    echoed = json.loads((tmp_path / "run_config.json").read_text())
    assert echoed["instances"] == 2 and echoed["seed"] == 7


def test_unknown_config_key_rejected(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["verify", "--config", str(cfg_path), "--out", str(tmp_path)]) == 1


def test_threads_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("MARTI_DRO_THREADS", "2")
    assert cli.main(["verify", "--out", str(tmp_path), "--set", "instances=1"]) == 0
    assert json.loads((tmp_path / "run_config.json").read_text())["threads"] == 2
    monkeypatch.setenv("MARTI_DRO_THREADS", "zero")
    assert cli.main(["verify", "--out", str(tmp_path), "--set", "instances=1"]) == 1
