"""Command-line entry point: experiments with CSV outputs.

Subcommands
-----------
train-regression
    Fit least squares, ridge, and the robust linear model on a regression
    dataset, then sweep a gradient attack over the test split and record the
    adversarial RMSE of each fit.
train-mlp
    Adversarially train the small network on two-ring data (an ERM proxy, a
    large-slack variant, and the capped-slack model) and emit traces,
    checkpoints, decision-boundary samples, and per-step perturbation norms.
attack-eval
    Evaluate stored checkpoints on fresh test data under the three attacks.
verify
    Numerically certify duality on a seeded grid of small instances; exits
    nonzero if any gap exceeds its tolerance.
sweep
    Train the capped-slack model across a slack grid and emit one boundary
    file per value.

Every command reads an optional JSON/TOML config (flags override file
values), echoes the effective configuration to ``run_config.json`` in the
output directory, and is deterministic given the config and seed.  The
``MARTI_DRO_THREADS`` environment variable caps internal worker counts (the
current implementation is single-threaded vectorized numpy, so it is
validated and recorded only).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import objectives
from .advtrain import Mlp, TrainConfig, train
from .attacks import AttackConfig, adversarial_rmse, dro_attack, mlp_oracle, pgm_attack
from .core import Dataset, QuadraticLoss, RobustnessConfig, encode_regression, regression_beta, regression_coef
from .dataio import SplitSpec, gen_two_ring, parse_libsvm, split_dataset, standardize
from .dual import verify_duality
from .errors import MartiDroError
from .mnorm import WeightMatrix
from .solver import ols_solution, ridge_solution, solve


def _read_config(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text.decode())


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _effective_config(defaults: dict, args) -> dict:
    cfg = dict(defaults)
    if args.config:
        file_cfg = _read_config(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise MartiDroError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or key not in defaults:
            raise MartiDroError(f"bad override {item!r} (known keys: {sorted(defaults)})")
        cfg[key] = _coerce(value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    threads = os.environ.get("MARTI_DRO_THREADS")
    if threads is not None:
        if not threads.isdigit() or int(threads) < 1:
            raise MartiDroError(f"MARTI_DRO_THREADS must be a positive integer, got {threads!r}")
        cfg["threads"] = int(threads)
    else:
        cfg.setdefault("threads", 1)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: dict, out: Path, command: str):
    payload = {"command": command, **cfg}
    (out / "run_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header: list[str], rows: list[tuple]):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


_SVG_COLORS = ("#1f77b4", "#2ca02c", "#ff7f0e", "#d62728", "#9467bd")


def _write_line_chart(path: Path, series: dict, xlabel: str, ylabel: str):
    """Minimal SVG polyline chart, one series per dict entry."""
    width, height, pad = 480, 320, 45
    xs = sorted({x for pts in series.values() for x, _ in pts})
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs) or 1.0
    y_lo, y_hi = min(ys), max(ys)
    y_hi = y_hi if y_hi > y_lo else y_lo + 1.0

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo or 1.0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" text-anchor="middle">{ylabel}</text>',
    ]
    for i, (name, pts) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        path_d = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{path_d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _load_regression(cfg) -> Dataset:
    source = cfg["data"]
    if source == "bundled":
        text = resources.files("martidro").joinpath("data/housing_synth.libsvm").read_text()
    else:
        text = Path(source).read_text()
    return parse_libsvm(text)


def _feature_weight(cfg, d: int) -> np.ndarray:
    spec = cfg["weight"]
    if spec == "identity":
        return np.eye(d)
    if isinstance(spec, list):
        return np.diag(np.asarray(spec, dtype=float))
    return np.loadtxt(spec, delimiter=",", ndmin=2)


# -- train-regression --------------------------------------------------------

REGRESSION_DEFAULTS = {
    "data": "bundled",
    "rho": 0.08,
    "epsilon": None,  # resolved to 0.5*sqrt(n_train*rho) when absent
    "gamma": 2.0,
    "weight": "identity",
    "train_fraction": 0.6,
    "xi_grid": [0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
    "attack_alpha": 1.0,
    "n_iter": 5000,
    "standardize": False,
    "svg": False,
    "seed": 0,
}


def cmd_train_regression(cfg: dict, out: Path) -> int:
    full = _load_regression(cfg)
    train_ds, test_ds = split_dataset(full, SplitSpec(cfg["train_fraction"], seed=cfg["seed"]))
    if cfg["standardize"]:
        train_ds, test_ds, _ = standardize(train_ds, test_ds)
    z, y = train_ds.features, train_ds.targets
    n, d = z.shape
    q = _feature_weight(cfg, d)
    rho = float(cfg["rho"])
    epsilon = cfg["epsilon"]
    if epsilon is None:
        epsilon = 0.5 * math.sqrt(n * rho)
    cfg["epsilon"] = float(epsilon)

    fits = {"ols": ols_solution(z, y), "ridge": ridge_solution(z, y, rho, q=q)}
    data = encode_regression(z, y)
    weight = WeightMatrix.regression(q)
    rob = RobustnessConfig(rho, float(epsilon), QuadraticLoss(cfg["gamma"]))
    trace = solve(data, weight, rob, regression_beta(fits["ols"]), iters=int(cfg["n_iter"]))
    fits["martingale"] = regression_coef(trace.best_beta)

    beta_rows = [(m, j, float(c)) for m in ("ols", "ridge", "martingale") for j, c in enumerate(fits[m])]
    _write_rows(out / "betas.csv", ["method", "index", "value"], beta_rows)

    rmse_rows = []
    for method in ("ols", "ridge", "martingale"):
        for xi in cfg["xi_grid"]:
            attack = AttackConfig(kind="pgm", xi=float(xi), alpha=float(cfg["attack_alpha"]))
            rmse_rows.append((method, float(xi), adversarial_rmse(fits[method], test_ds, attack)))
    _write_rows(out / "rmse_vs_attack.csv", ["method", "xi", "rmse"], rmse_rows)
    if cfg["svg"]:
        series = {}
        for method, xi, rmse in rmse_rows:
            series.setdefault(method, []).append((xi, rmse))
        _write_line_chart(out / "rmse_vs_attack.svg", series, "attack budget", "RMSE")
    print(f"train-regression: n_train={n} d={d} epsilon={cfg['epsilon']:.4f} -> {out}")
    return 0


# -- verify ------------------------------------------------------------------

VERIFY_DEFAULTS = {
    "instances": 50,
    "n_max": 5,
    "d_max": 3,
    "rho_range": [0.01, 1.0],
    "eps_factors": [0.0, 2.0],  # epsilon drawn in (0, 2*sqrt(rho))
    "gap_tol": 5e-3,
    "closed_tol": 1e-6,
    "seed": 0,
}


def cmd_verify(cfg: dict, out: Path) -> int:
    if cfg["n_max"] > 10 or cfg["d_max"] > 4:
        raise MartiDroError("verify is restricted to small instances (n_max <= 10, d_max <= 4)")
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    failures = []
    for idx in range(int(cfg["instances"])):
        n = int(rng.integers(2, cfg["n_max"] + 1))
        d = int(rng.integers(1, cfg["d_max"] + 1))
        data = Dataset(rng.normal(0, 1, (n, d)))
        beta = rng.normal(0, 1, d)
        weight = WeightMatrix.identity(d)
        rho = float(rng.uniform(*cfg["rho_range"]))
        lo, hi = cfg["eps_factors"]
        eps = float(rng.uniform(max(lo, 1e-3), hi)) * math.sqrt(rho)
        rob = RobustnessConfig(rho, eps, QuadraticLoss(2.0))
        report = verify_duality(beta, data, weight, rob)
        closed = objectives.perturbed_value(beta, data, weight, rob).total
        closed_err = abs(report.dual_value - closed) / max(1.0, abs(closed))
        rows.append((idx, report.dual_value, report.primal_lower, closed, report.rel_gap))
        if report.rel_gap > cfg["gap_tol"] or closed_err > cfg["closed_tol"]:
            failures.append((idx, report.rel_gap, closed_err))
    _write_rows(out / "duality_report.csv", ["instance_id", "dual", "primal_lower", "closed_form", "gap"], rows)
    if failures:
        for idx, gap, cerr in failures:
            print(f"FAIL instance {idx}: rel_gap={gap:.3e} closed_form_err={cerr:.3e}", file=sys.stderr)
        return 1
    print(f"verify: {len(rows)} instances within tolerances -> {out}")
    return 0


# -- train-mlp ----------------------------------------------------------------

MLP_DEFAULTS = {
    "n_train_raw": 300,
    "eta_train": 1.6,
    "epsilon": 1.0,
    "lam": 2.0,
    "dro_epsilon": 8.0,  # large-slack proxy for the uncapped model
    "erm_epsilon": 1e-9,
    "erm_lam": 1e6,
    "hidden": [4, 3, 2],
    "epochs": 50,
    "inner_steps": 15,
    "inner_lr": 0.5,
    "step0": 0.2,
    "batch_size": 8,
    "boundary_range": 3.0,
    "boundary_steps": 61,
    "seed": 0,
}


def _boundary_rows(model_name, net, classes, extent, steps):
    grid = np.linspace(-extent, extent, int(steps))
    xx, yy = np.meshgrid(grid, grid)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    preds = classes[net.predict(pts)]
    return [(model_name, float(p[0]), float(p[1]), float(label)) for p, label in zip(pts, preds)]


def _mlp_variants(cfg):
    return {
        "erm": (cfg["erm_epsilon"], cfg["erm_lam"]),
        "dro": (cfg["dro_epsilon"], cfg["lam"]),
        "martingale": (cfg["epsilon"], cfg["lam"]),
    }


def _train_variant(train_ds, weight, cfg, eps, lam):
    tc = TrainConfig(
        epsilon=float(eps), lam=float(lam), inner_steps=int(cfg["inner_steps"]),
        inner_lr=float(cfg["inner_lr"]), epochs=int(cfg["epochs"]), step0=float(cfg["step0"]),
        batch_size=int(cfg["batch_size"]), seed=int(cfg["seed"]),
    )
    sizes = (2, *[int(h) for h in cfg["hidden"]], 2)
    net = Mlp(sizes, seed=100 + int(cfg["seed"]))
    return train(net, train_ds, weight, tc)


def cmd_train_mlp(cfg: dict, out: Path) -> int:
    train_ds = gen_two_ring(int(cfg["n_train_raw"]), float(cfg["eta_train"]), seed=cfg["seed"])
    weight = WeightMatrix.identity(2)
    classes = np.unique(train_ds.targets)
    trace_rows, norm_rows, boundary_rows = [], [], []
    for name, (eps, lam) in _mlp_variants(cfg).items():
        net, trace = _train_variant(train_ds, weight, cfg, eps, lam)
        net.save(out / f"model_{name}.json")
        trace_rows += [(name, e, v) for e, v in enumerate(trace.epoch_robust_loss)]
        norm_rows += [(name, s, v) for s, v in enumerate(trace.delta_norms)]
        boundary_rows += _boundary_rows(name, net, classes, cfg["boundary_range"], cfg["boundary_steps"])
        if name == "martingale" and max(trace.delta_norms) > float(cfg["epsilon"]) + 1e-9:
            raise MartiDroError("perturbation cap violated during training")
    _write_rows(out / "trace.csv", ["model", "epoch", "robust_loss"], trace_rows)
    _write_rows(out / "perturb_norms.csv", ["model", "step", "norm"], norm_rows)
    _write_rows(out / "boundary.csv", ["model", "x1", "x2", "pred"], boundary_rows)
    print(f"train-mlp: {train_ds.n_samples} training points, 3 models -> {out}")
    return 0


# -- attack-eval ---------------------------------------------------------------

ATTACK_DEFAULTS = {
    "checkpoints": "auto",  # directory containing model_*.json, or {name: path}
    "n_test_raw": 600,
    "eta_test": 1.2,
    "xi_grid": [0.0, 0.1, 0.2, 0.4],
    "dro_gammas": [8.0, 4.0, 2.0],
    "seed": 0,
}


def _find_checkpoints(cfg, out: Path) -> dict:
    spec = cfg["checkpoints"]
    if isinstance(spec, dict):
        return {name: Path(path) for name, path in spec.items()}
    root = out if spec == "auto" else Path(spec)
    found = {p.stem.removeprefix("model_"): p for p in sorted(root.glob("model_*.json"))}
    if not found:
        raise MartiDroError(f"no model_*.json checkpoints under {root}")
    return found


def cmd_attack_eval(cfg: dict, out: Path) -> int:
    test_ds = gen_two_ring(int(cfg["n_test_raw"]), float(cfg["eta_test"]), seed=1000 + int(cfg["seed"]))
    classes = np.unique(test_ds.targets)
    rows = []
    for name, path in _find_checkpoints(cfg, out).items():
        net = Mlp.load(path)
        oracle = mlp_oracle(net, classes=classes)

        def accuracy(z):
            return float(np.mean(classes[net.predict(z)] == test_ds.targets))

        for xi in cfg["xi_grid"]:
            for kind in ("pgm", "fgsm"):
                attack = AttackConfig(kind=kind, xi=float(xi))
                z = test_ds.features if xi == 0 else pgm_attack(oracle, test_ds.features, test_ds.targets, attack)
                rows.append((name, kind, float(xi), accuracy(z)))
        for gamma in cfg["dro_gammas"]:
            attack = AttackConfig(kind="dro", gamma=float(gamma))
            z = dro_attack(oracle, test_ds.features, test_ds.targets, attack)
            rows.append((name, "dro", float(gamma), accuracy(z)))
    _write_rows(out / "attack_results.csv", ["model", "attack", "xi", "metric"], rows)
    print(f"attack-eval: {len(rows)} rows -> {out}")
    return 0


# -- sweep ---------------------------------------------------------------------

SWEEP_DEFAULTS = {
    **{k: v for k, v in MLP_DEFAULTS.items()},
    "epsilon_grid": [round(0.2 + 0.1 * i, 1) for i in range(14)],  # 0.2 .. 1.5
}


def cmd_sweep(cfg: dict, out: Path) -> int:
    train_ds = gen_two_ring(int(cfg["n_train_raw"]), float(cfg["eta_train"]), seed=cfg["seed"])
    weight = WeightMatrix.identity(2)
    classes = np.unique(train_ds.targets)
    summary = []
    for eps in cfg["epsilon_grid"]:
        net, trace = _train_variant(train_ds, weight, cfg, eps, cfg["lam"])
        rows = _boundary_rows("martingale", net, classes, cfg["boundary_range"], cfg["boundary_steps"])
        _write_rows(out / f"boundary_eps_{eps:.1f}.csv", ["model", "x1", "x2", "pred"], rows)
        summary.append((float(eps), trace.epoch_robust_loss[-1], max(trace.delta_norms)))
    _write_rows(out / "sweep_summary.csv", ["epsilon", "final_robust_loss", "max_delta_norm"], summary)
    print(f"sweep: {len(summary)} slack values -> {out}")
    return 0


# -- entry point ----------------------------------------------------------------

_COMMANDS = {
    "train-regression": (REGRESSION_DEFAULTS, cmd_train_regression),
    "verify": (VERIFY_DEFAULTS, cmd_verify),
    "train-mlp": (MLP_DEFAULTS, cmd_train_mlp),
    "attack-eval": (ATTACK_DEFAULTS, cmd_attack_eval),
    "sweep": (SWEEP_DEFAULTS, cmd_sweep),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="marti-dro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory (default: cwd)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (JSON-parsed value)")
    args = parser.parse_args(argv)
    defaults, runner = _COMMANDS[args.command]
    try:
        cfg = _effective_config(defaults, args)
        out = _outdir(args)
        status = runner(cfg, out)
        _echo_config(cfg, out, args.command)
        return status
    except MartiDroError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
