"""Command line entry point.

    sevenleague gen-data --samples 100000 --labels exact --out train.csv
    sevenleague train --data train.csv --out model.json
    sevenleague simulate --scheme 7l --model model.json --dt 0.5 --paths 10000 --out paths.csv
    sevenleague convergence --schemes euler,7l --dts 0.125,0.25,0.5,1,2 --out conv.csv
    sevenleague bench --paths 1000,50000 --backend pool:4 --out bench.csv

Settings come from built-in defaults, then ``--config FILE`` (JSON), then
explicit flags. Exit status: 0 ok, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("sevenleague")

DEFAULTS = {
    "model": {"ybar": 0.0, "lambda": 1.0, "sigma": 0.5, "y0": 1.0},
    "sim": {"T": 2.0, "n_steps": 4, "n_paths": 10_000, "scheme": "7l", "seed": 0, "m": 5},
    "backend": {"kind": "seq", "workers": None},
    "train": {"epochs": 200, "batch_size": 1024, "lr": 1e-3, "seed": 0, "data": None, "out": "model.json"},
    "data": {"samples": 100_000, "inner_paths": 100_000, "fine_dt": 1e-3, "labels": "euler", "seed": 0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sevenleague", description="Large time step Monte Carlo with learned collocation points")
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def model_flags(sp):
        sp.add_argument("--ybar", type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--y0", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--m", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--backend", help="seq | pool | pool:K")
        sp.add_argument("--model", type=Path, help="trained network file; default is the exact OU predictor")

    g = sub.add_parser("gen-data", help="generate an offline training set")
    g.add_argument("--samples", type=int)
    g.add_argument("--inner-paths", type=int)
    g.add_argument("--fine-dt", type=float)
    g.add_argument("--labels", choices=["euler", "exact"])
    g.add_argument("--m", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path)

    t = sub.add_parser("train", help="train the collocation network")
    t.add_argument("--data", type=Path)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", type=Path)
    t.add_argument("--history", type=Path, help="write the per-epoch loss history as CSV")

    s = sub.add_parser("simulate", help="simulate paths")
    model_flags(s)
    s.add_argument("--scheme", choices=["7l", "7l-cdc", "euler", "exact"])
    s.add_argument("--dt", type=float)
    s.add_argument("--paths", type=int)
    s.add_argument("--out", type=Path)

    c = sub.add_parser("convergence", help="strong/weak error against the exact OU solution over dt")
    model_flags(c)
    c.add_argument("--dts", type=_floats, default=[0.125, 0.25, 0.5, 1.0, 2.0])
    c.add_argument("--schemes", type=_names, default=["euler", "7l", "7l-cdc"])
    c.add_argument("--paths", type=int)
    c.add_argument("--out", type=Path)

    b = sub.add_parser("bench", help="sequential vs parallel timings")
    model_flags(b)
    b.add_argument("--paths", type=_ints, default=[1000, 50_000])
    b.add_argument("--schemes", type=_names, default=["7l", "7l-cdc"])
    b.add_argument("--steps", type=int)
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--out", type=Path)
    return p


def load_config(path: Path | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    for section, values in user.items():
        if section not in cfg or not isinstance(values, dict):
            raise UsageError(f"unknown config section {section!r}")
        unknown = set(values) - set(cfg[section])
        if unknown:
            raise UsageError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
        cfg[section].update(values)
    return cfg


def _override(cfg: dict, section: str, key: str, value) -> None:
    if value is not None:
        cfg[section][key] = value


def _apply_model_flags(cfg, args):
    for key, attr in (("ybar", "ybar"), ("lambda", "lam"), ("sigma", "sigma"), ("y0", "y0")):
        _override(cfg, "model", key, getattr(args, attr, None))
    _override(cfg, "sim", "T", getattr(args, "T", None))
    _override(cfg, "sim", "m", getattr(args, "m", None))
    _override(cfg, "sim", "seed", getattr(args, "seed", None))
    backend = getattr(args, "backend", None)
    if backend is not None:
        kind, _, workers = backend.partition(":")
        cfg["backend"] = {"kind": kind, "workers": int(workers) if workers else None}


def _backend(cfg):
    from .runtime import parse_backend

    b = cfg["backend"]
    spec = b["kind"] if b.get("workers") is None else f"{b['kind']}:{b['workers']}"
    try:
        return parse_backend(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _theta(cfg):
    from .models import ModelParams

    mc = cfg["model"]
    try:
        return ModelParams(float(mc["ybar"]), float(mc["lambda"]), float(mc["sigma"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _predictor(args, cfg):
    from .collocation import gauss_hermite_grid
    from .scheme import AnnPredictor, ExactOuPredictor

    path = getattr(args, "model", None)
    if path is None:
        return ExactOuPredictor(gauss_hermite_grid(int(cfg["sim"]["m"])))
    from .ann import load_model

    mlp, norm = load_model(path)
    return AnnPredictor(mlp, norm, gauss_hermite_grid(mlp.n_outputs))


def _open_out(path: Path | None):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_gen_data(args, cfg) -> int:
    from .collocation import gauss_hermite_grid
    from .simulate import generate_training_set

    d = cfg["data"]
    for key, attr in (("samples", "samples"), ("inner_paths", "inner_paths"), ("fine_dt", "fine_dt"),
                      ("labels", "labels"), ("seed", "seed")):
        _override(cfg, "data", key, getattr(args, attr))
    _override(cfg, "sim", "m", args.m)
    if args.out is None:
        raise UsageError("gen-data: missing required flag --out")
    ts = generate_training_set(int(d["samples"]), gauss_hermite_grid(int(cfg["sim"]["m"])),
                               inner_paths=int(d["inner_paths"]), fine_dt=float(d["fine_dt"]),
                               seed=int(d["seed"]), labels=d["labels"])
    sidecar = ts.save(args.out)
    print(f"wrote {len(ts)} rows to {args.out} (metadata {sidecar})")
    return 0


def cmd_train(args, cfg) -> int:
    from .ann import TrainConfig, save_model, train
    from .simulate import TrainingSet

    for key, attr in (("data", "data"), ("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"),
                      ("seed", "seed"), ("out", "out")):
        _override(cfg, "train", key, getattr(args, attr))
    tc = cfg["train"]
    if not tc.get("data"):
        raise UsageError("train: missing required flag --data (training set CSV)")
    data_path = Path(tc["data"])
    if not data_path.exists():
        raise UsageError(f"train: --data file not found: {data_path}")
    ts = TrainingSet.load(data_path)
    config = TrainConfig(epochs=int(tc["epochs"]), batch_size=int(tc["batch_size"]), lr=float(tc["lr"]),
                         seed=int(tc["seed"]))
    result = train(ts, config)
    save_model(result.mlp, result.normalization, tc["out"], adam=result.adam, training_config=config)
    if args.history:
        np.savetxt(args.history, np.array(result.history), delimiter=",", fmt="%.17g",
                   header="epoch,train_mse,val_mse,best_val_mse", comments="")
    print(f"trained {len(result.history)} epochs, best validation mse {result.best_val_mse:.3e}; "
          f"model written to {tc['out']}")
    return 0


def cmd_simulate(args, cfg) -> int:
    from .harness import steps_for_dt
    from .models import ou_model
    from .scheme import SchemeConfig, run_scheme

    _apply_model_flags(cfg, args)
    _override(cfg, "sim", "scheme", args.scheme)
    _override(cfg, "sim", "n_paths", args.paths)
    sim = cfg["sim"]
    T = float(sim["T"])
    try:
        n_steps = steps_for_dt(T, args.dt) if args.dt is not None else int(sim["n_steps"])
        scfg = SchemeConfig(T=T, n_steps=n_steps, n_paths=int(sim["n_paths"]), m=int(sim["m"]),
                            seed=int(sim["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    theta = _theta(cfg)
    paths = run_scheme(sim["scheme"], ou_model(float(cfg["model"]["y0"])), theta, scfg,
                       _predictor(args, cfg), _backend(cfg))
    if args.out:
        paths.to_csv(args.out)
    term = paths.values[:, -1]
    print(f"{paths.scheme}: {paths.n_paths} paths, {paths.n_steps} steps of {paths.dt:g}; "
          f"terminal mean {term.mean():.6f} std {term.std(ddof=1) if term.size > 1 else 0.0:.6f}")
    if paths.stats:
        print("stats: " + ", ".join(f"{k}={v}" for k, v in paths.stats.items() if k != "predictor_rows_per_step"))
    return 0


def cmd_convergence(args, cfg) -> int:
    from .harness import convergence_study, write_error_csv

    _apply_model_flags(cfg, args)
    _override(cfg, "sim", "n_paths", args.paths)
    sim = cfg["sim"]
    try:
        reports = convergence_study(args.dts, args.schemes, _theta(cfg), y0=float(cfg["model"]["y0"]),
                                    T=float(sim["T"]), n_paths=int(sim["n_paths"]), seed=int(sim["seed"]),
                                    predictor=_predictor(args, cfg), backend=_backend(cfg), m=int(sim["m"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fh = _open_out(args.out)
    try:
        write_error_csv(reports, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_bench(args, cfg) -> int:
    from .harness import speedup_bench
    from .runtime import PoolBackend

    _apply_model_flags(cfg, args)
    sim = cfg["sim"]
    backend = _backend(cfg) if args.backend or cfg["backend"]["kind"] != "seq" else PoolBackend()
    report = speedup_bench(args.paths, args.schemes, _theta(cfg), backend=backend, repeats=args.repeats,
                           seed=int(sim["seed"]), y0=float(cfg["model"]["y0"]), T=float(sim["T"]),
                           n_steps=args.steps or int(sim["n_steps"]), predictor=_predictor(args, cfg),
                           m=int(sim["m"]))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            report.write_csv(fh)
        print(report.format_table())
    else:
        report.write_csv(sys.stdout)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "bench": cmd_bench,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
