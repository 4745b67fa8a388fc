"""Command-line front end.

Every command reads optional settings from a TOML file (``--config``): a
``[global]`` table plus one table per command.  Command-line flags override
file values; unknown keys are rejected.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import network, sampling, trainer
from .errors import ConfigError, FormatError, NumericalError
from .io import atomic_write_text
from .loading import BUILTIN_PATHS, LoadPath
from .materials import make_reference_materials
from .oracle import FFTOracle, LaminateOracle, PixelMicrostructure, UniformOracle
from .oracle import micro as micro_mod
from .online import OnlineSolver
from .rng import subseed

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("dmnet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "DMN_THREADS"

GLOBAL_DEFAULTS = {"seed": 0, "out_dir": ".", "threads": None, "deterministic": False, "verbose": False}

DEFAULTS = {
    "micro": {"kind": "inclusion", "n": 64, "vf1": 0.3, "periods": 1, "vertical": True, "cells": 2, "correlation": 4.0, "out": "micro.json"},
    "generate": {"oracle": "laminate", "f1": 0.5, "theta": 0.0, "micro": None, "train": 200, "valid": 100, "prefix": ""},
    "train": {
        "train_data": "train.jsonl",
        "valid_data": "valid.jsonl",
        "depth": 5,
        "epochs": 10000,
        "batch": 20,
        "realizations": 1,
        "eta0": 0.05,
        "lam": None,
        "compress": True,
        "target_error": None,
        "resume": None,
        "out": "network.json",
    },
    "eval": {"checkpoint": "network.json", "data": None, "high_contrast": None, "f1": 0.5, "theta": 0.0, "bins": 20, "out": "eval.json"},
    "simulate": {
        "checkpoint": "network.json",
        "phase1": "p1-hard",
        "phase2": "p2-plastic",
        "path": "uniaxial-tension",
        "path_file": None,
        "steps": None,
        "to": None,
        "out": "response.csv",
    },
    "treemap": {"checkpoint": "network.json", "out": "treemap.svg"},
    "bench": {
        "checkpoints": None,
        "depths": [3, 4, 5, 6, 7],
        "nets": 3,
        "repeats": 1,
        "phase1": "p1-hard",
        "phase2": "p2-plastic",
        "steps": 25,
        "to": 0.01,
        "out": "bench.json",
    },
}


# ---------------------------------------------------------------- configuration


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    allowed = {"global"} | set(DEFAULTS)
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"{path}: unknown section(s) {sorted(extra)}")
    return doc


def _merge(defaults: dict, section: dict, flags: dict, where: str) -> dict:
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    out = dict(defaults)
    out.update(section)
    out.update({k: v for k, v in flags.items() if k in defaults and v is not None})
    return out


def resolve_config(args) -> tuple[dict, dict]:
    """``(global_settings, command_settings)`` from defaults, file and flags."""
    doc = _read_config(args.config)
    flags = vars(args)
    glob = _merge(GLOBAL_DEFAULTS, doc.get("global", {}), flags, "global")
    if glob["threads"] is None:
        env = os.environ.get(THREADS_ENV)
        try:
            glob["threads"] = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if int(glob["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    cmd = _merge(DEFAULTS[args.command], doc.get(args.command, {}), flags, args.command)
    return glob, cmd


def _out(glob, name) -> Path:
    p = Path(name)
    return p if p.is_absolute() else Path(glob["out_dir"]) / p


def _need_file(path, what):
    if path is None:
        raise ConfigError(f"{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


def _materials(cmd):
    reg = make_reference_materials()
    laws = {}
    for phase, key in ((1, "phase1"), (2, "phase2")):
        name = cmd[key]
        if name not in reg:
            raise ConfigError(f"unknown material {name!r}; choose from {sorted(reg)}")
        laws[phase] = reg[name]
    return laws


# ---------------------------------------------------------------- commands


def cmd_micro(glob, cmd):
    kind = cmd["kind"]
    gen = micro_mod.GENERATORS.get(kind)
    if gen is None:
        raise ConfigError(f"unknown microstructure kind {kind!r}; choose from {sorted(micro_mod.GENERATORS)}")
    n = int(cmd["n"])
    if kind == "uniform":
        m = gen(n)
    elif kind == "laminate":
        m = gen(n, float(cmd["vf1"]), int(cmd["periods"]), bool(cmd["vertical"]))
    elif kind == "checkerboard":
        m = gen(n, int(cmd["cells"]))
    elif kind == "random-blob":
        m = gen(n, float(cmd["vf1"]), float(cmd["correlation"]), subseed(glob["seed"], "micro"))
    else:
        m = gen(n, float(cmd["vf1"]))
    path = _out(glob, cmd["out"])
    m.save(path)
    print(f"wrote {path}: {m.label} n={m.n} vf1={m.vf1:.6f}")
    return EXIT_OK


def _make_oracle(cmd):
    kind = cmd["oracle"]
    if kind == "uniform":
        return UniformOracle()
    if kind == "laminate":
        return LaminateOracle(float(cmd["f1"]), float(cmd["theta"]))
    if kind == "fft":
        _need_file(cmd["micro"], "microstructure file")
        return FFTOracle(PixelMicrostructure.load(cmd["micro"]))
    raise ConfigError(f"unknown oracle {kind!r}; choose uniform, laminate or fft")


def cmd_generate(glob, cmd):
    oracle = _make_oracle(cmd)
    n_train, n_valid = int(cmd["train"]), int(cmd["valid"])
    if n_train < 1 or n_valid < 1:
        raise ConfigError("train and valid counts must be >= 1")
    tr, va = sampling.build_dataset(oracle, n_train, n_valid, int(glob["seed"]), int(glob["threads"]))
    paths = [_out(glob, f"{cmd['prefix']}{name}.jsonl") for name in ("train", "valid")]
    # render both before writing either so a failure leaves nothing behind
    texts = [tr.to_jsonl(), va.to_jsonl()]
    for p, t in zip(paths, texts):
        atomic_write_text(p, t)
    print(f"wrote {paths[0]} ({len(tr)} samples) and {paths[1]} ({len(va)} samples)")
    return EXIT_OK


def _train_one(args):
    net, tr, va, config, start_epoch = args
    return trainer.train(net, tr, va, config, start_epoch)


def cmd_train(glob, cmd):
    for key in ("train_data", "valid_data"):
        _need_file(cmd[key], key.replace("_", " "))
    tr = sampling.Dataset.load(cmd["train_data"])
    va = sampling.Dataset.load(cmd["valid_data"])
    R = int(cmd["realizations"])
    if R < 1:
        raise ConfigError("realizations must be >= 1")
    seed = int(glob["seed"])
    jobs = []
    for r in range(R):
        if cmd["resume"]:
            _need_file(cmd["resume"], "resume checkpoint")
            net = network.load_file(cmd["resume"])
            start = int(net.history.get("epochs", 0))
        else:
            net = network.init_random(int(cmd["depth"]), rng=np.random.default_rng(subseed(seed, f"init/{r}")))
            net.seed = seed
            start = 0
        config = trainer.TrainerConfig(
            batch_size=int(cmd["batch"]),
            epochs=int(cmd["epochs"]),
            lam=cmd["lam"],
            eta0=float(cmd["eta0"]),
            compress=bool(cmd["compress"]),
            seed=subseed(seed, f"shuffle/{r}"),
            target_error=cmd["target_error"],
        )
        jobs.append((net, tr, va, config, start))
    workers = min(int(glob["threads"]), R)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    scores = [b.history["final_validation_error"] for b, _ in results]
    k = int(np.argmin(scores))
    best, hist = results[k]
    best.history["realization"] = k
    best.history["realization_errors"] = scores
    ckpt = _out(glob, cmd["out"])
    network.save_file(best, ckpt)
    hist.save(ckpt.with_suffix("").as_posix() + ".history")
    h = best.history
    print(
        f"realization {k + 1}/{R}: train error {h['final_training_error']:.4%}, "
        f"valid error {h['final_validation_error']:.4%}, N_a {network.count_active(best)}, epochs {h['epochs']}"
    )
    print(f"wrote {ckpt}")
    return EXIT_OK


def cmd_eval(glob, cmd):
    _need_file(cmd["checkpoint"], "checkpoint")
    net = network.load_file(cmd["checkpoint"])
    if cmd["high_contrast"]:
        oracle = LaminateOracle(float(cmd["f1"]), float(cmd["theta"]))
        data = sampling.testing_dataset_high_contrast(int(cmd["high_contrast"]), int(glob["seed"]), oracle)
    else:
        _need_file(cmd["data"], "dataset")
        data = sampling.Dataset.load(cmd["data"])
    err = trainer.sample_errors(net, data)
    if not np.all(np.isfinite(err)):
        raise NumericalError("non-finite prediction error")
    hist, edges = np.histogram(err, bins=int(cmd["bins"]))
    report = {
        "count": int(err.size),
        "mean": float(err.mean()),
        "max": float(err.max()),
        "argmax": int(err.argmax()),
        "errors": err.tolist(),
        "histogram": {"counts": hist.tolist(), "edges": edges.tolist()},
    }
    path = _out(glob, cmd["out"])
    atomic_write_text(path, json.dumps(report, indent=1) + "\n")
    print(f"{err.size} samples: mean error {err.mean():.4%}, max {err.max():.4%}")
    print(f"wrote {path}")
    return EXIT_OK


def _load_path(cmd) -> LoadPath:
    if cmd["path_file"]:
        _need_file(cmd["path_file"], "path file")
        try:
            return LoadPath.load(cmd["path_file"])
        except json.JSONDecodeError as exc:
            raise FormatError(f"{cmd['path_file']}: {exc}") from exc
    builder = BUILTIN_PATHS.get(cmd["path"])
    if builder is None:
        raise ConfigError(f"unknown path {cmd['path']!r}; choose from {sorted(BUILTIN_PATHS)}")
    kw = {}
    if cmd["steps"] is not None and "steps" in builder.__code__.co_varnames:
        kw["steps"] = int(cmd["steps"])
    if cmd["to"] is not None and "to" in builder.__code__.co_varnames:
        kw["to"] = float(cmd["to"])
    return builder(**kw)


def cmd_simulate(glob, cmd):
    _need_file(cmd["checkpoint"], "checkpoint")
    net = network.load_file(cmd["checkpoint"])
    laws = _materials(cmd)
    path = _load_path(cmd)
    try:
        solver = OnlineSolver(net, laws)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if path.kind != solver.kind:
        raise ConfigError(f"{path.kind}-strain path does not match {solver.kind}-strain materials")
    resp = solver.run_path(path)
    out = _out(glob, cmd["out"])
    summary = json.loads(resp.to_json())
    summary.update(
        n_active=solver.n_active,
        leaf_evaluations=solver.leaf_evals,
        leaf_statistics=solver.leaf_statistics(),
    )
    atomic_write_text(out.with_suffix(".json"), json.dumps(summary, indent=1) + "\n")
    atomic_write_text(out, resp.to_csv())
    print(
        f"{len(resp.records) - 1} increments, {int(resp.iterations.sum())} iterations, "
        f"N_a {solver.n_active}, {resp.wall_time:.3f} s"
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_treemap(glob, cmd):
    _need_file(cmd["checkpoint"], "checkpoint")
    net = network.load_file(cmd["checkpoint"])
    rects = network.to_treemap(net)
    vf1 = network.phase_volume_fraction(net)
    na = network.count_active(net)
    out = _out(glob, cmd["out"])
    doc = {"vf1": vf1, "n_active": na, "rects": rects}
    atomic_write_text(out.with_suffix(".json"), json.dumps(doc, indent=1) + "\n")
    atomic_write_text(out, network.treemap_svg(rects))
    print(f"vf1 {vf1:.4f}  N_a {na}")
    print(f"wrote {out}")
    return EXIT_OK


def linear_fit(x, y):
    """Least-squares ``y = a x + b``; returns ``(a, b, R^2)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    a, b = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (a * x + b)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(a), float(b), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def time_path(net, laws, path, repeats: int = 1) -> float:
    """Best-of-``repeats`` wall time of one run of ``path``."""
    best = math.inf
    for _ in range(repeats):
        solver = OnlineSolver(net, laws)
        t0 = time.perf_counter()
        solver.run_path(path)
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark(groups, laws, path, repeats: int = 1) -> dict:
    """Time each group of networks; a group's time is the sum over its nets.

    ``groups`` maps a label to a list of networks sharing the same ``N_a``.
    """
    rows = []
    for label, nets in groups.items():
        na = {network.count_active(n) for n in nets}
        if len(na) != 1:
            raise ConfigError(f"group {label!r} mixes active-leaf counts {sorted(na)}")
        t = sum(time_path(n, laws, path, repeats) for n in nets)
        rows.append({"label": label, "n_active": na.pop(), "nets": len(nets), "time": t})
    rows.sort(key=lambda r: r["n_active"])
    x = [r["n_active"] for r in rows]
    y = [r["time"] for r in rows]
    out = {"rows": rows}
    if len(rows) >= 2:
        a, b, r2 = linear_fit(x, y)
        out.update(slope=a, intercept=b, r2=r2)
        out["ratios"] = [
            {"from": rows[i]["n_active"], "to": rows[i + 1]["n_active"], "ratio": y[i + 1] / y[i]}
            for i in range(len(rows) - 1)
        ]
    return out


def cmd_bench(glob, cmd):
    laws = _materials(cmd)
    path = BUILTIN_PATHS["uniaxial-tension"](int(cmd["steps"]), float(cmd["to"]))
    groups = {}
    if cmd["checkpoints"]:
        for p in cmd["checkpoints"]:
            _need_file(p, "checkpoint")
            groups[str(p)] = [network.load_file(p)]
    else:
        seed = int(glob["seed"])
        for N in cmd["depths"]:
            nets = [
                network.init_random(int(N), rng=np.random.default_rng(subseed(seed, f"bench/{N}/{k}")))
                for k in range(int(cmd["nets"]))
            ]
            groups[f"depth{N}"] = nets
    res = benchmark(groups, laws, path, int(cmd["repeats"]))
    print(f"{'N_a':>6} {'nets':>5} {'time [s]':>10}")
    for r in res["rows"]:
        print(f"{r['n_active']:>6} {r['nets']:>5} {r['time']:>10.4f}")
    if "r2" in res:
        print(f"slope {res['slope']:.4e} s per active leaf, intercept {res['intercept']:.4e} s, R^2 {res['r2']:.4f}")
        print("ratios " + " ".join(f"{q['from']}->{q['to']}:{q['ratio']:.2f}" for q in res["ratios"]))
    out = _out(glob, cmd["out"])
    atomic_write_text(out, json.dumps(res, indent=1) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "micro": cmd_micro,
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "treemap": cmd_treemap,
    "bench": cmd_bench,
}


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _bool_flag(p, name, help_):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None, help=help_)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--threads", type=int, help=f"worker threads (default from ${THREADS_ENV}, else 1)")
    _bool_flag(common, "deterministic", "serialize reductions")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    p = _Parser(prog="dmnet", description="Deep material network toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("micro", parents=[common], help="write a pixel microstructure")
    s.add_argument("--kind", choices=sorted(micro_mod.GENERATORS))
    s.add_argument("--n", type=int)
    s.add_argument("--vf1", type=float)
    s.add_argument("--periods", type=int)
    _bool_flag(s, "vertical", "stripes vary along x1")
    s.add_argument("--cells", type=int)
    s.add_argument("--correlation", type=float)
    s.add_argument("--out")

    s = sub.add_parser("generate", parents=[common], help="sample phases and label them with an oracle")
    s.add_argument("--oracle", choices=["uniform", "laminate", "fft"])
    s.add_argument("--f1", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--micro")
    s.add_argument("--train", type=int)
    s.add_argument("--valid", type=int)
    s.add_argument("--prefix")

    s = sub.add_parser("train", parents=[common], help="train a network")
    s.add_argument("--train-data", dest="train_data")
    s.add_argument("--valid-data", dest="valid_data")
    s.add_argument("--depth", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--realizations", type=int)
    s.add_argument("--eta0", type=float)
    s.add_argument("--lam", type=float)
    _bool_flag(s, "compress", "compress every 10 epochs")
    s.add_argument("--target-error", dest="target_error", type=float)
    s.add_argument("--resume")
    s.add_argument("--out")

    s = sub.add_parser("eval", parents=[common], help="error report of a network on a dataset")
    s.add_argument("--checkpoint")
    s.add_argument("--data")
    s.add_argument("--high-contrast", dest="high_contrast", type=int, help="generate this many high-contrast samples")
    s.add_argument("--f1", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--bins", type=int)
    s.add_argument("--out")

    s = sub.add_parser("simulate", parents=[common], help="run a nonlinear loading path")
    s.add_argument("--checkpoint")
    s.add_argument("--phase1")
    s.add_argument("--phase2")
    s.add_argument("path", nargs="?", choices=sorted(BUILTIN_PATHS))
    s.add_argument("--path-file", dest="path_file")
    s.add_argument("--steps", type=int)
    s.add_argument("--to", type=float)
    s.add_argument("--out")

    s = sub.add_parser("treemap", parents=[common], help="render the network as a treemap")
    s.add_argument("--checkpoint")
    s.add_argument("--out")

    s = sub.add_parser("bench", parents=[common], help="online cost versus active leaves")
    s.add_argument("--checkpoints", nargs="+")
    s.add_argument("--depths", type=int, nargs="+")
    s.add_argument("--nets", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--phase1")
    s.add_argument("--phase2")
    s.add_argument("--steps", type=int)
    s.add_argument("--to", type=float)
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        glob, cmd = resolve_config(args)
        logging.basicConfig(level=logging.INFO if glob["verbose"] else logging.WARNING, format="%(levelname)s %(message)s")
        Path(glob["out_dir"]).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](glob, cmd)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
