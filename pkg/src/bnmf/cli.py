"""Command-line entry point: reproducible experiments emitting CSV artifacts.

Subcommands
-----------
theory     depth scales over a (sigma_m2, sigma_b2) grid
propagate  theory-vs-ensemble traces for random finite networks
jacobian   single-layer Jacobian mean squared singular value vs width
train      trainability grid over (depth, sigma_m2) on MNIST
verify     run the acceptance checks end to end

Configuration is a flat JSON key-value file (--config), overridden by
--set KEY=VALUE pairs and the shared flags; precedence is CLI > file >
defaults. The resolved configuration is echoed as comment lines into
every CSV so outputs are self-describing, and all commands are
deterministic given configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import load_idx, subsample
from .ensemble import EnsembleConfig, msv_width_sweep, run_ensemble
from .theory import MfParams, depth_scales
from .training import TrainConfig, trainability_grid

DATA_DIR_ENV = "BNMF_DATA_DIR"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

DEFAULTS = {
    "theory": {
        "sigma_m2": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
        "sigma_b2": [1e-5, 1e-3, 1e-1],
        "kappa": 1.0,
        "seed": 0,
    },
    "propagate": {
        "sigma_m2": [0.2, 0.5, 0.99],
        "sigma_b2": [1e-3],
        "kappa": 1.0,
        "width": 1000,
        "depth": 20,
        "n_realizations": 50,
        "q0_aa": 1.0,
        "q0_bb": 1.0,
        "c0_ab": 0.5,
        "mean_init": "symmetric_bernoulli",
        "seed": 16,
    },
    "jacobian": {
        "widths": [50, 100, 200, 400, 800],
        "sigma_m2": 0.5,
        "sigma_b2": 1e-3,
        "kappa": 1.0,
        "n_networks": 20,
        "n_probes": 64,
        "seed": 0,
    },
    "train": {
        "depths": [5, 10, 15, 20, 25, 30, 35, 40],
        "sigma_m2": [0.1, 0.3, 0.5, 0.7, 0.9, 0.95],
        "sigma_b2": 1e-3,
        "width": 256,
        "fraction": 0.25,
        "epochs": 20,
        "lr": 2e-4,
        "batch_size": 64,
        "optimizer": "adam",
        "mean_init": "symmetric_bernoulli",
        "kappa": 1.0,
        "dtype": "float32",
        "use_test_set": False,
        "seed": 0,
    },
    "verify": {"seed": None},
}

SMOKE_TRAIN = {"depths": [5, 15, 25], "sigma_m2": [0.1, 0.5, 0.95]}

# full-MNIST shallow sweep exposing the train/test tension
TENSION_TRAIN = {
    "depths": [2, 4, 6, 8, 10, 12],
    "sigma_m2": [0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99],
    "fraction": 1.0,
    "epochs": 10,
    "use_test_set": True,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command: str, args) -> dict:
    cfg = dict(DEFAULTS[command])
    if command == "train":
        if args.smoke:
            cfg.update(SMOKE_TRAIN)
        if args.tension:
            cfg.update(TENSION_TRAIN)
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise SystemExit(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for item in args.set or []:
        key, _, value = item.partition("=")
        if key not in cfg:
            raise SystemExit(f"unknown config key {key!r} for {command}")
        cfg[key] = _parse_value(value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: Path, command: str, config: dict, header: list[str],
              rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# bnmf {command}"]
    for key in sorted(config):
        lines.append(f"# {key}={json.dumps(config[key])}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _print_grid(cells) -> None:
    for cell in cells:
        print(f"  {cell}")


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------

def _theory_cell(task):
    sm2, sb2, kappa = task
    try:
        ds = depth_scales(MfParams(sigma_m2=sm2, sigma_b2=sb2, kappa=kappa))
        return [sm2, sb2, ds.q_star, ds.c_star, ds.chi_cstar, ds.chi1,
                ds.xi_q, ds.xi_c, ""]
    except Exception as exc:
        return [sm2, sb2, math.nan, math.nan, math.nan, math.nan,
                math.nan, math.nan, str(exc)]


def cmd_theory(args) -> int:
    cfg = resolve_config("theory", args)
    grid = [(sm2, sb2, cfg["kappa"])
            for sm2 in cfg["sigma_m2"] for sb2 in cfg["sigma_b2"]]
    if not grid:
        raise SystemExit("empty grid")
    if args.dry_run:
        print(f"theory grid ({len(grid)} points):")
        _print_grid(grid)
        return 0
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_theory_cell, grid))
    else:
        rows = [_theory_cell(t) for t in grid]
    out = Path(args.out) / "theory.csv"
    write_csv(out, "theory", cfg,
              ["sigma_m2", "sigma_b2", "q_star", "c_star", "chi_cstar",
               "chi1", "xi_q", "xi_c", "error"], rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# propagate
# ---------------------------------------------------------------------------

def _propagate_cell(task):
    cfg, sm2, sb2 = task
    config = EnsembleConfig(
        width=cfg["width"], depth=cfg["depth"],
        n_realizations=cfg["n_realizations"],
        params=MfParams(sigma_m2=sm2, sigma_b2=sb2, kappa=cfg["kappa"]),
        mean_init=cfg["mean_init"], q0_aa=cfg["q0_aa"], q0_bb=cfg["q0_bb"],
        c0_ab=cfg["c0_ab"], seed=cfg["seed"])
    stats = run_ensemble(config)
    rows = []
    for layer in range(stats.n_layers):
        rows.append([layer,
                     stats.theory.q_aa[layer],
                     stats.q_aa_mean[layer], stats.q_aa_std[layer],
                     stats.theory.c_ab[layer],
                     stats.c_ab_mean[layer], stats.c_ab_std[layer]])
    return rows


def cmd_propagate(args) -> int:
    cfg = resolve_config("propagate", args)
    grid = [(sm2, sb2) for sm2 in cfg["sigma_m2"] for sb2 in cfg["sigma_b2"]]
    if not grid:
        raise SystemExit("empty grid")
    if args.dry_run:
        print(f"propagate grid ({len(grid)} cells):")
        _print_grid(grid)
        return 0
    out_dir = Path(args.out)
    header = ["layer", "q_theory", "q_emp_mean", "q_emp_std",
              "c_theory", "c_emp_mean", "c_emp_std"]
    tasks, paths = [], []
    for sm2, sb2 in grid:
        path = out_dir / f"propagate_sm{sm2}_sb{sb2}.csv"
        if args.resume and path.exists():
            print(f"skipping existing {path}")
            continue
        tasks.append((cfg, sm2, sb2))
        paths.append((path, sm2, sb2))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_propagate_cell, tasks))
    else:
        results = [_propagate_cell(t) for t in tasks]
    for (path, sm2, sb2), rows in zip(paths, results):
        cell_cfg = dict(cfg, sigma_m2=sm2, sigma_b2=sb2)
        write_csv(path, "propagate", cell_cfg, header, rows)
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# jacobian
# ---------------------------------------------------------------------------

def cmd_jacobian(args) -> int:
    cfg = resolve_config("jacobian", args)
    if not cfg["widths"]:
        raise SystemExit("empty width grid")
    if args.dry_run:
        print(f"jacobian widths: {cfg['widths']}")
        return 0
    params = MfParams(sigma_m2=cfg["sigma_m2"], sigma_b2=cfg["sigma_b2"],
                      kappa=cfg["kappa"])
    rows = msv_width_sweep(params, cfg["widths"], n_networks=cfg["n_networks"],
                           n_probes=cfg["n_probes"], seed=cfg["seed"])
    out = Path(args.out) / "jacobian.csv"
    write_csv(out, "jacobian", cfg,
              ["width", "chi_theory", "msv_mean", "msv_std", "n_networks"],
              [[r["width"], r["chi_theory"], r["msv_mean"], r["msv_std"],
                r["n_networks"]] for r in rows])
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def resolve_data_dir(args) -> Path | None:
    if getattr(args, "data_dir", None):
        return Path(args.data_dir)
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def load_mnist(data_dir: Path):
    paths = {k: data_dir / v for k, v in MNIST_FILES.items()}
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise FileNotFoundError(
            "missing MNIST IDX files: " + ", ".join(missing)
            + f"; point --data-dir or ${DATA_DIR_ENV} at a directory holding them")
    train = load_idx(paths["train_images"], paths["train_labels"])
    test = load_idx(paths["test_images"], paths["test_labels"])
    return train, test


def _run_name(depth, sm2) -> str:
    return f"run_d{depth}_sm{sm2}.csv"


def cmd_train(args) -> int:
    cfg = resolve_config("train", args)
    grid = [(d, s) for d in cfg["depths"] for s in cfg["sigma_m2"]]
    if not grid:
        raise SystemExit("empty grid")
    if args.dry_run:
        print(f"train grid ({len(grid)} cells of depth x sigma_m2):")
        _print_grid(grid)
        return 0
    data_dir = resolve_data_dir(args)
    if data_dir is None:
        raise SystemExit(f"no dataset directory; pass --data-dir or set ${DATA_DIR_ENV}")
    train_full, test_set = load_mnist(data_dir)
    train_set = subsample(train_full, cfg["fraction"], seed=cfg["seed"])
    test_used = test_set if cfg["use_test_set"] else None

    out_dir = Path(args.out)
    base = TrainConfig(depth=1, width=cfg["width"], sigma_m2=0.0,
                       sigma_b2=cfg["sigma_b2"], optimizer=cfg["optimizer"],
                       lr=cfg["lr"], batch_size=cfg["batch_size"],
                       epochs=cfg["epochs"], seed=cfg["seed"],
                       mean_init=cfg["mean_init"], gain=cfg["kappa"],
                       dtype=cfg["dtype"])
    done = set()
    if args.resume:
        done = {(d, s) for d, s in grid if (out_dir / _run_name(d, s)).exists()}
        if done:
            print(f"resuming: {len(done)} cells already present")

    run_header = ["epoch", "train_loss", "train_acc", "test_acc"]
    summary_rows = []
    for depth, sm2 in grid:
        if (depth, sm2) in done:
            summary_rows.append(None)  # filled from disk below
            continue
        rows = trainability_grid(base, [depth], [sm2], train_set, test_used)
        row = rows[0]
        cell_cfg = dict(cfg, depths=[depth], sigma_m2=[sm2])
        write_csv(out_dir / _run_name(depth, sm2), "train", cell_cfg, run_header,
                  [[h["epoch"], h["train_loss"], h["train_acc"], h["test_acc"]]
                   for h in row["history"]])
        summary_rows.append([depth, sm2, row["final_train_acc"],
                             row["final_test_acc"], row["xi_c_theory"],
                             row["error"]])
        print(f"depth={depth} sigma_m2={sm2}: "
              f"train_acc={row['final_train_acc']:.4f} ({row['error'] or 'ok'})")
    for i, (depth, sm2) in enumerate(grid):
        if summary_rows[i] is None:
            summary_rows[i] = _summary_from_run(out_dir / _run_name(depth, sm2),
                                                depth, sm2, cfg)
    write_csv(out_dir / "summary.csv", "train", cfg,
              ["depth", "sigma_m2", "final_train_acc", "final_test_acc",
               "xi_c_theory", "error"], summary_rows)
    print(f"wrote {out_dir / 'summary.csv'}")
    return 0


def _summary_from_run(path: Path, depth, sm2, cfg) -> list:
    last = None
    for line in path.read_text().splitlines():
        if line and not line.startswith("#") and not line.startswith("epoch"):
            last = line.split(",")
    params = MfParams(sigma_m2=sm2, sigma_b2=cfg["sigma_b2"], kappa=cfg["kappa"])
    xi_c = depth_scales(params).xi_c
    if last is None:
        return [depth, sm2, math.nan, math.nan, xi_c, "no epochs recorded"]
    return [depth, sm2, float(last[2]), float(last[3]), xi_c, ""]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify as verify_mod

    data_dir = resolve_data_dir(args)
    seed = args.seed if args.seed is not None else verify_mod.REFERENCE_SEED
    results = verify_mod.run_all(data_dir=data_dir, seed=seed,
                                 smoke=not args.full,
                                 tension_summary=getattr(args, "tension_summary", None))
    failed = verify_mod.print_results(results)
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnmf",
        description="Signal propagation and training experiments for "
                    "binary-network surrogates")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a single config key")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel workers for grid cells")
        p.add_argument("--dry-run", action="store_true",
                       help="print the resolved grid and exit")
        p.add_argument("--resume", action="store_true",
                       help="skip grid cells whose outputs already exist")

    for name, fn in (("theory", cmd_theory), ("propagate", cmd_propagate),
                     ("jacobian", cmd_jacobian)):
        p = sub.add_parser(name)
        add_shared(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("train")
    add_shared(p)
    p.add_argument("--data-dir", help=f"MNIST IDX directory (else ${DATA_DIR_ENV})")
    p.add_argument("--smoke", action="store_true",
                   help="reduced grid: depths {5,15,25} x 3 sigma_m2 values")
    p.add_argument("--tension", action="store_true",
                   help="full-MNIST shallow sweep with test accuracy")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify")
    add_shared(p)
    p.add_argument("--data-dir", help=f"MNIST IDX directory (else ${DATA_DIR_ENV})")
    p.add_argument("--full", action="store_true",
                   help="run the full training grid instead of the smoke grid")
    p.add_argument("--tension-summary",
                   help="summary.csv from `bnmf train --tension` for the tension report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
