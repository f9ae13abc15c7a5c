"""Command-line entry point: forward and inverse runs, table replay, sweeps."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import PRESETS, ConfigError, TrainConfig, dumps, resolve
from .trainer import (
    REFERENCE_ROW0,
    TABLE_COLUMNS,
    TABLE_RATES,
    Checkpoint,
    LogRow,
    TrainingError,
    evaluate_model,
    evaluation_grid,
    make_collocation,
    replicate_manual_table,
    run_training,
)
from .transport import exact_solution

EXIT_USAGE = 2
EXIT_TRAINING = 3

def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _apply_overrides(cfg: TrainConfig, args, lr=None) -> TrainConfig:
    try:
        return cfg.with_overrides(seed=args.seed, epochs=args.epochs, learning_rate=lr)
    except ValueError as exc:
        raise ConfigError(f"command-line override: {exc}") from None


def _print_config(cfg: TrainConfig, source: str, out) -> None:
    print(f"# effective config ({source})", file=out)
    for line in dumps(cfg).splitlines():
        print(f"#   {line}", file=out)
    if cfg.conditions.boundary == "dirichlet_zero" and cfg.counts.n_boundary:
        wall = make_collocation(cfg).boundary
        gap = float(np.max(np.abs(exact_solution(wall[:, 0], wall[:, 1]))))
        print(f"# zero wall condition vs exact solution: max |u| at wall points = {gap:.6g}", file=out)


def _progress_printer(quiet: bool):
    if quiet:
        return None

    def show(row: LogRow) -> None:
        c = "" if row.coefficient is None else f"  C {row.coefficient:.6f}"
        print(f"epoch {row.epoch:>7d}  loss {row.loss.total:.6e}  rel_l2 {row.rel_l2:.6f}{c}", flush=True)

    return show


def _run_single(args, want_inverse: bool) -> int:
    cfg = _apply_overrides(resolve(args.config), args, args.lr)
    if cfg.inverse != want_inverse:
        kind = "a trainable" if want_inverse else "a fixed"
        raise ConfigError(f"{args.config}: this command needs {kind} coefficient (residual.trainable)")
    resume = None
    if args.resume:
        path = Path(args.resume)
        if not path.is_file():
            raise ConfigError(f"checkpoint not found: {path}")
        resume = Checkpoint.load(path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.quiet:
        _print_config(cfg, args.config, sys.stdout)

    result = run_training(cfg, resume=resume, progress=_progress_printer(args.quiet))

    result.log.write_csv(out / "runlog.csv", timing=args.timing)
    grid = evaluation_grid(cfg.domain)
    pred, err = evaluate_model(result.params, grid)
    exact = exact_solution(grid[:, 0], grid[:, 1])
    _write_rows(
        out / "predictions.csv",
        ["x", "t", "y_hat", "u_exact"],
        [[_num(a), _num(b), _num(c), _num(d)] for (a, b), c, d in zip(grid, pred, exact)],
    )
    result.checkpoint.save(out / "checkpoint.json")
    print(f"final relative L2 error at t={cfg.domain.t_min:g}: {err:.6f}")
    if want_inverse:
        _write_rows(out / "coefficient.csv", ["epoch", "C"], [[e, _num(c)] for e, c in result.coefficient_trajectory])
        print(f"final coefficient C: {result.coefficient:.6f} (|C - 3| = {abs(result.coefficient - 3.0):.6f})")
    return 0


def cmd_forward(args) -> int:
    return _run_single(args, want_inverse=False)


def cmd_inverse(args) -> int:
    return _run_single(args, want_inverse=True)


def cmd_replicate_table(args) -> int:
    rows = replicate_manual_table(args.mode, loops=args.loops)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out / "table.csv",
        TABLE_COLUMNS,
        [[r["loop"]] + [_num(r[k]) for k in TABLE_COLUMNS[1:]] for r in rows],
    )
    if not args.quiet:
        print("  ".join(f"{c:>9s}" for c in TABLE_COLUMNS))
        for r in rows:
            print("  ".join([f"{r['loop']:>9d}"] + [f"{r[k]:>9.5f}" for k in TABLE_COLUMNS[1:]]))
        r0 = rows[0]
        print(
            f"loop 0 reference: y_hat {REFERENCE_ROW0['y_hat']}, loss {REFERENCE_ROW0['loss']}; "
            f"computed: y_hat {r0['y_hat']:.6f}, loss {r0['loss']:.6f}"
        )
    return 0


def _sweep_one(job):
    value, cfg = job
    t0 = time.perf_counter()
    result = run_training(cfg)
    seconds = time.perf_counter() - t0
    return value, result.log, result.log.final.rel_l2, result.log.final.loss.total, seconds


def _sweep_workers() -> int:
    raw = os.environ.get("PINN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PINN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"PINN_THREADS must be a positive integer, got {raw!r}")
    return n


def cmd_sweep(args) -> int:
    base = _apply_overrides(resolve(args.config), args)
    jobs = []
    if args.nodes is not None:
        for n in args.nodes:
            jobs.append((n, base.with_overrides(layer_sizes=(2, n, 1))))
    else:
        for lr in args.lr:
            jobs.append((lr, base.with_overrides(learning_rate=lr)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.quiet:
        _print_config(base, args.config, sys.stdout)
        print(f"# sweep over {'nodes' if args.nodes is not None else 'lr'}: {[v for v, _ in jobs]}")

    workers = min(_sweep_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    rows = []
    for value, log, err, loss, seconds in results:
        log.write_csv(out / f"runlog_{value:g}.csv", timing=args.timing)
        rows.append([f"{value:g}", _num(err), _num(loss), f"{seconds:.6f}" if args.timing else ""])
        if not args.quiet:
            print(f"{value:>10g}  final rel_l2 {err:.6f}  final loss {loss:.6e}")
    _write_rows(out / "summary.csv", ["sweep_value", "final_rel_l2", "final_loss", "seconds"], rows)
    return 0


def cmd_presets(args) -> int:
    if args.name is None:
        for name in PRESETS:
            print(name)
        return 0
    if args.name not in PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}; choose from {', '.join(PRESETS)}")
    sys.stdout.write(dumps(PRESETS[args.name]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transport-pinn", description="Physics-informed network for u_t + c u_x = 0.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_config, lr=True):
        sp.add_argument("--config", default=default_config, help="preset name or JSON file (default: %(default)s)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--epochs", type=int, help="override the epoch count")
        if lr:
            sp.add_argument("--lr", type=float, help="override the learning rate")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identical output)")
        sp.add_argument("--quiet", action="store_true")

    f = sub.add_parser("forward", help="train with a known speed")
    common(f, "forward-small")
    f.add_argument("--resume", help="checkpoint.json to continue from")
    f.set_defaults(func=cmd_forward)

    i = sub.add_parser("inverse", help="train and recover the unknown speed C")
    common(i, "inverse-tutorial")
    i.add_argument("--resume", help="checkpoint.json to continue from")
    i.set_defaults(func=cmd_inverse)

    t = sub.add_parser("replicate-table", help="replay the 5-loop hand calculation on a [2,2,1] net")
    t.add_argument("--mode", choices=sorted(TABLE_RATES), default="literal")
    t.add_argument("--loops", type=int, default=5)
    t.add_argument("--out", default=".")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_replicate_table)

    s = sub.add_parser("sweep", help="train one config across hidden sizes or learning rates")
    common(s, "forward-small", lr=False)
    group = s.add_mutually_exclusive_group(required=True)
    group.add_argument("--nodes", type=_int_list, help="comma-separated single-hidden-layer widths")
    group.add_argument("--lr", type=_float_list, help="comma-separated learning rates")
    s.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("presets", help="list presets, or print one as JSON")
    pr.add_argument("name", nargs="?")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
