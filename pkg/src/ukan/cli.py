"""Command-line entry point: train / eval / bench.

Exit codes: 0 ok, 2 invalid configuration, 3 diverged, 4 bad checkpoint.
``--threads`` must take effect before numpy loads its BLAS, so heavy imports
stay inside the command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys


def _set_threads(argv):
    n = "1"
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif a.startswith("--threads="):
            n = a.split("=", 1)[1]
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ukan", description="Spline-network training and benchmarking")
    p.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP thread count (default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a model from a config file")
    tr.add_argument("--config", required=True)
    tr.add_argument("--seed", type=int, help="override the config seed")
    tr.add_argument("--out", help="override the config output directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--task", help="override the task recorded in the checkpoint")

    be = sub.add_parser("bench", help="grid/order complexity sweep (CSV on stdout)")
    be.add_argument("--orders", default="3", help="comma-separated spline degrees")
    be.add_argument("--grids", default="16,64,256,1024", help="comma-separated grid sizes")
    be.add_argument("--batch", type=int, default=4096)
    be.add_argument("--reps", type=int, default=5)
    be.add_argument("--d-in", type=int, default=32)
    be.add_argument("--d-out", type=int, default=32)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--impls", default="matrix,naive")
    return p


def _params_out(model):
    return {name: p.values for name, p in model.parameters().items()}


def _cmd_train(args) -> int:
    import dataclasses

    from .checkpoint import save_checkpoint
    from .config import load_config
    from .errors import ConfigError, FormatError, UkanError
    from .train import CSV_HEADER, DivergedError, build_model_from_config, train

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
        cfg.validate()
    except (ConfigError, FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.bin")
    model = build_model_from_config(cfg)
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")

        def log(row):
            fh.write(row + "\n")
            fh.flush()
            print(row)

        try:
            result = train(cfg, model=model, log=log)
        except DivergedError as e:
            save_checkpoint(ckpt_path, cfg, _params_out(model), {"epoch": -1, "diverged": True})
            print(f"error: {e}", file=sys.stderr)
            return 3
        except UkanError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2

    meta = {"epoch": result.epochs_run, "adam_t": result.optimizer_state.t if result.optimizer_state else 0}
    save_checkpoint(ckpt_path, cfg, _params_out(result.model), meta)
    print(f"wrote {metrics_path} and {ckpt_path}")
    return 0


def _cmd_eval(args) -> int:
    import dataclasses

    from .checkpoint import load_checkpoint
    from .errors import FormatError, UkanError
    from .train import build_model_from_config, build_task, eval_metric, eval_pinn_mse

    try:
        cfg, tensors, _meta = load_checkpoint(args.checkpoint)
        if args.task:
            cfg = dataclasses.replace(cfg, task=args.task).validate()
        model = build_model_from_config(cfg)
        params = model.parameters()
        if set(params) != set(tensors):
            raise FormatError(f"parameter names mismatch: {sorted(set(params) ^ set(tensors))}")
        for name, p in params.items():
            if p.values.shape != tensors[name].shape:
                raise FormatError(f"{name}: checkpoint shape {tensors[name].shape} != model {p.values.shape}")
            p.values[...] = tensors[name]
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4

    try:
        setup = build_task(cfg)
        if setup.loss_kind == "pinn":
            train_m = val_m = eval_pinn_mse(model, setup.pinn)
        else:
            train_m = eval_metric(model, setup, setup.train)
            val_m = eval_metric(model, setup, setup.val)
    except UkanError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print("task,model,metric,train_metric,val_metric")
    print(f"{cfg.task},{cfg.model},{setup.metric_kind},{train_m:.10g},{val_m:.10g}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import BENCH_HEADER, run_bench

    orders = [int(s) for s in args.orders.split(",") if s]
    grids = [int(s) for s in args.grids.split(",") if s]
    impls = tuple(s.strip() for s in args.impls.split(",") if s.strip())
    rows = run_bench(orders, grids, args.batch, reps=args.reps,
                     d_in=args.d_in, d_out=args.d_out, seed=args.seed, impls=impls)
    print(BENCH_HEADER)
    for row in rows:
        print(row.csv())
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_threads(argv)
    args = _build_parser().parse_args(argv)
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "eval":
        return _cmd_eval(args)
    return _cmd_bench(args)


if __name__ == "__main__":
    sys.exit(main())
