"""``gspace`` command line: train, verify, compare, paths.

Exit codes: 0 success, 1 invalid input or config, 2 runtime failure,
3 a verification check failed.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import Dataset, avg_pool_downsample, load_idx, synthetic_blobs
from .errors import ConfigError, EnumerationTooLarge, GSpaceError, StepRejected
from .experiment import compare
from .network import Architecture
from .optim import train
from .paths import DEFAULT_ENUMERATION_CAP, enumerate_paths, StructureMatrix
from .persist import write_checkpoint, write_metrics, write_summary
from .skeleton import build_skeleton, count_basis_paths
from .verify import check_icr_gradient, format_table, run_verification

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class InputError(GSpaceError):
    """User input that is well formed but unusable (e.g. data/architecture mismatch)."""


def _emit(pairs) -> None:
    # tab-delimited key/value lines, one per result
    for key, value in pairs:
        if isinstance(value, float):
            value = format(value, ".10g")
        print(f"{key}\t{value}")


def _run_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "arch", None):
        overrides.append(f"model.arch={list(Architecture.parse(args.arch).widths)}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    cfg = load_config(args.config, overrides)
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    return cfg


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset | None]:
    arch, d = cfg.arch, cfg.data
    if d["source"] == "blobs":
        tr = synthetic_blobs(d["seed"], d["n_per_class"], arch.d, arch.K, d["spread"], "train")
        te = (synthetic_blobs(d["seed"] + 1, d["n_test_per_class"], arch.d, arch.K, d["spread"], "test")
              if d["n_test_per_class"] else None)
        return tr, te
    sets = [load_idx(d["train_images"], d["train_labels"], "train")]
    if d["test_images"]:
        sets.append(load_idx(d["test_images"], d["test_labels"], "test"))
    if d["downsample"] > 1:
        sets = [avg_pool_downsample(s, d["downsample"]) for s in sets]
    for s in sets:
        if s.dim != arch.d:
            raise InputError(f"{s.split} data has {s.dim} features but {arch} expects {arch.d}")
        if s.labels.max(initial=0) >= arch.K:
            raise InputError(f"{s.split} data has label {s.labels.max()} but {arch} has {arch.K} outputs")
    return sets[0], sets[1] if len(sets) > 1 else None


def cmd_train(args) -> int:
    cfg = _run_config(args)
    tr, te = load_data(cfg)
    plan = build_skeleton(cfg.arch)
    res = train(cfg.arch, cfg.train, tr, te, plan=plan)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    free = sorted(plan.free_skeleton_edges)
    summary = {
        "config": cfg.echo(),
        "seed": cfg.train.seed,
        "steps": res.steps,
        "final": res.metrics.summary(),
        "free_skeleton_unchanged": bool(np.array_equal(res.weights[free], res.initial_weights[free])),
    }
    write_summary(out / "summary.json", summary)
    if cfg.train.epochs > 0:
        write_metrics(out / "metrics.csv", res.metrics)
        write_checkpoint(out / "weights.ckpt", cfg.arch, res.weights)
        if cfg.figures:
            from .plotting import plot_training
            plot_training(res.metrics, out / "loss.png", f"{cfg.train.optimizer} on {cfg.arch}")
    final = res.metrics.final
    _emit([("arch", str(cfg.arch)), ("optimizer", cfg.train.optimizer), ("epochs", cfg.train.epochs),
           ("steps", res.steps), ("train_loss", final.train_loss), ("train_acc", final.train_acc),
           ("test_loss", final.test_loss), ("test_acc", final.test_acc), ("output", str(out))])
    return EXIT_OK


def cmd_verify(args) -> int:
    arch = Architecture.parse(args.arch) if args.arch else _run_config(args).arch
    results = run_verification(arch, args.max_paths, args.samples, args.seed or 0)
    if args.icr_samples:
        results.append(check_icr_gradient(arch, build_skeleton(arch), args.icr_samples, args.seed or 0))
    ok = all(r.passed for r in results)
    report = "\n".join([f"architecture {arch}: m={arch.m} H={arch.H} m-H={count_basis_paths(arch)}",
                        format_table(results), "RESULT " + ("PASS" if ok else "FAIL")])
    print(report)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.txt").write_text(report + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    tr, te = load_data(cfg)
    c = cfg.compare
    result = compare(cfg.arch, cfg.train, tr, te, scale=float(c["scale"]),
                     sgd_lr=float(c["sgd_learning_rate"]), gsgd_lr=float(c["gsgd_learning_rate"]))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for (opt, start), run in result.runs.items():
        write_metrics(out / f"metrics_{opt}_{start}.csv", run.metrics)
    summary = result.summary()
    write_summary(out / "compare.json", {"config": cfg.echo(), "seed": cfg.train.seed, **summary})
    if cfg.figures:
        from .plotting import plot_comparison
        plot_comparison(result, out / "compare.png")
    rows = [("arch", str(cfg.arch)), ("invariant_ratio", summary["invariant_ratio"]), ("scale", result.scale)]
    for opt in ("sgd", "gsgd"):
        for start in ("balanced", "unbalanced"):
            rows.append((f"{opt}.final_train_loss.{start}", summary[opt]["final_train_loss"][start]))
        rows.append((f"{opt}.start_gap", summary[opt]["start_gap"]))
        rows.append((f"{opt}.trajectory_divergence", summary[opt]["trajectory_divergence"]))
    rows += [("delta_train_loss_balanced", summary["delta_train_loss_balanced"]),
             ("delta_train_loss_unbalanced", summary["delta_train_loss_unbalanced"]),
             ("output", str(out))]
    _emit(rows)
    return EXIT_OK


def cmd_paths(args) -> int:
    arch = Architecture.parse(args.arch) if args.arch else _run_config(args).arch
    paths = enumerate_paths(arch, args.max_paths)
    plan = build_skeleton(arch)
    basis = {p: k for k, p in enumerate(plan.basis_paths)}
    out = Path(args.out) if args.out else None
    lines = ["# index\tnodes\tedges\tbasis"]
    for i, p in enumerate(paths):
        tag = str(basis[p]) if p in basis else "-"
        lines.append(f"{i}\t{','.join(map(str, p.nodes))}\t{','.join(map(str, p.edges))}\t{tag}")
    if out is None:
        print("\n".join(lines))
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "paths.tsv").write_text("\n".join(lines) + "\n")
        StructureMatrix.from_paths(arch.m, paths).write_triplets(out / "structure.txt")
        plan.write(out / "skeleton.txt")
        _emit([("arch", str(arch)), ("m", arch.m), ("H", arch.H), ("paths", len(paths)),
               ("basis_paths", plan.dim), ("output", str(out))])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gspace", description="G-SGD training and path-space verification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="run config file ([section] / key = value)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")
        p.add_argument("--arch", help="layer widths, e.g. 49,8,8,10")
        p.add_argument("--seed", type=int, help="training seed (init and minibatch order)")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("train", help="train one model")
    common(p, "output directory (overrides output.dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run the structural checks on an architecture")
    common(p, "also save the report as verify.txt in this directory")
    p.add_argument("--max-paths", type=int, default=DEFAULT_ENUMERATION_CAP, help="enumeration cap")
    p.add_argument("--samples", type=int, default=100, help="random samples per numerical check")
    p.add_argument("--icr-samples", type=int, default=0, help="also finite-difference check ICR at this many points")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="SGD vs G-SGD from balanced and rescaled starts")
    common(p, "output directory (overrides output.dir)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("paths", help="list paths, structure matrix and skeleton of a small net")
    common(p, "write paths.tsv, structure.txt and skeleton.txt here instead of printing")
    p.add_argument("--max-paths", type=int, default=10**5, help="enumeration cap")
    p.set_defaults(func=cmd_paths)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_INVALID
    except (StepRejected, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EnumerationTooLarge as exc:
        print(f"error: {exc} (raise --max-paths)", file=sys.stderr)
        return EXIT_INVALID
    except (GSpaceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
