"""``mksgd`` command line: check, bench, train and compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import check_convergence_conditions, make_problem, run_benchmark
from .checks import format_table, run_checks
from .config import COMMANDS, RunConfig, parse_config
from .data import load_dataset, make_synthetic
from .errors import MksgdError
from .metrics import emit_metrics, run_stem
from .net import Network, assign_manifolds, small_cnn_spec
from .train import train

log = logging.getLogger("mksgd")

# flag -> dotted config key
FLAG_KEYS = {
    "command": "command",
    "manifold": "manifold",
    "seed": "seed",
    "iters": "iters",
    "alpha0": "schedule.alpha0",
    "lam": "schedule.lambda",
    "schedule": "schedule.kind",
    "theta_mu": "optimizer.theta_mu",
    "theta_e": "optimizer.theta_e",
    "clip": "optimizer.clip",
    "out": "out",
    "deterministic": "deterministic",
    "problem": "problem.name",
    "rows": "problem.rows",
    "cols": "problem.cols",
    "epochs": "data.epochs",
}


def build_parser():
    p = argparse.ArgumentParser(prog="mksgd", description=__doc__)
    p.add_argument("--config", metavar="PATH", help="YAML run configuration")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--manifold", choices=("sphere", "oblique", "stiefel", "so", "none"))
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--schedule", choices=("inverse_time", "step_decay", "constant"))
    p.add_argument("--theta-mu", type=float)
    p.add_argument("--theta-e", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--deterministic", action="store_const", const=True, default=None)
    p.add_argument("--problem", choices=("rayleigh", "procrustes", "oblique_diag"))
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_config(cfg: RunConfig, outdir: Path, stem: str):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{stem}.config.yaml").write_text(cfg.dump())


def command_check(cfg: RunConfig, inject_fault=False):
    results = run_checks(seed=cfg.seed, inject_fault=inject_fault)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def command_bench(cfg: RunConfig, plot=True, compare=False):
    family = cfg.family
    problem = make_problem(cfg.problem.name, cfg.problem.rows, cfg.problem.cols, cfg.seed, family)
    outdir = Path(cfg.out)
    runs = [("riemannian", False)] + ([("euclidean", True)] if compare else [])
    status = 0
    summary = {}
    for tag, euclidean in runs:
        report = run_benchmark(problem, cfg.hyper, cfg.iters, euclidean=euclidean)
        diag = check_convergence_conditions(report, cfg.hyper)
        extra = {"problem": problem.name, "diagnostics": {
            "compact": diag.compact, "bounded_gradient": diag.bounded_gradient,
            "schedule": diag.schedule, "trend": diag.trend}}
        paths = emit_metrics(report, outdir, cfg.command, family, cfg.seed,
                             tag if compare else None, extra, plot)
        v = report.verdict()
        summary[tag] = v
        log.info("%s: wrote %s", tag, ", ".join(str(p) for p in paths.values()))
        print(f"[{tag}] {problem.name} on {family.value} {problem.spec.rows}x{problem.spec.cols}: "
              f"gap {v['gap_to_oracle']}, grad norm {v['grad_norm_final']}, "
              f"max violation {v['max_violation']}")
        for label, ok in diag.rows():
            print(f"  {label}: {'n/a' if ok is None else ('yes' if ok else 'no')}")
        if report.failed:
            print(f"  failed: {report.failure}")
            status = 1
    if compare:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return status


def command_train(cfg: RunConfig, plot=True):
    d = cfg.data
    if d.format == "synthetic":
        dataset = make_synthetic(d.samples, seed=cfg.seed)
    else:
        dataset = load_dataset(d.path, d.format, labels_path=d.labels_path)
    n = cfg.network
    spec = small_cnn_spec(dataset.inputs.shape[1:], dataset.num_classes, n.channels, n.kernel,
                          n.activation, n.mean_only_bn)
    net = Network.from_spec(spec, seed=cfg.seed)
    conv = cfg.family
    dense = conv if n.dense_manifold == "same" else (
        None if n.dense_manifold == "none" else n.dense_manifold)
    assign_manifolds(net, {"conv": conv, "dense": dense}, seed=cfg.seed)
    history = train(net, dataset, cfg.hyper, d.epochs, d.batch_size, seed=cfg.seed)
    paths = emit_metrics(history, Path(cfg.out), cfg.command, conv, cfg.seed, plot=plot)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    v = history.verdict()
    print(f"train on {cfg.manifold}: accuracy {v['final_accuracy']}, "
          f"final loss {v['final_loss']}, max violation {v['max_violation']}")
    if history.failed:
        print(f"  failed: {history.failure}")
        return 1
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
    try:
        cfg = parse_config(args.config, overrides)
        log.info("effective config:\n%s", cfg.dump().rstrip())
        if cfg.command == "check":
            return command_check(cfg, inject_fault=args.inject_fault)
        outdir = Path(cfg.out)
        tag = None if cfg.command != "compare" else "pair"
        _write_config(cfg, outdir, run_stem(cfg.command, cfg.family, cfg.seed, tag))
        if cfg.command == "train":
            return command_train(cfg, plot=not args.no_plot)
        return command_bench(cfg, plot=not args.no_plot, compare=cfg.command == "compare")
    except MksgdError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    except OSError as exc:
        log.error("io error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
