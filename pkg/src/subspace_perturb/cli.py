"""Command-line entry point: ``run``, ``plot`` and ``audit``.

Exit codes: 0 success, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from . import privacy as V
from .optimizers import DivergenceError, run as run_optimizer
from .plotting import PlotSpec, PlotSpecError, render
from .problems import LocalSolverError
from .subspace import convergent_basis, dual_kind, sample_dual_init

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "SUBSPACE_PERTURB_THREADS"

log = logging.getLogger("subspace_perturb")


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise H.ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    return 1


def _load_config(args) -> H.ExperimentConfig:
    cfg = H.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: H.ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(args.config).parent / cfg.data["output"]["dir"]


def cmd_run(args) -> int:
    cfg = _load_config(args)
    traces = H.run_experiment(cfg, threads=_threads(args.threads))
    manifest = H.write_outputs(cfg, traces, _out_dir(args, cfg))
    for tr in traces:
        log.info("%s: %d rounds, relative error %.3e", tr.metadata["cell"],
                 tr.metadata["rounds"], tr.metadata["final_rel_err"])
    print(manifest)
    return EXIT_OK


def cmd_plot(args) -> int:
    spec = PlotSpec.load(args.config)
    out = render(spec, Path(args.out) if args.out else None)
    print(out)
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _load_config(args)
    data = cfg.data
    if "trials" not in data:
        raise H.ConfigError("trials", "required for audit")
    if "adversary" not in data:
        raise H.ConfigError("adversary", "required for audit")
    if data["trials"] < V.MIN_MI_SAMPLES:
        raise H.ConfigError("trials", f"must be >= {V.MIN_MI_SAMPLES} for the MI estimator")
    if data["problem"]["kind"] != "consensus":
        raise H.ConfigError("problem.kind", "audit supports consensus problems only")
    setup = H.build_setup(cfg)
    adv = cfg.adversary()
    lk = data["leakage"]
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    threads = _threads(args.threads)

    for cell in cfg.cells():
        report = V.leakage_experiment(
            setup.problem, cell.optimizer, setup.cm, setup.step, adv, data["trials"],
            cell.variance, iterations=lk["iterations"], mode=cell.mode, seed=lk["seed"],
            k=lk["k"], variance_threshold=lk["variance_threshold"], threads=threads,
        )
        report.metadata["config_hash"] = cfg.hash()
        pj, pc = report.write(out / f"leakage__{cell.key}")
        print(f"[{cell.key}] report: {pj} {pc}")
        for node, lb, nlb, flag, var in zip(report.nodes, report.lower_bound_bits,
                                            report.normalized_lower_bound,
                                            report.condition16_satisfied,
                                            report.effective_variance):
            print(f"  node {node:3d}  lower_bound_bits={V.json_float(lb)}  "
                  f"normalized={V.json_float(nlb)}  condition16={'yes' if flag else 'no'}  "
                  f"noise_var={var:.3g}")
        if cell.optimizer == "pdmm":
            _eavesdrop_summary(cfg, setup, adv, cell)
    return EXIT_OK


def _eavesdrop_summary(cfg, setup, adv, cell):
    basis = convergent_basis(setup.cm, dual_kind(cell.optimizer))
    d0 = sample_dual_init(2 * setup.cm.edge_dim, cell.variance, cfg.data["dual_init"]["seed"],
                          mode=cell.mode, basis=basis)
    trace = run_optimizer("pdmm", setup.problem, setup.cm, setup.step, d0, max_rounds=1,
                          primal_tol=0.0, record_x=True, solution=setup.solution)
    sees_init = adv.eavesdrop_all_channels and not adv.secure_init_round
    est = V.eavesdrop_reconstruct(trace, adv, setup.cm, setup.step,
                                  known_dual_init=d0 if sees_init else None)
    err = np.abs(est - setup.problem.s)
    print(f"  eavesdropper ({'init visible' if sees_init else 'init secured'}): "
          f"median |s_i - estimate| = {np.median(err):.3g}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subspace-perturb", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, what in (("run", cmd_run, "experiment config JSON"),
                           ("plot", cmd_plot, "plot spec JSON"),
                           ("audit", cmd_audit, "experiment config JSON with adversary and trials")):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help=what)
        p.add_argument("--out", metavar="DIR", help="output directory (plot: output SVG path)")
        p.add_argument("--seed", type=int, help="override the dual-init / Monte Carlo seed")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        p.set_defaults(func=fn)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (H.ConfigError, PlotSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, LocalSolverError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
