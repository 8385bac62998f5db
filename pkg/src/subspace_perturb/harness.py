"""Experiment configs, sweeps over (optimizer, init mode, variance) cells, and
their on-disk form: one trace CSV per cell plus a manifest."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import problems as P
from .graph import ConstraintMatrices, Graph, build_constraint_matrices, from_edges, generate_geometric_graph
from .optimizers import OPTIMIZERS, SCHEDULES, DivergenceError, StepConfig, dual_dim, run
from .privacy import AdversaryModel
from .subspace import convergent_basis, dual_kind, sample_dual_init
from .trace import Trace

MANIFEST_SCHEMA = "subspace-perturb-manifest/1"
INIT_MODES = ("full", "in_subspace", "zeros")


class ConfigError(ValueError):
    """Invalid experiment config; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CellDivergenceError(DivergenceError):
    def __init__(self, cell: "Cell", cause: Exception):
        super().__init__(f"cell {cell.key}: {cause}")
        self.cell = cell


@dataclass(frozen=True)
class Cell:
    optimizer: str
    mode: str
    variance: float

    @property
    def key(self) -> str:
        return f"{self.optimizer}__{self.mode}__var{self.variance:g}"


# config -----------------------------------------------------------------------------


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}{key}", "required field is missing")
    return d[key]


def _num(v, field: str, *, integer=False, positive=False, nonneg=False, allow_none=False):
    if v is None and allow_none:
        return None
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        raise ConfigError(field, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if not integer:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(field, "must be finite")
    if positive and not v > 0:
        raise ConfigError(field, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(field, "must be non-negative")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized experiment description; ``data`` is the canonical dict."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        opt = _need(raw, "optimizer", "")
        opts = [opt] if isinstance(opt, str) else opt
        if not isinstance(opts, list) or not opts:
            raise ConfigError("optimizer", "expected a name or a non-empty list of names")
        for o in opts:
            if o not in OPTIMIZERS:
                raise ConfigError("optimizer", f"unknown optimizer {o!r}; expected one of {OPTIMIZERS}")

        g = _need(raw, "graph", "")
        if not isinstance(g, dict):
            raise ConfigError("graph", "expected an object")
        graph = {}
        if "edges" in g:
            graph["n"] = _num(_need(g, "n", "graph."), "graph.n", integer=True, positive=True)
            edges = g["edges"]
            if not isinstance(edges, list) or not all(
                isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e) for e in edges
            ):
                raise ConfigError("graph.edges", "expected a list of [i, j] integer pairs")
            graph["edges"] = [sorted(e) for e in edges]
        else:
            graph["n"] = _num(_need(g, "n", "graph."), "graph.n", integer=True, positive=True)
            graph["seed"] = _num(_need(g, "seed", "graph."), "graph.seed", integer=True, nonneg=True)
            graph["radius_sq"] = _num(g.get("radius_sq"), "graph.radius_sq", positive=True, allow_none=True)
        if graph["n"] < 2:
            raise ConfigError("graph.n", "need at least 2 nodes")

        p = _need(raw, "problem", "")
        if not isinstance(p, dict):
            raise ConfigError("problem", "expected an object")
        kind = _need(p, "kind", "problem.")
        if kind not in P.PROBLEM_KINDS:
            raise ConfigError("problem.kind", f"unknown kind {kind!r}; expected one of {P.PROBLEM_KINDS}")
        problem = {"kind": kind, "seed": _num(_need(p, "seed", "problem."), "problem.seed", integer=True, nonneg=True)}
        for key in ("u", "p"):
            if key in p:
                problem[key] = _num(p[key], f"problem.{key}", integer=True, positive=True)
        if "alpha" in p:
            problem["alpha"] = _num(p["alpha"], "problem.alpha", nonneg=True)

        s = raw.get("step", {})
        if not isinstance(s, dict):
            raise ConfigError("step", "expected an object")
        step = {
            "c": _num(s.get("c", 0.4), "step.c", positive=True),
            "theta": _num(s.get("theta", 0.5), "step.theta", positive=True),
            "t": _num(s.get("t"), "step.t", positive=True, allow_none=True),
            "schedule": s.get("schedule", "synchronous"),
            "schedule_seed": _num(s.get("schedule_seed", 0), "step.schedule_seed", integer=True, nonneg=True),
            "broadcast_counts_once": bool(s.get("broadcast_counts_once", False)),
        }
        if step["schedule"] not in SCHEDULES:
            raise ConfigError("step.schedule", f"expected one of {SCHEDULES}")
        if not step["theta"] < 1:
            raise ConfigError("step.theta", "must lie in (0, 1)")

        d = _need(raw, "dual_init", "")
        if not isinstance(d, dict):
            raise ConfigError("dual_init", "expected an object")
        variances = _need(d, "variances", "dual_init.")
        if not isinstance(variances, list) or not variances:
            raise ConfigError("dual_init.variances", "variance list must be non-empty")
        variances = [_num(v, f"dual_init.variances[{i}]", nonneg=True) for i, v in enumerate(variances)]
        modes = d.get("modes", ["full"])
        if not isinstance(modes, list) or not modes:
            raise ConfigError("dual_init.modes", "expected a non-empty list")
        for mo in modes:
            if mo not in INIT_MODES:
                raise ConfigError("dual_init.modes", f"unknown mode {mo!r}; expected one of {INIT_MODES}")
        dual = {"variances": variances, "modes": list(modes),
                "seed": _num(_need(d, "seed", "dual_init."), "dual_init.seed", integer=True, nonneg=True)}

        st = raw.get("stop", {})
        stop = {
            "max_rounds": _num(st.get("max_rounds", 10_000), "stop.max_rounds", integer=True, positive=True),
            "primal_tol": _num(st.get("primal_tol", 1e-12), "stop.primal_tol", nonneg=True),
        }

        data = {"name": str(raw.get("name", "experiment")), "optimizer": list(opts), "graph": graph,
                "problem": problem, "step": step, "dual_init": dual, "stop": stop}

        if "adversary" in raw:
            a = raw["adversary"]
            if not isinstance(a, dict):
                raise ConfigError("adversary", "expected an object")
            corrupted = a.get("corrupted", [])
            if not isinstance(corrupted, list) or not all(isinstance(v, int) for v in corrupted):
                raise ConfigError("adversary.corrupted", "expected a list of node ids")
            bad = [v for v in corrupted if not 0 <= v < graph["n"]]
            if bad:
                raise ConfigError("adversary.corrupted", f"nodes {bad} are not in the graph")
            if len(set(corrupted)) >= graph["n"]:
                raise ConfigError("adversary.corrupted", "at least one node must be honest")
            data["adversary"] = {
                "corrupted": sorted(set(corrupted)),
                "eavesdrop_all_channels": bool(a.get("eavesdrop_all_channels", False)),
                "secure_init_round": bool(a.get("secure_init_round", True)),
            }
        if "trials" in raw:
            data["trials"] = _num(raw["trials"], "trials", integer=True, positive=True)
        lk = raw.get("leakage", {})
        if not isinstance(lk, dict):
            raise ConfigError("leakage", "expected an object")
        data["leakage"] = {
            "iterations": _num(lk.get("iterations", 20), "leakage.iterations", integer=True, positive=True),
            "k": _num(lk.get("k", 3), "leakage.k", integer=True, positive=True),
            "variance_threshold": _num(lk.get("variance_threshold"), "leakage.variance_threshold",
                                       nonneg=True, allow_none=True),
            "seed": _num(lk.get("seed", dual["seed"]), "leakage.seed", integer=True, nonneg=True),
        }
        out = raw.get("output", {})
        data["output"] = {"dir": str(out.get("dir", "out")) if isinstance(out, dict) else "out"}
        return cls(data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}", f"invalid JSON: {exc.msg}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
        return cls.from_json(text)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override the dual-init and Monte Carlo seeds."""
        data = json.loads(canonical_json(self.data))
        data["dual_init"]["seed"] = int(seed)
        data["leakage"]["seed"] = int(seed)
        return ExperimentConfig(data)

    # accessors

    @property
    def optimizers(self) -> list[str]:
        return self.data["optimizer"]

    def step_config(self) -> StepConfig:
        return StepConfig(**self.data["step"])

    def adversary(self) -> AdversaryModel:
        return AdversaryModel.from_dict(self.data.get("adversary", {}))

    def cells(self) -> list[Cell]:
        """Sweep cells in canonical order; the zero init ignores the variance."""
        d = self.data["dual_init"]
        out = []
        for opt in self.optimizers:
            for mode in d["modes"]:
                if mode == "zeros":
                    out.append(Cell(opt, mode, 0.0))
                    continue
                for var in d["variances"]:
                    out.append(Cell(opt, mode, var))
        return list(dict.fromkeys(out))

    def hash(self) -> str:
        return config_hash(self.data)


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats as their shortest repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


# building blocks ------------------------------------------------------------------------


def build_graph(cfg: ExperimentConfig) -> Graph:
    g = cfg.data["graph"]
    if "edges" in g:
        return from_edges(g["n"], [tuple(e) for e in g["edges"]])
    return generate_geometric_graph(g["n"], radius_sq=g["radius_sq"], seed=g["seed"])


def build_problem(cfg: ExperimentConfig, n: int) -> P.ProblemInstance:
    p = dict(cfg.data["problem"])
    kind, seed = p.pop("kind"), p.pop("seed")
    try:
        return P.make_problem(kind, n, seed=seed, **p)
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from exc


@dataclass
class Setup:
    graph: Graph
    problem: P.ProblemInstance
    cm: ConstraintMatrices
    step: StepConfig
    solution: tuple


def build_setup(cfg: ExperimentConfig) -> Setup:
    try:
        graph = build_graph(cfg)
    except ValueError as exc:
        raise ConfigError("graph", str(exc)) from exc
    problem = build_problem(cfg, graph.n)
    cm = build_constraint_matrices(graph, problem.u)
    return Setup(graph, problem, cm, cfg.step_config(), P.centralized_solution(problem))


def _run_cell(cfg: ExperimentConfig, setup: Setup, cell: Cell) -> Trace:
    basis = convergent_basis(setup.cm, dual_kind(cell.optimizer))
    d0 = sample_dual_init(dual_dim(setup.cm, cell.optimizer), cell.variance,
                          cfg.data["dual_init"]["seed"], mode=cell.mode, basis=basis)
    stop = cfg.data["stop"]
    try:
        trace = run(cell.optimizer, setup.problem, setup.cm, setup.step, d0,
                    max_rounds=stop["max_rounds"], primal_tol=stop["primal_tol"],
                    basis=basis, solution=setup.solution)
    except (DivergenceError, P.LocalSolverError) as exc:
        raise CellDivergenceError(cell, exc) from exc
    trace.metadata.update({
        "cell": cell.key, "mode": cell.mode, "variance": cell.variance,
        "config_hash": cfg.hash(), "dual_seed": cfg.data["dual_init"]["seed"],
        "graph_seed": cfg.data["graph"].get("seed"), "problem_seed": cfg.data["problem"]["seed"],
    })
    return trace


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[Trace]:
    """Run every cell; the result order follows ``cfg.cells()`` regardless of
    how many threads were used."""
    setup = build_setup(cfg)
    cells = cfg.cells()
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {c.key: pool.submit(_run_cell, cfg, setup, c) for c in cells}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {c.key: _run_cell(cfg, setup, c) for c in cells}
    return [results[c.key] for c in cells]


def write_outputs(cfg: ExperimentConfig, traces: list[Trace], out_dir: str | Path) -> Path:
    """Write ``<cell>.csv`` per trace and ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for tr in traces:
        text = tr.to_csv()
        name = f"{tr.metadata['cell']}.csv"
        (out / name).write_text(text)
        cells.append({
            "cell": tr.metadata["cell"], "optimizer": tr.metadata["optimizer"],
            "mode": tr.metadata["mode"], "variance": tr.metadata["variance"],
            "file": name, "rounds": tr.metadata["rounds"],
            "final_rel_err": tr.metadata["final_rel_err"],
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        })
    manifest = {"schema": MANIFEST_SCHEMA, "name": cfg.data["name"],
                "config_hash": cfg.hash(), "config": cfg.data, "cells": cells}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


# analysis ------------------------------------------------------------------------------------


class SlopeUndefinedError(ValueError):
    """The tail window contains non-positive errors."""


def fit_tail_line(trace, tail_fraction: float = 0.5, column: str = "primal_err_sq") -> tuple[float, float]:
    """Least-squares line ``(slope, intercept)`` of ``log10(column)`` against
    the round index over the final ``tail_fraction`` of the recorded rounds.

    ``trace`` is a :class:`Trace` or a 1-D array indexed by round.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if isinstance(trace, Trace):
        rounds, err = np.asarray(trace.rounds, float), trace.column(column)
    else:
        err = np.asarray(trace, float)
        rounds = np.arange(err.size, dtype=float)
    if err.size < 20:
        raise ValueError("need at least 20 rounds to fit a tail slope")
    start = err.size - max(2, int(math.ceil(err.size * tail_fraction)))
    r, e = rounds[start:], err[start:]
    if np.any(~(e > 0)):
        raise SlopeUndefinedError("errors reach zero inside the tail window; shrink it")
    slope, intercept = np.polyfit(r, np.log10(e), 1)
    return float(slope), float(intercept)


def fit_tail_slope(trace, tail_fraction: float = 0.5, column: str = "primal_err_sq") -> float:
    """Slope per round of ``log10(column)`` over the tail window."""
    return fit_tail_line(trace, tail_fraction, column)[0]
