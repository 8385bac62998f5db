"""Deterministic SVG line charts of trace CSVs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace import COLUMNS, TraceFormatError, read_trace_columns

X_COLUMNS = ("transmissions", "round")


class PlotSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    inputs: tuple[Path, ...]
    labels: tuple[str, ...]
    output: Path
    x: str = "transmissions"
    y: str = "primal_err_sq"
    log_y: bool = True
    title: str = ""

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "PlotSpec":
        if not isinstance(d, dict):
            raise PlotSpecError("plot spec must be a JSON object")
        inputs = d.get("inputs")
        if not isinstance(inputs, list) or not inputs:
            raise PlotSpecError("inputs: expected a non-empty list")
        paths, labels = [], []
        for k, item in enumerate(inputs):
            if isinstance(item, str):
                item = {"path": item}
            if not isinstance(item, dict) or "path" not in item:
                raise PlotSpecError(f"inputs[{k}]: expected a path or {{'path', 'label'}}")
            p = Path(item["path"])
            paths.append(p if p.is_absolute() else base / p)
            labels.append(str(item.get("label", p.stem)))
        x, y = d.get("x", "transmissions"), d.get("y", "primal_err_sq")
        if x not in X_COLUMNS:
            raise PlotSpecError(f"x: expected one of {X_COLUMNS}")
        if y not in COLUMNS:
            raise PlotSpecError(f"y: expected one of {COLUMNS}")
        out = Path(d.get("output", "plot.svg"))
        return cls(tuple(paths), tuple(labels), out if out.is_absolute() else base / out,
                   x, y, bool(d.get("log_y", True)), str(d.get("title", "")))

    @classmethod
    def load(cls, path: str | Path) -> "PlotSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PlotSpecError(f"cannot read plot spec {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)


def render(spec: PlotSpec, output: str | Path | None = None) -> Path:
    """Draw every input series; the same inputs give the same SVG bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = []
    for path, label in zip(spec.inputs, spec.labels):
        try:
            cols = read_trace_columns(path)
        except OSError as exc:
            raise PlotSpecError(f"cannot read {path}: {exc}") from exc
        except TraceFormatError as exc:
            raise PlotSpecError(str(exc)) from exc
        for col in (spec.x, spec.y):
            if col not in cols:
                raise PlotSpecError(f"{path}: missing column {col!r}")
        yv = cols[spec.y].copy()
        if spec.log_y:
            yv[~(yv > 0)] = np.nan
        series.append((cols[spec.x], yv, label))

    out = Path(output) if output is not None else spec.output
    out.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "subspace-perturb", "svg.fonttype": "none",
                                "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for xv, yv, label in series:
            ax.plot(xv, yv, label=label, linewidth=1.2)
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(spec.x)
        ax.set_ylabel(spec.y)
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(fontsize="small")
        ax.grid(True, which="major", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return out
