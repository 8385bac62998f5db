"""Per-round run records and their CSV form."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "subspace-perturb-trace/1"
COLUMNS = ("round", "transmissions", "primal_err_sq", "conv_dual_err_sq", "nonconv_dual_norm_sq")


class TraceFormatError(ValueError):
    pass


@dataclass
class Trace:
    rounds: list[int] = field(default_factory=list)
    transmissions: list[int] = field(default_factory=list)
    primal_err_sq: list[float] = field(default_factory=list)
    conv_dual_err_sq: list[float] = field(default_factory=list)
    nonconv_dual_norm_sq: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    x_history: list[np.ndarray] | None = None
    nonconv_history: list[np.ndarray] | None = None
    final_state: object = None

    def append(self, k, tx, perr, cerr, nnorm):
        if self.rounds and k <= self.rounds[-1]:
            raise ValueError("rounds must be strictly increasing")
        if self.transmissions and tx < self.transmissions[-1]:
            raise ValueError("transmissions must be non-decreasing")
        self.rounds.append(int(k))
        self.transmissions.append(int(tx))
        self.primal_err_sq.append(float(perr))
        self.conv_dual_err_sq.append(float(cerr))
        self.nonconv_dual_norm_sq.append(float(nnorm))

    def __len__(self) -> int:
        return len(self.rounds)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        return np.asarray(getattr(self, name), dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in zip(self.rounds, self.transmissions, self.primal_err_sq,
                       self.conv_dual_err_sq, self.nonconv_dual_norm_sq):
            w.writerow([row[0], row[1]] + [_fmt(v) for v in row[2:]])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def read_trace_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Read a trace CSV (schema comment lines allowed) into named columns."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise TraceFormatError(f"{path}: empty trace file")
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    if not body:
        raise TraceFormatError(f"{path}: trace has a header but no rows")
    cols = {}
    for idx, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[idx]) for r in body])
        except (ValueError, IndexError) as exc:
            raise TraceFormatError(f"{path}: bad value in column {name!r}: {exc}") from exc
    return cols
