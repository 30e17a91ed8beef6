"""Error metrics, error reports, run records and plot-ready CSV export."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import SpModel
from .refsolver import GridSolution

__all__ = [
    "ErrorReport",
    "ProblemMismatch",
    "RunRecord",
    "ZeroNormError",
    "evaluate",
    "format_table",
    "linf",
    "plot_data",
    "relative_l1",
    "relative_l2",
]


class ZeroNormError(ValueError):
    pass


class ProblemMismatch(ValueError):
    pass


def _pair(pred, exact):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    exact = np.asarray(exact, dtype=np.float64).ravel()
    if pred.shape != exact.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {exact.size}")
    return pred, exact


def _l2(v) -> float:
    # scaled so tiny or huge entries neither underflow nor overflow when squared
    s = float(np.max(np.abs(v))) if v.size else 0.0
    if s == 0.0:
        return 0.0
    w = v / s
    return s * math.sqrt(float(w @ w))


def relative_l2(pred, exact) -> float:
    pred, exact = _pair(pred, exact)
    den = _l2(exact)
    if den == 0:
        raise ZeroNormError("exact field has zero L2 norm")
    return _l2(pred - exact) / den


def relative_l1(pred, exact) -> float:
    pred, exact = _pair(pred, exact)
    den = float(np.sum(np.abs(exact)))
    if den == 0:
        raise ZeroNormError("exact field has zero L1 norm")
    return float(np.sum(np.abs(pred - exact))) / den


def linf(pred, exact) -> float:
    """Unnormalised maximum absolute error."""
    pred, exact = _pair(pred, exact)
    return float(np.max(np.abs(pred - exact))) if pred.size else 0.0


@dataclass
class ErrorReport:
    relative_l2: float
    relative_l1: float
    linf: float
    per_component: dict
    grid: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def from_dict(cls, d) -> "ErrorReport":
        return cls(**d)


def _norms(pred, exact):
    return {
        "relative_l2": relative_l2(pred, exact),
        "relative_l1": relative_l1(pred, exact),
        "linf": linf(pred, exact),
    }


def predict_on_grid(model: SpModel, ref: GridSolution, chunk: int = 65536) -> np.ndarray:
    """Model values at every reference grid point, shaped like ``ref.values``."""
    T, X = np.meshgrid(ref.times, ref.positions, indexing="ij")
    t, x = T.ravel(), X.ravel()
    out = np.empty((t.size, model.components))
    for i in range(0, t.size, chunk):
        out[i : i + chunk] = model.predict(t[i : i + chunk], x[i : i + chunk])
    return out.reshape(ref.values.shape)


def evaluate(model: SpModel, ref: GridSolution, metadata: dict | None = None) -> ErrorReport:
    """Pooled and per-component error norms of ``model`` on the reference grid."""
    if model.problem.id != ref.problem_id:
        raise ProblemMismatch(
            f"model is for {model.problem.id!r} but reference is for {ref.problem_id!r}"
        )
    pred = predict_on_grid(model, ref)
    per = {}
    for c, name in enumerate(ref.component_names):
        try:
            per[name] = _norms(pred[..., c], ref.values[..., c])
        except ZeroNormError:
            per[name] = {"relative_l2": None, "relative_l1": None, "linf": linf(pred[..., c], ref.values[..., c])}
    pooled = _norms(pred, ref.values)
    grid = {
        "n_times": int(len(ref.times)),
        "n_positions": int(len(ref.positions)),
        "t_range": [float(ref.times[0]), float(ref.times[-1])],
        "x_range": [float(ref.positions[0]), float(ref.positions[-1])],
    }
    return ErrorReport(
        pooled["relative_l2"], pooled["relative_l1"], pooled["linf"], per, grid, dict(metadata or {})
    )


def format_table(columns: dict, title: str = "") -> str:
    """Plain-text comparison table: one column per method, one row per norm."""
    names = list(columns)
    rows = [("Relative L2", "relative_l2"), ("Relative L1", "relative_l1"), ("L_inf norm", "linf")]
    w0 = max(len(r[0]) for r in rows)
    widths = [max(len(n), 9) for n in names]
    lines = []
    if title:
        lines.append(title)
    lines.append(" | ".join([" " * w0] + [n.rjust(w) for n, w in zip(names, widths)]))
    lines.append("-+-".join(["-" * w0] + ["-" * w for w in widths]))
    for label, key in rows:
        cells = []
        for n, w in zip(names, widths):
            rep = columns[n]
            v = getattr(rep, key) if isinstance(rep, ErrorReport) else rep[key]
            cells.append(f"{v:.2e}".rjust(w))
        lines.append(" | ".join([label.ljust(w0)] + cells))
    return "\n".join(lines) + "\n"


def plot_data(model: SpModel, ref: GridSolution, out_dir) -> list[Path]:
    """Write exact / predicted / absolute-error fields and five time slices as CSV."""
    if model.problem.id != ref.problem_id:
        raise ProblemMismatch(
            f"model is for {model.problem.id!r} but reference is for {ref.problem_id!r}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pred = predict_on_grid(model, ref)
    err = np.abs(pred - ref.values)
    names = list(ref.component_names)
    T, X = np.meshgrid(ref.times, ref.positions, indexing="ij")
    written = []
    for label, arr in (("exact", ref.values), ("predicted", pred), ("abs_error", err)):
        path = out / f"field_{label}.csv"
        flat = np.column_stack([T.ravel(), X.ravel(), arr.reshape(-1, len(names))])
        np.savetxt(path, flat, delimiter=",", header=",".join(["t", "x"] + names),
                   comments="", fmt="%.17g")
        written.append(path)
    Tmax = ref.domain.T
    path = out / "slices.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        cols = []
        for n in names:
            cols += [f"{n}_exact", f"{n}_predicted", f"{n}_abs_error"]
        w.writerow(["t_target", "t", "x"] + cols)
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            target = frac * Tmax
            i = int(np.argmin(np.abs(ref.times - target)))
            for j, x in enumerate(ref.positions):
                row = [target, ref.times[i], x]
                for c in range(len(names)):
                    row += [ref.values[i, j, c], pred[i, j, c], err[i, j, c]]
                w.writerow([repr(float(v)) for v in row])
    written.append(path)
    return written


@dataclass
class RunRecord:
    problem_id: str
    problem: dict
    configs: dict
    error_report: dict | None
    artifacts: dict
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def save(self, path) -> Path:
        missing = [k for k, p in self.artifacts.items() if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"run record references missing artifacts: {missing}")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2))
        return path

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text()))
