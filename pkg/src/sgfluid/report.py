"""Study reports: structured text, CSV and SVG plots with byte-stable output."""
from __future__ import annotations

import csv as _csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Check", "StudyReport", "fit_slope", "fmt", "plot_emit", "write_report"]


def fmt(x) -> str:
    """Shortest round-tripping text for numbers; plain ``str`` otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def fit_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two levels to fit a slope")
    if np.any(ys <= 0) or np.any(xs <= 0):
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str  # "<=", ">=", "in"
    passed: bool
    detail: str = ""

    @classmethod
    def at_most(cls, name, value, threshold, detail=""):
        return cls(name, float(value), float(threshold), "<=", bool(value <= threshold), detail)

    @classmethod
    def at_least(cls, name, value, threshold, detail=""):
        return cls(name, float(value), float(threshold), ">=", bool(value >= threshold), detail)

    @classmethod
    def within(cls, name, value, lo, hi, detail=""):
        ok = bool(lo <= value <= hi)
        return cls(name, float(value), float("nan"), f"in [{fmt(float(lo))}, {fmt(float(hi))}]", ok, detail)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        rel = self.relation if self.relation.startswith("in") else f"{self.relation} {fmt(self.threshold)}"
        tail = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: {fmt(self.value)} {rel}{tail}"


@dataclass
class StudyReport:
    study: str
    config: dict
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    plot: dict | None = None  # {"x": col, "y": [cols], "xlabel":..., "ylabel":..., "guides": [orders]}
    extra_csv: dict = field(default_factory=dict)  # name -> csv text

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add_row(self, **row):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ValueError(f"row is missing columns {missing}")
        if "seeds" in self.columns and row["seeds"] < 1:
            raise ValueError("every metric row must carry its seed count")
        self.rows.append(row)

    def csv(self) -> str:
        buf = io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def text(self) -> str:
        lines = [f"study: {self.study}", f"status: {'PASS' if self.passed else 'FAIL'}", "", "[config]"]
        lines += [f"{k} = {fmt(v)}" for k, v in self.config.items()]
        lines += ["", "[metrics]", self.csv().rstrip("\n")]
        if self.slopes:
            lines += ["", "[slopes]"] + [f"{k} = {fmt(v)}" for k, v in sorted(self.slopes.items())]
        lines += ["", "[checks]"] + [c.line() for c in self.checks]
        return "\n".join(lines) + "\n"


def plot_emit(report: StudyReport, path: str | Path | None = None) -> bytes:
    """Log-log curves of the report's plot columns with fitted slopes.

    Output bytes are deterministic (fixed hash salt, no date metadata).
    """
    spec = report.plot
    if not spec:
        raise ValueError(f"report {report.study!r} has no plot specification")
    xs = [r[spec["x"]] for r in report.rows if spec.get("filter") is None or r.get(spec["filter"][0]) == spec["filter"][1]]
    if len(xs) < 2:
        raise ValueError("plotting needs a report with at least two levels")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "sgfluid", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for col in spec["y"]:
            sel = [r for r in report.rows if spec.get("filter") is None or r.get(spec["filter"][0]) == spec["filter"][1]]
            x = np.array([r[spec["x"]] for r in sel], dtype=float)
            y = np.array([r[col] for r in sel], dtype=float)
            slope = fit_slope(x, y)
            ax.loglog(x, y, "o-", label=f"{col} (slope {slope:.2f})")
            for order in spec.get("guides", []):
                g = y[0] * (x / x[0]) ** order
                ax.loglog(x, g, ":", color="0.5", linewidth=0.8)
                ax.annotate(f"order {order:g}", (x[-1], g[-1]), fontsize=7, color="0.4")
        ax.set_xlabel(spec.get("xlabel", spec["x"]))
        ax.set_ylabel(spec.get("ylabel", "residual"))
        ax.set_title(report.study, fontsize=9)
        ax.legend(fontsize=7)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    data = buf.getvalue()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def write_report(report: StudyReport, out_dir: str | Path, plots: bool = True) -> Path:
    """Write ``report.txt``, ``metrics.csv``, extra CSVs and ``plot.svg`` into ``out_dir/<study>``."""
    target = Path(out_dir) / report.study
    target.mkdir(parents=True, exist_ok=True)
    (target / "report.txt").write_text(report.text())
    (target / "metrics.csv").write_text(report.csv())
    for name, text in sorted(report.extra_csv.items()):
        (target / name).write_text(text)
    if plots and report.plot:
        try:
            plot_emit(report, target / "plot.svg")
        except ValueError:
            pass
    return target
