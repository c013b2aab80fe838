"""Deterministic rendering of measured results: explanation text, tables, SVG plots.

Nothing here calls a language model. The explanation paragraph is filled from
a fixed template, and a :class:`TextRenderer` seam is left so another backend
could produce the prose from the same slot values.
"""
from __future__ import annotations

import json
import math
import os
import string
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .analysis import AttributionVector, EmbeddingResult
from .errors import EmptyData, UnfilledSlot, UnsupportedFormat
from .experiments import MODEL_NAMES, TRANSFER_MODES, BenchmarkReport, SeparabilityReport, TransferReport
from .timeseries import RegionSeries, atomic_write_text

TABLE_FORMATS = ("csv", "json", "markdown")
BENCHMARK_COLUMNS = ("Model", "NRMSE", "CRPS", "Regret [USD/MWh]", "Inference-ms")
TRANSFER_COLUMNS = ("Model", "In-domain", "Zero-shot", "Fine-tune")

# decimal places per kind of number
PRECISION = {"nrmse": 4, "crps": 4, "regret": 4, "latency": 3, "fdr": 2, "ratio": 2, "pct": 2}


# --------------------------------------------------------------------------
# Canonical JSON
# --------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, no insignificant whitespace, shortest round-trip floats."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


# --------------------------------------------------------------------------
# Explanation paragraph
# --------------------------------------------------------------------------

HONEST_CLAUSE = ("All values are reported as measured, including any case in which the "
                 "corrected model trails a classical baseline.")
HARDWARE_CLAUSE = ("The kernels were evaluated by classical simulation, so no advantage from "
                   "quantum hardware is claimed.")

DEFAULT_TEXT = (
    "On the {region} test window the most accurate forecaster was {best_model} "
    "(NRMSE {best_nrmse}). The kernel-corrected AR model scored NRMSE {proposed_nrmse}, "
    "{nrmse_gap_pct}% relative to the strongest classical baseline, {best_classical} "
    "(NRMSE {best_classical_nrmse}). On the calm-versus-stormy probe the fidelity kernel "
    "reached a Fisher ratio of {fdr_quantum} against {fdr_rbf} for the tuned RBF kernel, "
    "a ratio of {fdr_ratio}. {honest_clause} {hardware_clause}\n"
)


@dataclass(frozen=True)
class ExplanationTemplate:
    """Template text with ``{slot}`` fields and per-slot decimal places.

    Slots absent from ``decimals`` are inserted as text.
    """

    text: str = DEFAULT_TEXT
    decimals: Mapping[str, int] = field(default_factory=lambda: {
        "best_nrmse": PRECISION["nrmse"], "proposed_nrmse": PRECISION["nrmse"],
        "best_classical_nrmse": PRECISION["nrmse"], "nrmse_gap_pct": PRECISION["pct"],
        "fdr_quantum": PRECISION["fdr"], "fdr_rbf": PRECISION["fdr"],
        "fdr_ratio": PRECISION["ratio"],
    })
    clauses: Mapping[str, str] = field(default_factory=lambda: {
        "honest_clause": HONEST_CLAUSE, "hardware_clause": HARDWARE_CLAUSE,
    })

    @property
    def slots(self) -> tuple[str, ...]:
        names = []
        for _, name, spec, conv in string.Formatter().parse(self.text):
            if name is None:
                continue
            if not name.isidentifier() or spec or conv:
                raise UnfilledSlot(f"unsupported template field {{{name}}}")
            if name not in names:
                names.append(name)
        return tuple(names)


class TextRenderer(Protocol):
    def render(self, template: ExplanationTemplate, values: Mapping[str, str]) -> str: ...


class SlotRenderer:
    """Plain slot substitution; the default renderer."""

    def render(self, template: ExplanationTemplate, values: Mapping[str, str]) -> str:
        missing = [s for s in template.slots if s not in values]
        if missing:
            raise UnfilledSlot(f"template slots without a value: {', '.join(missing)}")
        return template.text.format_map(values)


def _fmt(v: float, places: int) -> str:
    if not math.isfinite(v):
        return str(v)
    out = f"{v:.{places}f}"
    # avoid "-0.00"
    return out[1:] if out.startswith("-") and float(out) == 0 else out


def explanation_values(benchmark: BenchmarkReport, separability: SeparabilityReport,
                       template: ExplanationTemplate = ExplanationTemplate()) -> dict[str, str]:
    """Formatted slot values drawn from the two reports."""
    best, classical = benchmark.best_model, benchmark.best_classical
    raw = {
        "region": benchmark.fingerprint.get("region", "unnamed"),
        "best_model": best,
        "best_nrmse": benchmark.rows[best].nrmse,
        "best_classical": classical,
        "best_classical_nrmse": benchmark.rows[classical].nrmse,
        "proposed_nrmse": benchmark.rows["proposed"].nrmse,
        "nrmse_gap_pct": benchmark.proposed_gap_pct,
        "fdr_quantum": separability.fdr_quantum,
        "fdr_rbf": separability.fdr_rbf,
        "fdr_ratio": separability.ratio,
    }
    out = dict(template.clauses)
    for k, v in raw.items():
        out[k] = _fmt(float(v), template.decimals[k]) if k in template.decimals else str(v)
    return out


def render_explanation(benchmark: BenchmarkReport, separability: SeparabilityReport,
                       template: ExplanationTemplate = ExplanationTemplate(),
                       renderer: TextRenderer | None = None) -> str:
    """Fill the explanation template from measured numbers.

    Raises
    ------
    UnfilledSlot
        If the template names a slot with no value.
    """
    values = explanation_values(benchmark, separability, template)
    return (renderer or SlotRenderer()).render(template, values)


# --------------------------------------------------------------------------
# Tables
# --------------------------------------------------------------------------

def _table(report, include_latency: bool) -> tuple[tuple[str, ...], list[list[str]], str]:
    """Header, rows of formatted cells and a footnote for a report."""
    if isinstance(report, BenchmarkReport):
        cols = BENCHMARK_COLUMNS if include_latency else BENCHMARK_COLUMNS[:-1]
        rows = []
        for name in MODEL_NAMES:
            r = report.rows[name]
            cells = [name, _fmt(r.nrmse, 4), _fmt(r.crps, 4), _fmt(r.regret, 4)]
            if include_latency:
                cells.append(_fmt(r.latency_ms, 3))
            rows.append(cells)
        note = ("Regret [USD/MWh]: the customary label is kept, but the value is a unitless "
                "per-unit cost (2 per unit under-forecast, 1 per unit over-forecast) "
                "relative to perfect information; no price series is applied.")
        return cols, rows, note
    if isinstance(report, TransferReport):
        rows = [[m, *(_fmt(report.averages[m][k], 4) for k in TRANSFER_MODES)] for m in MODEL_NAMES]
        note = f"NRMSE averaged over {len(report.pairs) // len(MODEL_NAMES)} ordered region pairs."
        return TRANSFER_COLUMNS, rows, note
    if isinstance(report, SeparabilityReport):
        rows = [["quantum", _fmt(report.fdr_quantum, 2)], ["rbf", _fmt(report.fdr_rbf, 2)],
                ["ratio", _fmt(report.ratio, 2)]]
        return ("Kernel", "FDR"), rows, "Fisher ratio on the leading kernel-PCA component."
    if isinstance(report, AttributionVector):
        rows = [[n, _fmt(float(v), 6)] for n, v in zip(report.feature_names, report.importances)]
        return ("Feature", "Importance"), rows, f"Mean over {report.repetitions} permutations."
    raise UnsupportedFormat(f"no table layout for {type(report).__name__}")


def report_to_dict(report, include_latency: bool = True) -> dict:
    if isinstance(report, BenchmarkReport):
        return report.to_dict(include_latency)
    if hasattr(report, "to_dict"):
        return report.to_dict()
    if isinstance(report, Mapping):
        return dict(report)
    raise UnsupportedFormat(f"cannot serialise {type(report).__name__}")


def render_table(report, fmt: str, include_latency: bool = True) -> str:
    """Text of a report in ``fmt`` (csv, json or markdown)."""
    if fmt not in TABLE_FORMATS:
        raise UnsupportedFormat(f"unsupported table format {fmt!r}; expected one of {TABLE_FORMATS}")
    if fmt == "json":
        return canonical_json(report_to_dict(report, include_latency)) + "\n"
    cols, rows, note = _table(report, include_latency)
    if fmt == "csv":
        # same layout rules as the series CSVs: one header, comma separated, "\n" endings
        return "\n".join(",".join(r) for r in [list(cols), *rows]) + "\n"
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                 for i, (c, w) in enumerate(zip(cells, widths))) + " |"

    rule = "|" + "|".join(("-" * (w + 1) + ":") if i else ":" + "-" * (w + 1)
                          for i, w in enumerate(widths)) + "|"
    return "\n".join([line(cols), rule, *(line(r) for r in rows), "", note]) + "\n"


def emit_tables(report, fmt: str, path: str | os.PathLike, include_latency: bool = True) -> None:
    """Write :func:`render_table` output atomically to ``path``."""
    atomic_write_text(path, render_table(report, fmt, include_latency))


# --------------------------------------------------------------------------
# SVG plots
# --------------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
_W, _H, _PAD = 640, 360, 40


def _c(v: float) -> str:
    return f"{v:.2f}"


def _scale(values: np.ndarray, lo_px: float, hi_px: float):
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    return lambda v: lo_px + (v - lo) / span * (hi_px - lo_px)


def _frame(title: str, body: list[str]) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<title>{_escape(title)}</title>',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<path d="M{_PAD} {_PAD} V{_H - _PAD} H{_W - _PAD}" stroke="black" fill="none"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _legend(names: Sequence[str], colors: Sequence[str]) -> list[str]:
    out = []
    for k, (name, col) in enumerate(zip(names, colors)):
        y = _PAD + 14 * k
        out.append(f'<rect x="{_W - _PAD - 120}" y="{y - 8}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{_W - _PAD - 105}" y="{y}" font-size="11" '
                   f'font-family="sans-serif">{_escape(name)}</text>')
    return out


def line_svg(series: Mapping[str, Sequence[float]], title: str = "") -> str:
    """One polyline per named series, sharing the axes."""
    if not series or any(len(v) == 0 for v in series.values()):
        raise EmptyData("nothing to plot")
    arrays = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    n = max(len(a) for a in arrays.values())
    sx = _scale(np.arange(max(n, 2), dtype=float), _PAD, _W - _PAD)
    sy = _scale(np.concatenate(list(arrays.values())), _H - _PAD, _PAD)
    body, colors = [], []
    for k, (name, a) in enumerate(arrays.items()):
        col = PALETTE[k % len(PALETTE)]
        colors.append(col)
        pts = " ".join(f"{_c(sx(i))},{_c(sy(v))}" for i, v in enumerate(a))
        body.append(f'<polyline data-series="{_escape(name)}" fill="none" stroke="{col}" '
                    f'stroke-width="1.2" points="{pts}"/>')
    return _frame(title, body + _legend(list(arrays), colors))


def scatter_svg(points, labels, title: str = "") -> str:
    """2-D scatter with one ``<g>`` marker group per distinct label."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise EmptyData("nothing to plot")
    if P.shape[1] == 1:
        P = np.column_stack([P[:, 0], np.zeros(len(P))])
    lab = np.asarray(labels)
    if len(lab) != len(P):
        raise EmptyData("labels must match the number of points")
    sx = _scale(P[:, 0], _PAD, _W - _PAD)
    sy = _scale(P[:, 1], _H - _PAD, _PAD)
    body, names, colors = [], [], []
    for k, cls in enumerate(np.unique(lab)):
        col = PALETTE[k % len(PALETTE)]
        name = _label_text(cls)
        names.append(name)
        colors.append(col)
        body.append(f'<g class="group" data-label="{_escape(name)}" fill="{col}">')
        body.extend(f'<circle cx="{_c(sx(x))}" cy="{_c(sy(y))}" r="2.5"/>'
                    for x, y in P[lab == cls, :2])
        body.append("</g>")
    return _frame(title, body + _legend(names, colors))


def _label_text(v) -> str:
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def emit_plots(data, path: str | os.PathLike, labels=None, title: str = "") -> None:
    """Write an SVG for a series, a mapping of series, or an embedding.

    Parameters
    ----------
    data : RegionSeries, array, mapping of name -> array, or EmbeddingResult
        Series become line plots (a mapping gives forecast-vs-actual style
        overlays). Embeddings, or 2-D arrays with ``labels``, become scatters.
    labels : array, optional
        Class label per embedded point.
    """
    if isinstance(data, EmbeddingResult):
        if labels is None:
            labels = np.zeros(len(data.projections))
        svg = scatter_svg(data.projections, labels, title)
    elif labels is not None:
        svg = scatter_svg(data, labels, title)
    elif isinstance(data, RegionSeries):
        svg = line_svg({data.region_id: data.y}, title or data.region_id)
    elif isinstance(data, Mapping):
        svg = line_svg(data, title)
    else:
        a = np.asarray(data, dtype=float)
        if a.ndim != 1:
            raise EmptyData("line plots need 1-D data; pass labels for a scatter")
        svg = line_svg({"series": a}, title)
    atomic_write_text(path, svg)
