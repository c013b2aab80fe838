import json
import re

import numpy as np
import pytest

from qkforecast.analysis import AttributionVector, EmbeddingResult, MetricsRecord
from qkforecast.errors import EmptyData, UnfilledSlot, UnsupportedFormat
from qkforecast.experiments import MODEL_NAMES, BenchmarkReport, SeparabilityReport, TransferReport
from qkforecast.report import (
    ExplanationTemplate,
    canonical_json,
    emit_plots,
    emit_tables,
    render_explanation,
    render_table,
)

from conftest import make_series

NRMSE = {"persistence": 0.2981, "ar24": 0.0954, "gbt": 0.1203, "lstm": 0.1164, "proposed": 0.0988}


def benchmark(nrmse=NRMSE):
    rows = {m: MetricsRecord(nrmse[m], nrmse[m] * 0.8, nrmse[m] * 1.3, 0.004 * (i + 1))
            for i, m in enumerate(MODEL_NAMES)}
    return BenchmarkReport(rows, {"region": "north", "seed": 7, "n_train": 10})


def separability(q=7.18, r=0.46):
    return SeparabilityReport(q, r, q / r, {"calm": 200, "stormy": 200}, {"rbf": {"gamma": 1.0}})


def transfer():
    pairs = []
    for s in ("a", "b", "c"):
        for t in ("a", "b", "c"):
            for k, m in enumerate(MODEL_NAMES):
                v = 0.1 + 0.01 * k
                pairs.append({"source": s, "target": t, "model": m, "in_domain": v,
                              "zero_shot": v if s == t else v + 0.02, "fine_tune": v + 0.01})
    return TransferReport(("a", "b", "c"), pairs, TransferReport.average(pairs))


class TestExplanation:
    def test_names_best_model_and_values(self):
        text = render_explanation(benchmark(), separability())
        assert "ar24" in text and "0.0954" in text
        assert "7.18" in text and "0.46" in text
        assert "no advantage from quantum hardware" in text
        assert "reported as measured" in text

    def test_deterministic(self):
        assert render_explanation(benchmark(), separability()) == \
            render_explanation(benchmark(), separability())

    def test_unfilled_slot(self):
        with pytest.raises(UnfilledSlot):
            render_explanation(benchmark(), separability(), ExplanationTemplate("{mystery} x"))

    def test_custom_renderer(self):
        class Upper:
            def render(self, template, values):
                return values["best_model"].upper()
        assert render_explanation(benchmark(), separability(), renderer=Upper()) == "AR24"

    def test_numbers_auditable_against_json(self):
        b, s = benchmark(), separability()
        text = render_explanation(b, s)
        doc = json.loads(render_table(b, "json")) | json.loads(render_table(s, "json"))

        def leaves(o):
            if isinstance(o, dict):
                for v in o.values():
                    yield from leaves(v)
            elif isinstance(o, list):
                for v in o:
                    yield from leaves(v)
            elif isinstance(o, float):
                yield o

        values = list(leaves(doc))
        for num in re.findall(r"-?\d+\.\d+", text):
            places = len(num.split(".")[1])
            assert any(f"{v:.{places}f}" == num for v in values), num

    def test_gap_rendered(self):
        text = render_explanation(benchmark(), separability())
        gap = 100 * (0.0988 - 0.0954) / 0.0954
        assert f"{gap:.2f}%" in text


class TestTables:
    def test_markdown_benchmark(self):
        md = render_table(benchmark(), "markdown")
        lines = md.splitlines()
        assert lines[0].split("|")[1].strip() == "Model"
        assert [c.strip() for c in lines[0].strip("|").split("|")] == \
            ["Model", "NRMSE", "CRPS", "Regret [USD/MWh]", "Inference-ms"]
        data = [l for l in lines[2:] if l.startswith("|")]
        assert len(data) == 5
        assert "0.0954" in data[1] and "0.008" in data[1]

    def test_json_round_trip(self, tmp_path):
        for rep in (benchmark(), transfer(), separability()):
            text = render_table(rep, "json")
            assert canonical_json(json.loads(text)) + "\n" == text
            assert " " not in text.replace("ordered region", "")
        again = BenchmarkReport.from_dict(json.loads(render_table(benchmark(), "json")))
        assert again.rows == benchmark().rows
        tr = TransferReport.from_dict(json.loads(render_table(transfer(), "json")))
        assert tr.averages == transfer().averages

    def test_csv(self):
        text = render_table(benchmark(), "csv", include_latency=False)
        lines = text.split("\n")
        assert lines[0] == "Model,NRMSE,CRPS,Regret [USD/MWh]"
        assert len(lines) == 7 and lines[-1] == ""

    def test_transfer_and_attribution_tables(self):
        md = render_table(transfer(), "markdown")
        assert "Zero-shot" in md and "9 ordered region pairs" in md
        vec = AttributionVector(np.array([0.5, 0.0]), 3, 1.0, ("a", "b"))
        assert "| a " in render_table(vec, "markdown")

    def test_unsupported(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            emit_tables(benchmark(), "xlsx", tmp_path / "x")
        with pytest.raises(UnsupportedFormat):
            render_table(object(), "markdown")

    def test_emit_writes(self, tmp_path):
        emit_tables(benchmark(), "markdown", tmp_path / "b.md")
        assert (tmp_path / "b.md").read_text() == render_table(benchmark(), "markdown")


class TestPlots:
    def test_one_polyline(self, tmp_path):
        emit_plots(make_series(np.linspace(0, 1, 10)), tmp_path / "s.svg")
        svg = (tmp_path / "s.svg").read_text()
        lines = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)
        assert len(lines) == 1 and len(lines[0].split()) == 10
        assert svg.startswith("<?xml") and 'version="1.1"' in svg

    def test_forecast_overlay(self, tmp_path):
        emit_plots({"actual": [0.1, 0.2, 0.3], "ar24": [0.1, 0.15, 0.25]}, tmp_path / "f.svg")
        assert (tmp_path / "f.svg").read_text().count("<polyline") == 2

    def test_scatter_groups(self, tmp_path):
        emb = EmbeddingResult(np.random.default_rng(0).normal(size=(12, 2)), np.array([2.0, 1.0]))
        labels = np.r_[np.zeros(6), np.ones(6)]
        emit_plots(emb, tmp_path / "e.svg", labels=labels)
        svg = (tmp_path / "e.svg").read_text()
        groups = re.findall(r'<g class="group" data-label="([^"]*)"', svg)
        assert groups == ["0", "1"] and svg.count("<circle") == 12

    def test_deterministic(self, tmp_path):
        data = {"y": np.sin(np.arange(30.0))}
        emit_plots(data, tmp_path / "a.svg")
        emit_plots(data, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyData):
            emit_plots(np.array([]), tmp_path / "x.svg")
        with pytest.raises(EmptyData):
            emit_plots({}, tmp_path / "x.svg")
        assert not (tmp_path / "x.svg").exists()
