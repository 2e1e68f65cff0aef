"""Report artifacts: CSV round trips, deterministic bytes, SVG structure,
and the matplotlib renderings."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tempcal import figures, reports
from tempcal.metrics import PredictionBatch, ece, reliability_table
from tempcal.train import EpochDiagnostics, MetricReport, MetricSet


def make_batch(rng, n=120):
    probs = rng.dirichlet(np.ones(4), size=n)
    labels = rng.integers(0, 4, size=n)
    return PredictionBatch.from_probs(probs, labels)


def perfect_batch():
    conf = np.array([0.75] * 8)
    correct = np.array([True] * 6 + [False] * 2)
    return PredictionBatch(confidence=conf, predicted_class=np.zeros(8, dtype=np.intp),
                           true_class=np.where(correct, 0, 1).astype(np.intp), correct=correct)


def make_report(batch):
    ms = MetricSet.from_batch(batch)
    return MetricReport(pre=ms, post=ms, t_star=1.3, val_ece_at_t_star=0.05,
                        samples=batch.n, bins=15)


class TestReliabilityFiles:
    def test_csv_round_trip_reproduces_bins(self, rng, tmp_path):
        batch = make_batch(rng)
        csv_path = str(tmp_path / "rel.csv")
        svg_path = str(tmp_path / "rel.svg")
        bins, _ = reports.emit_reliability(batch, 15, csv_path, svg_path)
        back = reports.read_reliability_csv(csv_path)
        assert back == bins

    def test_perfect_calibration_zero_gaps(self, tmp_path):
        csv_path = str(tmp_path / "rel.csv")
        reports.emit_reliability(perfect_batch(), 4, csv_path, str(tmp_path / "rel.svg"))
        for b in reports.read_reliability_csv(csv_path):
            assert b.gap == 0.0

    def test_svg_well_formed_with_m_bars(self, rng, tmp_path):
        for m in (5, 15):
            svg_path = str(tmp_path / f"rel{m}.svg")
            reports.emit_reliability(make_batch(rng), m, str(tmp_path / "x.csv"), svg_path)
            root = ET.parse(svg_path).getroot()
            assert root.tag.endswith("svg")
            bars = [el for el in root.iter() if el.get("class") == "bar"]
            assert len(bars) == m

    def test_deterministic_bytes(self, tmp_path):
        rng1 = np.random.default_rng(5)
        rng2 = np.random.default_rng(5)
        paths = []
        for tag, r in (("a", rng1), ("b", rng2)):
            csv_path = str(tmp_path / f"{tag}.csv")
            svg_path = str(tmp_path / f"{tag}.svg")
            reports.emit_reliability(make_batch(r), 15, csv_path, svg_path)
            paths.append((csv_path, svg_path))
        for f1, f2 in zip(paths[0], paths[1]):
            assert open(f1, "rb").read() == open(f2, "rb").read()

    def test_diagram_summary_matches_ece(self, rng, tmp_path):
        batch = make_batch(rng)
        _, summary = reports.emit_reliability(batch, 15, str(tmp_path / "c.csv"), str(tmp_path / "s.svg"))
        assert summary["ece"] == ece(batch, 15)


class TestReportCsv:
    def test_rows_cover_both_phases(self, rng, tmp_path):
        report = make_report(make_batch(rng))
        path = str(tmp_path / "report.csv")
        reports.write_report_csv(report, path)
        lines = open(path).read().splitlines()
        assert lines[0] == "metric,phase,value"
        assert sum(1 for l in lines if ",pre_T," in l) == 10
        assert sum(1 for l in lines if ",post_T," in l) == 10
        assert any(l.startswith("t_star,fit,") for l in lines)

    def test_deterministic_bytes(self, tmp_path):
        r1 = make_report(make_batch(np.random.default_rng(9)))
        r2 = make_report(make_batch(np.random.default_rng(9)))
        p1, p2 = str(tmp_path / "r1.csv"), str(tmp_path / "r2.csv")
        reports.write_report_csv(r1, p1)
        reports.write_report_csv(r2, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestDiagnosticsCsv:
    def test_header_and_rows(self, tmp_path):
        diags = [EpochDiagnostics(epoch=1, mean_s=1.0, cv_s=0.0, mean_cls_norm=2.0,
                                  pearson=0.5, spearman=0.4, train_loss=2.0, val_ece=0.1),
                 EpochDiagnostics(epoch=2, mean_s=1.1, cv_s=0.01, mean_cls_norm=2.1,
                                  pearson=0.6, spearman=0.5, train_loss=1.5, val_ece=0.08)]
        path = str(tmp_path / "diag.csv")
        reports.write_diagnostics_csv(diags, path)
        lines = open(path).read().splitlines()
        assert lines[0] == reports.DIAGNOSTICS_HEADER
        assert len(lines) == 3
        assert lines[1].startswith("1,1.0,0.0,")


class TestSummaryAndFigures:
    def test_summary_text(self, rng, tmp_path):
        report = make_report(make_batch(rng))
        path = str(tmp_path / "summary.txt")
        reports.write_summary(path, report, header_lines=("test run",))
        text = open(path).read()
        assert "fitted temperature" in text and "ece" in text

    def test_figures_render_to_files(self, rng, tmp_path):
        batch = make_batch(rng)
        bins, summary = reliability_table(batch, 15)
        rel_png = tmp_path / "rel.png"
        figures.save_reliability_figure(bins, summary, str(rel_png))
        assert rel_png.stat().st_size > 1000

        diags = [EpochDiagnostics(e, 1.0 + e / 10, 0.01 * e, 2.0, 0.5, 0.5, 2.0 / e, 0.1)
                 for e in range(1, 6)]
        dyn_png = tmp_path / "dyn.png"
        figures.save_scale_dynamics_figure(diags, str(dyn_png))
        assert dyn_png.stat().st_size > 1000

        from tempcal.train import DiagnosticsTable
        rows = np.column_stack([rng.uniform(1, 5, 50), rng.uniform(0.3, 1.0, 50), np.ones(50)])
        table = DiagnosticsTable(rows=rows, curve=[(1.0, 2.0, 25, 0.5), (2.0, 3.0, 25, 0.7)],
                                 pearson=0.4, spearman=0.5,
                                 scale_summary={"mean": 1.0, "cv": 0.0, "min": 1.0, "max": 1.0})
        nc_png = tmp_path / "nc.png"
        figures.save_norm_confidence_figure(table, str(nc_png))
        assert nc_png.stat().st_size > 1000
