"""Tests for tabular output."""

import io
import json
import os

import pandas as pd
import pytest

from src.coupled import decode_pair
from src.enumerator import enumerate_mu
from src.export import (
    ENUMERATE_COLUMNS,
    SIMULATE_COLUMNS,
    TRACE_COLUMNS,
    ExportError,
    read_table,
    render_trace,
    write_table,
    write_trace,
)
from src.models.mutation import MutationPair, TraceDetail


@pytest.fixture
def trace(worked_example):
    """Full trace of the split-then-merge pair at mu = 1."""
    return decode_pair(MutationPair(worked_example, 1, 1), TraceDetail.FULL)


class TestWriteTable:
    """Test cases for result tables."""

    def test_csv_round_trip(self, tmp_path):
        """Test writing and reading back an enumeration table."""
        path = tmp_path / "exact.csv"
        write_table(enumerate_mu(4, 1).to_rows(), ENUMERATE_COLUMNS, "csv", out=path)
        frame = read_table(path)
        assert list(frame.columns) == ENUMERATE_COLUMNS
        assert frame["ell"].tolist() == [1, 2, 3]
        assert frame["count"].sum() == 48

    def test_csv_to_stream(self):
        """Test that rows go to the stream without an output path."""
        buffer = io.StringIO()
        write_table(enumerate_mu(3, 1).to_rows(), ENUMERATE_COLUMNS, "csv", stream=buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == ",".join(ENUMERATE_COLUMNS)
        assert len(lines) == 3
        frame = pd.read_csv(io.StringIO(buffer.getvalue()))
        assert frame["prob_rational"].tolist() == ["1/1", "0/1"]

    def test_json_lines(self):
        """Test one JSON object per row with nulls for missing values."""
        rows = [{"n": 10, "mu": 3, "alpha": None, "ell": 1, "count": 4, "samples": 5,
                 "p_hat": 0.8, "ci_low": 0.3, "ci_high": 0.9, "seed": 0}]
        buffer = io.StringIO()
        write_table(rows, SIMULATE_COLUMNS, "json", stream=buffer)
        lines = buffer.getvalue().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert list(record) == SIMULATE_COLUMNS
        assert record["alpha"] is None
        assert record["count"] == 4

    def test_empty_json(self):
        """Test that no rows render as empty text."""
        buffer = io.StringIO()
        write_table([], SIMULATE_COLUMNS, "json", stream=buffer)
        assert buffer.getvalue() == ""

    def test_json_lines_end_with_one_newline(self):
        """Test that every JSON line parses and no blank line follows the last record."""
        buffer = io.StringIO()
        write_table(enumerate_mu(3, 1).to_rows(), ENUMERATE_COLUMNS, "json", stream=buffer)
        text = buffer.getvalue()
        assert text.endswith("}\n")
        assert not text.endswith("\n\n")
        records = [json.loads(line) for line in text.split("\n")[:-1]]
        assert [r["ell"] for r in records] == [1, 2]

    def test_xlsx_needs_path(self):
        """Test that xlsx output cannot go to a stream."""
        with pytest.raises(ExportError, match="needs --out"):
            write_table([], ENUMERATE_COLUMNS, "xlsx", stream=io.StringIO())

    def test_xlsx_round_trip(self, tmp_path):
        """Test writing and reading a workbook."""
        path = tmp_path / "exact.xlsx"
        write_table(enumerate_mu(4, 2).to_rows(), ENUMERATE_COLUMNS, "xlsx", out=path)
        frame = read_table(path, "xlsx")
        assert list(frame.columns) == ENUMERATE_COLUMNS
        assert frame["total"].tolist() == [48, 48, 48]

    def test_unknown_format(self):
        """Test that other formats are rejected."""
        with pytest.raises(ExportError, match="'parquet'"):
            write_table([], ENUMERATE_COLUMNS, "parquet", stream=io.StringIO())
        with pytest.raises(ExportError, match="Unknown format"):
            read_table("results.parquet", "parquet")


class TestTraceOutput:
    """Test cases for trace rendering."""

    def test_json(self, trace):
        """Test the header object followed by one object per step."""
        text = render_trace(trace, "json")
        lines = text.splitlines()
        header = json.loads(lines[0])
        assert header["n"] == 7
        assert header["mu"] == 1
        assert header["delta_total"] == 1
        assert header["detail"] == "full"
        assert not text.endswith("\n\n")
        steps = [json.loads(line) for line in lines[1:]]
        assert [s["j"] for s in steps] == [5, 4, 3, 2, 1, 0]
        assert list(steps[0]) == TRACE_COLUMNS
        assert steps[-1]["case"] == "2a"
        assert steps[4]["z"] == 4 and steps[4]["zstar"] == 1

    def test_csv(self, trace, tmp_path):
        """Test comment header lines followed by the step table."""
        text = render_trace(trace, "csv")
        assert text.startswith("# n=7\n# mu=1\n")
        path = tmp_path / "trace.csv"
        write_trace(trace, "csv", out=path)
        frame = read_table(path)
        assert list(frame.columns) == TRACE_COLUMNS
        assert frame["delta_j"].tolist() == [0, 0, 0, 0, 1, 0]

    def test_xlsx(self, trace, tmp_path):
        """Test the header and steps sheets."""
        path = tmp_path / "trace.xlsx"
        write_trace(trace, "xlsx", out=path)
        sheets = pd.read_excel(path, sheet_name=None, engine="openpyxl")
        assert set(sheets) == {"header", "steps"}
        assert len(sheets["steps"]) == 6
        assert sheets["header"]["delta_total"].tolist() == [1]

    def test_xlsx_needs_path(self, trace):
        """Test that a workbook cannot go to a stream."""
        with pytest.raises(ExportError, match="needs --out"):
            write_trace(trace, "xlsx", stream=io.StringIO())


class TestFixtures:
    """Test cases for the exact fixture export script."""

    def test_export_fixtures(self, tmp_path):
        """Test one CSV per order with every mu and the marginal."""
        from export_fixtures import export_fixtures

        paths = export_fixtures(max_n=4, output_dir=str(tmp_path), xlsx=False)
        assert [os.path.basename(p) for p in paths] == ["exact_n3.csv", "exact_n4.csv"]
        frame = read_table(tmp_path / "exact_n4.csv")
        assert frame["mu"].astype(str).tolist() == ["1"] * 3 + ["2"] * 3 + ["all"] * 3

    def test_each_mu_enumerated_once(self, tmp_path, monkeypatch):
        """Test that the marginal is pooled from the per-mu tables."""
        import export_fixtures

        calls = []
        original = export_fixtures.enumerate_mu

        def counting(n, mu, **kwargs):
            calls.append((n, mu))
            return original(n, mu, **kwargs)

        monkeypatch.setattr(export_fixtures, "enumerate_mu", counting)
        export_fixtures.export_fixtures(max_n=5, output_dir=str(tmp_path), xlsx=False)
        assert calls == [(3, 1), (4, 1), (4, 2), (5, 1), (5, 2), (5, 3)]
        frame = read_table(tmp_path / "exact_n5.csv")
        marginal = frame[frame["mu"].astype(str) == "all"]
        assert marginal["total"].tolist() == [1500] * 4
