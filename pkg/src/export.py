"""Tabular output for PruferLab results (CSV, JSON lines, XLSX via pandas)."""

import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

import pandas as pd

from .models.mutation import DecodeTrace

logger = logging.getLogger(__name__)

ENUMERATE_COLUMNS = ["n", "mu", "ell", "count", "total", "prob_rational", "prob_decimal"]
SIMULATE_COLUMNS = ["n", "mu", "alpha", "ell", "count", "samples", "p_hat", "ci_low", "ci_high",
                    "seed"]
SWEEP_COLUMNS = ["n", "alpha", "mu", "samples", "p_hat", "ci_low", "ci_high", "reference",
                 "residual", "seed"]
EVENT_COLUMNS = ["n", "mu", "event", "count", "samples", "p_hat", "ci_low", "ci_high", "exact",
                 "seed"]
TRACE_COLUMNS = ["j", "y", "ystar", "delta_j", "a", "b", "c", "z", "zstar", "case", "H", "Hstar"]


class ExportError(Exception):
    """Raised when results cannot be written in the requested format."""
    pass


def to_frame(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    """DataFrame with exactly the documented columns, in order."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.astype(object).where(frame.notna(), None)


def render(frame: pd.DataFrame, fmt: str) -> str:
    """Render a frame as CSV text or line-delimited JSON."""
    if fmt == "csv":
        return frame.to_csv(index=False, lineterminator="\n")
    if fmt == "json":
        if frame.empty:
            return ""
        return frame.to_json(orient="records", lines=True).rstrip("\n") + "\n"
    raise ExportError(f"Format {fmt!r} cannot be rendered as text")


def write_table(rows: Sequence[Dict[str, Any]], columns: Sequence[str], fmt: str = "csv",
                out: Optional[str | Path] = None, stream: Optional[TextIO] = None,
                sheet_name: str = "results"):
    """
    Write rows to `out`, or to `stream` when no path is given.

    Raises:
        ExportError: For xlsx without an output path, or an unknown format
    """
    frame = to_frame(rows, columns)
    if fmt == "xlsx":
        if out is None:
            raise ExportError("xlsx output needs --out")
        frame.to_excel(out, index=False, sheet_name=sheet_name, engine="openpyxl")
        logger.info("Wrote %d rows to %s", len(frame), out)
        return
    text = render(frame, fmt)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Wrote %d rows to %s", len(frame), out)
    elif stream is not None:
        stream.write(text)


def trace_rows(trace: DecodeTrace) -> List[Dict[str, Any]]:
    return [step.to_dict() for step in trace.steps]


def render_trace(trace: DecodeTrace, fmt: str = "json") -> str:
    """
    Trace as text: JSON lines (header object, then one object per step), or CSV
    with the header as leading `# key=value` comment lines.
    """
    frame = to_frame(trace_rows(trace), TRACE_COLUMNS)
    header = trace.header()
    if fmt == "json":
        return json.dumps(header) + "\n" + render(frame, "json")
    if fmt == "csv":
        buffer = io.StringIO()
        for key, value in header.items():
            buffer.write(f"# {key}={value}\n")
        buffer.write(render(frame, "csv"))
        return buffer.getvalue()
    raise ExportError(f"Format {fmt!r} cannot be rendered as text")


def write_trace(trace: DecodeTrace, fmt: str = "json", out: Optional[str | Path] = None,
                stream: Optional[TextIO] = None):
    """Write a trace; xlsx puts the header and the steps on separate sheets."""
    if fmt == "xlsx":
        if out is None:
            raise ExportError("xlsx output needs --out")
        header = pd.DataFrame([trace.header()])
        with pd.ExcelWriter(out, engine="openpyxl") as writer:
            header.to_excel(writer, sheet_name="header", index=False)
            to_frame(trace_rows(trace), TRACE_COLUMNS).to_excel(writer, sheet_name="steps",
                                                                index=False)
        return
    text = render_trace(trace, fmt)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    elif stream is not None:
        stream.write(text)


def read_table(path: str | Path, fmt: str = "csv") -> pd.DataFrame:
    """Read back a table written by write_table or render_trace."""
    if fmt == "csv":
        return pd.read_csv(path, comment="#")
    if fmt == "json":
        return pd.read_json(path, lines=True)
    if fmt == "xlsx":
        return pd.read_excel(path, engine="openpyxl")
    raise ExportError(f"Unknown format {fmt!r}")
