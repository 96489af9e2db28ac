"""Report emission: human-readable tables, raw CSV, and plot-ready series.

Every writer is deterministic for deterministic inputs: fixed row order,
fixed column order, ``\\n`` newlines, UTF-8, floats rendered with ``repr``.
No timestamps or hostnames ever enter a report, so two runs from the same
seed and configuration emit byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .harness import CorrectnessReport, LatencyReport


@dataclass
class RunResults:
    """Bundle of whatever suites a run produced."""

    config: dict
    latency: Optional[LatencyReport] = None
    correctness: Optional[CorrectnessReport] = None


FORMATS = ("table-text", "delimited", "plot-data")


def _number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _table_text(results: RunResults) -> str:
    out = io.StringIO()
    out.write("run configuration: ")
    out.write(json.dumps(results.config, sort_keys=True, ensure_ascii=False))
    out.write("\n")

    if results.correctness is not None and results.correctness.rows:
        rows = results.correctness.rows
        limits = sorted({row.limit for row in rows})
        case_ids = []
        for row in rows:
            if row.case_id not in case_ids:
                case_ids.append(row.case_id)
        out.write("\ncorrectness verdicts (✓ correct, ≈ partial, ✗ incorrect)\n")
        header = "case".ljust(6) + "".join(f"limit {l}".rjust(12) for l in limits)
        out.write(header + "\n")
        by_key = {(row.case_id, row.limit): row for row in rows}
        for case_id in case_ids:
            line = case_id.ljust(6)
            for limit in limits:
                row = by_key.get((case_id, limit))
                line += (row.verdict.symbol if row else "-").rjust(12)
            out.write(line + "\n")
        out.write("\nper-cell detail (truth/named/violations)\n")
        for row in rows:
            out.write(
                f"{row.case_id} @ {row.limit}: {row.verdict.value.value}"
                f" truth={row.verdict.truth_count}"
                f" named={row.verdict.distinct_count}"
                f" violations={row.verdict.violations_count}"
                f" omissions={row.verdict.omissions_count}\n"
            )

    if results.latency is not None and results.latency.cells:
        out.write("\nlatency, milliseconds (median [min..max] over good samples)\n")
        out.write(
            "case".ljust(6) + "limit".rjust(7) + "broker".rjust(34) + "llm".rjust(34)
            + "errors".rjust(8) + "\n"
        )
        for cell in results.latency.cells:
            def fmt(stats):
                if stats is None:
                    return "-"
                return f"{_number(stats.median)} [{_number(stats.min)}..{_number(stats.max)}]"
            out.write(
                cell.case_id.ljust(6)
                + str(cell.limit).rjust(7)
                + fmt(cell.broker).rjust(34)
                + fmt(cell.llm).rjust(34)
                + str(cell.errors).rjust(8)
                + "\n"
            )
    return out.getvalue()


def _samples_csv(report: LatencyReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["case", "limit", "rep", "broker_ms", "llm_ms", "error"])
    for sample in report.samples:
        writer.writerow([
            sample.case_id, sample.limit, sample.rep,
            _number(sample.broker_ms), _number(sample.llm_ms), sample.error,
        ])
    return out.getvalue()


def _verdicts_csv(report: CorrectnessReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([
        "case", "limit", "verdict", "truth_count", "answered_mentions",
        "answered_distinct", "violations", "omissions", "cant_find",
    ])
    for row in report.rows:
        writer.writerow([
            row.case_id, row.limit, row.verdict.value.value,
            row.verdict.truth_count, row.verdict.answered_count,
            row.verdict.distinct_count, row.verdict.violations_count,
            row.verdict.omissions_count, str(row.cant_find).lower(),
        ])
    return out.getvalue()


def _answers_ndjson(report: CorrectnessReport) -> str:
    lines = []
    for row in report.rows:
        lines.append(json.dumps({
            "case": row.case_id,
            "limit": row.limit,
            "question": row.question,
            "entity_count": row.entity_count,
            "answer_text": row.answer_text,
            "truth_ids": list(row.truth_ids),
            "mention_ids": list(row.mention_ids),
            "out_of_context": list(row.out_of_context),
            "cant_find": row.cant_find,
            "verdict": row.verdict.value.value,
        }, ensure_ascii=False, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def _plot_data_csv(report: LatencyReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["case", "limit", "component", "median_ms", "min_ms", "max_ms", "samples"])
    for cell in report.cells:
        for component, stats in (("broker", cell.broker), ("llm", cell.llm)):
            if stats is None:
                continue
            writer.writerow([
                cell.case_id, cell.limit, component,
                _number(stats.median), _number(stats.min), _number(stats.max), stats.count,
            ])
    return out.getvalue()


def emit_report(results: RunResults, out_dir: Path,
                formats: tuple = FORMATS) -> List[Path]:
    """Write the selected report files under ``out_dir``; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f"unknown report formats: {unknown}")
    written: List[Path] = []
    if "table-text" in formats:
        written.append(_write(out_dir / "report.txt", _table_text(results)))
    if "delimited" in formats:
        if results.latency is not None:
            written.append(_write(out_dir / "latency_samples.csv", _samples_csv(results.latency)))
        if results.correctness is not None:
            written.append(_write(out_dir / "verdicts.csv", _verdicts_csv(results.correctness)))
            written.append(_write(out_dir / "answers.ndjson", _answers_ndjson(results.correctness)))
    if "plot-data" in formats:
        if results.latency is not None:
            written.append(_write(out_dir / "plot_data.csv", _plot_data_csv(results.latency)))
    return written
