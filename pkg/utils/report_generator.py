import csv
import json
import logging
import math
import os

from modules.scenario_runner import RunReport

logger = logging.getLogger("phi.report")

REPORT_FILE = "report.json"
TRACE_FILE = "trace.csv"
SPECTRA_FILE = "spectra.csv"
TIMING_FILE = "timing.json"
ESCAPED_MARKER = "escaped"


def render_report_json(report):
    """Serialize a run report deterministically (sorted keys, fixed indent).

    Args:
        report (RunReport): Report to serialize

    Returns:
        str: JSON text; non-finite floats use Infinity/NaN
    """
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def _format_value(value):
    return repr(float(value))


def write_trace_csv(report, path):
    """Write one row per stage: stage, depth, dim, residual and the space-separated spectrum."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["stage", "depth", "dim", "residual", "spectrum"])
        for row in report.trace:
            writer.writerow([
                row["stage"],
                row["depth"],
                row["dim"],
                _format_value(row["residual"]),
                " ".join(_format_value(value) for value in row["spectrum"]),
            ])
    return path


def write_spectra_csv(report, path):
    """Write eigenvalue trajectories: one column per eigenvalue index.

    Values beyond the escape bound are written as the escaped marker; stages
    with fewer eigenvalues than the widest stage are padded with empty cells.
    """
    width = max((len(row["spectrum"]) for row in report.trace), default=0)
    escape_bound = report.scenario.get("escape_bound", math.inf)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["stage", "depth"] + [f"lambda{k}" for k in range(width)])
        for row in report.trace:
            cells = []
            for value in row["spectrum"]:
                if not math.isfinite(value) or abs(value) > escape_bound:
                    cells.append(ESCAPED_MARKER)
                else:
                    cells.append(_format_value(value))
            cells.extend([""] * (width - len(cells)))
            writer.writerow([row["stage"], row["depth"]] + cells)
    return path


def emit_report(report, output_dir):
    """Write report.json, trace.csv, spectra.csv and timing.json into a directory.

    Args:
        report (RunReport): Report to write
        output_dir (str): Target directory (created if missing)

    Returns:
        list: Paths of the written files
    """
    os.makedirs(output_dir, exist_ok=True)

    report_path = os.path.join(output_dir, REPORT_FILE)
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(render_report_json(report))

    trace_path = write_trace_csv(report, os.path.join(output_dir, TRACE_FILE))
    spectra_path = write_spectra_csv(report, os.path.join(output_dir, SPECTRA_FILE))

    timing_path = os.path.join(output_dir, TIMING_FILE)
    with open(timing_path, "w", encoding="utf-8") as f:
        json.dump({"wall_time_seconds": report.wall_time}, f, indent=2)

    logger.info(f"Report written to: {output_dir}")
    return [report_path, trace_path, spectra_path, timing_path]


def load_report(output_dir):
    """Parse report.json (and timing.json when present) back into a RunReport.

    Args:
        output_dir (str): Directory written by emit_report

    Returns:
        RunReport: The parsed report
    """
    with open(os.path.join(output_dir, REPORT_FILE), "r", encoding="utf-8") as f:
        data = json.load(f)

    wall_time = None
    timing_path = os.path.join(output_dir, TIMING_FILE)
    if os.path.exists(timing_path):
        with open(timing_path, "r", encoding="utf-8") as f:
            wall_time = json.load(f).get("wall_time_seconds")

    return RunReport.from_dict(data, wall_time)
