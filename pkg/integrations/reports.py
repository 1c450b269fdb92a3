# ************************************************************
#  integrations/reports.py
# ************************************************************

"""
Report emission module.

Writes experiment results as CSV, JSON and SVG. Every file is written to a
temporary sibling first and moved into place, and every file carries the
configuration hash. Formatting is fixed so identical runs give identical bytes.
"""

import json
import logging
import os
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from core.nterm import RateReport

logger = logging.getLogger(__name__)

SVG_WIDTH = 480
SVG_HEIGHT = 320
SVG_MARGIN = 48


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "nan" if np.isnan(value) else repr(value)


def write_text(path: str, text: str) -> str:
    """Write text atomically (temp file + rename) and return the path."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)
    logger.debug("Wrote %s (%d bytes)", path, len(text))
    return path


def to_json(data: Dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(path: str, data: Dict) -> str:
    return write_text(path, to_json(data))


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]], config_hash: str) -> str:
    """
    Write a table with a leading '# config_hash=...' comment line.

    Args:
        path (str): Target file.
        header (Sequence[str]): Column names.
        rows (Iterable[Sequence[Any]]): Rows; floats are written with repr, None as empty.
        config_hash (str): Hash of the producing configuration.
    """
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return write_text(path, "\n".join(lines) + "\n")


def write_rate_csv(path: str, report: RateReport) -> str:
    return write_csv(path, ("n", "error", "normalized"), report.rows(), report.config_hash)


def rate_svg(report: RateReport, title: str) -> str:
    """
    Log-log plot of error against n, with the fitted line when the slope is defined.
    """
    n = np.asarray(report.n, dtype=float)
    err = np.asarray(report.error, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}">',
        f"<!-- config_hash={report.config_hash} -->",
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    box = (SVG_MARGIN, SVG_MARGIN, SVG_WIDTH - SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN)
    parts.append(
        f'<rect x="{box[0]}" y="{box[1]}" width="{box[2] - box[0]}" height="{box[3] - box[1]}" '
        'fill="none" stroke="black"/>'
    )
    if np.count_nonzero(ok) >= 1:
        lx, ly = np.log10(n[ok]), np.log10(err[ok])
        x0, x1 = lx.min(), max(lx.max(), lx.min() + 1e-9)
        y0, y1 = ly.min(), max(ly.max(), ly.min() + 1e-9)

        def px(v: np.ndarray) -> np.ndarray:
            return box[0] + (v - x0) / (x1 - x0) * (box[2] - box[0])

        def py(v: np.ndarray) -> np.ndarray:
            return box[3] - (v - y0) / (y1 - y0) * (box[3] - box[1])

        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(lx), py(ly)))
        parts.append(f'<polyline points="{points}" fill="none" stroke="steelblue" stroke-width="2"/>')
        parts.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="steelblue"/>' for a, b in zip(px(lx), py(ly)))
        if report.slope_defined:
            fit = report.intercept / np.log(10.0) + report.slope * np.array([x0, x1])
            parts.append(
                f'<line x1="{px(x0):.2f}" y1="{py(fit[0]):.2f}" x2="{px(x1):.2f}" y2="{py(fit[1]):.2f}" '
                'stroke="firebrick" stroke-dasharray="4 3"/>'
            )
        parts.append(f'<text x="{box[0]}" y="{SVG_HEIGHT - 12}" font-size="11">log10 n: {x0:.2f} .. {x1:.2f}</text>')
        parts.append(
            f'<text x="{box[2]}" y="{SVG_HEIGHT - 12}" text-anchor="end" font-size="11">'
            f"log10 error: {y0:.2f} .. {y1:.2f}</text>"
        )
    slope = f"{report.slope:.4f}" if report.slope_defined else "undefined"
    parts.append(f'<text x="{box[0] + 6}" y="{box[1] + 16}" font-size="12">slope {slope}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_rate_report(directory: str, stem: str, report: RateReport, svg: bool = True) -> List[str]:
    """
    Write <stem>.csv, <stem>.json and optionally <stem>.svg under a directory.

    Returns:
        List[str]: Paths written.
    """
    paths = [
        write_rate_csv(os.path.join(directory, f"{stem}.csv"), report),
        write_json(os.path.join(directory, f"{stem}.json"), report.to_dict()),
    ]
    if svg:
        paths.append(write_text(os.path.join(directory, f"{stem}.svg"), rate_svg(report, stem)))
    return paths
