"""Quantile tables and a static SVG summary of experiment results."""
from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np
import pandas as pd

from .experiments import METHODS, read_results

QUANTILES = (0.10, 0.25, 0.50, 0.75, 0.90)
QCOLS = ["q10", "q25", "q50", "q75", "q90"]


def _method_order(names) -> list:
    known = [m.value for m in METHODS if m.value in set(names)]
    return known + sorted(set(names) - set(known))


def quantile_table(records: pd.DataFrame) -> pd.DataFrame:
    """Per-test-set MSE quantiles (panel ``mse``) and stability-error quantiles (panel ``stability``)."""
    rows = []
    methods = _method_order(records["method"].unique())
    for m in methods:
        sub = records[records["method"] == m]
        for k in sorted(sub["test_index"].unique()):
            q = np.quantile(sub.loc[sub["test_index"] == k, "mse"].to_numpy(), QUANTILES)
            rows.append(["mse", m, int(k), *q])
    stab = records.groupby(["replication", "method"])["mse"].std(ddof=1).reset_index()
    for m in methods:
        vals = stab.loc[stab["method"] == m, "mse"].dropna().to_numpy()
        q = np.quantile(vals, QUANTILES) if vals.size else [float("nan")] * len(QUANTILES)
        rows.append(["stability", m, "", *q])
    return pd.DataFrame(rows, columns=["panel", "method", "test_index", *QCOLS])


def quantile_csv(table: pd.DataFrame) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.itertuples(index=False):
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _f(x: float) -> str:
    return f"{x:.2f}"


def render_svg(table: pd.DataFrame) -> str:
    """Box-style panels: one per method (MSE by test set) plus a stability panel."""
    mse = table[table["panel"] == "mse"]
    stab = table[table["panel"] == "stability"]
    methods = _method_order(mse["method"].unique())
    panels = [(m, mse[mse["method"] == m]) for m in methods] + [("stability_error", stab)]
    pw, ph, pad = 240.0, 200.0, 30.0
    width = pad + len(panels) * (pw + pad)
    height = ph + 3 * pad
    lo = float(min(mse[QCOLS].to_numpy().min(), 0.0)) if not mse.empty else 0.0
    hi = float(mse[QCOLS].to_numpy().max()) if not mse.empty else 1.0
    hi = hi if hi > lo else lo + 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
           f'font-family="sans-serif" font-size="10">',
           f'<rect width="{_f(width)}" height="{_f(height)}" fill="white"/>']
    for i, (title, sub) in enumerate(panels):
        x0 = pad + i * (pw + pad)
        y0 = 2 * pad
        out.append(f'<text x="{_f(x0 + pw / 2)}" y="{_f(pad)}" text-anchor="middle">{title}</text>')
        out.append(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(pw)}" height="{_f(ph)}" '
                   f'fill="none" stroke="black"/>')
        if title == "stability_error":
            vals = sub[QCOLS].to_numpy(dtype=float)
            plo, phi = 0.0, float(np.nanmax(vals)) if vals.size else 1.0
            phi = phi if phi > plo else 1.0
            labels = list(sub["method"])
        else:
            vals = sub[QCOLS].to_numpy(dtype=float)
            plo, phi = lo, hi
            labels = [str(k) for k in sub["test_index"]]
        n = max(len(vals), 1)
        step = pw / n

        def ypos(v):
            return y0 + ph - (v - plo) / (phi - plo) * ph

        for j, (q, lab) in enumerate(zip(vals, labels)):
            cx = x0 + (j + 0.5) * step
            bw = step * 0.5
            out.append(f'<line x1="{_f(cx)}" y1="{_f(ypos(q[0]))}" x2="{_f(cx)}" '
                       f'y2="{_f(ypos(q[4]))}" stroke="black"/>')
            out.append(f'<rect x="{_f(cx - bw / 2)}" y="{_f(ypos(q[3]))}" width="{_f(bw)}" '
                       f'height="{_f(max(ypos(q[1]) - ypos(q[3]), 0.0))}" fill="#9ecae1" stroke="black"/>')
            out.append(f'<line x1="{_f(cx - bw / 2)}" y1="{_f(ypos(q[2]))}" x2="{_f(cx + bw / 2)}" '
                       f'y2="{_f(ypos(q[2]))}" stroke="#d62728" stroke-width="2"/>')
            out.append(f'<text x="{_f(cx)}" y="{_f(y0 + ph + 12)}" text-anchor="middle" '
                       f'font-size="7">{lab[:6]}</text>')
        out.append(f'<text x="{_f(x0 - 2)}" y="{_f(y0 + 4)}" text-anchor="end" font-size="7">{phi:.3g}</text>')
        out.append(f'<text x="{_f(x0 - 2)}" y="{_f(y0 + ph)}" text-anchor="end" font-size="7">{plo:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(results, svg_path=None, csv_path=None) -> pd.DataFrame:
    """Build the quantile table from a results file/directory and write the requested outputs."""
    table = quantile_table(read_results(results))
    if csv_path is not None:
        Path(csv_path).write_text(quantile_csv(table))
    if svg_path is not None:
        Path(svg_path).write_text(render_svg(table))
    return table
