"""Report rendering: delimited tables for machines, text and figures for people.

Every writer takes the long-form rows of a MetricReport (image_id, metric,
value) — three fixed columns regardless of which metrics a run produced, so
downstream parsers never chase a moving schema. The human-readable table
pivots the same rows per image, and each writer renders a small matplotlib
figure next to the delimited output.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file rendering only; no display server in scope
import matplotlib.pyplot as plt

from .metrics import MetricReport

_FLOAT_FMT = "{:.6f}"


# ------------------------------------------------------------- long form


def write_tsv(report: MetricReport, path) -> Path:
    """Write meta as '#' comment lines, then one (image_id, metric, value) row each."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key in sorted(report.meta):
        lines.append(f"# {key}\t{report.meta[key]}")
    lines.append("image_id\tmetric\tvalue")
    for image_id, metric, value in report.rows:
        lines.append(f"{image_id}\t{metric}\t{_FLOAT_FMT.format(value)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_tsv(path) -> tuple[dict, list]:
    """Inverse of write_tsv: returns (meta-as-strings, rows)."""
    meta, rows = {}, []
    body = False
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition("\t")
            meta[key] = val
            continue
        if not body:  # the header line
            body = True
            continue
        image_id, metric, value = line.split("\t")
        rows.append((image_id, metric, float(value)))
    return meta, rows


# ---------------------------------------------------------- human tables


def _pivot(report: MetricReport) -> tuple[list, list, dict]:
    """Rows → (metric names in first-appearance order, image ids, cell map)."""
    metrics, cells = [], {}
    for image_id, metric, value in report.rows:
        if metric not in metrics:
            metrics.append(metric)
        cells[(image_id, metric)] = value
    return metrics, list(report.image_ids), cells


def _render(headers: list, body: list) -> str:
    widths = [
        max(len(h), *(len(r[i]) for r in body)) if body else len(h)
        for i, h in enumerate(headers)
    ]
    def fmt(row):
        return "  ".join(c.rjust(w) for c, w in zip(row, widths))

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), rule] + [fmt(r) for r in body])


def format_table(report: MetricReport) -> str:
    """Per-image pivot table with a mean row; meta lines lead."""
    metrics, ids, cells = _pivot(report)
    head = [f"{k} = {report.meta[k]}" for k in sorted(report.meta)]
    body = []
    for image_id in ids:
        body.append(
            [image_id]
            + [
                f"{cells[(image_id, m)]:.3f}" if (image_id, m) in cells else "-"
                for m in metrics
            ]
        )
    means = report.aggregate()
    body.append(["mean"] + [f"{means[m]:.3f}" for m in metrics])
    table = _render(["image_id"] + metrics, body)
    return "\n".join(head + [table]) if head else table


# --------------------------------------------------------------- figures


def render_figure(report: MetricReport, path) -> Path:
    """One PNG per report: pred-vs-true scatter for scorer runs, else mean bars."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics, ids, cells = _pivot(report)

    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    if "score_pred" in metrics and "score_true" in metrics:
        pred = [cells[(i, "score_pred")] for i in ids if (i, "score_pred") in cells]
        true = [cells[(i, "score_true")] for i in ids if (i, "score_true") in cells]
        lo, hi = min(true + pred), max(true + pred)
        ax.plot([lo, hi], [lo, hi], color="gray", lw=1, ls="--")
        ax.scatter(true, pred, s=18)
        ax.set_xlabel("panel score")
        ax.set_ylabel("predicted score")
        title = "predicted vs panel quality"
    else:
        means = report.aggregate()
        names = [m for m in metrics if math.isfinite(means[m])]
        ax.bar(range(len(names)), [means[m] for m in names], width=0.6)
        for k, name in enumerate(names):
            vals = [cells[(i, name)] for i in ids if (i, name) in cells]
            ax.scatter([k] * len(vals), vals, s=8, color="black", alpha=0.45)
        ax.set_xticks(range(len(names)), names)
        ax.set_ylabel("value")
        title = "per-metric mean and per-image spread"
    if "variant" in report.meta:
        title = f"{report.meta['variant']}: {title}"
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def write_report(report: MetricReport, out_dir, stem: str) -> dict:
    """Render all three shapes of one report; returns {'tsv','txt','png'} paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv = write_tsv(report, out_dir / f"{stem}.tsv")
    txt = out_dir / f"{stem}.txt"
    txt.write_text(format_table(report) + "\n")
    png = render_figure(report, out_dir / f"{stem}.png")
    return {"tsv": tsv, "txt": txt, "png": png}


# -------------------------------------------------------- sweep/ablation


_SWEEP_COLS = ("lambda", "easy", "hard", "threshold", "mean_score", "status", "message")


def _sweep_cell(row: dict, col: str) -> str:
    if col not in row:
        return ""
    v = row[col]
    return _FLOAT_FMT.format(v) if isinstance(v, float) else str(v)


def format_sweep_table(rows: list) -> str:
    body = [[_sweep_cell(r, c) or "-" for c in _SWEEP_COLS] for r in rows]
    return _render(list(_SWEEP_COLS), body)


def write_sweep(rows: list, out_dir, stem: str = "sweep") -> dict:
    """Table of mean routed quality per lambda, plus a line figure."""
    if not rows:
        raise ValueError("sweep produced no rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tsv = out_dir / f"{stem}.tsv"
    lines = ["\t".join(_SWEEP_COLS)]
    lines += ["\t".join(_sweep_cell(r, c) for c in _SWEEP_COLS) for r in rows]
    tsv.write_text("\n".join(lines) + "\n")

    txt = out_dir / f"{stem}.txt"
    txt.write_text(format_sweep_table(rows) + "\n")

    ok = [r for r in rows if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    if ok:
        xs = [r["lambda"] for r in ok]
        ys = [r["mean_score"] for r in ok]
        ax.plot(xs, ys, marker="o")
    ax.set_xlabel("easy fraction λ")
    ax.set_ylabel("mean routed quality score")
    ax.set_title("λ sweep")
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png)
    plt.close(fig)
    return {"tsv": tsv, "txt": txt, "png": png}


def summarize_ablation(reports: list) -> tuple[list, list]:
    """One row per variant: seed, image count, then every metric mean.

    Columns are the union over all reports in first-appearance order, so
    variants that skip a metric show a blank rather than shifting columns.
    """
    metric_cols: list = []
    meta_cols: list = []
    for rep in reports:
        for _, metric, _ in rep.rows:
            if metric not in metric_cols:
                metric_cols.append(metric)
        for key in rep.meta:
            if key not in ("variant", "seed") and key not in meta_cols:
                meta_cols.append(key)

    headers = ["variant", "seed", "n_images"] + metric_cols + meta_cols
    body = []
    for rep in reports:
        means = rep.aggregate()
        row = [
            str(rep.meta.get("variant", "?")),
            str(rep.meta.get("seed", "?")),
            str(len(rep.image_ids)),
        ]
        row += [
            _FLOAT_FMT.format(means[m]) if m in means and math.isfinite(means[m]) else ""
            for m in metric_cols
        ]
        for key in meta_cols:
            v = rep.meta.get(key)
            row.append(_FLOAT_FMT.format(v) if isinstance(v, float) else ("" if v is None else str(v)))
        body.append(row)
    return headers, body


def write_ablation(reports: list, out_dir, stem: str = "ablation") -> dict:
    """Cross-variant summary: delimited, text table, and a mean-score figure."""
    if not reports:
        raise ValueError("no reports to summarize")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    headers, body = summarize_ablation(reports)

    tsv = out_dir / f"{stem}.tsv"
    tsv.write_text(
        "\n".join(["\t".join(headers)] + ["\t".join(r) for r in body]) + "\n"
    )
    txt = out_dir / f"{stem}.txt"
    txt.write_text(_render(headers, [[c or "-" for c in r] for r in body]) + "\n")

    # figure: whichever of the headline means each variant carries
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    score_col = "ruiqa" if "ruiqa" in headers else None
    if score_col:
        idx = headers.index(score_col)
        pairs = [(r[0], float(r[idx])) for r in body if r[idx]]
        if pairs:
            names, vals = zip(*pairs)
            ax.bar(range(len(names)), vals, width=0.6)
            ax.set_xticks(range(len(names)), names, rotation=20)
            ax.set_ylabel("mean quality score")
    ax.set_title("ablation summary")
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png)
    plt.close(fig)
    return {"tsv": tsv, "txt": txt, "png": png}


def write_history(history: list, path) -> Path:
    """Per-epoch training log as TSV; columns follow the first epoch's keys."""
    if not history:
        raise ValueError("history is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(history[0])
    lines = ["\t".join(keys)]
    for row in history:
        cells = []
        for k in keys:
            v = row.get(k, "")
            cells.append(_FLOAT_FMT.format(v) if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path
