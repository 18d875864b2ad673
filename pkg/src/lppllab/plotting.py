"""Static decay plots: SVG figures plus gnuplot-compatible scripts.

Consumes the structured records file written by a run.  One figure per sweep
cell and curve: scattered log10 discrepancies versus the controlling distance,
the upper envelope, and the fitted line annotated with the decay constant.
"""

import json
import math
import os
import re

from .errors import ValidationError

_SLUG_RE = re.compile(r"[^A-Za-z0-9_.-]+")


def _slug(name: str) -> str:
    return _SLUG_RE.sub("_", name).strip("_") or "cell"


def _cell_series(records: list[dict], value_field: str, noise_floor: float):
    points = [
        (r["fit_distance"], max(r[value_field], noise_floor / 10.0))
        for r in records
        if math.isfinite(r["fit_distance"])
    ]
    envelope: dict[float, float] = {}
    for d, v in points:
        envelope[d] = max(envelope.get(d, 0.0), v)
    env = sorted(envelope.items())
    return points, env


def _write_gnuplot(path: str, title: str, points, env, fit: dict | None, value_field: str) -> None:
    lines = [
        "# gnuplot script (generated)",
        f'set title "{title}"',
        'set xlabel "distance"',
        f'set ylabel "{value_field}"',
        "set logscale y",
        "$points << EOD",
    ]
    lines += [f"{d} {v:.17g}" for d, v in points]
    lines += ["EOD", "$envelope << EOD"]
    lines += [f"{d} {v:.17g}" for d, v in env]
    lines += ["EOD"]
    plot_parts = [
        '$points with points pt 7 ps 0.6 title "records"',
        '$envelope with linespoints lw 2 title "envelope"',
    ]
    if fit is not None and fit.get("status") == "ok":
        c2, a = fit["c2_hat"], fit["intercept"]
        plot_parts.append(f'exp({a:.17g} - {c2:.17g} * x) with lines dt 2 title "fit"')
    lines.append("plot " + ", \\\n     ".join(plot_parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _render_svg(path: str, title: str, points, env, fit: dict | None, value_field: str, banner: str | None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if points:
        ax.scatter([p[0] for p in points], [p[1] for p in points], s=14, alpha=0.6, label="records")
    if env:
        ax.plot([e[0] for e in env], [e[1] for e in env], "-o", lw=1.5, ms=4, label="envelope")
    if fit is not None and fit.get("status") == "ok" and env:
        xs = [env[0][0], env[-1][0]]
        ys = [math.exp(fit["intercept"] - fit["c2_hat"] * x) for x in xs]
        ax.plot(xs, ys, "--", label=f"fit: c2={fit['c2_hat']:.3f}, r2={fit['r_squared']:.3f}")
    ax.set_yscale("log")
    ax.set_xlabel("distance")
    ax.set_ylabel(value_field)
    ax.set_title(title)
    if banner:
        ax.text(
            0.5,
            0.5,
            banner,
            transform=ax.transAxes,
            ha="center",
            va="center",
            fontsize=13,
            bbox=dict(boxstyle="round", fc="lemonchiffon", ec="gray"),
        )
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plots(results: dict, out_dir: str, noise_floor: float = 1e-12) -> list[str]:
    """Render one SVG + gnuplot script per (cell, curve); returns the paths.

    Also writes ``fit_summary.txt`` with one line per fitted curve.
    """
    if "cells" not in results:
        raise ValidationError("results file has no 'cells' block")
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    summary_lines = [
        f"{'cell':40s} {'curve':12s} {'n':>4s} {'c2_hat':>12s} {'c1_hat':>12s} {'r2':>8s} status"
    ]
    for cell in results["cells"]:
        cell_id = cell["scenario_id"]
        value_field = cell.get("fit_value", "discrepancy_obs")
        curves = sorted({r["curve"] for r in cell["records"]})
        for curve in curves:
            records = [r for r in cell["records"] if r["curve"] == curve]
            fit = (cell.get("fits") or {}).get(curve)
            points, env = _cell_series(records, value_field, noise_floor)
            banner = None
            if fit is not None and fit.get("status") == "below_noise_floor":
                banner = "decay below measurable range"
            base = _slug(f"{cell_id}_{curve}")
            svg_path = os.path.join(out_dir, base + ".svg")
            gp_path = os.path.join(out_dir, base + ".gp")
            title = f"{cell_id} [{curve}]"
            _render_svg(svg_path, title, points, env, fit, value_field, banner)
            _write_gnuplot(gp_path, title, points, env, fit, value_field)
            written += [svg_path, gp_path]
            if fit is not None:
                summary_lines.append(
                    f"{cell_id:40s} {curve:12s} {fit.get('n_points', 0):>4d} "
                    f"{fit.get('c2_hat', float('nan')):>12.6g} {fit.get('c1_hat', float('nan')):>12.6g} "
                    f"{fit.get('r_squared', float('nan')):>8.4f} {fit.get('status', '-')}"
                )
    summary_path = os.path.join(out_dir, "fit_summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary_lines) + "\n")
    written.append(summary_path)
    return written


def load_results(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"results file {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"results file {path}: expected a JSON object")
    return data
