"""Minimal self-contained SVG charts: per-epoch query lines and failure bars."""

from __future__ import annotations

from collections import defaultdict
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 50
ORACLE_COLORS = {"teacher": "#1f4fd1", "expert": "#d12b1f", "none": "#555555"}


class PlotError(ValueError):
    pass


def _scale(v: float, lo: float, hi: float, a: float, b: float) -> float:
    if hi == lo:
        return (a + b) / 2
    return a + (v - lo) * (b - a) / (hi - lo)


def _axes(x_label: str, y_label: str, y_lo: float, y_hi: float) -> list[str]:
    x0, y0 = MARGIN, HEIGHT - MARGIN
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(x_label)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" transform="rotate(-90 15 {HEIGHT / 2})" '
        f'text-anchor="middle">{escape(y_label)}</text>',
        f'<text x="{x0 - 5}" y="{y0}" text-anchor="end" class="ylo">{y_lo:g}</text>',
        f'<text x="{x0 - 5}" y="{MARGIN + 5}" text-anchor="end" class="yhi">{y_hi:g}</text>',
    ]


def _wrap(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def queries_svg(rows: list[dict[str, str]]) -> str:
    """One polyline per (case, oracle, policy, seed) run over training epochs."""
    if not rows:
        raise PlotError("no rows to plot")
    try:
        runs: dict[tuple, list[tuple[int, float]]] = defaultdict(list)
        for r in rows:
            key = (r["case"], r["oracle"], r["policy"], r["seed"])
            runs[key].append((int(r["epoch"]), float(r["queries"])))
    except (KeyError, ValueError) as exc:
        raise PlotError(f"malformed query CSV: {exc}") from None
    xs = [e for pts in runs.values() for e, _ in pts]
    ys = [q for pts in runs.values() for _, q in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = 0.0, max(ys) if max(ys) > 0 else 1.0
    body = _axes("epoch", "queries per epoch", y_lo, y_hi)
    body.append(f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 15}" class="xlo">{x_lo}</text>')
    body.append(f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 15}" text-anchor="end" class="xhi">{x_hi}</text>')
    for (case, oracle, policy, seed), pts in sorted(runs.items()):
        pts.sort()
        coords = " ".join(
            f"{_scale(e, x_lo, x_hi, MARGIN, WIDTH - MARGIN):.2f},"
            f"{_scale(q, y_lo, y_hi, HEIGHT - MARGIN, MARGIN):.2f}"
            for e, q in pts
        )
        color = ORACLE_COLORS.get(oracle, "#333333")
        label = escape(f"{case} {oracle} {policy} seed {seed}")
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{coords}">'
                    f"<title>{label}</title></polyline>")
    return _wrap(body)


def failure_svg(rows: list[dict[str, str]]) -> str:
    """Bars of mean failure % per (case, oracle, policy), from results or aggregate CSV."""
    if not rows:
        raise PlotError("no rows to plot")
    groups: dict[tuple, list[float]] = defaultdict(list)
    try:
        for r in rows:
            value = r["failure_pct_mean"] if "failure_pct_mean" in r else r["failure_pct"]
            groups[(r["case"], r["oracle"], r["policy"])].append(float(value))
    except (KeyError, ValueError) as exc:
        raise PlotError(f"malformed results CSV: {exc}") from None
    bars = [(k, sum(v) / len(v)) for k, v in groups.items()]
    body = _axes("configuration", "failure %", 0, 100)
    slot = (WIDTH - 2 * MARGIN) / len(bars)
    for i, ((case, oracle, policy), value) in enumerate(bars):
        h = _scale(value, 0, 100, 0, HEIGHT - 2 * MARGIN)
        x = MARGIN + i * slot + slot * 0.1
        color = ORACLE_COLORS.get(oracle, "#333333")
        label = escape(f"{case} {oracle} {policy}: {value:.2f}%")
        body.append(f'<rect x="{x:.2f}" y="{HEIGHT - MARGIN - h:.2f}" width="{slot * 0.8:.2f}" '
                    f'height="{h:.2f}" fill="{color}"><title>{label}</title></rect>')
    return _wrap(body)
