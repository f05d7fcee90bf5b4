"""Log-log convergence plots from experiment CSV files.

This package deliberately has no dependency on the solver library: it
consumes only delimited output files and a JSON plot description, so figures
can be regenerated from archived results alone.
"""

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


class FigureError(ValueError):
    """Missing columns, empty series, or malformed plot description."""


@dataclass(frozen=True)
class PlotSpec:
    """Description of one rendered panel.

    ``annotate_slope`` optionally names a CSV column holding the fitted
    log-log slope; each series is annotated with a least-squares refit that
    must agree with that column to two decimals.
    """

    csv_paths: list
    x_column: str
    y_columns: list
    output: str
    group_column: str = None
    log_x: bool = True
    log_y: bool = True
    annotate_slope: str = None
    title: str = ""

    @classmethod
    def from_json(cls, path, csv_paths=None):
        with open(path) as fh:
            raw = json.load(fh)
        if csv_paths:
            raw["csv_paths"] = list(csv_paths)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise FigureError("unknown plot-spec fields: %s" % sorted(unknown))
        return cls(**raw)


def _load_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FigureError("%s has no data rows" % path)
    return rows


def _series(rows, spec):
    """Split rows into labelled (x, y) series per y column and group."""
    columns = set(rows[0])
    needed = {spec.x_column, *spec.y_columns}
    if spec.group_column:
        needed.add(spec.group_column)
    if spec.annotate_slope:
        needed.add(spec.annotate_slope)
    missing = needed - columns
    if missing:
        raise FigureError("CSV is missing columns: %s" % sorted(missing))
    if "status" in columns:
        rows = [r for r in rows if r["status"] == "ok"]
    groups = {}
    for row in rows:
        key = row[spec.group_column] if spec.group_column else None
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=str):
        for y_col in spec.y_columns:
            pts = [
                (float(r[spec.x_column]), float(r[y_col]))
                for r in groups[key]
                if r[y_col] != ""
            ]
            pts.sort()
            label = y_col if key is None else "%s=%s" % (spec.group_column, key)
            slope_ref = None
            if spec.annotate_slope:
                slope_ref = float(groups[key][0][spec.annotate_slope])
            out.append((label, pts, slope_ref))
    return out


def _fit_slope(points):
    xs = [math.log(x) for x, y in points]
    ys = [math.log(y) for x, y in points]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise FigureError("degenerate abscissa; cannot fit a slope")
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


def render_convergence(spec):
    """Render one panel; returns the written image path."""
    all_series = []
    for path in spec.csv_paths:
        all_series.extend(_series(_load_rows(path), spec))
    if not all_series:
        raise FigureError("nothing to plot")

    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, points, slope_ref in all_series:
        if len(points) < 2:
            raise FigureError("series %r has fewer than 2 points" % label)
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        if spec.annotate_slope and all(y > 0 for y in ys):
            slope = _fit_slope(points)
            if slope_ref is not None and abs(slope - slope_ref) > 0.005:
                raise FigureError(
                    "refit slope %.4f disagrees with CSV slope %.4f"
                    % (slope, slope_ref)
                )
            label = "%s (slope %.2f)" % (label, slope)
        ax.plot(xs, ys, marker="o", label=label)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_column)
    ax.set_ylabel(", ".join(spec.y_columns))
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="voltfig", description="Render convergence figures from CSV"
    )
    parser.add_argument("csv", nargs="+", help="input CSV path(s)")
    parser.add_argument("plotspec", help="plot description JSON")
    args = parser.parse_args(argv)
    spec = PlotSpec.from_json(args.plotspec, csv_paths=args.csv)
    print(render_convergence(spec))
    return 0


if __name__ == "__main__":
    sys.exit(main())
