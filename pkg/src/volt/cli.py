"""Experiment runner: JSON config in, CSV rows and JSON metadata out.

Subcommands
-----------
``volt validate``
    Single-centered-hole validation against the exact shell solution across
    an (ε, ξ) grid: spatial variation and relative error per row.
``volt sweep``
    ε-sweep comparing the solved mean concentration against the two-term
    asymptotic expansion, with fitted log-log slopes.
``volt theta``
    Asymptotic coefficient report (θ⁽¹⁾, θ⁽²⁾, per-hole χ, Γ) as JSON plus
    sampled Σ(x) values as CSV.
``volt greens``
    Green's-function table (free-space plus regular part) as CSV.

Experiment outputs are deterministic for a fixed config and seed apart from
the trailing wall-time column.  When matplotlib-based rendering is available
the validate/sweep report paths also write convergence figures next to the
CSV files.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from . import asymptotics
from .geometry import DomainSpec, GradingPolicy, Hole, generate_nodes
from .greens import HelmholtzGreens, NeumannGreens
from .markov import FiringModel, build_jump_spec
from .pde_solver import (
    assemble_mean_system,
    field_metrics,
    node_set_hash,
    solve_mean_system,
)
from .rbf_fd import FDConfig, assemble_operator, build_stencils

DEFAULT_EPS_LIST = [0.20, 0.15, 0.10, 0.075, 0.05]
DEFAULT_H_OVER_EPS = 1.0 / 7.0
# Ratio 1.15 keeps high-order (xi >= 4) stencils accurate on graded nodes;
# steeper ratios are only safe for xi <= 3.
DEFAULT_GRADING = {"h_max": 0.15, "ratio": 1.15, "collar": 0.5}

VALIDATE_COLUMNS = [
    "eps", "xi", "n_nodes", "n_fluid", "mean", "exact", "rel_error",
    "variation", "residual", "status", "error", "config_hash", "seed",
    "wall_time",
]
SWEEP_COLUMNS = [
    "eps", "xi", "n_nodes", "mean", "spread", "expansion", "abs_error",
    "theta1", "theta2", "slope_error", "slope_spread", "residual", "status",
    "error", "config_hash", "seed", "wall_time",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _fmt(x):
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def n_threads():
    """Worker cap from the VOLT_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("VOLT_THREADS", "1")))
    except ValueError:
        return 1


def load_config(path):
    """Read and schema-validate an experiment config; fill in defaults."""
    with open(path) as fh:
        raw = json.load(fh)
    schema = json.loads(
        resources.files("volt").joinpath("config_schema.json").read_text()
    )
    try:
        import jsonschema

        jsonschema.validate(raw, schema)
    except ImportError:  # pragma: no cover - jsonschema is a std companion
        pass
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
    eps_list = raw.get("eps_list", list(DEFAULT_EPS_LIST))
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    disc = raw.get("discretization", {})
    firing = raw["firing"]
    if firing["model"] == "synchronous":
        if "alpha" not in firing or "beta" not in firing:
            raise ConfigError("synchronous firing needs alpha and beta")
    elif "rates" not in firing:
        raise ConfigError("independent firing needs per-hole rates")
    config = {
        "experiment": raw["experiment"],
        "domain": raw["domain"],
        "firing": firing,
        "discretization": {
            "xi": disc.get("xi", [2, 3, 4, 5]),
            "h_over_eps": disc.get("h_over_eps", DEFAULT_H_OVER_EPS),
            "grading": {**DEFAULT_GRADING, **disc.get("grading", {})},
        },
        "eps_list": eps_list,
        "eps_ref": raw.get("eps_ref", eps_list[0]),
        "guard": raw.get("guard", 5.0),
        "dimensional": raw.get("dimensional"),
        "sigma_samples": raw.get("sigma_samples", 64),
        "seed": raw.get("seed", 0),
        "output_dir": raw.get("output_dir", "."),
        "render_figures": raw.get("render_figures", True),
    }
    config["hash"] = config_hash(config)
    return config


def config_hash(config):
    """Stable 16-hex digest of the resolved configuration."""
    payload = {k: v for k, v in config.items() if k != "hash"}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _firing_model(config):
    firing = config["firing"]
    if firing["model"] == "synchronous":
        return FiringModel.synchronous(firing["alpha"], firing["beta"])
    return FiringModel.independent([tuple(r) for r in firing["rates"]])


def _domain(config, eps=None):
    holes = []
    for h in config["domain"]["holes"]:
        radius = eps if eps is not None else h.get("radius")
        if radius is None:
            raise ConfigError("hole radius missing and no sweep eps supplied")
        holes.append(
            Hole(tuple(h["center"]), radius, Cn=h.get("Cn"), Dn=h.get("Dn"))
        )
    return DomainSpec(config["domain"]["R0"], tuple(holes))


def _grading(config):
    g = config["discretization"]["grading"]
    return GradingPolicy(h_max=g["h_max"], ratio=g["ratio"], collar=g["collar"])


def _solve_row(config, eps, xi):
    """One (ε, ξ) solve: returns fields shared by validate and sweep rows."""
    domain = _domain(config, eps=eps)
    spec = build_jump_spec(_firing_model(config), N=len(domain.holes))
    h_fine = eps * config["discretization"]["h_over_eps"]
    nodes = generate_nodes(domain, h_fine, _grading(config), seed=config["seed"])
    fd = FDConfig(xi=xi)
    stencils = build_stencils(nodes, fd)
    workers = n_threads()
    lap = assemble_operator(nodes, stencils, "laplacian", fd, workers=workers)
    dnu = assemble_operator(nodes, stencils, "normal_derivative", fd, workers=workers)
    field = solve_mean_system(assemble_mean_system(nodes, lap, dnu, spec))
    metrics = field_metrics(field, domain)
    return {
        "n_nodes": len(nodes.points),
        "n_fluid": len(field.fluid_indices),
        "mean": metrics["mean"],
        "variation": metrics["variation"],
        "spread": metrics["spread"],
        "residual": field.residual,
        "nodes_hash": node_set_hash(nodes),
    }


def _run_rows(jobs, worker):
    """Run per-row jobs, serializing failures into the row dicts."""

    def guarded(job):
        t0 = time.perf_counter()
        try:
            row = worker(job)
            row.update(status="ok", error="")
        except Exception as exc:  # noqa: BLE001 - per-row failure policy
            row = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        row["wall_time"] = time.perf_counter() - t0
        return row

    threads = n_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, jobs))
    return [guarded(job) for job in jobs]


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _write_metadata(config, path, extra):
    payload = {
        "config_hash": config["hash"],
        "seed": config["seed"],
        "threads": n_threads(),
        "experiment": config["experiment"],
    }
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _fit_slope(eps, values):
    """Least-squares slope and R² of log(values) against log(eps)."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return float("nan"), float("nan")
    x, y = np.log(eps[keep]), np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _render_figures(config, kind, csv_path, out_dir):
    """Best-effort convergence figures next to the CSV; never fatal."""
    if not config["render_figures"]:
        return []
    try:
        from voltfig.render import PlotSpec, render_convergence
    except ImportError:
        return []
    specs = []
    if kind == "validate":
        specs.append(
            PlotSpec(
                csv_paths=[str(csv_path)],
                x_column="eps",
                y_columns=["variation"],
                group_column="xi",
                log_x=True,
                log_y=True,
                annotate_slope=None,
                title="spatial variation",
                output=str(out_dir / "validate_variation.png"),
            )
        )
        specs.append(
            PlotSpec(
                csv_paths=[str(csv_path)],
                x_column="eps",
                y_columns=["rel_error"],
                group_column="xi",
                log_x=True,
                log_y=True,
                annotate_slope=None,
                title="relative error vs exact shell mean",
                output=str(out_dir / "validate_error.png"),
            )
        )
    else:
        specs.append(
            PlotSpec(
                csv_paths=[str(csv_path)],
                x_column="eps",
                y_columns=["abs_error", "spread"],
                group_column=None,
                log_x=True,
                log_y=True,
                annotate_slope="slope_error",
                title="mean vs two-term expansion",
                output=str(out_dir / "sweep_convergence.png"),
            )
        )
    written = []
    for spec in specs:
        try:
            written.append(render_convergence(spec))
        except Exception:  # noqa: BLE001 - reporting must not kill the run
            pass
    return written


def run_validate_shell(config, out_dir):
    """(ε, ξ) validation grid against the exact shell solution."""
    from .shell import ShellParams, exact_shell_mean

    domain_holes = config["domain"]["holes"]
    if len(domain_holes) != 1 or any(c != 0.0 for c in domain_holes[0]["center"]):
        raise ConfigError("shell validation requires a single centered hole")
    firing = config["firing"]
    if firing["model"] != "synchronous":
        raise ConfigError("shell validation requires synchronous firing")
    alpha, beta = firing["alpha"], firing["beta"]
    R0 = config["domain"]["R0"]

    jobs = [
        (eps, xi)
        for eps in config["eps_list"]
        for xi in config["discretization"]["xi"]
    ]

    def worker(job):
        eps, xi = job
        row = _solve_row(config, eps, xi)
        exact = exact_shell_mean(ShellParams(alpha, beta, eps, R0))
        row.update(
            eps=eps, xi=xi, exact=exact,
            rel_error=abs(row["mean"] - exact) / exact,
            config_hash=config["hash"], seed=config["seed"],
        )
        return row

    rows = _run_rows(jobs, worker)
    for job, row in zip(jobs, rows):
        row.setdefault("eps", job[0])
        row.setdefault("xi", job[1])
        row.setdefault("config_hash", config["hash"])
        row.setdefault("seed", config["seed"])
    csv_path = out_dir / "validate.csv"
    _write_csv(csv_path, VALIDATE_COLUMNS, rows)
    figures = _render_figures(config, "validate", csv_path, out_dir)
    _write_metadata(
        config, out_dir / "validate_metadata.json",
        {"rows": len(rows),
         "failed": sum(r["status"] != "ok" for r in rows),
         "figures": figures},
    )
    return rows


def run_asymptotic_sweep(config, out_dir):
    """ε sweep comparing the solved mean with εθ⁽¹⁾ + ε²θ⁽²⁾."""
    firing = config["firing"]
    if firing["model"] != "synchronous":
        raise ConfigError("the asymptotic sweep drives synchronous firing")
    positions = [tuple(h["center"]) for h in config["domain"]["holes"]]
    R0 = config["domain"]["R0"]
    result = asymptotics.synchronous_expansion(
        positions, firing["alpha"], firing["beta"], R0
    )
    xi = config["discretization"]["xi"][0]

    def worker(eps):
        row = _solve_row(config, eps, xi)
        estimate = eps * result.theta1 + eps**2 * result.theta2
        row.update(
            eps=eps, xi=xi, expansion=estimate,
            abs_error=abs(row["mean"] - estimate),
            theta1=result.theta1, theta2=result.theta2,
            config_hash=config["hash"], seed=config["seed"],
        )
        return row

    rows = _run_rows(list(config["eps_list"]), worker)
    for eps, row in zip(config["eps_list"], rows):
        row.setdefault("eps", eps)
        row.setdefault("xi", xi)
        row.setdefault("config_hash", config["hash"])
        row.setdefault("seed", config["seed"])
    good = [r for r in rows if r["status"] == "ok"]
    slope_err, r2_err = _fit_slope(
        [r["eps"] for r in good], [r["abs_error"] for r in good]
    )
    slope_spread, r2_spread = _fit_slope(
        [r["eps"] for r in good], [r["spread"] for r in good]
    )
    for row in rows:
        row["slope_error"] = slope_err
        row["slope_spread"] = slope_spread
    csv_path = out_dir / "sweep.csv"
    _write_csv(csv_path, SWEEP_COLUMNS, rows)
    figures = _render_figures(config, "sweep", csv_path, out_dir)
    _write_metadata(
        config, out_dir / "sweep_metadata.json",
        {"rows": len(rows),
         "failed": sum(r["status"] != "ok" for r in rows),
         "slope_error": slope_err, "slope_error_r2": r2_err,
         "slope_spread": slope_spread, "slope_spread_r2": r2_spread,
         "theta1": result.theta1, "theta2": result.theta2,
         "figures": figures},
    )
    return rows


def _sigma_sample_points(R0, holes, guard_radii, count, seed):
    """Deterministic outer-region sample points inside the ball."""
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        x = rng.uniform(-R0, R0, size=3)
        if np.linalg.norm(x) > 0.95 * R0:
            continue
        if any(
            np.linalg.norm(x - np.asarray(c)) < g
            for c, g in zip(holes, guard_radii)
        ):
            continue
        points.append(x)
    return np.array(points)


def run_theta_report(config, out_dir):
    """Asymptotic coefficient bundle as JSON plus Σ(x) samples as CSV."""
    positions = [tuple(h["center"]) for h in config["domain"]["holes"]]
    R0 = config["domain"]["R0"]
    eps_ref = config["eps_ref"]
    spec = build_jump_spec(_firing_model(config), N=len(positions))
    radii = [h.get("radius", eps_ref) for h in config["domain"]["holes"]]
    Cn = np.array([r / eps_ref for r in radii])
    var_config = asymptotics.VaricosityConfig.from_spec(
        positions, spec, Cn=Cn, Dn=Cn**2
    )
    result = asymptotics.expansion(var_config, spec, R0)

    payload = {
        "theta1": float(result.theta1),
        "theta2": float(result.theta2),
        "chi2": result.chi2.tolist(),
        "gamma": result.gamma.tolist(),
        "positions": [list(p) for p in positions],
        "Cn": Cn.tolist(),
        "eps_ref": eps_ref,
        "R0": R0,
        "config_hash": config["hash"],
    }
    firing = config["firing"]
    if firing["model"] == "synchronous" and len(positions) == 2:
        t_sync, t_ind, gap = asymptotics.sync_indep_gap(
            np.asarray(positions[0]), np.asarray(positions[1]),
            firing["alpha"], firing["beta"], R0,
        )
        payload["sync_indep_gap"] = {
            "theta2_synchronous": float(t_sync),
            "theta2_independent": float(t_ind),
            "gap": float(gap),
            "gap_positive": bool(gap > 0),
        }
    if config["dimensional"]:
        d = config["dimensional"]
        payload["dimensional_scale"] = d["phi"] * d["l1"] / d["D"]

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "theta.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    guard = config["guard"] * eps_ref
    points = _sigma_sample_points(
        R0, positions, [guard] * len(positions),
        config["sigma_samples"], config["seed"],
    )
    with open(out_dir / "sigma_samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "sigma", "expansion"])
        for x in points:
            writer.writerow(
                [_fmt(float(v)) for v in x]
                + [_fmt(result.sigma(x)),
                   _fmt(result.eval(x, eps_ref, guard=config["guard"]))]
            )
    return payload


def greens_table(lam, R0, out, n=50):
    """Radial table of the ball Green's function and its regular part."""
    radii = np.linspace(R0 / n, 0.95 * R0, n)
    origin = np.zeros(3)
    if lam > 0:
        g = HelmholtzGreens(lam, R0)

        def row(r):
            x = np.array([r, 0.0, 0.0])
            return g(x, origin), g.regular_part(x, x)
    else:
        g = NeumannGreens(R0)

        def row(r):
            x = np.array([r, 0.0, 0.0])
            return g(x, origin), g.regular_coincident(x)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "green_center", "regular_coincident"])
        for r in radii:
            value, regular = row(r)
            writer.writerow([_fmt(float(r)), _fmt(value), _fmt(regular)])


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="volt",
        description="Volume-transmission mean-concentration experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate", "sweep", "theta"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
    g = sub.add_parser("greens")
    g.add_argument("--lambda", dest="lam", type=float, required=True)
    g.add_argument("--r0", type=float, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=50)
    args = parser.parse_args(argv)

    if args.command == "greens":
        greens_table(args.lam, args.r0, args.out)
        return 0

    from pathlib import Path

    config = load_config(args.config)
    expected = {
        "validate": "validate_shell",
        "sweep": "asymptotic_sweep",
        "theta": "theta_report",
    }[args.command]
    if config["experiment"] != expected:
        raise ConfigError(
            "config experiment %r does not match subcommand %r"
            % (config["experiment"], args.command)
        )
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.command == "validate":
        rows = run_validate_shell(config, out_dir)
    elif args.command == "sweep":
        rows = run_asymptotic_sweep(config, out_dir)
    else:
        run_theta_report(config, out_dir)
        return 0
    failed = sum(r["status"] != "ok" for r in rows)
    return 1 if failed * 2 > len(rows) else 0


if __name__ == "__main__":
    sys.exit(main())
