"""Command-line driver for the numerical experiments.

Every run writes one CSV per study into the output directory (a ``# config``
comment line, then a header row) and a ``summary.json`` with fitted rates,
means and values at infinity.  Exit status: 0 success, 1 numerical failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .assembly import (
    FluxSpec,
    SourceSpec,
    assemble_system,
    assemble_stiffness,
    manufactured_solution_1d,
    manufactured_source_1d,
)
from .mesh import MeshError, build_disk_mesh_2d, build_mesh_1d, radius_to_H
from .params import FractionalParams, ParameterError
from .quadrature.pairs import SINGULAR_ORDER
from .solve import HeatConfig, SolverError, solve_heat, solve_stationary

EXPERIMENTS = ("solve", "rates", "truncation", "heat", "asymptotics", "interp-test")


@dataclass
class ExperimentConfig:
    experiment: str
    s: list[float] = field(default_factory=lambda: [0.5])
    alpha: float = 1.0
    h: list[float] = field(default_factory=lambda: [0.01])
    H: list[float] = field(default_factory=list)
    radius: list[float] = field(default_factory=list)
    grading: float = 3.0
    dim: int = 1
    f: float = 1.0
    g_amplitude: float = 0.0
    g_exponent: float = 1.0
    dt: float = 0.01
    t_final: float = 1.0
    fit_from: float = 2.0
    out: str = "out"
    quad_order: int = SINGULAR_ORDER
    threads: int = 1

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}")
        for s in self.s:
            FractionalParams(max(self.dim, 1), s, self.alpha if self.alpha > 0 else 1.0)
        if not self.alpha > 0.0:
            raise ParameterError("alpha must be positive")
        if not self.h or any(not v > 0.0 for v in self.h):
            raise ParameterError("mesh sizes must be positive")
        if any(not v > 0.0 for v in self.H + self.radius):
            raise ParameterError("domain extents must be positive")
        if self.dim not in (1, 2):
            raise ParameterError("dimension must be 1 or 2")
        if self.threads < 1:
            raise ParameterError("thread count must be at least 1")
        if self.experiment == "truncation" and len(self.H) < 3:
            raise ParameterError("the truncation study needs at least three H values")
        if self.experiment == "rates" and len(self.h) < 2:
            raise ParameterError("the rate study needs at least two mesh sizes")

    def describe(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# ------------------------------------------------------------------ output helpers


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, cfg: ExperimentConfig, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {cfg.describe()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) else v for v in row])


def _tag(v: float) -> str:
    return f"{v:g}".replace(".", "p")


# ------------------------------------------------------------------ experiments


def _extent_1d(cfg: ExperimentConfig, default: float) -> float:
    if cfg.H:
        return cfg.H[0]
    if cfg.radius:
        return radius_to_H(cfg.radius[0], 1.0)
    return default


def _flux(cfg: ExperimentConfig) -> FluxSpec:
    if cfg.g_amplitude == 0.0:
        return FluxSpec.zero()
    return FluxSpec.power_law(cfg.g_amplitude, cfg.g_exponent)


def _mesh(cfg: ExperimentConfig, h: float, radius: Optional[float] = None):
    if cfg.dim == 1:
        H = _extent_1d(cfg, 1.0) if radius is None else radius_to_H(radius, 1.0)
        return build_mesh_1d((-1.0, 1.0), H, h)
    r = radius if radius is not None else (cfg.radius[0] if cfg.radius else 3.0)
    return build_disk_mesh_2d(1.0, r, h, cfg.grading)


def run_solve(cfg: ExperimentConfig, out: Path) -> dict:
    summary = {}
    g = _flux(cfg)
    for s in cfg.s:
        params = FractionalParams(cfg.dim, s, cfg.alpha)
        mesh = _mesh(cfg, cfg.h[0])
        system = assemble_system(
            mesh, params, SourceSpec.constant(cfg.f), g, threads=cfg.threads, singular_order=cfg.quad_order
        )
        u = solve_stationary(system)
        diag = analysis.decay_diagnostics(u, g, system.f_integral, system.g_integral)
        pts = mesh.points if cfg.dim == 2 else mesh.points[:, None]
        rows = [tuple(p) + (c,) for p, c in zip(pts, u.coefficients[:-1])]
        header = ["x", "u"] if cfg.dim == 1 else ["x", "y", "u"]
        _write_csv(out / f"solution_s{_tag(s)}.csv", cfg, header, rows)
        summary[f"s={s:g}"] = {
            "n_nodes": mesh.n_nodes,
            "omega_mean": analysis.omega_mean(u),
            "predicted_mean": diag.mean,
            "tail_value": u.tail_value,
            "predicted_limit": diag.predicted_limit if math.isfinite(diag.predicted_limit) else str(diag.predicted_limit),
        }
    return summary


def run_rates(cfg: ExperimentConfig, out: Path) -> dict:
    """Manufactured 1D solution c_s (1 - x^2)_+^s on a sequence of meshes."""
    summary = {}
    H = _extent_1d(cfg, 1.2)
    for s in cfg.s:
        params = FractionalParams(1, s, cfg.alpha)
        exact = lambda x, s=s: manufactured_solution_1d(x, s)  # noqa: E731
        f = manufactured_source_1d(s, cfg.alpha)
        g = FluxSpec.manufactured(s)
        rows, l2_pts, hs_pts = [], [], []
        for h in cfg.h:
            mesh = build_mesh_1d((-1.0, 1.0), H, h)
            system = assemble_system(mesh, params, f, g, threads=cfg.threads, singular_order=cfg.quad_order)
            u = solve_stationary(system)
            l2 = analysis.l2_error_omega(u, exact)
            semi = analysis.hs_seminorm_omega_1d(u, exact, s)
            full = math.hypot(l2, semi)
            rows.append((h, l2, full, semi))
            l2_pts.append((h, l2))
            hs_pts.append((h, full))
        l2_fit = analysis.fit_rate(l2_pts)
        hs_fit = analysis.fit_rate(hs_pts)
        semi_fit = analysis.fit_rate([(r[0], r[3]) for r in rows])
        rows.append(("fitted_slope", l2_fit.slope, hs_fit.slope, semi_fit.slope))
        _write_csv(out / f"rates_s{_tag(s)}.csv", cfg, ["h", "l2_error", "hs_error", "hs_seminorm_error"], rows)
        summary[f"s={s:g}"] = {
            "l2_slope": l2_fit.slope,
            "hs_slope": hs_fit.slope,
            "hs_seminorm_slope": semi_fit.slope,
            "expected_l2_slope": s + 0.5,
            "expected_hs_slope": 0.5,
        }
    return summary


def run_truncation(cfg: ExperimentConfig, out: Path) -> dict:
    summary = {}
    g = _flux(cfg)
    f = SourceSpec.constant(cfg.f) if g.kind != "zero" else SourceSpec.from_callable(lambda x: np.sin(np.pi * x))
    for s in cfg.s:
        problem = analysis.TruncationProblem(s, f, g, cfg.alpha)
        res = analysis.truncation_study(problem, cfg.H, cfg.h[0], fit_from=cfg.fit_from, threads=cfg.threads)
        rows = list(zip(res.H[1:], res.differences))
        if res.fit is not None:
            rows.append(("fitted_slope", res.fit.slope))
        _write_csv(out / f"truncation_s{_tag(s)}.csv", cfg, ["H", "difference"], rows)
        summary[f"s={s:g}"] = {
            "exponent": res.fit.exponent if res.fit is not None else None,
            "tail_values": [float(v) for v in res.tail_values],
        }
    return summary


def run_heat(cfg: ExperimentConfig, out: Path) -> dict:
    """Heat flow from the indicator of [-1/2, 1/2]; decay of the distance to the mean."""
    summary = {}
    H = _extent_1d(cfg, 2.0)
    u0 = SourceSpec.from_callable(lambda x: (np.abs(x) <= 0.5).astype(np.float64), order=16)
    for s in cfg.s:
        params = FractionalParams(1, s, 1.0)
        mesh = build_mesh_1d((-1.0, 1.0), H, cfg.h[0])
        K = assemble_stiffness(mesh, params, threads=cfg.threads, singular_order=cfg.quad_order)
        states = solve_heat(mesh, params, HeatConfig(cfg.dt, cfg.t_final, u0), stiffness=K)
        mean0 = analysis.omega_mean(states[0])
        rows = []
        for st in states:
            dev = analysis.l2_error_omega_rule(st, lambda x, m=mean0: np.full(np.shape(x), m), 4)
            rows.append((st.time, analysis.omega_mean(st), dev))
        _write_csv(out / f"heat_s{_tag(s)}.csv", cfg, ["t", "mean", "l2_deviation"], rows)
        window = [(t, d) for t, _, d in rows if 0.1 - 1e-12 <= t <= 1.0 + 1e-12 and d > 0.0]
        fit = _linear_fit([t for t, _ in window], [math.log(d) for _, d in window]) if len(window) >= 2 else None
        summary[f"s={s:g}"] = {
            "initial_mean": mean0,
            "final_mean": rows[-1][1],
            "log_decay_slope": fit[0] if fit else None,
            "r_squared": fit[1] if fit else None,
        }
    return summary


def _linear_fit(x, y) -> tuple[float, float]:
    x, y = np.asarray(x), np.asarray(y)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), 1.0 - float(res @ res) / ss_tot if ss_tot > 0 else 1.0


def run_asymptotics(cfg: ExperimentConfig, out: Path) -> dict:
    """2D unit disk with f = cfg.f and g = -A|x|^{-2-p}; value at infinity against the prediction."""
    summary = {}
    g = _flux(cfg)
    radii = cfg.radius or [8.0, 16.0, 32.0]
    for s in cfg.s:
        params = FractionalParams(2, s, cfg.alpha)
        rows = []
        for r in radii:
            mesh = build_disk_mesh_2d(1.0, r, cfg.h[0], cfg.grading)
            system = assemble_system(
                mesh, params, SourceSpec.constant(cfg.f), g, threads=cfg.threads, singular_order=cfg.quad_order
            )
            u = solve_stationary(system)
            diag = analysis.decay_diagnostics(u, g, system.f_integral, system.g_integral)
            rows.append((r, radius_to_H(r, 1.0), u.tail_value, diag.predicted_limit, analysis.omega_mean(u)))
        _write_csv(out / f"asymptotics_s{_tag(s)}.csv", cfg, ["radius", "H", "tail_value", "predicted", "omega_mean"], rows)
        summary[f"s={s:g}"] = {
            "tail_values": [r[2] for r in rows],
            "predicted_limit": rows[0][3] if math.isfinite(rows[0][3]) else str(rows[0][3]),
        }
    return summary


def run_interp_test(cfg: ExperimentConfig, out: Path) -> dict:
    """L2(Omega) error of the quasi-interpolant of cos(x) under refinement."""
    hs = sorted(cfg.h, reverse=True) if len(cfg.h) > 1 else [0.2, 0.1, 0.05, 0.025]
    rows = []
    for h in hs:
        if cfg.dim == 1:
            mesh = build_mesh_1d((-1.0, 1.0), _extent_1d(cfg, 0.5), h)
            v = np.cos
        else:
            mesh = build_disk_mesh_2d(1.0, cfg.radius[0] if cfg.radius else 1.5, h, 0.0)
            v = lambda x: np.cos(x[:, 0]) * np.cos(x[:, 1])  # noqa: E731
        ih = analysis.quasi_interpolate(v, mesh)
        rows.append((h, analysis.l2_error_omega(ih, v)))
    fit = analysis.fit_rate(rows)
    rows.append(("fitted_slope", fit.slope))
    _write_csv(out / "interp_test.csv", cfg, ["h", "l2_error"], rows)
    return {"slope": fit.slope}


RUNNERS = {
    "solve": run_solve,
    "rates": run_rates,
    "truncation": run_truncation,
    "heat": run_heat,
    "asymptotics": run_asymptotics,
    "interp-test": run_interp_test,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment, writing its CSV files and summary.json; returns the exit status."""
    try:
        cfg.validate()
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = RUNNERS[cfg.experiment](cfg, out)
    except (ParameterError, MeshError) as exc:
        print(f"error: invalid configuration for {cfg.experiment}: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure in {cfg.experiment}: {exc}", file=sys.stderr)
        return 1
    summary = {"experiment": cfg.experiment, "config": asdict(cfg), "results": result}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


# ------------------------------------------------------------------ argument parsing


def _floats(text: str) -> list[float]:
    try:
        return [float(eval_fraction(t)) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def eval_fraction(token: str) -> float:
    """Parse '0.25' or '1/250'."""
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


LIST_KEYS = {"s", "h", "H", "radius"}
SCALAR_KEYS = {
    "alpha": float,
    "grading": float,
    "dim": int,
    "f": float,
    "g_amplitude": float,
    "g_exponent": float,
    "dt": float,
    "t_final": float,
    "fit_from": float,
    "out": str,
    "quad_order": int,
    "threads": int,
}


def read_config_file(path: str) -> dict:
    """key = value lines; '#' starts a comment; list values are comma separated."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key in LIST_KEYS:
            values[key] = _floats(val)
        elif key in SCALAR_KEYS:
            values[key] = SCALAR_KEYS[key](val)
        else:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("--s", type=_floats, help="fractional order(s), comma separated")
    common.add_argument("--alpha", type=float)
    common.add_argument("--h", type=_floats, help="mesh size(s) in Omega, e.g. 1/250,1/500")
    common.add_argument("--H", type=_floats, help="distance(s) from Omega to the outer boundary")
    common.add_argument("--radius", type=_floats, help="outer radius (half-width in 1D) of the meshed domain")
    common.add_argument("--grading", type=float, help="exterior grading exponent for disk meshes")
    common.add_argument("--dim", type=int, choices=(1, 2))
    common.add_argument("--f", type=float, help="constant source")
    common.add_argument("--g-amplitude", type=float, help="flux g = -A |x|^{-d-p}")
    common.add_argument("--g-exponent", type=float, help="decay exponent p of the flux")
    common.add_argument("--dt", type=float)
    common.add_argument("--t-final", type=float)
    common.add_argument("--fit-from", type=float, help="smallest H_{n+1} used in the truncation fit (default 2)")
    common.add_argument("--out")
    common.add_argument("--quad-order", type=int, help="Gauss order for singular element pairs")
    common.add_argument("--threads", type=int)
    parser = argparse.ArgumentParser(prog="fracneumann", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="experiment", metavar="{" + ",".join(EXPERIMENTS) + "}")
    sub.required = True
    helps = {
        "solve": "solve one problem with constant source and power-law flux",
        "rates": "convergence rates for the manufactured 1D solution",
        "truncation": "decay of successive differences as the computational domain grows",
        "heat": "fractional heat flow from an indicator initial state",
        "asymptotics": "value at infinity of 2D solutions for growing outer radii",
        "interp-test": "refinement study of the quasi-interpolation operator",
    }
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in LIST_KEYS | set(SCALAR_KEYS):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return ExperimentConfig(experiment=args.experiment, **values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
    except (ParameterError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
