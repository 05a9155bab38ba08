"""Experiment driver.

Subcommands: ``s2-benchmark`` (1-D sphere flow against the ODE reference,
Dirichlet boundary), ``convergence`` (error vs. time step at a fixed
comparison time), ``so3`` (2-D rotation-valued flow, Neumann boundary) and
``custom`` (user-supplied initial field).  Every run writes snapshot CSVs in
the field schema plus one JSON report; see README for the file layout.

Configuration is a flat key = value file plus command-line overrides; the
``TVFLOW_OUT`` environment variable overrides the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import (check_dissipation, energy_series, error_bound,
                       error_constants, fit_convergence_order, l2_error,
                       rothe_interpolate)
from .geometry import get_manifold, s2_euler_angles, so3_axis_angle
from .grid import (Field, build_uniform_1d, build_uniform_2d, discrete_tv,
                   facet, lip_tv_upper, read_field_csv, write_field_csv)
from .oracle import (build_s2_benchmark_initial, build_so3_initial,
                     default_benchmark, exact_flow)
from .solver import FlowSolver, SchemeConfig, Trajectory

S2_SNAPSHOTS = (0.0, 0.07, 0.14, 0.21, 0.5)
SO3_SNAPSHOTS = (0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)
CONVERGENCE_TAUS = (1e-1, 1e-2, 1e-3, 1e-4)
FACET_REPORT_TOLS = (1e-9, 1e-6)


@dataclass
class ExperimentConfig:
    experiment: str = "s2-benchmark"
    manifold: str = "s2"
    n: int = 100
    nx: int = 25
    ny: int = 25
    length: float = 1.0
    lx: float = 1.0
    ly: float = 1.0
    tau: float = 1e-3
    taus: tuple = CONVERGENCE_TAUS
    rho: float = 0.1
    inner_tol: float = 1e-4
    inner_max_iters: int = 10_000
    gs_tol: float = 1e-10
    gs_max_iters: int = 10_000
    boundary: str = ""          # filled per experiment when empty
    t_end: float = -1.0         # filled per experiment when negative
    snapshots: tuple = ()       # filled per experiment when empty
    compare_time: float = 0.2
    oracle_dt: float = 1e-6
    out_dir: str = "out"
    seed: int = 0
    init_csv: str = ""

    def resolved(self) -> "ExperimentConfig":
        """Fill experiment-specific defaults and validate."""
        cfg = dataclasses.replace(self)
        if cfg.experiment == "s2-benchmark":
            cfg.manifold = "s2"
            cfg.boundary = cfg.boundary or "dirichlet"
            cfg.t_end = cfg.t_end if cfg.t_end > 0 else 0.5
            cfg.snapshots = cfg.snapshots or S2_SNAPSHOTS
        elif cfg.experiment == "convergence":
            cfg.manifold = "s2"
            cfg.boundary = cfg.boundary or "dirichlet"
            cfg.t_end = cfg.t_end if cfg.t_end > 0 else cfg.compare_time
            cfg.snapshots = cfg.snapshots or (cfg.compare_time,)
        elif cfg.experiment == "so3":
            cfg.manifold = "so3"
            cfg.boundary = cfg.boundary or "neumann"
            cfg.t_end = cfg.t_end if cfg.t_end > 0 else 1.0
            cfg.snapshots = cfg.snapshots or SO3_SNAPSHOTS
        elif cfg.experiment == "custom":
            if not cfg.init_csv:
                raise ValueError("custom experiment needs init_csv")
            cfg.boundary = cfg.boundary or "neumann"
            if cfg.t_end <= 0:
                raise ValueError("custom experiment needs a positive t_end")
            cfg.snapshots = cfg.snapshots or (0.0, cfg.t_end)
        else:
            raise ValueError(f"unknown experiment {cfg.experiment!r}")
        env_out = os.environ.get("TVFLOW_OUT")
        if env_out:
            cfg.out_dir = env_out
        bad = [t for t in cfg.snapshots if t < 0 or t > cfg.t_end + 1e-12]
        if bad:
            raise ValueError(f"snapshots outside [0, t_end]: {bad}")
        return cfg

    def scheme(self, tau: float | None = None) -> SchemeConfig:
        return SchemeConfig(tau=self.tau if tau is None else tau, rho=self.rho,
                            inner_tol=self.inner_tol,
                            inner_max_iters=self.inner_max_iters,
                            gs_tol=self.gs_tol, gs_max_iters=self.gs_max_iters,
                            boundary=self.boundary)


# ---------------------------------------------------------------------------
# flat key = value config files
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return tuple(_parse_value(p) for p in inner.split(",")) if inner else ()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file (# starts a comment)."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = _parse_value(value)
    return out


def config_from_sources(experiment: str, file_values: dict, overrides: dict
                        ) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=experiment)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for source in (file_values, overrides):
        for key, value in source.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if key == "experiment":
                continue
            if isinstance(value, list):
                value = tuple(value)
            setattr(cfg, key, value)
    return cfg.resolved()


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def _write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _tag(t: float) -> str:
    return f"{t:g}"


def _base_report(cfg: ExperimentConfig, constants: dict) -> dict:
    return {
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "constants": constants,
        "energy": [],
        "errors": [],
        "slope": None,
        "flags": {},
    }


def _constants_block(manifold, partition, edges) -> dict:
    mc = manifold.constants()
    lip = lip_tv_upper(partition, edges)
    ec = error_constants(mc, lip, partition.min_cell_measure,
                         partition.domain_measure)
    return {
        "manifold": manifold.name,
        "curv": mc.curv,
        "diam": mc.diam,
        "lfs": mc.lfs,
        "c_m_upper": mc.c_m_upper,
        "constants_source": mc.source,
        "lip_tv_upper": lip,
        "v_min": partition.min_cell_measure,
        "domain_measure": partition.domain_measure,
        "c0": ec.c0,
        "c1": ec.c1,
        "c2": ec.c2,
    }


def _snapshot_field(traj: Trajectory, manifold, t: float) -> Field:
    return rothe_interpolate(traj, manifold, t)


def _dissipation_flags(traj, edges, manifold, lip) -> dict:
    rep = check_dissipation(traj, edges, manifold.constants().curv, lip)
    return {
        "tau_curv_lip": rep.tau_curv_lip,
        "dissipation_hypothesis": rep.hypothesis_holds,
        "energy_monotone": rep.monotone,
        "max_energy_increase": rep.max_increase,
    }


def _theta_field_s2(u: Field) -> Field:
    theta = np.array([[s2_euler_angles(v)[0]] for v in u.values])
    return Field(u.partition, theta)


def _axis_angle_field_so3(u: Field) -> Field:
    out = np.empty((u.partition.n_cells, 3))
    for i, v in enumerate(u.values):
        theta, axis = so3_axis_angle(v.reshape(3, 3))
        phi, psi = s2_euler_angles(axis)
        out[i] = (theta, phi, psi)
    return Field(u.partition, out)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_s2_benchmark(cfg: ExperimentConfig) -> dict:
    """1-D benchmark: solver vs. ODE reference, per-snapshot colatitude CSVs."""
    cfg = cfg.resolved()
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifold = get_manifold("s2")
    partition, edges = build_uniform_1d(cfg.n, cfg.length)
    bench = default_benchmark()
    u0 = build_s2_benchmark_initial(partition, bench)
    solver = FlowSolver(manifold, partition, edges, cfg.scheme())
    traj = solver.run_flow(u0, cfg.t_end)

    lip = lip_tv_upper(partition, edges)
    report = _base_report(cfg, _constants_block(manifold, partition, edges))
    report["energy"] = list(energy_series(traj, edges))
    report["flags"] = _dissipation_flags(traj, edges, manifold, lip)
    report["flags"]["inner_iterations_max"] = max(r.inner_iters for r in traj.records)
    report["snapshots"] = list(cfg.snapshots)

    for t in cfg.snapshots:
        u_t = _snapshot_field(traj, manifold, t)
        ref_t = exact_flow(bench, partition, t, dt=cfg.oracle_dt)
        tag = _tag(t)
        write_field_csv(u_t, os.path.join(cfg.out_dir, f"s2_solver_t{tag}.csv"))
        write_field_csv(ref_t, os.path.join(cfg.out_dir, f"s2_oracle_t{tag}.csv"))
        write_field_csv(_theta_field_s2(u_t),
                        os.path.join(cfg.out_dir, f"s2_theta_solver_t{tag}.csv"))
        write_field_csv(_theta_field_s2(ref_t),
                        os.path.join(cfg.out_dir, f"s2_theta_oracle_t{tag}.csv"))
        report["errors"].append({"t": t, "l2_error": l2_error(u_t, ref_t)})

    _write_report(report, os.path.join(cfg.out_dir, "s2_benchmark_report.json"))
    return report


def run_convergence_study(cfg: ExperimentConfig) -> dict:
    """Error against the ODE reference at the comparison time, per tau."""
    cfg = cfg.resolved()
    if not cfg.taus:
        raise ValueError("tau list must not be empty")
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifold = get_manifold("s2")
    partition, edges = build_uniform_1d(cfg.n, cfg.length)
    bench = default_benchmark()
    u0 = build_s2_benchmark_initial(partition, bench)
    ref = exact_flow(bench, partition, cfg.compare_time, dt=cfg.oracle_dt)
    lip = lip_tv_upper(partition, edges)
    mc = manifold.constants()
    ec = error_constants(mc, lip, partition.min_cell_measure,
                         partition.domain_measure)

    report = _base_report(cfg, _constants_block(manifold, partition, edges))
    rows = []
    for tau in cfg.taus:
        solver = FlowSolver(manifold, partition, edges, cfg.scheme(tau=tau))
        traj = solver.run_flow(u0, cfg.compare_time)
        u_t = traj.states[-1]
        err = l2_error(u_t, ref)
        bound = error_bound(cfg.compare_time, tau, 0.0, ec)
        flags = _dissipation_flags(traj, edges, manifold, lip)
        max_x = max(r.x_norm for r in traj.records)
        rows.append({
            "tau": tau,
            "l2_error": err,
            "error_bound_sq": bound,
            "bound_dominates": err ** 2 < bound,
            "x_norm_max": max_x,
            "x_norm_limit": 1.1 * tau * lip,
            **flags,
        })
    report["errors"] = rows
    errs = [r["l2_error"] for r in rows]
    if len(cfg.taus) >= 2:
        slope, intercept, r2 = fit_convergence_order(cfg.taus, errs)
        report["slope"] = slope
        report["flags"] = {"r2": r2, "intercept": intercept,
                           "strictly_decreasing": all(
                               a > b for a, b in zip(errs, errs[1:]))}
    else:
        report["slope"] = None
        report["flags"] = {"r2": None, "intercept": None,
                           "strictly_decreasing": None}

    with open(os.path.join(cfg.out_dir, "convergence.csv"), "w",
              encoding="ascii", newline="\n") as f:
        f.write("tau,l2_error\n")
        for row in rows:
            f.write(f"{row['tau']:.17g},{row['l2_error']:.17g}\n")
    _write_report(report, os.path.join(cfg.out_dir, "convergence_report.json"))
    return report


def run_so3(cfg: ExperimentConfig) -> dict:
    """2-D rotation-valued flow: axis-angle snapshots and facet statistics."""
    cfg = cfg.resolved()
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifold = get_manifold("so3")
    partition, edges = build_uniform_2d(cfg.nx, cfg.ny, cfg.lx, cfg.ly)
    u0 = build_so3_initial(partition)
    solver = FlowSolver(manifold, partition, edges, cfg.scheme())
    traj = solver.run_flow(u0, cfg.t_end)

    lip = lip_tv_upper(partition, edges)
    report = _base_report(cfg, _constants_block(manifold, partition, edges))
    report["energy"] = list(energy_series(traj, edges))
    report["flags"] = _dissipation_flags(traj, edges, manifold, lip)
    report["flags"]["inner_iterations_max"] = max(r.inner_iters for r in traj.records)
    report["snapshots"] = list(cfg.snapshots)
    report["facet_counts"] = {f"{tol:g}": [] for tol in FACET_REPORT_TOLS}
    snap_energy = []
    for t in cfg.snapshots:
        u_t = _snapshot_field(traj, manifold, t)
        tag = _tag(t)
        write_field_csv(u_t, os.path.join(cfg.out_dir, f"so3_solver_t{tag}.csv"))
        write_field_csv(_axis_angle_field_so3(u_t),
                        os.path.join(cfg.out_dir, f"so3_axis_angle_t{tag}.csv"))
        for tol in FACET_REPORT_TOLS:
            report["facet_counts"][f"{tol:g}"].append(
                int(facet(u_t, edges, tol).sum()))
        snap_energy.append({"t": t, "tv": discrete_tv(u_t, edges)})
    report["errors"] = snap_energy  # no external reference for this flow
    _write_report(report, os.path.join(cfg.out_dir, "so3_report.json"))
    return report


def run_custom(cfg: ExperimentConfig) -> dict:
    """Run the flow from a user-supplied initial field CSV."""
    cfg = cfg.resolved()
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifold = get_manifold(cfg.manifold)
    if cfg.manifold == "s2":
        partition, edges = build_uniform_1d(cfg.n, cfg.length)
    else:
        partition, edges = build_uniform_2d(cfg.nx, cfg.ny, cfg.lx, cfg.ly)
    u0 = read_field_csv(cfg.init_csv, partition)
    manifold.check_point(u0.values, tol=1e-8)
    solver = FlowSolver(manifold, partition, edges, cfg.scheme())
    traj = solver.run_flow(u0, cfg.t_end)

    lip = lip_tv_upper(partition, edges)
    report = _base_report(cfg, _constants_block(manifold, partition, edges))
    report["energy"] = list(energy_series(traj, edges))
    report["flags"] = _dissipation_flags(traj, edges, manifold, lip)
    for t in cfg.snapshots:
        u_t = _snapshot_field(traj, manifold, t)
        write_field_csv(u_t, os.path.join(cfg.out_dir,
                                          f"custom_solver_t{_tag(t)}.csv"))
    _write_report(report, os.path.join(cfg.out_dir, "custom_report.json"))
    return report


RUNNERS = {
    "s2-benchmark": run_s2_benchmark,
    "convergence": run_convergence_study,
    "so3": run_so3,
    "custom": run_custom,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_grid(text: str) -> dict:
    if "x" in text:
        nx, ny = text.split("x", 1)
        return {"nx": int(nx), "ny": int(ny)}
    return {"n": int(text)}


def _parse_floats(text: str) -> tuple:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--tau", help="time step, or comma list for convergence")
    p.add_argument("--rho", type=float, help="split Bregman penalty")
    p.add_argument("--grid", help="N (1-D) or NXxNY (2-D)")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--snapshots", help="comma-separated snapshot times")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"])
    p.add_argument("--oracle-dt", type=float, dest="oracle_dt")
    p.add_argument("--inner-tol", type=float, dest="inner_tol")
    p.add_argument("--seed", type=int, help="seed recorded for randomized tooling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvflow",
        description="Manifold-constrained discrete total variation flows")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "custom":
            p.add_argument("--manifold", choices=["s2", "so3"])
            p.add_argument("--init", dest="init_csv",
                           help="initial field CSV (field schema)")
        if name == "convergence":
            p.add_argument("--compare-time", type=float, dest="compare_time")
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides = {}
    for key in ("rho", "t_end", "out_dir", "boundary", "oracle_dt", "seed",
                "manifold", "init_csv", "compare_time", "inner_tol"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "grid", None):
        overrides.update(_parse_grid(args.grid))
    if getattr(args, "snapshots", None):
        overrides["snapshots"] = _parse_floats(args.snapshots)
    if getattr(args, "tau", None):
        taus = _parse_floats(args.tau)
        if args.experiment == "convergence":
            overrides["taus"] = taus
        else:
            overrides["tau"] = taus[0]
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = config_from_sources(args.experiment, file_values,
                                  _overrides_from_args(args))
        report = RUNNERS[args.experiment](cfg)
    except Exception as exc:  # surface everything as a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    flags = report.get("flags", {})
    summary = ", ".join(f"{k}={v}" for k, v in sorted(flags.items())
                        if isinstance(v, (bool, int)))
    print(f"{args.experiment}: wrote {cfg.out_dir} ({summary})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
