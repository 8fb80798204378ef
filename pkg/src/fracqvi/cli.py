"""Command line runner: configuration, orchestration, file outputs.

Configuration comes from a flat ``key = value`` text file (``--config``)
overridden by command line flags; the fully resolved configuration is
echoed to ``run_metadata.json`` before any solve starts.  All CSV output
uses '.' decimals, ',' separators, LF endings and 17 significant digits, so
identical configurations reproduce identical bytes.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import FractionalParams, ProblemData, build_system
from .errors import (
    NumericalFailureError,
    OracleFailureError,
    ParameterError,
    SolverError,
)
from .linalg import PcgConfig
from .mesh import build_base_mesh, build_cylinder, build_graded_interval, default_gamma
from .oracle import (
    compare_trace,
    make_dense_fractional,
    psor_vi_solve,
    spectral_linear_solve,
)
from .qvi import (
    ObstacleMapSpec,
    QVIConfig,
    default_tau,
    eval_obstacle,
    solve_qvi,
    truncation_study,
)
from .ssn import SSNConfig, solve_unconstrained, ssn_solve

NORM_DESCRIPTION = "weighted_h1: sqrt(u^T (K~ + M~) u), y^alpha weight, no 1/d_s"
LOG_BASE = "natural"
PAPER_S_SWEEP = (0.2, 0.4, 0.6, 0.8)


@dataclass
class RunConfig:
    subcommand: str
    s: float = 0.5
    n_dim: int = 2
    base_m: int = 16
    layers: int = 8
    gamma: float = None
    tau: float = None
    tau_rule: str = None
    obstacle: str = "constant"
    obstacle_value: float = None
    obstacle_scale: float = None
    delta: float = 1e-10
    nu: float = 5e-3
    f: str = "polynomial-bump"
    eps1: float = 5e-4
    n_max: int = 150
    eps2: float = 1e-2
    k_max: int = 10
    theta0: float = 10.0
    theta_ratio: float = 1.5
    theta_max: float = 1e10
    mu_bar: float = 0.0
    pcg_rel_tol: float = 1e-10
    oracle: bool = False
    psi_scale: float = 0.6
    spectral_modes: int = 32
    tau_list: tuple = ()
    layers_per_unit: int = 8
    paper_example: int = None
    seed: int = 0
    out: str = "run_out"


_FILE_OPTIONS = [k for k in RunConfig.__dataclass_fields__ if k != "subcommand"]


def parse_kv_config(path):
    """Flat key = value file; '#' starts a comment, keys use underscores."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(
                    "%s:%d: expected 'key = value'" % (path, lineno)
                )
            key, val = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FILE_OPTIONS:
                raise ParameterError("%s:%d: unknown option %r" % (path, lineno, key))
            values[key] = val
    return values


def _coerce(name, raw):
    if isinstance(raw, str):
        target = RunConfig.__dataclass_fields__[name].type
        if name == "tau_list":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if target is float or name in ("gamma", "tau", "obstacle_value",
                                       "obstacle_scale"):
            return float(raw)
        if target is int or name == "paper_example":
            return int(raw)
        if target is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return raw
    return raw


def resolve_config(subcommand, cli_values, file_values):
    """Merge built-in defaults, config file, then flags (flags win)."""
    cfg = RunConfig(subcommand=subcommand)
    for key, raw in file_values.items():
        setattr(cfg, key, _coerce(key, raw))
    for key, val in cli_values.items():
        if val is not None:
            setattr(cfg, key, _coerce(key, val))

    if not 0.0 < cfg.s < 1.0:
        raise ParameterError("s=%r must lie in (0,1)" % (cfg.s,))
    if cfg.n_dim not in (1, 2):
        raise ParameterError("n_dim must be 1 or 2")
    if cfg.base_m < 1 or cfg.layers < 1:
        raise ParameterError("base_m and layers must be positive")
    if cfg.gamma is None:
        cfg.gamma = default_gamma(cfg.s)
    n_elements = cfg.base_m if cfg.n_dim == 1 else 2 * cfg.base_m ** 2
    if cfg.tau is None:
        cfg.tau = 1.0 + math.log(n_elements) / 3.0
        cfg.tau_rule = "log_rule"
    elif cfg.tau_rule is None:
        cfg.tau_rule = "fixed"
    if cfg.subcommand == "truncation" and not cfg.tau_list:
        cfg.tau_list = (1.0, 2.0, 3.0, 4.0)
    return cfg


def config_hash(cfg):
    payload = {k: v for k, v in asdict(cfg).items() if k != "out"}
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns, rows, cfg_hash):
    with open(path, "w", newline="\n") as fh:
        fh.write("# config_hash=%s\n" % cfg_hash)
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) for v in row) + "\n")


def write_metadata(out_dir, cfg, cfg_hash, extra):
    payload = {
        "config": asdict(cfg),
        "config_hash": cfg_hash,
        "norm": NORM_DESCRIPTION,
        "log_base": LOG_BASE,
    }
    payload.update(extra)
    with open(os.path.join(out_dir, "run_metadata.json"), "w", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_trace_csv(path, base, cfg_hash, trace, psi=None, active=None):
    coord_cols = ["x1"] if base.dim == 1 else ["x1", "x2"]
    cols = coord_cols + ["u"]
    if psi is not None:
        cols.append("psi")
    if active is not None:
        cols.append("active")
    rows = []
    for i in range(base.n_vertices):
        row = list(base.vertices[i]) + [trace[i]]
        if psi is not None:
            row.append(psi[i])
        if active is not None:
            row.append(bool(active[i]))
        rows.append(row)
    write_csv(path, cols, rows, cfg_hash)


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------

def resolve_f(cfg, base):
    """Nodal load values and (when analytic) the matching callable."""
    spec = cfg.f
    if spec == "polynomial-bump":
        if base.dim == 1:
            fn = lambda p: p[:, 0] * (1.0 - p[:, 0])
        else:
            fn = lambda p: (p[:, 0] * (1.0 - p[:, 0])
                            * p[:, 1] * (1.0 - p[:, 1]))
    elif spec == "one":
        fn = lambda p: np.ones(p.shape[0])
    elif spec.startswith("eigenfunction:"):
        try:
            ks = tuple(int(v) for v in spec.split(":", 1)[1].split(","))
        except ValueError:
            raise ParameterError("bad eigenfunction spec %r" % (spec,))
        if len(ks) != base.dim or any(k < 1 for k in ks):
            raise ParameterError(
                "eigenfunction spec %r needs %d positive indices" % (spec, base.dim)
            )

        def fn(p, ks=ks):
            out = np.ones(p.shape[0])
            for d, k in enumerate(ks):
                out *= np.sqrt(2.0) * np.sin(k * np.pi * p[:, d])
            return out
    elif spec.startswith("file:"):
        path = spec.split(":", 1)[1]
        values = np.loadtxt(path, comments="#", ndmin=1)
        if values.shape != (base.n_vertices,):
            raise ParameterError(
                "nodal file %s has %d values, mesh has %d vertices"
                % (path, values.shape[0], base.n_vertices)
            )
        return values, None
    else:
        raise ParameterError("unknown f spec %r" % (spec,))
    return fn(base.vertices), fn


def resolve_obstacle_spec(cfg):
    kind = cfg.obstacle
    value = cfg.obstacle_value
    if ":" in kind:
        kind, raw = kind.split(":", 1)
        value = float(raw)
    return ObstacleMapSpec.make(
        kind, scale=cfg.obstacle_scale, delta=cfg.delta, nu=cfg.nu, value=value
    )


def build_problem(cfg):
    base = build_base_mesh(cfg.n_dim, cfg.base_m)
    interval = build_graded_interval(cfg.layers, cfg.gamma, cfg.tau, cfg.s)
    cyl = build_cylinder(base, interval)
    fp = FractionalParams.from_order(cfg.s)
    load, f_callable = resolve_f(cfg, base)
    data = ProblemData.make(base, load)
    return base, cyl, fp, data, f_callable


def make_ssn_config(cfg):
    return SSNConfig(
        mu_bar=cfg.mu_bar, theta0=cfg.theta0, theta_ratio=cfg.theta_ratio,
        theta_max=cfg.theta_max, eps2=cfg.eps2, k_max=cfg.k_max,
        pcg=PcgConfig(rel_tol=cfg.pcg_rel_tol),
    )


def make_qvi_config(cfg):
    return QVIConfig(eps1=cfg.eps1, n_max=cfg.n_max, tau_rule=cfg.tau_rule,
                     ssn=make_ssn_config(cfg))


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------

def _vtk_title(cfg_hash):
    return "config_hash=%s" % cfg_hash


def run_linear(cfg, out_dir, cfg_hash):
    from .vtkio import write_cylinder_vtk

    base, cyl, fp, data, f_callable = build_problem(cfg)
    system = build_system(cyl, fp, data)
    u = solve_unconstrained(system, PcgConfig(rel_tol=cfg.pcg_rel_tol))
    trace = system.trace(u)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), base, cfg_hash, trace)
    write_cylinder_vtk(os.path.join(out_dir, "field.vtk"), cyl, {"u": u},
                       title=_vtk_title(cfg_hash))
    extra = {"dof": {"free": cyl.n_free, "nodes": cyl.n_nodes}}
    if cfg.oracle:
        target = f_callable if f_callable is not None else data.load
        exact = spectral_linear_solve(target, cfg.s, cfg.spectral_modes, base)
        rel_l2, rel_inf = compare_trace(trace, exact, base)
        write_csv(os.path.join(out_dir, "oracle.csv"),
                  ["rel_L2", "rel_Linf"], [(rel_l2, rel_inf)], cfg_hash)
        extra["oracle"] = {"rel_L2": rel_l2, "rel_Linf": rel_inf}
    write_metadata(out_dir, cfg, cfg_hash, extra)
    return 0


def _write_ssn_log(out_dir, cfg_hash, rows):
    write_csv(os.path.join(out_dir, "ssn_log.csv"),
              ["outer_n", "theta", "k", "active_count", "residual"],
              rows, cfg_hash)


def run_vi(cfg, out_dir, cfg_hash):
    from .vtkio import write_cylinder_vtk

    base, cyl, fp, data, f_callable = build_problem(cfg)
    system = build_system(cyl, fp, data)
    spec = resolve_obstacle_spec(cfg)
    psi = eval_obstacle(spec, np.zeros(base.n_vertices), base)
    sol = ssn_solve(system, system.load, psi, np.zeros(cyl.n_nodes),
                    make_ssn_config(cfg))
    trace = system.trace(sol.u)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), base, cfg_hash,
                    trace, psi, sol.active)
    _write_ssn_log(out_dir, cfg_hash, [(1,) + row for row in sol.log])
    write_cylinder_vtk(os.path.join(out_dir, "field.vtk"), cyl, {"u": sol.u},
                       title=_vtk_title(cfg_hash))
    extra = {"dof": {"free": cyl.n_free, "nodes": cyl.n_nodes},
             "newton_iters": sol.newton_iters, "theta_final": sol.theta_final}
    if cfg.oracle:
        rel_l2, rel_inf = _psor_comparison(cfg, base, data, psi, trace, out_dir,
                                           cfg_hash)
        extra["oracle"] = {"rel_L2": rel_l2, "rel_Linf": rel_inf}
    write_metadata(out_dir, cfg, cfg_hash, extra)
    return 0


def _psor_comparison(cfg, base, data, psi, fem_trace, out_dir, cfg_hash):
    op = make_dense_fractional(base.dim, cfg.base_m, cfg.s)
    interior = base.interior
    b = data.load[interior]
    u_int, _ = psor_vi_solve(op, b, psi[interior])
    u_oracle = np.zeros(base.n_vertices)
    u_oracle[interior] = u_int
    rel_l2, rel_inf = compare_trace(fem_trace, u_oracle, base)
    write_csv(os.path.join(out_dir, "oracle.csv"),
              ["rel_L2", "rel_Linf"], [(rel_l2, rel_inf)], cfg_hash)
    return rel_l2, rel_inf


def run_qvi(cfg, out_dir, cfg_hash):
    from .vtkio import write_cylinder_vtk

    base, cyl, fp, data, _ = build_problem(cfg)
    spec = resolve_obstacle_spec(cfg)
    result = None
    try:
        result = solve_qvi(data, spec, cyl, fp, make_qvi_config(cfg))
    finally:
        if result is None:
            # flush empty logs so a failed run still leaves artifacts
            write_csv(os.path.join(out_dir, "iterations.csv"),
                      ["n", "rel_change", "ssn_total_iters", "active_count"],
                      [], cfg_hash)
    write_csv(os.path.join(out_dir, "iterations.csv"),
              ["n", "rel_change", "ssn_total_iters", "active_count"],
              [(i + 1,) + row for i, row in enumerate(result.history)],
              cfg_hash)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), base, cfg_hash,
                    result.trace, result.psi_final, result.active)
    _write_ssn_log(out_dir, cfg_hash, result.ssn_logs)
    write_cylinder_vtk(os.path.join(out_dir, "field.vtk"), cyl,
                       {"u": result.u}, title=_vtk_title(cfg_hash))
    write_metadata(out_dir, cfg, cfg_hash, {
        "dof": {"free": cyl.n_free, "nodes": cyl.n_nodes},
        "outer_iters": result.outer_iters,
        "converged": bool(result.converged),
    })
    return 0


def run_oracle(cfg, out_dir, cfg_hash):
    base, cyl, fp, data, f_callable = build_problem(cfg)
    if f_callable is None:
        raise ParameterError("oracle runs need an analytic f spec")
    exact = spectral_linear_solve(f_callable, cfg.s, cfg.spectral_modes, base)
    psi_value = cfg.psi_scale * float(np.max(exact))
    system = build_system(cyl, fp, data)
    psi = np.full(base.n_vertices, psi_value)
    sol = ssn_solve(system, system.load, psi, np.zeros(cyl.n_nodes),
                    make_ssn_config(cfg))
    trace = system.trace(sol.u)
    rel_l2, rel_inf = _psor_comparison(cfg, base, data, psi, trace, out_dir,
                                       cfg_hash)
    write_trace_csv(os.path.join(out_dir, "trace.csv"), base, cfg_hash,
                    trace, psi, sol.active)
    write_metadata(out_dir, cfg, cfg_hash, {
        "dof": {"free": cyl.n_free, "nodes": cyl.n_nodes},
        "psi_value": psi_value,
        "oracle": {"rel_L2": rel_l2, "rel_Linf": rel_inf},
    })
    return 0


def run_truncation(cfg, out_dir, cfg_hash):
    base = build_base_mesh(cfg.n_dim, cfg.base_m)
    fp = FractionalParams.from_order(cfg.s)
    load, _ = resolve_f(cfg, base)
    data = ProblemData.make(base, load)
    spec = resolve_obstacle_spec(cfg)

    def builder(tau):
        layers = max(1, int(round(cfg.layers_per_unit * tau)))
        return build_cylinder(
            base, build_graded_interval(layers, cfg.gamma, tau, cfg.s)
        )

    study = truncation_study(data, spec, fp, cfg.tau_list, builder,
                             make_qvi_config(cfg))
    rows = [
        (r.tau,) + r.probe_values + (r.h1_norm, r.outer_iters, r.converged)
        for r in study.rows
    ]
    write_csv(os.path.join(out_dir, "truncation.csv"),
              ["tau", "center_trace", "h1_norm", "outer_iters", "converged"],
              rows, cfg_hash)
    write_metadata(out_dir, cfg, cfg_hash, {
        "h1_diffs": list(study.h1_diffs),
    })
    return 0


PAPER_EXAMPLES = {
    1: {"obstacle": "example1", "f": "polynomial-bump"},
    2: {"obstacle": "example2", "f": "polynomial-bump"},
    3: {"obstacle": "example3_impulse", "f": "polynomial-bump"},
    4: {"obstacle": "example4", "f": "one"},
}


def expand_paper_example(cfg):
    """Apply the published example configuration onto a run config."""
    if cfg.paper_example not in PAPER_EXAMPLES:
        raise ParameterError("paper example must be one of 1..4")
    preset = PAPER_EXAMPLES[cfg.paper_example]
    cfg.obstacle = preset["obstacle"]
    cfg.f = preset["f"]
    return cfg


def run_paper_example(cfg, out_dir, cfg_hash, cli_values, file_values):
    s_values = (cfg.s,) if cli_values.get("s") is not None else PAPER_S_SWEEP
    for s in s_values:
        sub = dict(cli_values)
        sub["s"] = s
        sub.setdefault("base_m", None)
        sub.setdefault("layers", None)
        # 34^2 interior vertices x 11 layers = 12716 unknowns
        if sub.get("base_m") is None and "base_m" not in file_values:
            sub["base_m"] = 35
        if sub.get("layers") is None and "layers" not in file_values:
            sub["layers"] = 11
        sub["gamma"] = cli_values.get("gamma")
        sub_cfg = resolve_config("qvi", sub, file_values)
        sub_cfg.paper_example = cfg.paper_example
        expand_paper_example(sub_cfg)
        sub_dir = os.path.join(out_dir, "s_%s" % ("%g" % s))
        os.makedirs(sub_dir, exist_ok=True)
        sub_cfg.out = sub_dir
        run_qvi(sub_cfg, sub_dir, config_hash(sub_cfg))
    return 0


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------

def _add_common(p, tau_type=float):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--s", type=float)
    p.add_argument("--n-dim", dest="n_dim", type=int)
    p.add_argument("--base-m", dest="base_m", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=tau_type)
    p.add_argument("--f")
    p.add_argument("--eps1", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--eps2", type=float)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--theta0", type=float)
    p.add_argument("--theta-ratio", dest="theta_ratio", type=float)
    p.add_argument("--theta-max", dest="theta_max", type=float)
    p.add_argument("--mu-bar", dest="mu_bar", type=float)
    p.add_argument("--pcg-rel-tol", dest="pcg_rel_tol", type=float)
    p.add_argument("--spectral-modes", dest="spectral_modes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracqvi",
        description="fractional quasi-variational inequality solver",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("linear", help="unconstrained extension solve")
    _add_common(p)
    p.add_argument("--oracle", action="store_true", default=None)

    p = sub.add_parser("vi", help="fixed-obstacle inequality solve")
    _add_common(p)
    p.add_argument("--obstacle")
    p.add_argument("--obstacle-value", dest="obstacle_value", type=float)
    p.add_argument("--obstacle-scale", dest="obstacle_scale", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--oracle", action="store_true", default=None)

    p = sub.add_parser("qvi", help="quasi-variational fixed-point solve")
    _add_common(p)
    p.add_argument("--obstacle")
    p.add_argument("--obstacle-value", dest="obstacle_value", type=float)
    p.add_argument("--obstacle-scale", dest="obstacle_scale", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--paper-example", dest="paper_example", type=int)

    p = sub.add_parser("oracle", help="dense-oracle comparison run")
    _add_common(p)
    p.add_argument("--psi-scale", dest="psi_scale", type=float)

    # --tau doubles as the height list here ("--tau 1,2,3,4")
    p = sub.add_parser("truncation", help="increasing-truncation study")
    _add_common(p, tau_type=str)
    p.add_argument("--tau-list", dest="tau_list")
    p.add_argument("--layers-per-unit", dest="layers_per_unit", type=int)
    p.add_argument("--obstacle")
    p.add_argument("--obstacle-value", dest="obstacle_value", type=float)

    p = sub.add_parser("paper-example", help="published example reproduction")
    p.add_argument("example", type=int, choices=(1, 2, 3, 4))
    _add_common(p)

    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cli_values = {
        k: v for k, v in vars(args).items()
        if k not in ("subcommand", "config", "example") and v is not None
    }
    file_values = parse_kv_config(args.config) if args.config else {}

    if args.subcommand == "truncation" and isinstance(cli_values.get("tau"), str):
        raw = cli_values.pop("tau")
        if "," in raw:
            cli_values.setdefault("tau_list", raw)
        else:
            cli_values["tau"] = float(raw)

    if args.subcommand == "paper-example":
        cli_values["paper_example"] = args.example

    cfg = resolve_config(args.subcommand, cli_values, file_values)
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)

    if args.subcommand == "paper-example":
        return run_paper_example(cfg, out_dir, config_hash(cfg), cli_values,
                                 file_values)
    if args.subcommand == "qvi" and cfg.paper_example is not None:
        expand_paper_example(cfg)
    cfg_hash = config_hash(cfg)
    runner = {
        "linear": run_linear,
        "vi": run_vi,
        "qvi": run_qvi,
        "oracle": run_oracle,
        "truncation": run_truncation,
    }[args.subcommand]
    return runner(cfg, out_dir, cfg_hash)


def main(argv=None):
    try:
        return run(argv)
    except ParameterError as err:
        print("configuration error: %s" % err, file=sys.stderr)
        return 2
    except (SolverError, NumericalFailureError, OracleFailureError) as err:
        print("solver failure: %s" % err, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
