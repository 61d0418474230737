"""Configuration-driven command line interface.

Subcommands: ``forward``, ``synth``, ``identify``, ``stats``, ``convergence``.
Every run reads a JSON config (``--config``), applies environment-variable
overrides (prefix ``SHELLFEMU_``, nested keys joined with ``__``), writes the
resolved config plus a ``summary.json`` into the output directory, and is
replayable bit-identically from those artifacts.

Exit codes: 0 success, 2 configuration error, 3 forward-solve/synthesis
failure, 4 optimizer failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments as xp
from .assembly import parametric_grid, sampling_matrix, uniform_levels
from .backends import backend_name
from .errors import ConfigError, ForwardSolveError, ShellFemuError, SynthesisError
from .forward import convergence_study, solve_forward
from .inverse import InverseSettings

ENV_PREFIX = "SHELLFEMU_"

_EXIT_CONFIG = 2
_EXIT_FORWARD = 3
_EXIT_OPTIMIZER = 4


# --- configuration -----------------------------------------------------------


_DEFAULTS = {
    "noise": 0.0,
    "seed": 0,
    "tol": 1e-10,
    "max_iter": 50,
    "threads": 1,
    "repetitions": 25,
    "init": {"mode": "constant"},
    "allow_same_mesh": False,
    "out": "run_output",
}


def load_config(path, overrides=None):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    merged = dict(_DEFAULTS)
    merged.update(cfg)
    _apply_env_overrides(merged)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    validate_config(merged)
    return merged


def _apply_env_overrides(cfg):
    for name, raw in os.environ.items():
        if not name.startswith(ENV_PREFIX) or name == "SHELLFEMU_JIT":
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        for key in path[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override non-object key", field=name)
        node[path[-1]] = value


def _require_mesh(cfg, key, where):
    v = cfg.get(key)
    if v is None:
        return None
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(n, int) and n >= 1 for n in v)):
        raise ConfigError("must be a pair of positive integers", field=where)
    return tuple(v)


def validate_config(cfg):
    cases = xp.case_library()
    name = cfg.get("case")
    if name not in cases:
        raise ConfigError(f"unknown case {name!r}; available: {sorted(cases)}",
                          field="case")
    for key in ("fe_mesh", "material_mesh", "fine_mesh", "exp_grid"):
        _require_mesh(cfg, key, key)
    noise = cfg.get("noise", 0.0)
    if not (isinstance(noise, (int, float)) and 0.0 <= noise <= 0.1):
        raise ConfigError("noise must lie in [0, 0.1]", field="noise")
    n_ll = cfg.get("n_ll")
    if n_ll is not None and (not isinstance(n_ll, int) or n_ll < 1):
        raise ConfigError("n_ll must be a positive integer", field="n_ll")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError("seed must be an integer", field="seed")
    init = cfg.get("init", {})
    if init.get("mode", "constant") not in ("constant", "random", "explicit"):
        raise ConfigError("mode must be constant | random | explicit",
                          field="init.mode")
    reps = cfg.get("repetitions", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("repetitions must be a positive integer",
                          field="repetitions")
    return cfg


def _case_of(cfg):
    return xp.case_library()[cfg["case"]]


def _material_spec(cfg, case):
    if "material_edges" in cfg:
        me = cfg["material_edges"]
        return None, (np.asarray(me["x"], dtype=float),
                      np.asarray(me["y"], dtype=float))
    return _require_mesh(cfg, "material_mesh", "material_mesh"), None


def _out_dir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        raise TypeError(f"not serializable: {type(o)}")

    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True, default=default)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])


def _finish(cfg, out, summary):
    _write_json(out / "resolved_config.json", cfg)
    summary["backend"] = backend_name()
    _write_json(out / "summary.json", summary)


# --- commands ------------------------------------------------------------------


def cmd_forward(cfg):
    case = _case_of(cfg)
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    fe_mesh = _require_mesh(cfg, "fe_mesh", "fe_mesh") or case.fe_mesh
    n_ll = cfg.get("n_ll") or case.n_ll
    levels = uniform_levels(n_ll)
    mm, me = _material_spec(cfg, case)
    field = case.make_field(material_mesh=mm, material_edges=me)
    asm, dof = case.build(fe_mesh, levels, field)
    sol = solve_forward(asm, dof, levels)

    gx, gy = _require_mesh(cfg, "exp_grid", "exp_grid") or case.exp_grid
    pts = parametric_grid(gx, gy)
    P = sampling_matrix(asm.patch, pts)
    Xs = (sampling_matrix(asm.patch, pts)
          @ asm.patch.ctrl.reshape(-1)).reshape(-1, 3)
    for l, lv in enumerate(levels):
        U = (P @ sol.u[l]).reshape(-1, 3)
        _write_csv(out / f"displacements_level{l}.csv",
                   ["xi1", "xi2", "X", "Y", "Z", "ux", "uy", "uz"],
                   [[pts[k, 0], pts[k, 1], *Xs[k], *U[k]]
                    for k in range(pts.shape[0])])
    _write_csv(out / "reactions.csv", ["level", "set", "value"],
               [[lv, name, val] for l, lv in enumerate(levels)
                for name, val in sol.reactions[l].items()])
    _finish(cfg, out, {
        "command": "forward", "case": case.name, "fe_mesh": list(fe_mesh),
        "levels": list(levels), "newton_iterations": sol.newton_iters,
        "residual_norms": sol.residual_norms,
        "wall_time": time.perf_counter() - t0,
    })
    return 0


def cmd_synth(cfg):
    case = _case_of(cfg)
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    fine = _require_mesh(cfg, "fine_mesh", "fine_mesh") or case.fine_mesh
    analysis = _require_mesh(cfg, "fe_mesh", "fe_mesh") or case.fe_mesh
    exp = xp.synthesize(case, fine_mesh=fine, n_ll=cfg.get("n_ll"),
                        noise_level=cfg["noise"], seed=cfg["seed"],
                        grid=_require_mesh(cfg, "exp_grid", "exp_grid"),
                        analysis_mesh=analysis)
    exp.save(out / "experiment.json", out / "experiment_u.csv")
    _finish(cfg, out, {
        "command": "synth", "case": case.name, "fine_mesh": list(fine),
        "n_exp": exp.n_exp, "noise": cfg["noise"], "seed": cfg["seed"],
        "wall_time": time.perf_counter() - t0,
    })
    return 0


def _identification_inputs(cfg, case):
    if "experiment" in cfg:
        exp = xp.ExperimentData.load(cfg["experiment"])
    else:
        fine = _require_mesh(cfg, "fine_mesh", "fine_mesh") or case.fine_mesh
        exp = xp.synthesize(case, fine_mesh=fine, n_ll=cfg.get("n_ll"),
                            noise_level=cfg["noise"], seed=cfg["seed"],
                            grid=_require_mesh(cfg, "exp_grid", "exp_grid"))
    return exp


def _settings_from(cfg, case):
    bounds = dict(case.bounds)
    for kind, pair in cfg.get("bounds", {}).items():
        bounds[kind] = tuple(pair)
    return InverseSettings(bounds=bounds, tol=cfg["tol"],
                           max_iter=cfg["max_iter"])


def cmd_identify(cfg):
    case = _case_of(cfg)
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    exp = _identification_inputs(cfg, case)
    mm, me = _material_spec(cfg, case)
    fe_mesh = _require_mesh(cfg, "fe_mesh", "fe_mesh") or case.fe_mesh
    problem, ref_nodal = xp.build_identification(
        case, exp, fe_mesh=fe_mesh, material_mesh=mm, material_edges=me,
        symmetry=cfg.get("symmetry"), settings=_settings_from(cfg, case),
        allow_same_mesh=cfg["allow_same_mesh"])
    init = cfg.get("init", {"mode": "constant"})
    q0 = xp.initial_estimate(case, problem.design_map,
                             mode=init.get("mode", "constant"),
                             seed=init.get("seed", cfg["seed"]),
                             values=init.get("values"),
                             bounds=problem.settings.bounds)
    result = problem.minimize(q0)
    report = xp.error_metrics(ref_nodal, result.nodal)

    field = problem.assembler.field
    node_xy = field.node_params()
    _write_csv(out / "q_opt.csv", ["kind", "node", "xi1", "xi2", "value"],
               [[kind, i, node_xy[i, 0], node_xy[i, 1], float(v)]
                for kind in problem.design_map.kinds
                for i, v in enumerate(result.nodal[kind])])
    _write_csv(out / "trace.csv", ["iteration", "f", "step_norm", "accepted"],
               [[h.iteration, h.f, h.step_norm, int(h.accepted)]
                for h in result.history])
    _write_csv(out / "errors.csv", ["kind", "node", "delta_percent"],
               [[kind, i, float(d)] for kind in report.per_kind
                for i, d in enumerate(report.per_kind[kind])])
    diag = result.diagnostics
    _finish(cfg, out, {
        "command": "identify", "case": case.name, "status": result.status,
        "iterations": result.iterations, "f_final": result.f_final,
        "n_residual": result.n_residual, "n_jacobian": result.n_jacobian,
        "delta_max_percent": report.delta_max,
        "delta_ave_percent": report.delta_ave,
        "jacobian_column_norms": diag.get("jacobian_column_norms"),
        "low_sensitivity_vars": diag.get("low_sensitivity_vars"),
        "wall_time": time.perf_counter() - t0,
    })
    return 0


def cmd_stats(cfg):
    case = _case_of(cfg)
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    reps = cfg["repetitions"]
    mm, me = _material_spec(cfg, case)
    fe_mesh = _require_mesh(cfg, "fe_mesh", "fe_mesh") or case.fe_mesh
    report = xp.run_statistics(
        case, reps, base_seed=cfg["seed"], noise_level=cfg["noise"],
        fine_mesh=_require_mesh(cfg, "fine_mesh", "fine_mesh"),
        n_ll=cfg.get("n_ll"), grid=_require_mesh(cfg, "exp_grid", "exp_grid"),
        threads=cfg["threads"], fe_mesh=fe_mesh, material_mesh=mm,
        material_edges=me, symmetry=cfg.get("symmetry"),
        settings=_settings_from(cfg, case))

    rows = []
    for kind in case.identified:
        rows.append([kind, report.mean_ave[kind], report.std_ave[kind],
                     report.mean_max[kind], report.std_max[kind],
                     report.converged, report.failed])
    _write_csv(out / "stats.csv",
               ["kind", "mean_delta_ave", "std_delta_ave", "mean_delta_max",
                "std_delta_max", "converged", "failed"], rows)
    hrows = []
    for kind, (edges, counts) in report.histogram.items():
        for b in range(len(counts)):
            hrows.append([kind, float(edges[b]), float(edges[b + 1]),
                          int(counts[b])])
    _write_csv(out / "histogram.csv", ["kind", "bin_lo", "bin_hi", "count"],
               hrows)
    _write_csv(out / "per_run.csv", ["kind", "repetition", "delta_ave"],
               [[kind, i, float(v)] for kind in report.per_run_ave
                for i, v in enumerate(report.per_run_ave[kind])])
    _finish(cfg, out, {
        "command": "stats", "case": case.name, "repetitions": reps,
        "noise": cfg["noise"], "converged": report.converged,
        "failed": report.failed,
        "mean_delta_ave": report.mean_ave, "std_delta_ave": report.std_ave,
        "wall_time": time.perf_counter() - t0,
    })
    return 0


def cmd_convergence(cfg):
    case = _case_of(cfg)
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    conv = cfg.get("convergence", {})
    meshes = [tuple(m) for m in conv.get("meshes",
                                         [[8, 8], [16, 16], [32, 32], [64, 64]])]
    reference = tuple(conv.get("reference", [128, 128]))
    gspec = conv.get("grid", [101, 101])
    grid = parametric_grid(*gspec)
    n_ll = cfg.get("n_ll") or 1
    levels = uniform_levels(n_ll)

    def factory(mesh):
        field = case.make_field(material_mesh=mesh)
        asm, dof = case.build(mesh, levels, field)
        return asm, dof, levels

    errors, slope = convergence_study(factory, meshes, reference, grid=grid)
    _write_csv(out / "convergence.csv", ["n_el", "rel_l2_error"],
               [[m[0] * m[1], float(e)] for m, e in zip(meshes, errors)])
    _finish(cfg, out, {
        "command": "convergence", "case": case.name,
        "meshes": [list(m) for m in meshes], "reference": list(reference),
        "errors": [float(e) for e in errors], "slope": slope,
        "wall_time": time.perf_counter() - t0,
    })
    return 0


# --- entry point ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="shellfemu",
        description="Forward shell solves and heterogeneous material "
                    "identification on synthetic experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("forward", cmd_forward), ("synth", cmd_synth),
                     ("identify", cmd_identify), ("stats", cmd_stats),
                     ("convergence", cmd_convergence)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run config")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--threads", type=int, default=None)
        if name == "stats":
            sp.add_argument("--repetitions", type=int, default=None)
        sp.set_defaults(fn=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
    if getattr(args, "repetitions", None) is not None:
        overrides["repetitions"] = args.repetitions
    try:
        cfg = load_config(args.config, overrides)
        return args.fn(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (ForwardSolveError, SynthesisError) as exc:
        print(f"forward-solve error: {exc}", file=sys.stderr)
        return _EXIT_FORWARD
    except ShellFemuError as exc:
        print(f"optimizer error: {exc}", file=sys.stderr)
        return _EXIT_OPTIMIZER


if __name__ == "__main__":
    sys.exit(main())
