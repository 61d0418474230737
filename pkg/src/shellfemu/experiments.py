"""Synthetic experiments, reference distributions, error metrics and the
library of identification cases.

Experiment-like data is produced by solving the forward problem on a fine
mesh with the analytic reference distribution, sampling the displacement
field on a parametric grid, and applying multiplicative uniform noise
component-wise.  A strictly finer synthesis mesh than the analysis mesh is
enforced to avoid inverse crimes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import constitutive
from .assembly import (Assembler, DofMap, LoadCase, edge_nodes,
                       parametric_grid, sampling_matrix, uniform_levels)
from .errors import ConfigError, SynthesisError
from .forward import solve_forward
from .inverse import InverseProblem, InverseSettings
from .material import DesignMap, MaterialField
from .spline import make_curved_patch, make_plate, make_strip

# --- experiment container ----------------------------------------------------


@dataclass
class ExperimentData:
    grid: np.ndarray                  # (n_pts, 2) parametric sample points
    levels: tuple
    displacements: list               # per level: (n_pts, 3), noise included
    reactions: dict                   # set name -> (n_ll,) noise-free values
    metadata: dict = field(default_factory=dict)

    @property
    def n_exp(self):
        return self.grid.shape[0] * len(self.levels)

    def save(self, json_path, csv_path):
        doc = {
            "levels": list(self.levels),
            "reactions": {k: list(map(float, v)) for k, v in self.reactions.items()},
            "metadata": self.metadata,
            "csv": str(csv_path),
        }
        with open(json_path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["level_index", "point", "xi1", "xi2", "ux", "uy", "uz"])
            for l in range(len(self.levels)):
                U = self.displacements[l]
                for k in range(self.grid.shape[0]):
                    w.writerow([l, k, "%.17g" % self.grid[k, 0],
                                "%.17g" % self.grid[k, 1],
                                "%.17g" % U[k, 0], "%.17g" % U[k, 1],
                                "%.17g" % U[k, 2]])

    @classmethod
    def load(cls, json_path):
        with open(json_path) as f:
            doc = json.load(f)
        levels = tuple(doc["levels"])
        rows = {}
        with open(doc["csv"], newline="") as f:
            rd = csv.reader(f)
            next(rd)
            for rec in rd:
                l, k = int(rec[0]), int(rec[1])
                rows.setdefault(l, []).append([float(v) for v in rec[2:]])
        n_ll = len(levels)
        grid = np.array(rows[0])[:, :2]
        disp = [np.array(rows[l])[:, 2:5] for l in range(n_ll)]
        reactions = {k: np.asarray(v) for k, v in doc["reactions"].items()}
        return cls(grid=grid, levels=levels, displacements=disp,
                   reactions=reactions, metadata=doc["metadata"])


@dataclass
class ErrorReport:
    per_kind: dict        # kind -> delta_I array over material nodes
    delta_max: dict       # kind -> float (percent)
    delta_ave: dict       # kind -> float (percent)
    excluded: dict = field(default_factory=dict)  # optional corner-free variant

    def worst(self):
        return max(self.delta_max.values()), max(self.delta_ave.values())


def error_metrics(q_ref_nodal, q_opt_nodal, exclude=()):
    """Relative nodal errors delta_I = |(q_ref - q_opt)/q_ref| in percent."""
    per_kind, dmax, dave, excluded = {}, {}, {}, {}
    exclude = np.asarray(sorted(exclude), dtype=int)
    for kind, ref in q_ref_nodal.items():
        ref = np.asarray(ref, dtype=float)
        opt = np.asarray(q_opt_nodal[kind], dtype=float)
        if np.any(ref == 0.0):
            raise ConfigError("reference value is zero; relative error undefined",
                              field=f"reference.{kind}")
        delta = 100.0 * np.abs((ref - opt) / ref)
        per_kind[kind] = delta
        dmax[kind] = float(delta.max())
        dave[kind] = float(delta.mean())
        if exclude.size:
            keep = np.setdiff1d(np.arange(ref.size), exclude)
            excluded[kind] = (float(delta[keep].max()), float(delta[keep].mean()))
    return ErrorReport(per_kind=per_kind, delta_max=dmax, delta_ave=dave,
                       excluded=excluded)


# --- reference distributions ---------------------------------------------------


def cosine_bump(base, amplitude, radius, center):
    """base + (amplitude/2)(1 + cos(pi R / radius)) inside R < radius."""
    cx, cy = center

    def f(X, Y):
        R = np.hypot(X - cx, Y - cy)
        return base + np.where(R < radius,
                               0.5 * amplitude * (1.0 + np.cos(np.pi * R / radius)),
                               0.0)

    return f


def gradual_profile(c0, c1, L):
    """Piecewise linear plateau profile with breaks at 0.5L, 1.5L, 2.5L, 3.5L."""

    def f(X, Y=None):
        X = np.asarray(X, dtype=float)
        out = np.full_like(X, c0)
        rising = (X > 0.5 * L) & (X < 1.5 * L)
        out = np.where(rising, (c1 - c0) * (X / L - 0.5) + c0, out)
        out = np.where((X >= 1.5 * L) & (X <= 2.5 * L), c1, out)
        falling = (X > 2.5 * L) & (X < 3.5 * L)
        out = np.where(falling, (c0 - c1) * (X / L - 2.5) + c1, out)
        return float(out) if out.ndim == 0 else out

    return f


def discontinuous_profile(c0, c1, L):
    """Sharp linear jump between 2L and 2.04L (relative length scale 1/100)."""

    def f(X, Y=None):
        X = np.asarray(X, dtype=float)
        out = np.where(X <= 2.0 * L, c0,
                       np.where(X >= 2.04 * L, c1,
                                25.0 * (c1 - c0) * (X / L - 2.0) + c0))
        return float(out) if out.ndim == 0 else out

    return f


def wall_modulus_profile(E1, E2):
    """Plateau profile in xi1 with breaks at 1/7, 3/7, 4/7, 6/7."""

    def f(x1, x2=None):
        x1 = np.asarray(x1, dtype=float)
        out = np.full_like(x1, E1)
        out = np.where((x1 > 1 / 7) & (x1 < 3 / 7),
                       E1 + 0.5 * (E2 - E1) * (7 * x1 - 1), out)
        out = np.where((x1 >= 3 / 7) & (x1 <= 4 / 7), E2, out)
        out = np.where((x1 > 4 / 7) & (x1 < 6 / 7),
                       E2 - 0.5 * (E2 - E1) * (7 * x1 - 4), out)
        return float(out) if out.ndim == 0 else out

    return f


def wall_thickness_profile(T1, T2):
    """T2 - (T2 - T1)(2 xi2 - 1)^2."""

    def f(x1, x2):
        return T2 - (T2 - T1) * (2.0 * np.asarray(x2, dtype=float) - 1.0) ** 2

    return f


# --- case definitions ------------------------------------------------------------


@dataclass
class CaseDef:
    """A ready-to-run identification problem: geometry, BCs, loads, law,
    reference distributions and the paper's optimization presets."""

    name: str
    law: str
    identified: tuple
    fixed_values: dict
    distributions: dict          # kind -> (callable, "physical" | "parametric")
    bounds: dict
    init_constant: dict
    reaction_sets: tuple
    fe_mesh: tuple
    material_mesh: tuple
    material_edges: tuple | None  # optional explicit (edges_x, edges_y)
    fine_mesh: tuple
    exp_grid: tuple
    n_ll: int
    symmetry: str                # none | quarter | replicate_y
    _builder: object
    _patch_maker: object

    def make_patch(self, fe_mesh):
        return self._patch_maker(tuple(fe_mesh))

    def make_field(self, material_mesh=None, material_edges=None, reference=True):
        """Material field on the requested mesh; identified kinds are set to
        the reference distribution when ``reference`` (used for synthesis and
        for error evaluation), fixed kinds always carry their known values."""
        if material_edges is not None:
            ex, ey = (np.asarray(material_edges[0], dtype=float),
                      np.asarray(material_edges[1], dtype=float))
            f = MaterialField(ex, ey)
        else:
            mm = tuple(material_mesh if material_mesh is not None
                       else self.material_mesh)
            f = MaterialField.uniform(mm[0], mm[1])
        patch = self.make_patch(self.fe_mesh)
        for kind, value in self.fixed_values.items():
            f.values[kind] = np.full(f.n_nodes, float(value))
        for kind in self.identified:
            if reference:
                fn, domain = self.distributions[kind]
                f.sample_reference(fn, kind, patch=patch, domain=domain)
            else:
                f.values[kind] = np.full(f.n_nodes, self.init_constant[kind])
        return f

    def build(self, fe_mesh, levels, mat_field):
        """(assembler, dofmap) for the given analysis mesh and load levels."""
        return self._builder(tuple(fe_mesh), tuple(levels), mat_field)

    def design_map(self, mat_field, symmetry=None):
        mode = symmetry if symmetry is not None else self.symmetry
        if mode == "quarter":
            return DesignMap.symmetric_quarter(mat_field, self.identified)
        if mode == "replicate_y":
            return DesignMap.replicate_y(mat_field, self.identified)
        return DesignMap.identity(mat_field, self.identified)

    def reference_nodal(self, mat_field):
        patch = self.make_patch(self.fe_mesh)
        out = {}
        for kind in self.identified:
            fn, domain = self.distributions[kind]
            tmp = mat_field.copy()
            out[kind] = tmp.sample_reference(fn, kind, patch=patch, domain=domain)
        return out


def _uniaxial_patch(L):
    def make(fe_mesh):
        return make_plate(L, L, fe_mesh[0], fe_mesh[1])
    return make


def _uniaxial_builder(L, lateral_fixed):
    def build(fe_mesh, levels, mat_field):
        patch = make_plate(L, L, fe_mesh[0], fe_mesh[1])
        asm = Assembler(patch, constitutive.NEO_HOOKE_CANHAM, mat_field,
                        load=LoadCase(levels=levels))
        dof = DofMap(patch.n_no)
        dof.fix(edge_nodes(patch, "xmin"), (0, 1, 2))
        dof.fix(np.arange(patch.n_no), 2)
        dof.fix(edge_nodes(patch, "xmax"), 0, value=L)
        if lateral_fixed:
            dof.fix(edge_nodes(patch, "ymin"), 1)
            dof.fix(edge_nodes(patch, "ymax"), 1)
        dof.add_reaction_set("Rx", edge_nodes(patch, "xmax"), 0)
        return asm, dof
    return build


def _bending_patch(L):
    def make(fe_mesh):
        return make_strip(4 * L, L, fe_mesh[0], fe_mesh[1])
    return make


def _bending_builder(L, moment):
    def build(fe_mesh, levels, mat_field):
        patch = make_strip(4 * L, L, fe_mesh[0], fe_mesh[1])
        load = LoadCase(edge_moments=[("xmin", moment), ("xmax", moment)],
                        levels=levels)
        asm = Assembler(patch, constitutive.NEO_HOOKE_CANHAM, mat_field, load=load)
        dof = DofMap(patch.n_no)
        dof.fix(edge_nodes(patch, "xmin"), (0, 1, 2))
        dof.fix(edge_nodes(patch, "xmax"), 2)
        return asm, dof
    return build


def _inflation_patch(L):
    def make(fe_mesh):
        return make_plate(L, L, fe_mesh[0], fe_mesh[1])
    return make


def _inflation_builder(L, pressure):
    def build(fe_mesh, levels, mat_field):
        patch = make_plate(L, L, fe_mesh[0], fe_mesh[1])
        asm = Assembler(patch, constitutive.NEO_HOOKE_CANHAM, mat_field,
                        load=LoadCase(pressure=pressure, levels=levels))
        dof = DofMap(patch.n_no)
        for edge in ("xmin", "xmax", "ymin", "ymax"):
            dof.fix(edge_nodes(patch, edge), (0, 1, 2))
        return asm, dof
    return build


def _wall_patch(L, height):
    def make(fe_mesh):
        return make_curved_patch(L, L, height, fe_mesh[0], fe_mesh[1])
    return make


def _wall_builder(L, height, pressure):
    def build(fe_mesh, levels, mat_field):
        patch = make_curved_patch(L, L, height, fe_mesh[0], fe_mesh[1])
        asm = Assembler(patch, constitutive.KOITER, mat_field,
                        load=LoadCase(pressure=pressure, levels=levels))
        dof = DofMap(patch.n_no)
        for edge in ("xmin", "xmax", "ymin", "ymax"):
            dof.fix(edge_nodes(patch, edge), (0, 1, 2))
        return asm, dof
    return build


def case_library():
    """All configured problem generators, keyed by case name."""
    L = 1.0
    mu0 = 1.0
    cases = {}

    mu_bump = cosine_bump(mu0, mu0, 0.35 * L, (0.5 * L, 0.5 * L))
    for name, lateral in (("uniaxial", False), ("uniaxial_fixed_lateral", True)):
        cases[name] = CaseDef(
            name=name, law=constitutive.NEO_HOOKE_CANHAM,
            identified=("mu",), fixed_values={"c": 1e-3 * mu0 * L**2},
            distributions={"mu": (mu_bump, "physical")},
            bounds={"mu": (0.1 * mu0, 5.0 * mu0)},
            init_constant={"mu": mu0},
            reaction_sets=("Rx",),
            fe_mesh=(16, 16), material_mesh=(8, 8), material_edges=None,
            fine_mesh=(64, 64), exp_grid=(66, 66), n_ll=1,
            symmetry="none",
            _builder=_uniaxial_builder(L, lateral),
            _patch_maker=_uniaxial_patch(L),
        )

    c0 = 1.0e-3
    cases["bending_gradual"] = CaseDef(
        name="bending_gradual", law=constitutive.NEO_HOOKE_CANHAM,
        identified=("c",), fixed_values={"mu": 1.0},
        distributions={"c": (gradual_profile(c0, 0.6 * c0, L), "physical")},
        bounds={"c": (0.4 * c0, 5.0 * c0)},
        init_constant={"c": c0},
        reaction_sets=(),
        fe_mesh=(64, 1), material_mesh=(8, 1), material_edges=None,
        fine_mesh=(512, 1), exp_grid=(1025, 4), n_ll=4,
        symmetry="replicate_y",
        _builder=_bending_builder(L, 0.5e-4),
        _patch_maker=_bending_patch(L),
    )

    c0d = 2.0e-3
    cases["bending_discontinuous"] = CaseDef(
        name="bending_discontinuous", law=constitutive.NEO_HOOKE_CANHAM,
        identified=("c",), fixed_values={"mu": 1.0},
        distributions={"c": (discontinuous_profile(c0d, 0.5 * c0d, L), "physical")},
        bounds={"c": (0.4 * c0d, 5.0 * c0d)},
        init_constant={"c": c0d},
        reaction_sets=(),
        fe_mesh=(100, 1), material_mesh=(100, 1),
        material_edges=(np.array([0.0, 0.5, 0.51, 1.0]), np.array([0.0, 1.0])),
        fine_mesh=(1000, 1), exp_grid=(1025, 4), n_ll=4,
        symmetry="replicate_y",
        _builder=_bending_builder(L, 0.5e-4),
        _patch_maker=_bending_patch(L),
    )

    c0i = 1.0e-3
    cases["inflation"] = CaseDef(
        name="inflation", law=constitutive.NEO_HOOKE_CANHAM,
        identified=("mu", "c"), fixed_values={},
        distributions={
            "mu": (cosine_bump(mu0, mu0, 0.35 * L, (0.5 * L, 0.5 * L)), "physical"),
            "c": (cosine_bump(c0i, c0i, 0.35 * L, (0.5 * L, 0.5 * L)), "physical"),
        },
        bounds={"mu": (0.1 * mu0, 5.0 * mu0), "c": (0.4 * c0i, 5.0 * c0i)},
        init_constant={"mu": mu0, "c": c0i},
        reaction_sets=(),
        fe_mesh=(16, 16), material_mesh=(8, 8), material_edges=None,
        fine_mesh=(64, 64), exp_grid=(66, 66), n_ll=4,
        symmetry="quarter",
        _builder=_inflation_builder(L, 0.5),
        _patch_maker=_inflation_patch(L),
    )

    Lw, hw = 0.3, 0.05
    cases["curved_wall"] = CaseDef(
        name="curved_wall", law=constitutive.KOITER,
        identified=("E", "T"), fixed_values={},
        distributions={
            "E": (wall_modulus_profile(20e3, 40e3), "parametric"),
            "T": (wall_thickness_profile(0.01, 0.015), "parametric"),
        },
        bounds={"E": (5e3, 100e3), "T": (0.005, 0.05)},
        init_constant={"E": 6e3, "T": 0.04},
        reaction_sets=(),
        fe_mesh=(28, 28), material_mesh=(7, 7), material_edges=None,
        fine_mesh=(56, 56), exp_grid=(66, 66), n_ll=4,
        symmetry="none",
        _builder=_wall_builder(Lw, hw, 1.6e3),
        _patch_maker=_wall_patch(Lw, hw),
    )
    return cases


# --- synthesis --------------------------------------------------------------------


def _synthesis_field(case, fine_mesh):
    """Material field for the synthesis solve: the analytic distribution
    represented on a mesh conforming to the fine FE mesh (identical element
    count, or the case's exact adapted edges when they conform)."""
    if case.material_edges is not None:
        return case.make_field(material_edges=case.material_edges)
    return case.make_field(material_mesh=fine_mesh)


def check_not_inverse_crime(fine_mesh, analysis_mesh):
    fm, am = tuple(fine_mesh), tuple(analysis_mesh)
    if fm[0] < am[0] or fm[1] < am[1] or fm == am:
        raise SynthesisError(
            f"synthesis mesh {fm} must be strictly finer than the analysis "
            f"mesh {am} (inverse crime)")


def synthesize_clean(case, fine_mesh=None, n_ll=None, grid=None,
                     newton_settings=None):
    """Noise-free fine-mesh samples; reusable across noise repetitions."""
    fine_mesh = tuple(fine_mesh if fine_mesh is not None else case.fine_mesh)
    n_ll = n_ll if n_ll is not None else case.n_ll
    levels = uniform_levels(n_ll)
    gx, gy = grid if grid is not None else case.exp_grid
    pts = parametric_grid(gx, gy)

    field = _synthesis_field(case, fine_mesh)
    asm, dof = case.build(fine_mesh, levels, field)
    sol = solve_forward(asm, dof, levels, newton_settings)
    P = sampling_matrix(asm.patch, pts)
    disp = [(P @ sol.u[l]).reshape(-1, 3) for l in range(len(levels))]
    reactions = {name: np.array([sol.reactions[l][name] for l in range(len(levels))])
                 for name in dof.reaction_sets}
    return pts, levels, disp, reactions, fine_mesh


def apply_noise(pts, levels, disp, reactions, fine_mesh, noise_level, seed,
                case_name=""):
    """Multiplicative uniform noise on the displacement components."""
    rng = np.random.default_rng(seed)
    gamma = noise_level * rng.uniform(-1.0, 1.0,
                                      size=(len(levels),) + disp[0].shape)
    noisy = [disp[l] * (1.0 + gamma[l]) for l in range(len(levels))]
    return ExperimentData(
        grid=pts, levels=levels, displacements=noisy,
        reactions={k: v.copy() for k, v in reactions.items()},
        metadata={"case": case_name, "fine_mesh": list(fine_mesh),
                  "noise_level": noise_level, "seed": int(seed)})


def synthesize(case, fine_mesh=None, n_ll=None, noise_level=0.0, seed=0,
               grid=None, analysis_mesh=None, newton_settings=None):
    """Full synthesis pipeline; refuses inverse-crime mesh pairings when the
    analysis mesh is supplied."""
    clean = synthesize_clean(case, fine_mesh, n_ll, grid, newton_settings)
    if analysis_mesh is not None:
        check_not_inverse_crime(clean[4], analysis_mesh)
    return apply_noise(*clean, noise_level, seed, case_name=case.name)


# --- identification runner ----------------------------------------------------------


def build_identification(case, experiment, fe_mesh=None, material_mesh=None,
                         material_edges=None, bounds=None, symmetry=None,
                         settings=None, allow_same_mesh=False):
    """InverseProblem plus the reference nodal values for error metrics."""
    fe_mesh = tuple(fe_mesh if fe_mesh is not None else case.fe_mesh)
    if not allow_same_mesh and "fine_mesh" in experiment.metadata:
        check_not_inverse_crime(experiment.metadata["fine_mesh"], fe_mesh)
    if material_edges is None and material_mesh is None:
        material_edges = case.material_edges
    if material_edges is not None:
        field = case.make_field(material_edges=material_edges, reference=False)
    else:
        field = case.make_field(material_mesh=material_mesh, reference=False)
    ref_nodal = case.reference_nodal(field)

    asm, dof = case.build(fe_mesh, experiment.levels, field)
    dm = case.design_map(field, symmetry=symmetry)
    if settings is None:
        settings = InverseSettings(bounds=dict(bounds or case.bounds))
    problem = InverseProblem(asm, dof, experiment, dm, settings,
                             reaction_sets=case.reaction_sets)
    return problem, ref_nodal


def initial_estimate(case, design_map, mode="constant", seed=0, values=None,
                     bounds=None):
    """Free design vector: constant per kind, random-in-bounds, or explicit."""
    bounds = dict(bounds or case.bounds)
    if mode == "explicit":
        return np.asarray(values, dtype=float)
    q0 = np.empty(design_map.n_var)
    if mode == "constant":
        const = dict(case.init_constant)
        if values:
            const.update(values)
        for kind in design_map.kinds:
            q0[design_map.slice_of(kind)] = const[kind]
        return q0
    if mode == "random":
        rng = np.random.default_rng(seed)
        for kind in design_map.kinds:
            lo, hi = bounds[kind]
            sl = design_map.slice_of(kind)
            q0[sl] = rng.uniform(lo, hi, sl.stop - sl.start)
        return q0
    raise ConfigError(f"unknown initial-estimate mode {mode!r}", field="init.mode")


def run_identification(case, experiment, q0=None, init_mode="constant",
                       init_seed=0, **build_kw):
    problem, ref_nodal = build_identification(case, experiment, **build_kw)
    if q0 is None:
        q0 = initial_estimate(case, problem.design_map, mode=init_mode,
                              seed=init_seed, bounds=problem.settings.bounds)
    result = problem.minimize(q0)
    report = error_metrics(ref_nodal, result.nodal)
    return result, report, problem


# --- statistics ------------------------------------------------------------------


@dataclass
class StatsReport:
    repetitions: int
    converged: int
    failed: int
    mean_max: dict
    std_max: dict
    mean_ave: dict
    std_ave: dict
    per_run_ave: dict      # kind -> array of delta_ave over runs
    histogram: dict        # kind -> (bin_edges, counts) for delta_ave

    def skewness(self, kind):
        x = self.per_run_ave[kind]
        s = x.std(ddof=1)
        if s == 0.0:
            return 0.0
        return float(np.mean(((x - x.mean()) / s) ** 3))


def run_statistics(case, repetitions, base_seed=0, noise_level=0.04,
                   fine_mesh=None, n_ll=None, grid=None, n_bins=10,
                   threads=1, progress=None, **build_kw):
    """Repeat the identification with fresh noise draws; seeds are
    base_seed + repetition index.  Failed repetitions are excluded with a
    warning count.  Repetitions share the noise-free fine-mesh solve and can
    run concurrently; results are reduced in repetition order either way."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1", field="repetitions")
    clean = synthesize_clean(case, fine_mesh, n_ll, grid)

    def one(rep):
        exp = apply_noise(*clean, noise_level, base_seed + rep,
                          case_name=case.name)
        try:
            _, report, _ = run_identification(case, exp, **build_kw)
        except Exception:
            return None
        if progress is not None:
            progress(rep)
        return report

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, range(repetitions)))
    else:
        reports = [one(rep) for rep in range(repetitions)]

    results = {kind: {"max": [], "ave": []} for kind in case.identified}
    failed = 0
    for report in reports:
        if report is None:
            failed += 1
            continue
        for kind in case.identified:
            results[kind]["max"].append(report.delta_max[kind])
            results[kind]["ave"].append(report.delta_ave[kind])

    per_run_ave, hist = {}, {}
    mean_max, std_max, mean_ave, std_ave = {}, {}, {}, {}
    for kind in case.identified:
        ave = np.asarray(results[kind]["ave"])
        mx = np.asarray(results[kind]["max"])
        per_run_ave[kind] = ave
        mean_ave[kind] = float(ave.mean()) if ave.size else np.nan
        mean_max[kind] = float(mx.mean()) if mx.size else np.nan
        std_ave[kind] = float(ave.std(ddof=1)) if ave.size > 1 else np.nan
        std_max[kind] = float(mx.std(ddof=1)) if mx.size > 1 else np.nan
        if ave.size:
            counts, edges = np.histogram(ave, bins=n_bins)
            hist[kind] = (edges, counts)
    return StatsReport(repetitions=repetitions, converged=repetitions - failed,
                       failed=failed, mean_max=mean_max, std_max=std_max,
                       mean_ave=mean_ave, std_ave=std_ave,
                       per_run_ave=per_run_ave, histogram=hist)
