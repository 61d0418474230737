"""Forward problem: incremental Newton solution of f_int - f_ext = 0.

Load levels are solved in ascending order; prescribed displacements and load
magnitudes ramp proportionally with the level.  On divergence the increment
is bisected automatically (the intermediate states are not recorded).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ForwardSolveError, SingularGeometryError


@dataclass
class NewtonSettings:
    tol_rel: float = 1e-10       # on ||f_free|| relative to the force scale
    tol_abs: float = 1e-14
    max_iter: int = 50
    max_bisect: int = 12
    max_line_search: int = 12    # residual-norm backtracking halvings
    permc_spec: str = "MMD_ATA"  # SuperLU column ordering


@dataclass
class ForwardSolution:
    levels: tuple
    u: list = field(default_factory=list)            # full dof vectors per level
    x: list = field(default_factory=list)            # control positions per level
    reactions: list = field(default_factory=list)    # dict name -> net value
    newton_iters: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)

    def displacement(self, level_index):
        return self.u[level_index]


def _force_scale(r, f_ext, dofmap, floor):
    s = max(np.linalg.norm(f_ext), np.linalg.norm(r[dofmap.prescribed_idx]))
    return max(s, floor)


def newton_solve(assembler, dofmap, scale, x, settings, return_history=False):
    """Newton iteration at a fixed load level; returns the converged state."""
    X = assembler.patch.ctrl
    free = dofmap.free_idx
    dofmap.apply(X, x, scale)
    history = []
    r_free_norm = np.inf
    for it in range(settings.max_iter + 1):
        r, K, _ = assembler.residual(x, scale, want_K=True)
        if not np.all(np.isfinite(r)):
            raise ForwardSolveError("non-finite residual", residual_norm=np.inf)
        f_ext, _ = assembler.external(x, scale)
        tol = max(settings.tol_abs,
                  settings.tol_rel * _force_scale(r, f_ext, dofmap, 1.0))
        r_free = r[free]
        r_free_norm = np.linalg.norm(r_free)
        history.append(r_free_norm)
        if r_free_norm <= tol:
            return x, it, r_free_norm, history if return_history else None
        if it == settings.max_iter:
            break
        K_ff = K[free][:, free].tocsc()
        try:
            du = spla.splu(K_ff, permc_spec=settings.permc_spec).solve(-r_free)
        except RuntimeError as exc:
            raise ForwardSolveError(f"singular tangent: {exc}",
                                    residual_norm=r_free_norm)
        if not np.all(np.isfinite(du)):
            raise ForwardSolveError("non-finite Newton update",
                                    residual_norm=r_free_norm)
        # backtracking on the residual norm keeps large increments stable
        alpha = 1.0
        for _ in range(settings.max_line_search):
            x_try = x.copy()
            x_try.reshape(-1)[free] += alpha * du
            try:
                r_try, _, _ = assembler.residual(x_try, scale)
            except SingularGeometryError:
                alpha *= 0.5
                continue
            rn_try = np.linalg.norm(r_try[free])
            if np.isfinite(rn_try) and rn_try < (1.0 - 1e-4 * alpha) * r_free_norm:
                x = x_try
                break
            alpha *= 0.5
        else:
            raise ForwardSolveError(
                f"line search stagnated (residual {r_free_norm:.3e})",
                residual_norm=r_free_norm)
    raise ForwardSolveError(
        f"Newton did not converge in {settings.max_iter} iterations "
        f"(residual {r_free_norm:.3e})", residual_norm=r_free_norm)


def solve_forward(assembler, dofmap, levels=None, settings=None, x0=None):
    """Solve all requested load levels; returns a ForwardSolution.

    ``x0`` optionally warm-starts the first increment (e.g. from a previous
    optimizer iterate with nearby material parameters).
    """
    settings = settings or NewtonSettings()
    levels = tuple(levels if levels is not None else assembler.load.levels)
    X = assembler.patch.ctrl
    x = X.copy() if x0 is None else x0.copy()

    sol = ForwardSolution(levels=levels)
    pending = list(levels)
    current = 0.0
    bisections = 0
    while pending:
        target = pending[0]
        x_try = x.copy()
        try:
            x_new, iters, rnorm, _ = newton_solve(
                assembler, dofmap, target, x_try, settings)
        except (ForwardSolveError, SingularGeometryError):
            bisections += 1
            if bisections > settings.max_bisect or (target - current) < 1e-8:
                raise
            pending.insert(0, 0.5 * (current + target))
            continue
        x = x_new
        current = target
        pending.pop(0)
        if any(abs(target - lv) < 1e-14 for lv in levels):
            r, _, _ = assembler.residual(x, target)
            reactions = {name: float(r[idx].sum())
                         for name, idx in dofmap.reaction_sets.items()}
            sol.u.append((x - X).reshape(-1).copy())
            sol.x.append(x.copy())
            sol.reactions.append(reactions)
            sol.newton_iters.append(iters)
            sol.residual_norms.append(rnorm)
    return sol


def discrete_l2_error(patch_coarse, u_coarse, patch_fine, u_fine, grid):
    """Relative discrete L2 displacement error on a shared parametric grid."""
    from .assembly import sampling_matrix

    Pc = sampling_matrix(patch_coarse, grid)
    Pf = sampling_matrix(patch_fine, grid)
    uc = Pc @ u_coarse
    uf = Pf @ u_fine
    return float(np.linalg.norm(uf - uc) / np.linalg.norm(uf))


def convergence_study(problem_factory, meshes, reference_mesh, grid=None,
                      settings=None):
    """FE convergence of the sampled displacement field against a fine mesh.

    ``problem_factory(n)`` must return (assembler, dofmap, levels) for an
    n-elements-per-direction discretization of the same physical problem.
    Returns (errors per mesh, fitted log-log slope in total element count).
    """
    if grid is not None and not hasattr(grid, "shape"):
        raise TypeError("grid must be an (n, 2) array of parametric points")
    if grid is None:
        from .assembly import parametric_grid

        grid = parametric_grid(101, 101)

    asm_ref, dof_ref, levels_ref = problem_factory(reference_mesh)
    sol_ref = solve_forward(asm_ref, dof_ref, levels_ref, settings)
    u_ref = sol_ref.u[-1]

    errors = []
    n_els = []
    for n in meshes:
        asm, dof, levels = problem_factory(n)
        sol = solve_forward(asm, dof, levels, settings)
        err = discrete_l2_error(asm.patch, sol.u[-1], asm_ref.patch, u_ref, grid)
        errors.append(err)
        n_els.append(asm.patch.n_el)
    slope = float(np.polyfit(np.log10(n_els), np.log10(errors), 1)[0])
    return np.asarray(errors), slope
