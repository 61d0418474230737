"""Model-updating loop: residual, analytical Jacobian and bound-constrained
trust-region Gauss-Newton minimization.

The residual stacks the normalized displacement mismatch over all load levels
and, when configured, the normalized net-reaction mismatch.  The Jacobian is
assembled from the converged forward states via

    du/dq = -K_ff^{-1} S_f,      dR/dq = S_b + K_b du/dq,

with S the material sensitivity matrix and K the tangent including follower
loads.  Design variables are internally scaled by their bound midpoints; all
reported quantities are unscaled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import sampling_matrix
from .errors import ForwardSolveError, ResidualEvaluationError
from .forward import NewtonSettings, solve_forward


@dataclass
class InverseSettings:
    bounds: dict                      # kind -> (q_min, q_max), 0 < q_min <= q_max
    tol: float = 1e-10                # epsilon of the two stopping criteria
    max_iter: int = 50                # accepted iterates (Jacobian evaluations)
    initial_radius_factor: float = 0.1
    shrink: float = 0.25
    grow: float = 2.0
    max_rejects: int = 40
    jacobian_mode: str = "analytic"   # or "fd" (forward differences)
    fd_step: float = 1e-6             # relative step for jacobian_mode="fd"
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        for kind, (lo, hi) in self.bounds.items():
            if not (0.0 < lo <= hi):
                raise ValueError(f"bounds for {kind!r} must satisfy 0 < min <= max")
        if self.tol <= 0.0:
            raise ValueError("stopping tolerance must be positive")


@dataclass
class IterationRecord:
    iteration: int
    f: float
    step_norm: float
    accepted: bool


@dataclass
class InverseResult:
    q_opt: np.ndarray                 # free design vector (unscaled)
    nodal: dict                       # kind -> full nodal arrays
    history: list
    status: str                       # converged | max_iterations | stalled
    iterations: int                   # accepted iterates
    n_residual: int
    n_jacobian: int
    f_final: float
    wall_time: float
    diagnostics: dict


class InverseProblem:
    """Binds a forward model, an experiment and a design map into the
    least-squares objective f(q) = r(q).r(q)/2."""

    def __init__(self, assembler, dofmap, experiment, design_map, settings,
                 reaction_sets=()):
        self.assembler = assembler
        self.dofmap = dofmap
        self.experiment = experiment
        self.design_map = design_map
        self.settings = settings
        self.reaction_sets = tuple(reaction_sets)
        self.levels = tuple(experiment.levels)

        self.P = sampling_matrix(assembler.patch, experiment.grid)
        self.U_exp = np.concatenate([u.reshape(-1) for u in experiment.displacements])
        self.norm_U = float(np.linalg.norm(self.U_exp))
        if self.norm_U == 0.0:
            raise ValueError("experimental displacements have zero norm")
        if self.reaction_sets:
            self.R_exp = np.array([experiment.reactions[name][l]
                                   for l in range(len(self.levels))
                                   for name in self.reaction_sets])
            self.norm_R = float(np.linalg.norm(self.R_exp))
            if self.norm_R == 0.0:
                raise ValueError("experimental reactions have zero norm")
        else:
            self.R_exp = np.zeros(0)
            self.norm_R = 1.0

        lo, hi = [], []
        for kind in design_map.kinds:
            bl, bh = settings.bounds[kind]
            nk = design_map.n_var_kind(kind)
            lo.extend([bl] * nk)
            hi.extend([bh] * nk)
        self.lower = np.asarray(lo)
        self.upper = np.asarray(hi)
        self.scale = 0.5 * (self.lower + self.upper)

        self._warm_states = None
        self.n_residual = 0
        self.n_jacobian = 0

    # --- residual -------------------------------------------------------------

    def evaluate_residual(self, q_free, keep_states=False):
        """Residual vector at the free design vector ``q_free``.

        Runs forward solves for every load level; failures raise
        ResidualEvaluationError (the optimizer rejects the step).
        """
        q_free = np.asarray(q_free, dtype=float)
        self.design_map.apply_to(self.assembler.field, q_free)
        x0 = self._warm_states[-1] if self._warm_states else None
        try:
            sol = solve_forward(self.assembler, self.dofmap, self.levels,
                                self.settings.newton, x0=x0)
        except ForwardSolveError as exc:
            raise ResidualEvaluationError(str(exc)) from exc
        self.n_residual += 1

        blocks = [(self.U_exp[self._level_slice(l)]
                   - self.P @ sol.u[l]) / self.norm_U
                  for l in range(len(self.levels))]
        r = np.concatenate(blocks)
        if self.reaction_sets:
            R_fe = np.array([sol.reactions[l][name]
                             for l in range(len(self.levels))
                             for name in self.reaction_sets])
            r = np.concatenate([r, (self.R_exp - R_fe) / self.norm_R])
        if keep_states:
            self._warm_states = [x.copy() for x in sol.x]
            self._last_solution = sol
        return r

    def _level_slice(self, l):
        n = self.P.shape[0]
        return slice(l * n, (l + 1) * n)

    def objective(self, q_free):
        r = self.evaluate_residual(q_free)
        return 0.5 * float(r @ r)

    # --- Jacobian ---------------------------------------------------------------

    def jacobian(self, q_free):
        """J = dr/dq at an iterate whose states were kept by
        evaluate_residual(..., keep_states=True)."""
        if self.settings.jacobian_mode == "fd":
            return self._jacobian_fd(q_free)
        self.n_jacobian += 1
        dm = self.design_map
        free = self.dofmap.free_idx
        presc = self.dofmap.prescribed_idx
        n_var = dm.n_var
        rows_U = []
        rows_R = []
        for l, x in enumerate(self._warm_states):
            _, K, S = self.assembler.residual(x, self.levels[l],
                                              want_K=True, want_S=True)
            S_dq = np.zeros((3 * self.assembler.patch.n_no, n_var))
            for kind in dm.kinds:
                S_dq[:, dm.slice_of(kind)] += S[kind] @ dm.matrix(kind)
            K_ff = K[free][:, free].tocsc()
            lu = spla.splu(K_ff, permc_spec=self.settings.newton.permc_spec)
            dudq = -lu.solve(S_dq[free])
            rows_U.append(-(self.P[:, free] @ dudq) / self.norm_U)
            if self.reaction_sets:
                K_bf = K[presc][:, free]
                dRdq_all = S_dq[presc] + K_bf @ dudq
                pos = {d: i for i, d in enumerate(presc)}
                for name in self.reaction_sets:
                    ids = [pos[d] for d in self.dofmap.reaction_sets[name]]
                    rows_R.append(-dRdq_all[ids].sum(axis=0) / self.norm_R)
        J = np.vstack(rows_U)
        if rows_R:
            J = np.vstack([J, np.vstack(rows_R)])
        return J

    def _jacobian_fd(self, q_free):
        self.n_jacobian += 1
        r0 = self.evaluate_residual(q_free)
        J = np.empty((r0.size, q_free.size))
        for j in range(q_free.size):
            h = self.settings.fd_step * max(abs(q_free[j]), self.scale[j])
            qp = q_free.copy()
            qp[j] += h
            J[:, j] = (self.evaluate_residual(qp) - r0) / h
        return J

    def gradient_and_hessian(self, q_free):
        """g = J^T r and the Gauss-Newton Hessian H = J^T J."""
        r = self.evaluate_residual(q_free, keep_states=True)
        J = self.jacobian(q_free)
        return J.T @ r, J.T @ J

    # --- minimization -------------------------------------------------------------

    def minimize(self, q0_free):
        """Bound-constrained trust-region Gauss-Newton (dogleg subproblem,
        projected/reflected trial points, descent-only acceptance)."""
        s = self.settings
        t_start = time.perf_counter()
        lo_z = self.lower / self.scale
        hi_z = self.upper / self.scale
        z = np.clip(np.asarray(q0_free, dtype=float) / self.scale, lo_z, hi_z)

        history = []
        status = "max_iterations"

        r = self.evaluate_residual(z * self.scale, keep_states=True)
        f = 0.5 * float(r @ r)
        J = self.jacobian(z * self.scale) * self.scale[None, :]
        col_norms = np.linalg.norm(J, axis=0)
        delta = s.initial_radius_factor * max(np.linalg.norm(z), 1.0)

        accepted_iters = 0
        rejects = 0
        while accepted_iters < s.max_iter:
            g = J.T @ r
            step = _dogleg_step(J, r, g, delta)
            z_trial = self._bounded_trial(z, step, J, g, lo_z, hi_z)
            s_act = z_trial - z
            step_norm = float(np.linalg.norm(s_act))
            pred = -(g @ s_act) - 0.5 * float(np.linalg.norm(J @ s_act) ** 2)
            try:
                r_trial = self.evaluate_residual(z_trial * self.scale,
                                                 keep_states=True)
                f_trial = 0.5 * float(r_trial @ r_trial)
            except ResidualEvaluationError:
                r_trial, f_trial = None, np.inf

            both_small = (np.isfinite(f_trial)
                          and abs(f_trial - f) <= s.tol
                          and step_norm <= s.tol)
            if f_trial < f:
                rho = (f - f_trial) / pred if pred > 0 else 1.0
                z = z_trial
                accepted_iters += 1
                history.append(IterationRecord(accepted_iters, f_trial,
                                               step_norm, True))
                f, r = f_trial, r_trial
                if both_small:
                    status = "converged"
                    break
                if rho > 0.75 and step_norm >= 0.9 * delta:
                    delta *= s.grow
                elif rho < 0.25:
                    delta *= s.shrink
                J = self.jacobian(z * self.scale) * self.scale[None, :]
                col_norms = np.linalg.norm(J, axis=0)
                rejects = 0
            else:
                history.append(IterationRecord(accepted_iters, f, step_norm, False))
                if both_small:
                    status = "converged"
                    break
                delta *= s.shrink
                rejects += 1
                if rejects > s.max_rejects or delta < 1e-15 * max(np.linalg.norm(z), 1.0):
                    status = "stalled"
                    break

        q_opt = z * self.scale
        self.design_map.apply_to(self.assembler.field, q_opt)
        diagnostics = self._diagnostics(col_norms)
        return InverseResult(
            q_opt=q_opt,
            nodal=self.design_map.expand(q_opt),
            history=history,
            status=status,
            iterations=accepted_iters,
            n_residual=self.n_residual,
            n_jacobian=self.n_jacobian,
            f_final=f,
            wall_time=time.perf_counter() - t_start,
            diagnostics=diagnostics,
        )

    def _bounded_trial(self, z, step, J, g, lo_z, hi_z):
        """Projected trial point; when the raw step leaves the box, also try
        a reflected variant and keep the one with the lower model value."""
        raw = z + step
        proj = np.clip(raw, lo_z, hi_z)
        if np.allclose(proj, raw):
            return proj
        refl = raw.copy()
        over = raw > hi_z
        under = raw < lo_z
        refl[over] = 2.0 * hi_z[over] - raw[over]
        refl[under] = 2.0 * lo_z[under] - raw[under]
        refl = np.clip(refl, lo_z, hi_z)

        def model(zc):
            sv = zc - z
            return float(g @ sv + 0.5 * np.linalg.norm(J @ sv) ** 2)

        return refl if model(refl) < model(proj) else proj

    def _diagnostics(self, col_norms):
        if col_norms is None:
            return {}
        med = float(np.median(col_norms)) or 1.0
        flagged = np.flatnonzero(col_norms < 0.1 * med)
        return {
            "jacobian_column_norms": col_norms,
            "low_sensitivity_vars": flagged,
            "column_norm_ranking": np.argsort(col_norms),
        }


def _dogleg_step(J, r, g, delta):
    """Dogleg solution of min ||J s + r|| subject to ||s|| <= delta."""
    gn, *_ = np.linalg.lstsq(J, -r, rcond=None)
    gn_norm = np.linalg.norm(gn)
    if gn_norm <= delta:
        return gn
    Jg = J @ g
    denom = float(Jg @ Jg)
    if denom <= 0.0:
        return -delta * g / max(np.linalg.norm(g), 1e-300)
    t = float(g @ g) / denom
    sd = -t * g
    sd_norm = np.linalg.norm(sd)
    if sd_norm >= delta:
        return sd * (delta / sd_norm)
    d = gn - sd
    a = float(d @ d)
    b = 2.0 * float(sd @ d)
    c = float(sd @ sd) - delta**2
    beta = (-b + np.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a)
    return sd + beta * d
