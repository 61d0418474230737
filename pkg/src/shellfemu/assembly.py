"""Numerical integration and assembly of forces, tangent and sensitivities.

The assembler precomputes basis tables at the Gauss points of every element
(values, first and second global-parametric derivatives), the material-mesh
interpolation tables, and the index arrays for sparse assembly.  Per call it
evaluates internal forces, the tangent stiffness (including the follower
tangents of pressure and edge moments) and the sensitivity matrices
S = d f_int / d q via the jitted kernels in ``_kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import constitutive
from ._kernels import internal_forces_kernel, pressure_kernel
from .kinematics import surface_data
from .material import bilinear_shape

_EDGES = ("xmin", "xmax", "ymin", "ymax")


def gauss_rule(n):
    return np.polynomial.legendre.leggauss(n)


# --- basis tables -----------------------------------------------------------


@dataclass
class BasisTables:
    N: np.ndarray       # (nel, nqp, ne)
    dN: np.ndarray      # (nel, nqp, ne, 2)
    d2N: np.ndarray     # (nel, nqp, ne, 3) packed [11, 22, 12]
    wq: np.ndarray      # (nel, nqp) gauss weight x local->global measure
    conn: np.ndarray    # (nel, ne) global control-point ids
    qp_local: np.ndarray  # (nqp, 2) reference-square coordinates


def build_tables(patch, n_gauss=None):
    px, py = patch.degrees
    ngx = n_gauss or (px + 1)
    ngy = n_gauss or (py + 1)
    gx, wx = gauss_rule(ngx)
    gy, wy = gauss_rule(ngy)
    nqp = ngx * ngy
    qp_local = np.array([(xi, eta) for eta in gy for xi in gx])
    conn = patch.connectivity()
    if np.all(patch.weights == 1.0):
        return _tables_tensor(patch, gx, wx, gy, wy, qp_local, conn)

    wloc = np.array([w2 * w1 for w2 in wy for w1 in wx])
    nel, ne = patch.n_el, patch.n_e
    N = np.empty((nel, nqp, ne))
    dN = np.empty((nel, nqp, ne, 2))
    d2N = np.empty((nel, nqp, ne, 3))
    wq = np.empty((nel, nqp))
    for e in range(nel):
        (dx, dy) = patch.element_domain(e)
        meas = 0.25 * (dx[1] - dx[0]) * (dy[1] - dy[0])
        for q in range(nqp):
            Nq, dNq, d2Nq = patch.element_basis(e, qp_local[q])
            N[e, q] = Nq
            dN[e, q] = dNq
            d2N[e, q] = d2Nq
            wq[e, q] = wloc[q] * meas
    return BasisTables(N, dN, d2N, wq, conn, qp_local)


def _dir_tables(knots, degree, spans, ext, g):
    """Per-direction B-spline values/derivatives at the 1D gauss points."""
    from .spline import bernstein

    n_el = len(spans)
    ng = len(g)
    v = np.empty((n_el, ng, degree + 1))
    dv = np.empty_like(v)
    ddv = np.empty_like(v)
    meas = np.empty(n_el)
    for e, k in enumerate(spans):
        span = knots[k + 1] - knots[k]
        s = 2.0 / span
        meas[e] = 0.5 * span
        for q, t in enumerate(g):
            B, dB, ddB = bernstein(degree, t)
            v[e, q] = ext[e] @ B
            dv[e, q] = (ext[e] @ dB) * s
            ddv[e, q] = (ext[e] @ ddB) * s * s
    return v, dv, ddv, meas


def _tables_tensor(patch, gx, wx, gy, wy, qp_local, conn):
    """Vectorized tensor-product tables for unit-weight (B-spline) patches."""
    px, py = patch.degrees
    vx, dvx, ddvx, mx = _dir_tables(patch.knots_x, px, patch.spans_x,
                                    patch.ext_x, gx)
    vy, dvy, ddvy, my = _dir_tables(patch.knots_y, py, patch.spans_y,
                                    patch.ext_y, gy)
    nel = patch.n_el
    nqp = len(gx) * len(gy)
    ne = patch.n_e

    def outer(fy, fx):
        # (ney, ngy, py+1) x (nex, ngx, px+1) -> (nel, nqp, ne)
        t = np.einsum("EQJ,eqj->EeQqJj", fy, fx)
        return t.reshape(nel, nqp, ne)

    N = outer(vy, vx)
    dN = np.stack([outer(vy, dvx), outer(dvy, vx)], axis=-1)
    d2N = np.stack([outer(vy, ddvx), outer(ddvy, vx), outer(dvy, dvx)], axis=-1)
    wq = np.einsum("EQ,eq->EeQq",
                   np.outer(my, wy), np.outer(mx, wx)).reshape(nel, nqp)
    return BasisTables(np.ascontiguousarray(N), np.ascontiguousarray(dN),
                       np.ascontiguousarray(d2N), wq, conn, qp_local)


def build_material_tables(patch, mat_field, qp_local):
    """Bilinear shape values and corner-node ids of the owning material
    element at every FE quadrature point."""
    owner, scale, offset = mat_field.build_mapping(patch)
    nel = patch.n_el
    nqp = qp_local.shape[0]
    Nbar = np.empty((nel, nqp, 4))
    mat_conn = np.empty((nel, 4), dtype=np.int64)
    for e in range(nel):
        mat_conn[e] = mat_field.element_nodes(owner[e, 0], owner[e, 1])
        for q in range(nqp):
            xi_bar = scale[e] * qp_local[q] + offset[e]
            Nbar[e, q] = bilinear_shape(np.clip(xi_bar, -1.0, 1.0))
    return Nbar, mat_conn


# --- degrees of freedom -------------------------------------------------------


def edge_nodes(patch, edge):
    nfx, nfy = patch.n_funcs
    ix, iy = np.meshgrid(np.arange(nfx), np.arange(nfy), indexing="xy")
    ids = iy * nfx + ix
    if edge == "xmin":
        return ids[:, 0].ravel()
    if edge == "xmax":
        return ids[:, -1].ravel()
    if edge == "ymin":
        return ids[0, :].ravel()
    if edge == "ymax":
        return ids[-1, :].ravel()
    raise ValueError(f"unknown edge {edge!r}; expected one of {_EDGES}")


class DofMap:
    """Free/prescribed classification with full-load values and reaction sets.

    Prescribed values are interpreted at 100% load and ramped proportionally
    with the load level.
    """

    def __init__(self, n_no):
        self.n_no = n_no
        self.free = np.ones(3 * n_no, dtype=bool)
        self.value = np.zeros(3 * n_no)
        self.reaction_sets = {}

    def dofs(self, nodes, direction):
        return 3 * np.asarray(nodes, dtype=np.int64) + direction

    def fix(self, nodes, directions, value=0.0):
        for d in np.atleast_1d(directions):
            ids = self.dofs(nodes, int(d))
            self.free[ids] = False
            self.value[ids] = value

    def add_reaction_set(self, name, nodes, direction):
        ids = self.dofs(nodes, direction)
        if self.free[ids].any():
            raise ValueError(f"reaction set {name!r} references free dofs")
        self.reaction_sets[name] = ids

    @property
    def free_idx(self):
        return np.flatnonzero(self.free)

    @property
    def prescribed_idx(self):
        return np.flatnonzero(~self.free)

    def apply(self, X, x, scale):
        """Set prescribed dofs of the current control positions at load level
        ``scale``."""
        p = self.prescribed_idx
        x.reshape(-1)[p] = X.reshape(-1)[p] + scale * self.value[p]


@dataclass
class LoadCase:
    """Dead surface load, follower pressure and edge loads; all components
    scale proportionally with the load level."""

    f0: np.ndarray | None = None
    pressure: float = 0.0
    edge_moments: list = field(default_factory=list)    # (edge name, m_tau)
    edge_tractions: list = field(default_factory=list)  # (edge name, (3,) vector)
    levels: tuple = (1.0,)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or np.any(lv <= 0) or np.any(lv > 1 + 1e-12) \
                or np.any(np.diff(lv) <= 0):
            raise ValueError("load levels must be increasing and in (0, 1]")
        self.levels = tuple(lv)


def uniform_levels(n_ll):
    return tuple((k + 1) / n_ll for k in range(n_ll))


# --- boundary tables ----------------------------------------------------------


@dataclass
class _EdgeQP:
    element: int
    N: np.ndarray
    dN: np.ndarray
    w_ref: float       # gauss weight x span/2 x |A_t| (reference arc measure)
    nu_idx: int        # parametric direction normal to the edge
    sign: float        # outward orientation of the edge normal


def build_edge_tables(patch, edge, n_gauss=None):
    px, py = patch.degrees
    nelx, nely = patch.n_el_xy
    if edge in ("xmin", "xmax"):
        tau_idx, nu_idx = 1, 0
        fixed_loc = -1.0 if edge == "xmin" else 1.0
        sign = -1.0 if edge == "xmin" else 1.0
        elems = [patch.element_index(0 if edge == "xmin" else nelx - 1, ey)
                 for ey in range(nely)]
        ng = n_gauss or (py + 1)
    else:
        tau_idx, nu_idx = 0, 1
        fixed_loc = -1.0 if edge == "ymin" else 1.0
        sign = -1.0 if edge == "ymin" else 1.0
        elems = [patch.element_index(ex, 0 if edge == "ymin" else nely - 1)
                 for ex in range(nelx)]
        ng = n_gauss or (px + 1)

    g, w = gauss_rule(ng)
    rows = []
    for e in elems:
        (dx, dy) = patch.element_domain(e)
        span = (dy[1] - dy[0]) if tau_idx == 1 else (dx[1] - dx[0])
        for t, wt in zip(g, w):
            loc = np.empty(2)
            loc[tau_idx] = t
            loc[1 - tau_idx] = fixed_loc
            N, dN, _ = patch.element_basis(e, loc)
            A_t = dN[:, tau_idx] @ patch.ctrl[patch.connectivity_row(e)]
            w_ref = wt * 0.5 * span * np.linalg.norm(A_t)
            rows.append(_EdgeQP(e, N, dN, w_ref, nu_idx, sign))
    return rows


# --- assembler -----------------------------------------------------------------


_LAW_IDS = {constitutive.NEO_HOOKE_CANHAM: 0, constitutive.KOITER: 1}


class Assembler:
    """Stateless-per-call force/tangent/sensitivity evaluation for one patch,
    one material law and one material field."""

    def __init__(self, patch, law, mat_field, load=None, n_gauss=None):
        self.patch = patch
        self.law = law
        self.kinds = constitutive.PARAM_KINDS[law]
        self.field = mat_field
        self.load = load if load is not None else LoadCase()
        self.tables = build_tables(patch, n_gauss)
        self.Nbar, self.mat_conn = build_material_tables(
            patch, mat_field, self.tables.qp_local)
        self.n_dof = 3 * patch.n_no

        conn = self.tables.conn
        dofs = (3 * conn[:, :, None] + np.arange(3)[None, None, :]).reshape(
            conn.shape[0], -1)   # (nel, 3*ne)
        self._dofs = dofs
        rows = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2).ravel()
        cols = np.repeat(dofs[:, None, :], dofs.shape[1], axis=1).ravel()
        self._prepare_csr_pattern(rows, cols)

        self._area_w = self._reference_area_weights()
        self._f0_unit = self._dead_load_unit()
        self._traction_unit = self._traction_unit_vector()
        self._moment_tables = [
            (build_edge_tables(patch, edge), m) for edge, m in self.load.edge_moments]

    # --- precomputations -------------------------------------------------------

    def _reference_area_weights(self):
        """w_q * sqrt(det A) for every (element, qp)."""
        t = self.tables
        X = self.patch.ctrl
        out = np.empty_like(t.wq)
        for e in range(t.N.shape[0]):
            Xe = X[t.conn[e]]
            for q in range(t.N.shape[1]):
                A = t.dN[e, q].T @ Xe
                detA = ((A[0] @ A[0]) * (A[1] @ A[1]) - (A[0] @ A[1]) ** 2)
                out[e, q] = t.wq[e, q] * np.sqrt(detA)
        return out

    def _dead_load_unit(self):
        """integral of N_I dA per control point (n_no,)."""
        t = self.tables
        out = np.zeros(self.patch.n_no)
        np.add.at(out, t.conn.ravel(),
                  (t.N * self._area_w[:, :, None]).sum(axis=1).ravel())
        return out

    def _traction_unit_vector(self):
        f = np.zeros(self.n_dof)
        for edge, tvec in self.load.edge_tractions:
            tvec = np.asarray(tvec, dtype=float)
            for row in build_edge_tables(self.patch, edge):
                nodes = self.patch.connectivity_row(row.element)
                for a, g in enumerate(nodes):
                    f[3 * g:3 * g + 3] += row.w_ref * row.N[a] * tvec
        return f

    def _nodal_params(self):
        k1, k2 = self.kinds
        return (np.ascontiguousarray(self.field.values[k1]),
                np.ascontiguousarray(self.field.values[k2]))

    # --- internal forces -------------------------------------------------------

    def internal(self, xc, want_K=False, want_S=False):
        """Internal forces, optional tangent (sparse CSR over all dofs) and
        sensitivity matrices {kind: (n_dof, n_mat_nodes)}."""
        t = self.tables
        nel = t.N.shape[0]
        nd = 3 * self.patch.n_e
        f = np.zeros(self.n_dof)
        Kb = np.zeros((nel, nd, nd)) if want_K else np.zeros((1, 1, 1))
        S1 = np.zeros((nel, nd, 4)) if want_S else np.zeros((1, 1, 1))
        S2 = np.zeros((nel, nd, 4)) if want_S else np.zeros((1, 1, 1))
        p1, p2 = self._nodal_params()
        internal_forces_kernel(
            _LAW_IDS[self.law], t.N, t.dN, t.d2N, t.wq, t.conn,
            self.patch.ctrl, np.ascontiguousarray(xc), p1, p2,
            self.mat_conn, self.Nbar, want_K, want_S, f, Kb, S1, S2)
        K = self._blocks_to_csr(Kb) if want_K else None
        S = None
        if want_S:
            S = {self.kinds[0]: self._blocks_to_dense_S(S1),
                 self.kinds[1]: self._blocks_to_dense_S(S2)}
        return f, K, S

    def _prepare_csr_pattern(self, rows, cols):
        """Sparsity pattern of the element-block scatter, computed once; per
        call the data vector is accumulated with a deterministic bincount."""
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        head = np.empty(rs.size, dtype=bool)
        head[0] = True
        head[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        slot_sorted = np.cumsum(head) - 1
        slot = np.empty(rs.size, dtype=np.int64)
        slot[order] = slot_sorted
        self._csr_slot = slot
        self._csr_nnz = int(slot_sorted[-1]) + 1
        self._csr_indices = cs[head].astype(np.int32)
        counts = np.bincount(rs[head], minlength=self.n_dof)
        self._csr_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def _blocks_to_csr(self, blocks):
        data = np.bincount(self._csr_slot, weights=blocks.ravel(),
                           minlength=self._csr_nnz)
        return sp.csr_matrix((data, self._csr_indices, self._csr_indptr),
                             shape=(self.n_dof, self.n_dof))

    def _blocks_to_dense_S(self, blocks):
        S = np.zeros((self.n_dof, self.field.n_nodes))
        nel, nd, _ = blocks.shape
        rows = np.repeat(self._dofs[:, :, None], 4, axis=2).ravel()
        cols = np.repeat(self.mat_conn[:, None, :], nd, axis=1).ravel()
        np.add.at(S, (rows, cols), blocks.ravel())
        return S

    # --- external forces --------------------------------------------------------

    def external(self, xc, scale, want_K=False):
        """External force vector at load level ``scale`` and its tangent
        (pressure and edge moments follow the deformation)."""
        t = self.tables
        f = np.zeros(self.n_dof)
        if self.load.f0 is not None:
            f0 = np.asarray(self.load.f0, dtype=float)
            f += scale * np.kron(self._f0_unit, f0)
        f += scale * self._traction_unit

        K = sp.csr_matrix((self.n_dof, self.n_dof)) if want_K else None
        if self.load.pressure != 0.0:
            nel = t.N.shape[0]
            nd = 3 * self.patch.n_e
            fp = np.zeros(self.n_dof)
            Kb = np.zeros((nel, nd, nd)) if want_K else np.zeros((1, 1, 1))
            pressure_kernel(t.N, t.dN, t.wq, t.conn, np.ascontiguousarray(xc),
                            scale * self.load.pressure, want_K, fp, Kb)
            f += fp
            if want_K:
                K = K + self._blocks_to_csr(Kb)
        for rows_m, m in self._moment_tables:
            fm, Km = self._edge_moment(rows_m, xc, scale * m, want_K)
            f += fm
            if want_K:
                K = K + Km
        return f, K

    def _edge_moment(self, rows, xc, m_val, want_K):
        """Edge moment m_tau acting about the current edge tangent:
        f[J] = -m * w * nu^al N_{J,al} n, with nu the in-plane outward unit
        normal of the edge, nu^al = sign * a^{nu,al} / sqrt(a^{nu,nu})."""
        f = np.zeros(self.n_dof)
        trips = ([], [], []) if want_K else None
        for row in rows:
            nodes = self.patch.connectivity_row(row.element)
            xe = xc[nodes]
            a = row.dN.T @ xe                       # (2, 3)
            a_ab = a @ a.T
            ai = np.linalg.inv(a_ab)
            cr = np.cross(a[0], a[1])
            nrm = np.linalg.norm(cr)
            n = cr / nrm
            k = row.nu_idx
            sq = np.sqrt(ai[k, k])
            nu = row.sign * ai[k] / sq              # contravariant components
            w = m_val * row.w_ref
            proj = row.dN @ nu                      # (ne,) nu^al N_{J,al}
            for aI, g in enumerate(nodes):
                f[3 * g:3 * g + 3] -= w * proj[aI] * n
            if not want_K:
                continue
            ne = len(nodes)
            Kloc = np.zeros((3 * ne, 3 * ne))
            for bJ in range(ne):
                dJ = row.dN[bJ]
                for j in range(3):
                    ej = np.zeros(3)
                    ej[j] = 1.0
                    da = np.outer(dJ, a[:, j])
                    da = da + da.T
                    dcr = dJ[0] * np.cross(ej, a[1]) - dJ[1] * np.cross(ej, a[0])
                    dn = (dcr - n * (n @ dcr)) / nrm
                    dai = -ai @ da @ ai
                    dnu = row.sign * (dai[k] / sq
                                      - 0.5 * ai[k] * dai[k, k] / sq**3)
                    dproj = row.dN @ dnu
                    for aI in range(ne):
                        Kloc[3 * aI:3 * aI + 3, 3 * bJ + j] -= w * (
                            dproj[aI] * n + proj[aI] * dn)
            dofs = (3 * nodes[:, None] + np.arange(3)[None, :]).ravel()
            trips[0].append(np.repeat(dofs, dofs.size))
            trips[1].append(np.tile(dofs, dofs.size))
            trips[2].append(Kloc.ravel())
        K = None
        if want_K:
            if trips[0]:
                K = sp.coo_matrix((np.concatenate(trips[2]),
                                   (np.concatenate(trips[0]),
                                    np.concatenate(trips[1]))),
                                  shape=(self.n_dof, self.n_dof)).tocsr()
            else:
                K = sp.csr_matrix((self.n_dof, self.n_dof))
        return f, K

    # --- combined ----------------------------------------------------------------

    def residual(self, xc, scale, want_K=False, want_S=False):
        """f = f_int - f_ext and K = df/du over all dofs."""
        f_int, K_int, S = self.internal(xc, want_K=want_K, want_S=want_S)
        f_ext, K_ext = self.external(xc, scale, want_K=want_K)
        r = f_int - f_ext
        K = (K_int - K_ext) if want_K else None
        return r, K, S

    # --- sampling ------------------------------------------------------------------

    def local_state(self, xc, xi_global):
        """LocalSurfaceData at a global parametric point for the current
        control positions (readable path; used for post-processing)."""
        _, nodes, N, dN, d2N = self.patch.basis_at(xi_global)
        return surface_data(N, dN, d2N, self.patch.ctrl[nodes], xc[nodes])


def sampling_matrix(patch, points):
    """CSR matrix P with u_sampled = P @ u_full: rows are the basis values of
    the elements owning each parametric sample point, per displacement
    component."""
    pts = np.asarray(points, dtype=float)
    n_pts = pts.shape[0]
    data, rows, cols = [], [], []
    for k, xi in enumerate(pts):
        _, nodes, N, _, _ = patch.basis_at(xi)
        for a, g in enumerate(nodes):
            for i in range(3):
                rows.append(3 * k + i)
                cols.append(3 * g + i)
                data.append(N[a])
    return sp.csr_matrix((data, (rows, cols)),
                         shape=(3 * n_pts, 3 * patch.n_no))


def parametric_grid(gx, gy):
    """Uniform (gx x gy) grid over the parametric domain, boundary included."""
    x = np.linspace(0.0, 1.0, gx)
    y = np.linspace(0.0, 1.0, gy)
    X, Y = np.meshgrid(x, y, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])
