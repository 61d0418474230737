"""Bilinear-Lagrange material meshes over the parametric domain.

The parameter fields live on their own coarse quadrilateral mesh, independent
of the analysis mesh but conforming to it: every FE element must lie inside
exactly one material element.  Nodal values are interpolated bilinearly; a
DesignMap selects which nodal values are free variables (with optional
symmetry replication).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MappingError

_TOL = 1e-12


def bilinear_shape(xi_bar):
    """4-node Lagrange shape functions on [-1, 1]^2, corners numbered
    (-,-), (+,-), (-,+), (+,+)."""
    x, y = xi_bar
    return 0.25 * np.array([(1 - x) * (1 - y), (1 + x) * (1 - y),
                            (1 - x) * (1 + y), (1 + x) * (1 + y)])


def map_param(fe_param, offsets, counts):
    """Affine map from FE-element coordinates to material-element coordinates:
    xi_bar^a = (xi^a + e^a) / n_a."""
    fe_param = np.asarray(fe_param, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 1):
        raise MappingError("subdivision counts must be >= 1")
    xi_bar = (fe_param + np.asarray(offsets, dtype=float)) / counts
    if np.any(np.abs(xi_bar) > 1.0 + _TOL):
        raise MappingError(f"mapped coordinate {xi_bar} outside [-1, 1]^2")
    return np.clip(xi_bar, -1.0, 1.0)


@dataclass
class MaterialField:
    """Nodal parameter values on an axis-aligned material mesh.

    ``edges_x``/``edges_y`` are the material element boundaries in the global
    parametric domain [0, 1]; non-uniform spacings support adapted meshes.
    ``values`` maps each parameter kind to a flat nodal array (x-fastest).
    """

    edges_x: np.ndarray
    edges_y: np.ndarray
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges_x = np.asarray(self.edges_x, dtype=float)
        self.edges_y = np.asarray(self.edges_y, dtype=float)
        for edges in (self.edges_x, self.edges_y):
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise MappingError("material element edges must be increasing")
        for kind, vals in self.values.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (self.n_nodes,):
                raise MappingError(
                    f"nodal array for {kind!r} has shape {vals.shape}, "
                    f"expected ({self.n_nodes},)")
            self.values[kind] = vals

    @classmethod
    def uniform(cls, n_x, n_y, kinds=(), **kw):
        f = cls(np.linspace(0.0, 1.0, n_x + 1), np.linspace(0.0, 1.0, n_y + 1), **kw)
        for kind in kinds:
            f.values[kind] = np.zeros(f.n_nodes)
        return f

    # --- sizes -------------------------------------------------------------

    @property
    def n_el_xy(self):
        return len(self.edges_x) - 1, len(self.edges_y) - 1

    @property
    def n_nodes_xy(self):
        return len(self.edges_x), len(self.edges_y)

    @property
    def n_nodes(self):
        nx, ny = self.n_nodes_xy
        return nx * ny

    def node_index(self, ix, iy):
        return iy * self.n_nodes_xy[0] + ix

    def element_nodes(self, ex, ey):
        """Corner node indices in bilinear_shape order."""
        return np.array([self.node_index(ex, ey), self.node_index(ex + 1, ey),
                         self.node_index(ex, ey + 1), self.node_index(ex + 1, ey + 1)])

    def node_params(self):
        """(n_nodes, 2) parametric positions of the material nodes."""
        X, Y = np.meshgrid(self.edges_x, self.edges_y, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    # --- FE mesh conformity and mapping -------------------------------------

    def build_mapping(self, patch):
        """Per-FE-element owning material element plus the local affine map.

        Returns (owner element (ex, ey) pairs, scale (n_el, 2), offset
        (n_el, 2)) such that xi_bar = scale * xi_local + offset.  Raises
        MappingError if an FE element straddles a material boundary.
        """
        n_el = patch.n_el
        owner = np.empty((n_el, 2), dtype=np.int64)
        scale = np.empty((n_el, 2))
        offset = np.empty((n_el, 2))
        for e in range(n_el):
            (dx, dy) = patch.element_domain(e)
            for d, (span, edges) in enumerate(((dx, self.edges_x),
                                               (dy, self.edges_y))):
                s0, s1 = span
                k = int(np.searchsorted(edges, s0 + _TOL) - 1)
                k = min(max(k, 0), len(edges) - 2)
                m0, m1 = edges[k], edges[k + 1]
                if s0 < m0 - _TOL or s1 > m1 + _TOL:
                    raise MappingError(
                        f"FE element {e} spans [{s0:.6g}, {s1:.6g}] across the "
                        f"material element boundary at direction {d}")
                owner[e, d] = k
                scale[e, d] = (s1 - s0) / (m1 - m0)
                offset[e, d] = (s0 + s1 - m0 - m1) / (m1 - m0)
        return owner, scale, offset

    def interp(self, owner_e, scale_e, offset_e, fe_param):
        """Parameter values at an FE-element-local point.

        Returns (values dict, shape values (4,), corner node indices (4,)).
        """
        xi_bar = scale_e * np.asarray(fe_param, dtype=float) + offset_e
        if np.any(np.abs(xi_bar) > 1.0 + _TOL):
            raise MappingError(f"mapped coordinate {xi_bar} outside [-1, 1]^2")
        Nb = bilinear_shape(np.clip(xi_bar, -1.0, 1.0))
        nodes = self.element_nodes(owner_e[0], owner_e[1])
        vals = {kind: float(Nb @ v[nodes]) for kind, v in self.values.items()}
        return vals, Nb, nodes

    def value_at(self, kind, xi_global):
        """Bilinear field value at a global parametric point."""
        xi = np.asarray(xi_global, dtype=float)
        loc = np.empty(2)
        owner = np.empty(2, dtype=np.int64)
        for d, edges in enumerate((self.edges_x, self.edges_y)):
            k = int(np.searchsorted(edges, xi[d], side="right") - 1)
            k = min(max(k, 0), len(edges) - 2)
            owner[d] = k
            loc[d] = 2.0 * (xi[d] - edges[k]) / (edges[k + 1] - edges[k]) - 1.0
        Nb = bilinear_shape(np.clip(loc, -1.0, 1.0))
        nodes = self.element_nodes(owner[0], owner[1])
        return float(Nb @ self.values[kind][nodes])

    # --- reference distributions ---------------------------------------------

    def sample_reference(self, distribution, kind, patch=None, domain="parametric"):
        """Set nodal values of ``kind`` from an analytic distribution.

        ``domain='parametric'`` evaluates the callable at the node's (xi1, xi2);
        ``domain='physical'`` maps nodes through the patch geometry first and
        evaluates at (X, Y) on the reference surface.
        """
        pts = self.node_params()
        if domain == "physical":
            if patch is None:
                raise ValueError("physical-domain sampling requires a patch")
            vals = np.array([distribution(*patch.point(p)[:2]) for p in pts])
        else:
            vals = np.array([distribution(p[0], p[1]) for p in pts])
        self.values[kind] = vals
        return vals

    def copy(self):
        return MaterialField(self.edges_x.copy(), self.edges_y.copy(),
                             {k: v.copy() for k, v in self.values.items()})


class DesignMap:
    """Linear map from the free design vector to nodal values of the
    identified parameter kinds (selection plus optional replication).

    The per-kind matrices are dense (n_nodes, n_var_kind) with 0/1 entries;
    every node receives exactly one free variable.  The free vector is
    kind-major: all variables of the first kind, then the second.
    """

    def __init__(self, kinds, matrices, representatives):
        self.kinds = tuple(kinds)
        self._mats = {k: np.asarray(m, dtype=float) for k, m in zip(kinds, matrices)}
        self.representatives = representatives  # kind -> node index array (n_var_k,)
        offsets = {}
        pos = 0
        for k in self.kinds:
            offsets[k] = pos
            pos += self._mats[k].shape[1]
        self.offsets = offsets
        self.n_var = pos

    @classmethod
    def identity(cls, field, kinds):
        n = field.n_nodes
        return cls(kinds, [np.eye(n) for _ in kinds],
                   {k: np.arange(n) for k in kinds})

    @classmethod
    def replicate_y(cls, field, kinds):
        """Free variables are the x-profile nodes, replicated to every y row."""
        nx, ny = field.n_nodes_xy
        M = np.zeros((nx * ny, nx))
        for iy in range(ny):
            for ix in range(nx):
                M[iy * nx + ix, ix] = 1.0
        return cls(kinds, [M.copy() for _ in kinds],
                   {k: np.arange(nx) for k in kinds})

    @classmethod
    def symmetric_quarter(cls, field, kinds):
        """Mirror symmetry about both midlines; free nodes are one quarter."""
        nx, ny = field.n_nodes_xy
        fx, fy = (nx + 1) // 2, (ny + 1) // 2
        M = np.zeros((nx * ny, fx * fy))
        for iy in range(ny):
            ry = min(iy, ny - 1 - iy)
            for ix in range(nx):
                rx = min(ix, nx - 1 - ix)
                M[iy * nx + ix, ry * fx + rx] = 1.0
        reps = np.array([ry * nx + rx for ry in range(fy) for rx in range(fx)])
        return cls(kinds, [M.copy() for _ in kinds], {k: reps for k in kinds})

    def matrix(self, kind):
        return self._mats[kind]

    def n_var_kind(self, kind):
        return self._mats[kind].shape[1]

    def slice_of(self, kind):
        off = self.offsets[kind]
        return slice(off, off + self.n_var_kind(kind))

    def expand(self, q_free):
        """Free design vector -> dict of full nodal arrays per kind."""
        q_free = np.asarray(q_free, dtype=float)
        return {k: self._mats[k] @ q_free[self.slice_of(k)] for k in self.kinds}

    def restrict(self, nodal):
        """Full nodal arrays -> free design vector (representative nodes)."""
        parts = [np.asarray(nodal[k], dtype=float)[self.representatives[k]]
                 for k in self.kinds]
        return np.concatenate(parts)

    def apply_to(self, field, q_free):
        for k, v in self.expand(q_free).items():
            field.values[k] = v

    def kind_of_var(self, j):
        for k in self.kinds:
            s = self.slice_of(k)
            if s.start <= j < s.stop:
                return k
        raise IndexError(j)
