"""Tensor-product NURBS patches with Bezier-extraction based evaluation.

A patch stores open knot vectors, a control net, weights and per-element
extraction operators.  Basis functions and their first and second parametric
derivatives are evaluated element-wise from Bernstein polynomials; derivatives
are returned with respect to the global parametric coordinates, which span
[0, 1] in each direction for all generators in this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import KnotVectorError

# connectivity and quadrature both use x-fastest local numbering:
# local node a = jy * (px + 1) + jx


def validate_open_knots(knots, degree):
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.size < 2 * (degree + 1):
        raise KnotVectorError(f"knot vector too short for degree {degree}")
    if np.any(np.diff(knots) < 0):
        raise KnotVectorError("knot vector must be non-decreasing")
    if not (np.all(knots[: degree + 1] == knots[0])
            and np.all(knots[-(degree + 1):] == knots[-1])):
        raise KnotVectorError(
            f"knot vector is not open (end knots must repeat {degree + 1} times)")
    return knots


def nonzero_spans(knots, degree):
    """Indices k of the nonzero knot intervals [knots[k], knots[k+1])."""
    return [k for k in range(degree, len(knots) - degree - 1)
            if knots[k + 1] > knots[k]]


def bernstein(degree, xi):
    """Bernstein polynomials on [-1, 1] with first and second derivatives.

    Returns three arrays of length ``degree + 1``.
    """
    p = degree
    t = 0.5 * (xi + 1.0)
    from math import comb

    B = np.empty(p + 1)
    dB = np.empty(p + 1)
    ddB = np.empty(p + 1)
    for i in range(p + 1):
        c = comb(p, i)
        B[i] = c * t**i * (1.0 - t) ** (p - i)

        d = 0.0
        if i >= 1:
            d += i * t ** (i - 1) * (1.0 - t) ** (p - i)
        if p - i >= 1:
            d -= (p - i) * t**i * (1.0 - t) ** (p - i - 1)
        dB[i] = c * d * 0.5  # dt/dxi = 1/2

        dd = 0.0
        if i >= 2:
            dd += i * (i - 1) * t ** (i - 2) * (1.0 - t) ** (p - i)
        if i >= 1 and p - i >= 1:
            dd -= 2.0 * i * (p - i) * t ** (i - 1) * (1.0 - t) ** (p - i - 1)
        if p - i >= 2:
            dd += (p - i) * (p - i - 1) * t**i * (1.0 - t) ** (p - i - 2)
        ddB[i] = c * dd * 0.25
    return B, dB, ddB


def bezier_extraction(knots, degree):
    """Per-element Bezier extraction operators for an open knot vector.

    Returns one dense ``(degree+1, degree+1)`` operator per nonzero span;
    multiplying it with the Bernstein values of the span reproduces the
    B-spline basis functions supported there.
    """
    U = validate_open_knots(knots, degree)
    p = degree
    m = len(U)
    spans = nonzero_spans(U, p)
    n_el = len(spans)
    ops = [np.eye(p + 1) for _ in range(n_el)]

    a = p
    b = a + 1
    nb = 0
    while b < m - 1:
        i = b
        while b < m - 1 and U[b + 1] == U[b]:
            b += 1
        mult = b - i + 1
        if mult < p:
            numer = U[b] - U[a]
            alphas = np.zeros(p - mult)
            for j in range(p, mult, -1):
                alphas[j - mult - 1] = numer / (U[a + j] - U[a])
            r = p - mult
            C = ops[nb]
            for j in range(1, r + 1):
                save = r - j
                s = mult + j
                for k in range(p, s - 1, -1):
                    alpha = alphas[k - s]
                    C[:, k] = alpha * C[:, k] + (1.0 - alpha) * C[:, k - 1]
                if b < m - 1:
                    # carry overlapping coefficients into the next operator
                    ops[nb + 1][save:save + j + 1, save] = C[p - j:p + 1, p]
        if mult >= p:
            pass
        nb += 1
        if b < m - 1:
            a = b
            b += 1
    return ops


def greville(knots, degree):
    """Greville abscissae; control points placed there reproduce linear maps."""
    knots = np.asarray(knots, dtype=float)
    n = len(knots) - degree - 1
    return np.array([knots[i + 1:i + degree + 1].mean() for i in range(n)])


def insert_knot(knots, degree, ctrl, u):
    """Single Boehm knot insertion; ``ctrl`` are (possibly homogeneous) rows."""
    knots = np.asarray(knots, dtype=float)
    ctrl = np.asarray(ctrl, dtype=float)
    k = int(np.searchsorted(knots, u, side="right") - 1)
    n, dim = ctrl.shape
    new = np.empty((n + 1, dim))
    for i in range(n + 1):
        if i <= k - degree:
            new[i] = ctrl[i]
        elif i >= k + 1:
            new[i] = ctrl[i - 1]
        else:
            alpha = (u - knots[i]) / (knots[i + degree] - knots[i])
            new[i] = alpha * ctrl[i] + (1.0 - alpha) * ctrl[i - 1]
    new_knots = np.insert(knots, k + 1, u)
    return new_knots, new


@dataclass
class NurbsPatch:
    """Single-patch tensor-product NURBS surface.

    Control points are numbered x-fastest: node (ix, iy) has global index
    ``iy * n_funcs_x + ix``.  ``ctrl`` has shape (n_no, 3), ``weights``
    (n_no,).  Extraction operators are built at construction.
    """

    degrees: tuple
    knots_x: np.ndarray
    knots_y: np.ndarray
    ctrl: np.ndarray
    weights: np.ndarray

    spans_x: list = field(init=False, repr=False)
    spans_y: list = field(init=False, repr=False)
    ext_x: list = field(init=False, repr=False)
    ext_y: list = field(init=False, repr=False)

    def __post_init__(self):
        px, py = self.degrees
        if px < 2 or py < 2:
            raise KnotVectorError("Kirchhoff-Love shells need degree >= 2")
        self.knots_x = validate_open_knots(self.knots_x, px)
        self.knots_y = validate_open_knots(self.knots_y, py)
        self.ctrl = np.ascontiguousarray(self.ctrl, dtype=float)
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        if np.any(self.weights <= 0.0):
            raise KnotVectorError("weights must be strictly positive")
        self.spans_x = nonzero_spans(self.knots_x, px)
        self.spans_y = nonzero_spans(self.knots_y, py)
        nfx, nfy = self.n_funcs
        if self.ctrl.shape != (nfx * nfy, 3) or self.weights.shape != (nfx * nfy,):
            raise KnotVectorError(
                f"control net size {self.ctrl.shape} does not match basis "
                f"({nfx} x {nfy} functions)")
        self.ext_x = bezier_extraction(self.knots_x, px)
        self.ext_y = bezier_extraction(self.knots_y, py)

    # --- sizes -----------------------------------------------------------

    @property
    def n_el_xy(self):
        return len(self.spans_x), len(self.spans_y)

    @property
    def n_el(self):
        nx, ny = self.n_el_xy
        return nx * ny

    @property
    def n_funcs(self):
        px, py = self.degrees
        return len(self.knots_x) - px - 1, len(self.knots_y) - py - 1

    @property
    def n_no(self):
        nfx, nfy = self.n_funcs
        return nfx * nfy

    @property
    def n_e(self):
        px, py = self.degrees
        return (px + 1) * (py + 1)

    # --- element bookkeeping ---------------------------------------------

    def element_index(self, ex, ey):
        return ey * self.n_el_xy[0] + ex

    def element_spans(self, e):
        nx = self.n_el_xy[0]
        ex, ey = e % nx, e // nx
        kx, ky = self.spans_x[ex], self.spans_y[ey]
        return (ex, ey), (kx, ky)

    def element_domain(self, e):
        """Global parametric rectangle covered by element ``e``."""
        _, (kx, ky) = self.element_spans(e)
        return ((self.knots_x[kx], self.knots_x[kx + 1]),
                (self.knots_y[ky], self.knots_y[ky + 1]))

    def connectivity(self):
        """(n_el, n_e) array of global control-point indices, x-fastest."""
        px, py = self.degrees
        nfx, _ = self.n_funcs
        nx, ny = self.n_el_xy
        conn = np.empty((nx * ny, self.n_e), dtype=np.int64)
        for ey in range(ny):
            ky = self.spans_y[ey]
            for ex in range(nx):
                kx = self.spans_x[ex]
                e = ey * nx + ex
                a = 0
                for jy in range(py + 1):
                    gy = ky - py + jy
                    for jx in range(px + 1):
                        conn[e, a] = gy * nfx + (kx - px + jx)
                        a += 1
        return conn

    # --- parametric coordinates -------------------------------------------

    def locate(self, xi):
        """Global (xi1, xi2) in [0,1]^2 -> (element, local coords in [-1,1]^2)."""
        xi = np.asarray(xi, dtype=float)
        e_dir = []
        loc = []
        for x, knots, spans in ((xi[0], self.knots_x, self.spans_x),
                                (xi[1], self.knots_y, self.spans_y)):
            lo, hi = knots[spans[0]], knots[spans[-1] + 1]
            if x < lo - 1e-12 or x > hi + 1e-12:
                raise ValueError(f"parametric coordinate {x} outside [{lo}, {hi}]")
            x = min(max(x, lo), hi)
            k = int(np.searchsorted(knots, x, side="right") - 1)
            k = min(max(k, spans[0]), spans[-1])
            while knots[k + 1] <= knots[k]:
                k += 1
            i = spans.index(k)
            e_dir.append(i)
            s0, s1 = knots[k], knots[k + 1]
            loc.append(2.0 * (x - s0) / (s1 - s0) - 1.0)
        e = self.element_index(e_dir[0], e_dir[1])
        return e, np.array(loc)

    # --- evaluation ---------------------------------------------------------

    def element_bspline_basis(self, e, xi_local):
        """Tensor-product B-spline basis on element ``e`` at local (xi, eta).

        Derivatives are w.r.t. the global parametric coordinates.  Returns
        (N, dN, d2N) with shapes (n_e,), (n_e, 2), (n_e, 3); the second
        derivatives are packed [d11, d22, d12].
        """
        px, py = self.degrees
        (ex, ey), (kx, ky) = self.element_spans(e)
        Bx, dBx, ddBx = bernstein(px, xi_local[0])
        By, dBy, ddBy = bernstein(py, xi_local[1])
        Cx, Cy = self.ext_x[ex], self.ext_y[ey]
        sx = 2.0 / (self.knots_x[kx + 1] - self.knots_x[kx])
        sy = 2.0 / (self.knots_y[ky + 1] - self.knots_y[ky])
        Nx, dNx, ddNx = Cx @ Bx, (Cx @ dBx) * sx, (Cx @ ddBx) * sx * sx
        Ny, dNy, ddNy = Cy @ By, (Cy @ dBy) * sy, (Cy @ ddBy) * sy * sy

        N = np.outer(Ny, Nx).ravel()
        dN = np.stack([np.outer(Ny, dNx).ravel(),
                       np.outer(dNy, Nx).ravel()], axis=1)
        d2N = np.stack([np.outer(Ny, ddNx).ravel(),
                        np.outer(ddNy, Nx).ravel(),
                        np.outer(dNy, dNx).ravel()], axis=1)
        return N, dN, d2N

    def element_basis(self, e, xi_local):
        """Rational (NURBS) basis with first/second global-parametric derivatives."""
        Nh, dNh, d2Nh = self.element_bspline_basis(e, xi_local)
        w = self.weights[self.connectivity_row(e)]
        return _rationalize(Nh, dNh, d2Nh, w)

    def connectivity_row(self, e):
        px, py = self.degrees
        nfx, _ = self.n_funcs
        _, (kx, ky) = self.element_spans(e)
        idx = np.empty(self.n_e, dtype=np.int64)
        a = 0
        for jy in range(py + 1):
            for jx in range(px + 1):
                idx[a] = (ky - py + jy) * nfx + (kx - px + jx)
                a += 1
        return idx

    def basis_at(self, xi_global):
        """Rational basis at a global parametric point.

        Returns (element index, node indices, N, dN, d2N).
        """
        e, loc = self.locate(xi_global)
        nodes = self.connectivity_row(e)
        N, dN, d2N = self.element_basis(e, loc)
        return e, nodes, N, dN, d2N

    def point(self, xi_global, controls=None):
        """Surface point at a global parametric coordinate."""
        controls = self.ctrl if controls is None else controls
        _, nodes, N, _, _ = self.basis_at(xi_global)
        return N @ controls[nodes]

    # --- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "degrees": list(self.degrees),
            "knots_x": self.knots_x.tolist(),
            "knots_y": self.knots_y.tolist(),
            "ctrl": self.ctrl.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(degrees=tuple(d["degrees"]),
                   knots_x=np.asarray(d["knots_x"], dtype=float),
                   knots_y=np.asarray(d["knots_y"], dtype=float),
                   ctrl=np.asarray(d["ctrl"], dtype=float),
                   weights=np.asarray(d["weights"], dtype=float))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _rationalize(Nh, dNh, d2Nh, w):
    """Quotient rule for rational basis values and derivatives."""
    wN = w * Nh
    wdN = w[:, None] * dNh
    wd2N = w[:, None] * d2Nh
    W = wN.sum()
    Wd = wdN.sum(axis=0)           # (2,)
    Wdd = wd2N.sum(axis=0)         # (3,) packed [11, 22, 12]

    R = wN / W
    dR = wdN / W - np.outer(wN, Wd) / W**2

    d2R = np.empty_like(d2Nh)
    pair = ((0, 0), (1, 1), (0, 1))
    for c, (al, be) in enumerate(pair):
        d2R[:, c] = (wd2N[:, c] / W
                     - (wdN[:, al] * Wd[be] + wdN[:, be] * Wd[al] + wN * Wdd[c]) / W**2
                     + 2.0 * wN * Wd[al] * Wd[be] / W**3)
    return R, dR, d2R


# --- uniform open knot vectors and patch generators ------------------------


def uniform_open_knots(n_el, degree):
    interior = np.linspace(0.0, 1.0, n_el + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def make_plate(length_x, length_y, n_x, n_y, degree=2):
    """Flat rectangular patch in the z=0 plane, exact affine geometry."""
    if length_x <= 0 or length_y <= 0 or n_x < 1 or n_y < 1:
        raise ValueError("plate dimensions and element counts must be positive")
    kx = uniform_open_knots(n_x, degree)
    ky = uniform_open_knots(n_y, degree)
    gx = greville(kx, degree) * length_x
    gy = greville(ky, degree) * length_y
    X, Y = np.meshgrid(gx, gy, indexing="xy")
    ctrl = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    return NurbsPatch((degree, degree), kx, ky, ctrl, np.ones(ctrl.shape[0]))


def make_strip(length_x, length_y, n_x, n_y=1, degree=2):
    """Long flat strip; identical to make_plate with a 1-element default in y."""
    return make_plate(length_x, length_y, n_x, n_y, degree)


def make_curved_patch(length_x, length_y, height, n_x, n_y, degree=2,
                      fit_samples_per_el=4):
    """Doubly curved patch z = height*sin(pi*xi1)*sin(pi*xi2).

    In-plane coordinates are exact (Greville); the bump is a least-squares
    spline fit, so the out-of-plane geometry carries an approximation error
    that shrinks with mesh refinement.
    """
    patch = make_plate(length_x, length_y, n_x, n_y, degree)
    kx, ky = patch.knots_x, patch.knots_y
    nfx, nfy = patch.n_funcs

    sx = np.linspace(0.0, 1.0, fit_samples_per_el * n_x + 1)
    sy = np.linspace(0.0, 1.0, fit_samples_per_el * n_y + 1)

    Gx = _basis_matrix_1d(kx, degree, sx)
    Gy = _basis_matrix_1d(ky, degree, sy)
    zx = np.sin(np.pi * sx)
    zy = np.sin(np.pi * sy)
    cx = np.linalg.lstsq(Gx, zx, rcond=None)[0]
    cy = np.linalg.lstsq(Gy, zy, rcond=None)[0]
    z_ctrl = height * np.outer(cy, cx).ravel()

    ctrl = patch.ctrl.copy()
    ctrl[:, 2] = z_ctrl
    return NurbsPatch((degree, degree), kx, ky, ctrl, np.ones(nfx * nfy))


def _basis_matrix_1d(knots, degree, samples):
    spans = nonzero_spans(knots, degree)
    ops = bezier_extraction(knots, degree)
    n = len(knots) - degree - 1
    G = np.zeros((len(samples), n))
    for r, x in enumerate(samples):
        x = min(max(x, knots[0]), knots[-1])
        k = int(np.searchsorted(knots, x, side="right") - 1)
        k = min(max(k, spans[0]), spans[-1])
        while knots[k + 1] <= knots[k]:
            k += 1
        i = spans.index(k)
        t = 2.0 * (x - knots[k]) / (knots[k + 1] - knots[k]) - 1.0
        B, _, _ = bernstein(degree, t)
        G[r, k - degree:k + 1] = ops[i] @ B
    return G


def make_cylinder_patch(radius, angle, length, n_arc, n_len, degree=2):
    """Exact circular-cylinder segment (arc in the x-z plane, axis along y).

    The arc direction uses the rational quadratic conic construction and is
    exact for ``angle`` up to pi/2; refinement inserts knots in homogeneous
    coordinates, preserving the geometry exactly.
    """
    if degree != 2:
        raise ValueError("exact cylinder construction requires degree 2")
    if not 0.0 < angle <= np.pi / 2 + 1e-12:
        raise ValueError("single conic segment limited to angles in (0, pi/2]")
    # single exact segment
    w1 = np.cos(angle / 2.0)
    pts = np.array([
        [0.0, 0.0, radius],
        [radius * np.tan(angle / 2.0), 0.0, radius],
        [radius * np.sin(angle), 0.0, radius * np.cos(angle)],
    ])
    wts = np.array([1.0, w1, 1.0])
    homo = np.column_stack([pts * wts[:, None], wts])
    knots = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    for u in np.linspace(0.0, 1.0, n_arc + 1)[1:-1]:
        knots, homo = insert_knot(knots, 2, homo, u)

    arc_w = homo[:, 3]
    arc_pts = homo[:, :3] / arc_w[:, None]

    ky = uniform_open_knots(n_len, degree)
    gy = greville(ky, degree) * length
    n_arc_pts = arc_pts.shape[0]
    ctrl = np.empty((len(gy) * n_arc_pts, 3))
    wts2 = np.empty(len(gy) * n_arc_pts)
    for iy, y in enumerate(gy):
        row = arc_pts.copy()
        row[:, 1] = y
        ctrl[iy * n_arc_pts:(iy + 1) * n_arc_pts] = row
        wts2[iy * n_arc_pts:(iy + 1) * n_arc_pts] = arc_w
    return NurbsPatch((degree, degree), knots, ky, ctrl, wts2)
