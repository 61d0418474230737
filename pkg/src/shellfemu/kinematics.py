"""Differential geometry of the reference and current shell midsurface.

All quantities are evaluated pointwise from basis values and control-point
positions; derivatives are with respect to the global parametric coordinates.
Second-derivative arrays are packed [11, 22, 12].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularGeometryError

_PAIRS = ((0, 0), (1, 1), (0, 1))


@dataclass
class LocalSurfaceData:
    """Per-point surface state in the reference and current configuration."""

    a: np.ndarray            # (2, 3) current covariant tangents
    A: np.ndarray            # (2, 3) reference covariant tangents
    a_ab: np.ndarray         # (2, 2) current metric
    A_ab: np.ndarray         # (2, 2) reference metric
    a_inv: np.ndarray        # (2, 2) current contravariant metric
    A_inv: np.ndarray        # (2, 2) reference contravariant metric
    n: np.ndarray            # (3,) current unit normal
    N: np.ndarray            # (3,) reference unit normal
    b_ab: np.ndarray         # (2, 2) current curvature components
    B_ab: np.ndarray         # (2, 2) reference curvature components
    gamma: np.ndarray        # (2, 2, 2) Christoffel symbols of S, gamma[g, al, be]
    J: float                 # surface stretch
    sqrt_det_A: float        # reference area element
    h_ab: np.ndarray         # (2, 2, 3) current second derivatives a_{al,be}
    H_ab: np.ndarray         # (2, 2, 3) reference second derivatives

    @property
    def strain(self):
        """Membrane strain eps_ab = (a_ab - A_ab) / 2."""
        return 0.5 * (self.a_ab - self.A_ab)

    @property
    def rel_curvature(self):
        """Relative curvature kappa_ab = b_ab - B_ab."""
        return self.b_ab - self.B_ab

    @property
    def deformation_gradient(self):
        """F = a_al otimes A^al."""
        A_contra = self.A_inv @ self.A
        return self.a.T @ A_contra


def _first_fundamental(dN, controls):
    a = dN.T @ controls                       # (2, 3)
    a_ab = a @ a.T
    det = a_ab[0, 0] * a_ab[1, 1] - a_ab[0, 1] * a_ab[1, 0]
    return a, a_ab, det


def _second_derivs(d2N, controls):
    h = np.empty((2, 2, 3))
    for c, (al, be) in enumerate(_PAIRS):
        v = d2N[:, c] @ controls
        h[al, be] = v
        h[be, al] = v
    return h


def surface_data(N, dN, d2N, X_e, x_e):
    """Full surface state at one point from elemental control positions.

    ``X_e`` and ``x_e`` are (n_e, 3) reference and current control positions
    gathered for the element; basis arrays come from the patch evaluation.
    """
    A, A_ab, detA = _first_fundamental(dN, X_e)
    a, a_ab, deta = _first_fundamental(dN, x_e)
    crA = np.cross(A[0], A[1])
    cra = np.cross(a[0], a[1])
    nrmA = np.linalg.norm(crA)
    nrma = np.linalg.norm(cra)
    if nrmA < 1e-14 or nrma < 1e-14:
        raise SingularGeometryError(
            f"degenerate tangents (|a1 x a2| = {min(nrmA, nrma):.3e})")
    Nvec = crA / nrmA
    nvec = cra / nrma

    H = _second_derivs(d2N, X_e)
    h = _second_derivs(d2N, x_e)
    B_ab = H @ Nvec
    b_ab = h @ nvec

    A_inv = np.linalg.inv(A_ab)
    a_inv = np.linalg.inv(a_ab)
    J = np.sqrt(deta / detA)

    # Christoffel symbols of the current surface: gamma^g_ab = a_{a,b} . a^g
    a_contra = a_inv @ a                     # (2, 3) rows a^g
    gamma = np.einsum("abk,gk->gab", h, a_contra)

    return LocalSurfaceData(a=a, A=A, a_ab=a_ab, A_ab=A_ab, a_inv=a_inv,
                            A_inv=A_inv, n=nvec, N=Nvec, b_ab=b_ab, B_ab=B_ab,
                            gamma=gamma, J=J, sqrt_det_A=np.sqrt(detA),
                            h_ab=h, H_ab=H)


def surface_data_at(patch, reference_controls, current_controls, xi_global):
    """Surface state at a global parametric coordinate of a patch."""
    _, nodes, N, dN, d2N = patch.basis_at(xi_global)
    return surface_data(N, dN, d2N, reference_controls[nodes],
                        current_controls[nodes])


def covariant_second_basis(dN, d2N, local):
    """N_{I;ab} = N_{I,ab} - gamma^g_ab N_{I,g}, packed [11, 22, 12]."""
    psi = np.empty_like(d2N)
    for c, (al, be) in enumerate(_PAIRS):
        psi[:, c] = d2N[:, c] - (local.gamma[0, al, be] * dN[:, 0]
                                 + local.gamma[1, al, be] * dN[:, 1])
    return psi
