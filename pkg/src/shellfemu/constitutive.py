"""Shell material laws: membrane stress and bending moment components.

Two laws are provided.  For initially flat shells, an incompressible
Neo-Hookean membrane combined with a curvature-linear bending moment
(shear stiffness ``mu``, bending stiffness ``c``):

    tau^ab = mu * (A^ab - a^ab / J^2),      M0^ab = c * J * b^ab.

For initially curved shells, the classical Koiter-type law in Young's modulus
``E`` and thickness ``T``, restricted to the incompressible reduction
(2D Lame parameters mu = E*T/3, Lambda = 2*mu):

    tau^ab = c^abgd eps_gd,                 M0^ab = (T^2/12) c^abgd kappa_gd,
    c^abgd = (2ET/3) * (I_dil + I_dev)^abgd   built from the reference metric.

All component arrays are 2x2 in the covariant/contravariant index pairs; the
stress contribution of the bending model to tau is omitted (negligible for
thin shells).  Material tangents follow the convention

    d(tau^ab) = sum_gd  dtau_da[a,b,g,d] * d(a_gd)

with the sum running over all four index pairs of a symmetric increment.
"""

from __future__ import annotations

import numpy as np

NEO_HOOKE_CANHAM = "neo_hooke_canham"
KOITER = "koiter"

PARAM_KINDS = {NEO_HOOKE_CANHAM: ("mu", "c"), KOITER: ("E", "T")}


def _raise_indices(a_inv, t_ab):
    """t^ab = a^ag t_gd a^db."""
    return a_inv @ t_ab @ a_inv


def neo_hooke_canham(mu, c, local):
    """Membrane stress and bending moment for the flat-reference law."""
    tau = mu * (local.A_inv - local.a_inv / local.J**2)
    b_up = _raise_indices(local.a_inv, local.b_ab)
    M0 = c * local.J * b_up
    return tau, M0


def koiter_elasticity_tensor(E, T, local):
    """c^abgd = (2ET/3) (A^ab A^gd + (A^ag A^bd + A^ad A^bg)/2)."""
    Ai = local.A_inv
    I4 = (np.einsum("ab,gd->abgd", Ai, Ai)
          + 0.5 * (np.einsum("ag,bd->abgd", Ai, Ai)
                   + np.einsum("ad,bg->abgd", Ai, Ai)))
    return (2.0 * E * T / 3.0) * I4


def koiter(E, T, local):
    """Membrane stress and bending moment for the curved-reference law."""
    c4 = koiter_elasticity_tensor(E, T, local)
    tau = np.einsum("abgd,gd->ab", c4, local.strain)
    M0 = (T**2 / 12.0) * np.einsum("abgd,gd->ab", c4, local.rel_curvature)
    return tau, M0


def material_tangents(law, params, local):
    """Derivatives of (tau, M0) w.r.t. the metric and curvature components.

    Returns (dtau_da, dtau_db, dM0_da, dM0_db), each (2, 2, 2, 2), in the
    full-index-pair summation convention stated in the module docstring.
    """
    if law == NEO_HOOKE_CANHAM:
        mu, c = params["mu"], params["c"]
        ai = local.a_inv
        J = local.J
        b_up = _raise_indices(ai, local.b_ab)
        dtau_da = (mu / J**2) * (np.einsum("ag,db->abgd", ai, ai)
                                 + np.einsum("ab,gd->abgd", ai, ai))
        dtau_db = np.zeros((2, 2, 2, 2))
        dM0_da = c * J * (0.5 * np.einsum("gd,ab->abgd", ai, b_up)
                          - np.einsum("ag,db->abgd", ai, b_up)
                          - np.einsum("ag,db->abgd", b_up, ai))
        dM0_db = c * J * np.einsum("ag,bd->abgd", ai, ai)
        return dtau_da, dtau_db, dM0_da, dM0_db

    if law == KOITER:
        E, T = params["E"], params["T"]
        c4 = koiter_elasticity_tensor(E, T, local)
        zero = np.zeros((2, 2, 2, 2))
        return 0.5 * c4, zero, zero, (T**2 / 12.0) * c4

    raise ValueError(f"unknown material law {law!r}")


def sensitivity_kernels(law, params, local):
    """Pointwise derivatives of (tau, M0) w.r.t. each material parameter.

    Returns a dict ``kind -> (dtau_dq, dM0_dq)`` of 2x2 component arrays.
    """
    if law == NEO_HOOKE_CANHAM:
        dtau_dmu = local.A_inv - local.a_inv / local.J**2
        b_up = _raise_indices(local.a_inv, local.b_ab)
        zero = np.zeros((2, 2))
        return {"mu": (dtau_dmu, zero), "c": (zero, local.J * b_up)}

    if law == KOITER:
        E, T = params["E"], params["T"]
        c4_unit = koiter_elasticity_tensor(1.0, 1.0, local)  # I4 without 2ET/3
        Ieps = np.einsum("abgd,gd->ab", c4_unit, local.strain)
        Ikap = np.einsum("abgd,gd->ab", c4_unit, local.rel_curvature)
        dtau_dE = (2.0 * T / 3.0) * Ieps
        dM0_dE = (T**3 / 18.0) * Ikap
        dtau_dT = (2.0 * E / 3.0) * Ieps
        dM0_dT = (E * T**2 / 6.0) * Ikap
        return {"E": (dtau_dE, dM0_dE), "T": (dtau_dT, dM0_dT)}

    raise ValueError(f"unknown material law {law!r}")


# --- surface energy densities (used by the energy-consistency tests; only the
# --- Koiter law and the pure membrane are exact gradients of these) ---------


def membrane_energy(mu, local):
    """W_m = (mu/2) (I1 - 3 + 1/J^2), I1 = A^ab a_ab; tau = 2 dW_m/da_ab."""
    I1 = np.einsum("ab,ab->", local.A_inv, local.a_ab)
    return 0.5 * mu * (I1 - 3.0 + 1.0 / local.J**2)


def bending_energy(c, local):
    """W_b = (c J / 2) b^ab b_ab; M0 = dW_b/db_ab at fixed metric."""
    b_up = _raise_indices(local.a_inv, local.b_ab)
    return 0.5 * c * local.J * np.einsum("ab,ab->", b_up, local.b_ab)


def bending_membrane_stress(c, local):
    """tau contribution 2 dW_b/da_ab of the bending energy (omitted from the
    internal forces; exposed so tests can close the energy balance)."""
    ai = local.a_inv
    J = local.J
    b_up = _raise_indices(ai, local.b_ab)
    bb = np.einsum("ab,ab->", b_up, local.b_ab)
    triple = ai @ local.b_ab @ ai @ local.b_ab @ ai
    return 0.5 * c * J * bb * ai - 2.0 * c * J * triple


def koiter_energy(E, T, local):
    """W = (1/2) eps:c:eps + (T^2/24) kappa:c:kappa."""
    c4 = koiter_elasticity_tensor(E, T, local)
    eps, kap = local.strain, local.rel_curvature
    return (0.5 * np.einsum("ab,abgd,gd->", eps, c4, eps)
            + (T**2 / 24.0) * np.einsum("ab,abgd,gd->", kap, c4, kap))


def incompressible_lame(E, T):
    """2D Lame parameters of the incompressible reduction: mu = ET/3, Lambda = 2mu."""
    mu = E * T / 3.0
    return mu, 2.0 * mu
