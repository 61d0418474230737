"""Element-loop kernels for internal forces, tangent stiffness, sensitivities
and follower-pressure loads.

All functions are written in numba-compatible loop style and get jitted by
``backends.maybe_jit``; with SHELLFEMU_JIT=0 the same code runs interpreted.
Second-derivative arrays are packed [11, 22, 12]; local dof numbering is
3*I + i for local node I and direction i.

Law ids: 0 = Neo-Hooke membrane + curvature-linear bending (params mu, c),
         1 = Koiter incompressible reduction (params E, T).
"""

import numpy as np

from .backends import maybe_jit

_PAIR_A = (0, 1, 0)
_PAIR_B = (0, 1, 1)


def _internal_forces_impl(law_id, N, dN, d2N, wq, conn, Xc, xc,
                          p1_nodal, p2_nodal, mat_conn, Nbar,
                          want_K, want_S, f_out, K_blocks, S1_blocks, S2_blocks):
    nel, nqp, ne = N.shape
    ndof = 3 * ne

    Xe = np.empty((ne, 3))
    xe = np.empty((ne, 3))
    psi = np.empty((ne, 3))
    Mpsi = np.empty(ne)
    gamma = np.empty((2, 3))
    ag = np.empty((2, 3))
    a0 = np.empty(3)
    a1 = np.empty(3)
    A0 = np.empty(3)
    A1 = np.empty(3)
    cra = np.empty(3)
    nv = np.empty(3)
    Nv = np.empty(3)
    h = np.empty((3, 3))
    H = np.empty((3, 3))
    g1 = np.empty((3, 2))
    ej = np.empty(3)
    dcr = np.empty(3)
    dnv = np.empty(3)
    dG = np.empty((2, 3))

    for e in range(nel):
        for a in range(ne):
            g = conn[e, a]
            for k in range(3):
                Xe[a, k] = Xc[g, k]
                xe[a, k] = xc[g, k]

        for q in range(nqp):
            # --- first fundamental forms -------------------------------------
            for k in range(3):
                A0[k] = 0.0
                A1[k] = 0.0
                a0[k] = 0.0
                a1[k] = 0.0
            for a in range(ne):
                d0 = dN[e, q, a, 0]
                d1 = dN[e, q, a, 1]
                for k in range(3):
                    A0[k] += d0 * Xe[a, k]
                    A1[k] += d1 * Xe[a, k]
                    a0[k] += d0 * xe[a, k]
                    a1[k] += d1 * xe[a, k]
            AA00 = A0[0] * A0[0] + A0[1] * A0[1] + A0[2] * A0[2]
            AA11 = A1[0] * A1[0] + A1[1] * A1[1] + A1[2] * A1[2]
            AA01 = A0[0] * A1[0] + A0[1] * A1[1] + A0[2] * A1[2]
            aa00 = a0[0] * a0[0] + a0[1] * a0[1] + a0[2] * a0[2]
            aa11 = a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]
            aa01 = a0[0] * a1[0] + a0[1] * a1[1] + a0[2] * a1[2]
            detA = AA00 * AA11 - AA01 * AA01
            deta = aa00 * aa11 - aa01 * aa01

            cra[0] = a0[1] * a1[2] - a0[2] * a1[1]
            cra[1] = a0[2] * a1[0] - a0[0] * a1[2]
            cra[2] = a0[0] * a1[1] - a0[1] * a1[0]
            nrma = np.sqrt(cra[0] ** 2 + cra[1] ** 2 + cra[2] ** 2)
            crA0 = A0[1] * A1[2] - A0[2] * A1[1]
            crA1 = A0[2] * A1[0] - A0[0] * A1[2]
            crA2 = A0[0] * A1[1] - A0[1] * A1[0]
            nrmA = np.sqrt(crA0 ** 2 + crA1 ** 2 + crA2 ** 2)
            for k in range(3):
                nv[k] = cra[k] / nrma
            Nv[0] = crA0 / nrmA
            Nv[1] = crA1 / nrmA
            Nv[2] = crA2 / nrmA

            inv_det_a = 1.0 / deta
            ai00 = aa11 * inv_det_a
            ai11 = aa00 * inv_det_a
            ai01 = -aa01 * inv_det_a
            inv_det_A = 1.0 / detA
            Ai00 = AA11 * inv_det_A
            Ai11 = AA00 * inv_det_A
            Ai01 = -AA01 * inv_det_A
            J = np.sqrt(deta / detA)

            # --- second derivatives and curvatures ----------------------------
            for c in range(3):
                for k in range(3):
                    h[c, k] = 0.0
                    H[c, k] = 0.0
            for a in range(ne):
                for c in range(3):
                    dd = d2N[e, q, a, c]
                    for k in range(3):
                        h[c, k] += dd * xe[a, k]
                        H[c, k] += dd * Xe[a, k]
            bb0 = h[0, 0] * nv[0] + h[0, 1] * nv[1] + h[0, 2] * nv[2]
            bb1 = h[1, 0] * nv[0] + h[1, 1] * nv[1] + h[1, 2] * nv[2]
            bb2 = h[2, 0] * nv[0] + h[2, 1] * nv[1] + h[2, 2] * nv[2]
            BB0 = H[0, 0] * Nv[0] + H[0, 1] * Nv[1] + H[0, 2] * Nv[2]
            BB1 = H[1, 0] * Nv[0] + H[1, 1] * Nv[1] + H[1, 2] * Nv[2]
            BB2 = H[2, 0] * Nv[0] + H[2, 1] * Nv[1] + H[2, 2] * Nv[2]

            # contravariant base vectors and Christoffel symbols (current)
            for k in range(3):
                ag[0, k] = ai00 * a0[k] + ai01 * a1[k]
                ag[1, k] = ai01 * a0[k] + ai11 * a1[k]
            for c in range(3):
                g1[c, 0] = h[c, 0] * a0[0] + h[c, 1] * a0[1] + h[c, 2] * a0[2]
                g1[c, 1] = h[c, 0] * a1[0] + h[c, 1] * a1[1] + h[c, 2] * a1[2]
                gamma[0, c] = h[c, 0] * ag[0, 0] + h[c, 1] * ag[0, 1] + h[c, 2] * ag[0, 2]
                gamma[1, c] = h[c, 0] * ag[1, 0] + h[c, 1] * ag[1, 1] + h[c, 2] * ag[1, 2]
            for a in range(ne):
                for c in range(3):
                    psi[a, c] = (d2N[e, q, a, c]
                                 - gamma[0, c] * dN[e, q, a, 0]
                                 - gamma[1, c] * dN[e, q, a, 1])

            # raised current curvature b^ab = a_inv b a_inv
            bu00 = (ai00 * (bb0 * ai00 + bb2 * ai01)
                    + ai01 * (bb2 * ai00 + bb1 * ai01))
            bu01 = (ai00 * (bb0 * ai01 + bb2 * ai11)
                    + ai01 * (bb2 * ai01 + bb1 * ai11))
            bu11 = (ai01 * (bb0 * ai01 + bb2 * ai11)
                    + ai11 * (bb2 * ai01 + bb1 * ai11))

            # --- material parameters at the point ------------------------------
            q1 = 0.0
            q2 = 0.0
            for m in range(4):
                nb = Nbar[e, q, m]
                q1 += nb * p1_nodal[mat_conn[e, m]]
                q2 += nb * p2_nodal[mat_conn[e, m]]

            # --- stresses and parameter sensitivities --------------------------
            # tau (t..), M0 (m..), dtau/dq per kind (s1t.., s2t..), dM0/dq (s1m.., s2m..)
            if law_id == 0:
                mu = q1
                cb = q2
                Jsq = J * J
                s1t00 = Ai00 - ai00 / Jsq
                s1t01 = Ai01 - ai01 / Jsq
                s1t11 = Ai11 - ai11 / Jsq
                t00 = mu * s1t00
                t01 = mu * s1t01
                t11 = mu * s1t11
                s2m00 = J * bu00
                s2m01 = J * bu01
                s2m11 = J * bu11
                m00 = cb * s2m00
                m01 = cb * s2m01
                m11 = cb * s2m11
                s1m00 = 0.0
                s1m01 = 0.0
                s1m11 = 0.0
                s2t00 = 0.0
                s2t01 = 0.0
                s2t11 = 0.0
                E = 0.0
                T = 0.0
                ee0 = ee1 = ee2 = 0.0
                kk0 = kk1 = kk2 = 0.0
                Ie00 = Ie01 = Ie11 = 0.0
                Ik00 = Ik01 = Ik11 = 0.0
            else:
                E = q1
                T = q2
                ee0 = 0.5 * (aa00 - AA00)
                ee1 = 0.5 * (aa11 - AA11)
                ee2 = 0.5 * (aa01 - AA01)
                kk0 = bb0 - BB0
                kk1 = bb1 - BB1
                kk2 = bb2 - BB2
                # I4 : X = A_inv tr(A_inv X) + A_inv X A_inv  (X symmetric)
                trAe = Ai00 * ee0 + 2.0 * Ai01 * ee2 + Ai11 * ee1
                Ie00, Ie01, Ie11 = _sym_sandwich(Ai00, Ai01, Ai11, ee0, ee2, ee1)
                Ie00 += Ai00 * trAe
                Ie01 += Ai01 * trAe
                Ie11 += Ai11 * trAe
                trAk = Ai00 * kk0 + 2.0 * Ai01 * kk2 + Ai11 * kk1
                Ik00, Ik01, Ik11 = _sym_sandwich(Ai00, Ai01, Ai11, kk0, kk2, kk1)
                Ik00 += Ai00 * trAk
                Ik01 += Ai01 * trAk
                Ik11 += Ai11 * trAk

                cET = 2.0 * E * T / 3.0
                t00 = cET * Ie00
                t01 = cET * Ie01
                t11 = cET * Ie11
                fb = cET * T * T / 12.0
                m00 = fb * Ik00
                m01 = fb * Ik01
                m11 = fb * Ik11
                s1t00 = (2.0 * T / 3.0) * Ie00
                s1t01 = (2.0 * T / 3.0) * Ie01
                s1t11 = (2.0 * T / 3.0) * Ie11
                s1m00 = (T ** 3 / 18.0) * Ik00
                s1m01 = (T ** 3 / 18.0) * Ik01
                s1m11 = (T ** 3 / 18.0) * Ik11
                s2t00 = (2.0 * E / 3.0) * Ie00
                s2t01 = (2.0 * E / 3.0) * Ie01
                s2t11 = (2.0 * E / 3.0) * Ie11
                s2m00 = (E * T * T / 6.0) * Ik00
                s2m01 = (E * T * T / 6.0) * Ik01
                s2m11 = (E * T * T / 6.0) * Ik11
                mu = 0.0
                cb = 0.0

            w = wq[e, q] * np.sqrt(detA)

            # --- force and sensitivity rows -----------------------------------
            for a in range(ne):
                dn0 = dN[e, q, a, 0]
                dn1 = dN[e, q, a, 1]
                mp = m00 * psi[a, 0] + m11 * psi[a, 1] + 2.0 * m01 * psi[a, 2]
                Mpsi[a] = mp
                s1mp = s1m00 * psi[a, 0] + s1m11 * psi[a, 1] + 2.0 * s1m01 * psi[a, 2]
                s2mp = s2m00 * psi[a, 0] + s2m11 * psi[a, 1] + 2.0 * s2m01 * psi[a, 2]
                for i in range(3):
                    ft = (dn0 * (t00 * a0[i] + t01 * a1[i])
                          + dn1 * (t01 * a0[i] + t11 * a1[i]))
                    fm = mp * nv[i]
                    f_out[3 * conn[e, a] + i] += w * (ft + fm)
                    if want_S:
                        r1 = (dn0 * (s1t00 * a0[i] + s1t01 * a1[i])
                              + dn1 * (s1t01 * a0[i] + s1t11 * a1[i])
                              + s1mp * nv[i])
                        r2 = (dn0 * (s2t00 * a0[i] + s2t01 * a1[i])
                              + dn1 * (s2t01 * a0[i] + s2t11 * a1[i])
                              + s2mp * nv[i])
                        for m in range(4):
                            nb = w * Nbar[e, q, m]
                            S1_blocks[e, 3 * a + i, m] += r1 * nb
                            S2_blocks[e, 3 * a + i, m] += r2 * nb

            if not want_K:
                continue

            # --- tangent: loop over perturbed node/direction -------------------
            for bnode in range(ne):
                dJ0 = dN[e, q, bnode, 0]
                dJ1 = dN[e, q, bnode, 1]
                for j in range(3):
                    for k in range(3):
                        ej[k] = 0.0
                    ej[j] = 1.0
                    # metric increment
                    da00 = 2.0 * dJ0 * a0[j]
                    da11 = 2.0 * dJ1 * a1[j]
                    da01 = dJ0 * a1[j] + dJ1 * a0[j]
                    # normal increment
                    dcr[0] = dJ0 * (ej[1] * a1[2] - ej[2] * a1[1]) - dJ1 * (ej[1] * a0[2] - ej[2] * a0[1])
                    dcr[1] = dJ0 * (ej[2] * a1[0] - ej[0] * a1[2]) - dJ1 * (ej[2] * a0[0] - ej[0] * a0[2])
                    dcr[2] = dJ0 * (ej[0] * a1[1] - ej[1] * a1[0]) - dJ1 * (ej[0] * a0[1] - ej[1] * a0[0])
                    ndot = nv[0] * dcr[0] + nv[1] * dcr[1] + nv[2] * dcr[2]
                    for k in range(3):
                        dnv[k] = (dcr[k] - nv[k] * ndot) / nrma
                    # curvature increment
                    db0 = d2N[e, q, bnode, 0] * nv[j] + (h[0, 0] * dnv[0] + h[0, 1] * dnv[1] + h[0, 2] * dnv[2])
                    db1 = d2N[e, q, bnode, 1] * nv[j] + (h[1, 0] * dnv[0] + h[1, 1] * dnv[1] + h[1, 2] * dnv[2])
                    db2 = d2N[e, q, bnode, 2] * nv[j] + (h[2, 0] * dnv[0] + h[2, 1] * dnv[1] + h[2, 2] * dnv[2])

                    # M2 = a_inv da a_inv, trM = tr(a_inv da)
                    M200, M201, M211 = _sym_sandwich(ai00, ai01, ai11, da00, da01, da11)
                    trM = ai00 * da00 + 2.0 * ai01 * da01 + ai11 * da11

                    if law_id == 0:
                        f1 = mu / (J * J)
                        dt00 = f1 * (M200 + ai00 * trM)
                        dt01 = f1 * (M201 + ai01 * trM)
                        dt11 = f1 * (M211 + ai11 * trM)
                        # P = a_inv da (not symmetric)
                        P00 = ai00 * da00 + ai01 * da01
                        P01 = ai00 * da01 + ai01 * da11
                        P10 = ai01 * da00 + ai11 * da01
                        P11 = ai01 * da01 + ai11 * da11
                        # Q = P b_up + (P b_up)^T
                        Q00 = 2.0 * (P00 * bu00 + P01 * bu01)
                        Q11 = 2.0 * (P10 * bu01 + P11 * bu11)
                        Q01 = (P00 * bu01 + P01 * bu11) + (P10 * bu00 + P11 * bu01)
                        dbu00, dbu01, dbu11 = _sym_sandwich(ai00, ai01, ai11, db0, db2, db1)
                        dm00 = cb * (0.5 * J * trM * bu00 + J * (dbu00 - Q00))
                        dm01 = cb * (0.5 * J * trM * bu01 + J * (dbu01 - Q01))
                        dm11 = cb * (0.5 * J * trM * bu11 + J * (dbu11 - Q11))
                    else:
                        # dtau = 0.5 c4 : da ; dM0 = (T^2/12) c4 : db
                        trA = Ai00 * da00 + 2.0 * Ai01 * da01 + Ai11 * da11
                        W00, W01, W11 = _sym_sandwich(Ai00, Ai01, Ai11, da00, da01, da11)
                        cET = 2.0 * E * T / 3.0
                        dt00 = 0.5 * cET * (Ai00 * trA + W00)
                        dt01 = 0.5 * cET * (Ai01 * trA + W01)
                        dt11 = 0.5 * cET * (Ai11 * trA + W11)
                        trB = Ai00 * db0 + 2.0 * Ai01 * db2 + Ai11 * db1
                        V00, V01, V11 = _sym_sandwich(Ai00, Ai01, Ai11, db0, db2, db1)
                        fb = cET * T * T / 12.0
                        dm00 = fb * (Ai00 * trB + V00)
                        dm01 = fb * (Ai01 * trB + V01)
                        dm11 = fb * (Ai11 * trB + V11)

                    # Christoffel increment
                    for c in range(3):
                        hj = h[c, j]
                        dG[0, c] = (d2N[e, q, bnode, c] * ag[0, j]
                                    - (M200 * g1[c, 0] + M201 * g1[c, 1])
                                    + (ai00 * dJ0 + ai01 * dJ1) * hj)
                        dG[1, c] = (d2N[e, q, bnode, c] * ag[1, j]
                                    - (M201 * g1[c, 0] + M211 * g1[c, 1])
                                    + (ai01 * dJ0 + ai11 * dJ1) * hj)

                    col = 3 * bnode + j
                    for a in range(ne):
                        dn0 = dN[e, q, a, 0]
                        dn1 = dN[e, q, a, 1]
                        dpsi0 = -(dG[0, 0] * dn0 + dG[1, 0] * dn1)
                        dpsi1 = -(dG[0, 1] * dn0 + dG[1, 1] * dn1)
                        dpsi2 = -(dG[0, 2] * dn0 + dG[1, 2] * dn1)
                        bend = (dm00 * psi[a, 0] + dm11 * psi[a, 1] + 2.0 * dm01 * psi[a, 2]
                                + m00 * dpsi0 + m11 * dpsi1 + 2.0 * m01 * dpsi2)
                        mem2 = (t00 * dn0 * dJ0 + t11 * dn1 * dJ1
                                + t01 * (dn0 * dJ1 + dn1 * dJ0))
                        for i in range(3):
                            val = (dn0 * (dt00 * a0[i] + dt01 * a1[i])
                                   + dn1 * (dt01 * a0[i] + dt11 * a1[i])
                                   + bend * nv[i] + Mpsi[a] * dnv[i])
                            if i == j:
                                val += mem2
                            K_blocks[e, 3 * a + i, col] += w * val
    return


def _sym_sandwich_impl(s00, s01, s11, x00, x01, x11):
    """R = S X S for symmetric 2x2 S (s..) and X (x..); returns (R00, R01, R11)."""
    y00 = s00 * x00 + s01 * x01
    y01 = s00 * x01 + s01 * x11
    y10 = s01 * x00 + s11 * x01
    y11 = s01 * x01 + s11 * x11
    r00 = y00 * s00 + y01 * s01
    r01 = y00 * s01 + y01 * s11
    r11 = y10 * s01 + y11 * s11
    return r00, r01, r11


def _pressure_impl(N, dN, wq, conn, xc, p, want_K, f_out, K_blocks):
    """Follower pressure: f[I,i] = sum wq p N_I (a0 x a1)[i], plus its tangent."""
    nel, nqp, ne = N.shape
    xe = np.empty((ne, 3))
    a0 = np.empty(3)
    a1 = np.empty(3)
    cra = np.empty(3)
    ej = np.empty(3)
    dcr = np.empty(3)
    for e in range(nel):
        for a in range(ne):
            g = conn[e, a]
            for k in range(3):
                xe[a, k] = xc[g, k]
        for q in range(nqp):
            for k in range(3):
                a0[k] = 0.0
                a1[k] = 0.0
            for a in range(ne):
                d0 = dN[e, q, a, 0]
                d1 = dN[e, q, a, 1]
                for k in range(3):
                    a0[k] += d0 * xe[a, k]
                    a1[k] += d1 * xe[a, k]
            cra[0] = a0[1] * a1[2] - a0[2] * a1[1]
            cra[1] = a0[2] * a1[0] - a0[0] * a1[2]
            cra[2] = a0[0] * a1[1] - a0[1] * a1[0]
            w = wq[e, q] * p
            for a in range(ne):
                nb = w * N[e, q, a]
                for i in range(3):
                    f_out[3 * conn[e, a] + i] += nb * cra[i]
            if not want_K:
                continue
            for bnode in range(ne):
                dJ0 = dN[e, q, bnode, 0]
                dJ1 = dN[e, q, bnode, 1]
                for j in range(3):
                    for k in range(3):
                        ej[k] = 0.0
                    ej[j] = 1.0
                    dcr[0] = dJ0 * (ej[1] * a1[2] - ej[2] * a1[1]) - dJ1 * (ej[1] * a0[2] - ej[2] * a0[1])
                    dcr[1] = dJ0 * (ej[2] * a1[0] - ej[0] * a1[2]) - dJ1 * (ej[2] * a0[0] - ej[0] * a0[2])
                    dcr[2] = dJ0 * (ej[0] * a1[1] - ej[1] * a1[0]) - dJ1 * (ej[0] * a0[1] - ej[1] * a0[0])
                    col = 3 * bnode + j
                    for a in range(ne):
                        nb = w * N[e, q, a]
                        for i in range(3):
                            K_blocks[e, 3 * a + i, col] += nb * dcr[i]
    return


_sym_sandwich = maybe_jit(_sym_sandwich_impl)
internal_forces_kernel = maybe_jit(_internal_forces_impl)
pressure_kernel = maybe_jit(_pressure_impl)
