"""Independent reference implementations used only by the tests."""

import numpy as np

W4 = np.array([1.0, 1.0, 1.0, 2.0])  # (11, 22, 33, 12) contraction weights


def _q(s):
    return np.sqrt(1.5 * np.sum(W4 * s * s, axis=-1))


def explicit_plastic_paths(paths, material, n_sub=1000):
    """Forward-Euler J2 integration with yield-crossing detection.

    ``paths`` is ``(P, S, 3)`` total strain (eps11, eps22, gamma12) at the end
    of each step; every step is split into ``n_sub`` equal substeps. Returns
    the effective plastic strain ``(P, S)`` after each step.
    """
    mu = material.shear_modulus
    H = material.hardening_modulus
    sy0 = material.yield_stress
    P, S, _ = paths.shape
    s = np.zeros((P, 4))
    ebar = np.zeros(P)
    prev = np.zeros((P, 3))
    out = np.empty((P, S))
    for k in range(S):
        d = (paths[:, k] - prev) / n_sub
        prev = paths[:, k]
        tr = d[:, 0] + d[:, 1]
        de = np.column_stack([d[:, 0] - tr / 3, d[:, 1] - tr / 3, -tr / 3, d[:, 2] / 2])
        ds = 2 * mu * de
        for _ in range(n_sub):
            sy = sy0 + H * ebar
            q0 = _q(s)
            st = s + ds
            elastic = _q(st) <= sy
            inside = q0 < sy
            A = 1.5 * np.sum(W4 * ds * ds, axis=1)
            B = 3.0 * np.sum(W4 * s * ds, axis=1)
            C = q0**2 - sy**2
            disc = np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))
            a = np.where(inside & ~elastic, (-B + disc) / (2 * np.where(A > 0, A, 1.0)), 0.0)
            a = np.clip(a, 0.0, 1.0)
            sa = s + a[:, None] * ds
            n = 1.5 * sa / np.maximum(_q(sa), 1e-300)[:, None]
            rem = 1.0 - a
            ncd = 2 * mu * np.sum(W4 * n * de, axis=1) * rem
            dl = np.where(~elastic & (ncd > 0), ncd / (3 * mu + H), 0.0)
            s = np.where(elastic[:, None], st, sa + rem[:, None] * ds - 2 * mu * dl[:, None] * n)
            ebar = ebar + np.where(elastic, 0.0, dl)
        out[:, k] = ebar
    return out


def q4_square_stiffness(E, nu):
    """Closed-form plane-stress stiffness of the unit square bilinear element.

    Node order: (0,0), (1,0), (1,1), (0,1); dofs interleaved (u, v).
    """
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return E / (1 - nu**2) * k[idx]


def dense_quadrature_stiffness(nodes, elements, D):
    """Element-by-element 2x2 Gauss assembly into a dense matrix (loops only)."""
    g = 1 / np.sqrt(3)
    gp = [(-g, -g), (g, -g), (g, g), (-g, g)]
    n = 2 * len(nodes)
    K = np.zeros((n, n))
    for conn in elements:
        xe = nodes[conn]
        Ke = np.zeros((8, 8))
        for xi, eta in gp:
            dN = 0.25 * np.array([
                [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
                [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
            ])
            J = dN @ xe
            dX = np.linalg.solve(J, dN)
            B = np.zeros((3, 8))
            B[0, 0::2] = dX[0]
            B[1, 1::2] = dX[1]
            B[2, 0::2] = dX[1]
            B[2, 1::2] = dX[0]
            Ke += B.T @ D @ B * np.linalg.det(J)
        dofs = np.ravel([[2 * a, 2 * a + 1] for a in conn])
        K[np.ix_(dofs, dofs)] += Ke
    return K


def recurrence_series(coeffs, init, n):
    """``v[j + d] = sum_i coeffs[i] * v[j + i]`` stepped from ``init``."""
    v = list(init)
    d = len(coeffs)
    while len(v) < n:
        v.append(float(np.dot(coeffs, v[-d:])))
    return np.array(v[:n])
