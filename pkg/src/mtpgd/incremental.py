"""Step-by-step Newton solution of the elasto-plastic problem.

Used to produce the starting iterate of the whole-history fixed point: the
fixed point and this solver share the same discrete solution, and starting
from it the outer loop only has to confirm convergence.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ShapeError
from .fem import _geometry
from .plasticity import PlasticState, _constants, _return_map, consistent_tangent


DENSE_LIMIT = 3000  # dofs; above this the tangent is factorized as a sparse matrix


def solve_incremental(mesh, material, f_ext, fixed, values, initial_state=None, tol=1e-10, max_newton=25):
    """Displacement and plastic strain histories by per-step Newton iterations.

    Parameters
    ----------
    f_ext : (n_dofs, n_t) ndarray
        External nodal forces at every instant.
    fixed : (n_d,) array_like of int
        Prescribed dofs.
    values : (n_d, n_t) ndarray
        Prescribed values at every instant.
    tol : float
        Relative residual on the free equations.

    Returns
    -------
    u : (n_dofs, n_t) ndarray
    eps_p : (3 * n_points, n_t) ndarray
        Component-major plastic strain history.
    final_state : PlasticState
    newton_iterations : int
    """
    f_ext = np.asarray(f_ext, dtype=float)
    values = np.asarray(values, dtype=float)
    fixed = np.asarray(fixed, dtype=np.int64)
    n, nt = f_ext.shape
    if n != mesh.n_dofs or values.shape != (len(fixed), nt):
        raise ShapeError("load history does not match the mesh or the prescribed dofs")
    B, det, dofs = _geometry(mesh)
    ne = mesh.n_elements
    npts = mesh.n_points
    free = np.setdiff1d(np.arange(n), fixed)
    consts = _constants(material)
    state = PlasticState.zeros(npts) if initial_state is None else initial_state.copy()
    p, eb = state.eps_p, state.eps_bar
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    dense = n <= DENSE_LIMIT
    flat = rows * n + cols
    ff = np.ix_(free, free)
    Bt = np.ascontiguousarray(B.transpose(0, 1, 3, 2))
    w = det[:, :, None, None]

    def residual(u):
        eps = (B @ u[dofs][:, None, :, None]).reshape(npts, 3)
        p_new, eb_new, sig, _ = _return_map(eps, p, eb, *consts)
        fe = ((Bt @ sig[:, :3].reshape(ne, 4, 3, 1))[..., 0] * det[:, :, None]).sum(axis=1)
        fint = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n)
        return (fint - f_ext[:, j])[free], eps, p_new, eb_new, fint

    def newton(u):
        nonlocal total_iters
        r, eps, p_new, eb_new, fint = residual(u)
        scale = max(np.linalg.norm(fint), np.linalg.norm(f_ext[:, j]), 1e-300)
        rn = np.linalg.norm(r)
        for _ in range(max_newton):
            if rn <= tol * scale:
                return u, p_new, eb_new, rn / scale
            D = consistent_tangent(eps, p, eb, material).reshape(ne, 4, 3, 3)
            Ke = (Bt @ D @ B * w).sum(axis=1)
            if dense:
                Kt = np.bincount(flat, weights=Ke.ravel(), minlength=n * n).reshape(n, n)
                du = np.linalg.solve(Kt[ff], r)
            else:
                Kt = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsc()
                du = spla.spsolve(Kt[free][:, free], r)
            total_iters += 1
            # backtracking on the residual norm; the yield kink can make full steps cycle
            step = 1.0
            for _ in range(8):
                trial = u.copy()
                trial[free] -= step * du
                out = residual(trial)
                if np.linalg.norm(out[0]) < rn:
                    break
                step *= 0.5
            u = trial
            r, eps, p_new, eb_new, fint = out
            rn = np.linalg.norm(r)
        return None, None, None, rn / scale

    u = np.zeros(n)
    u_old = u.copy()
    u_hist = np.empty((n, nt))
    ep_hist = np.empty((3, npts, nt))
    total_iters = 0
    for j in range(nt):
        guesses = (2.0 * u - u_old, u.copy())
        u_old = u.copy()
        for guess in guesses:
            guess[fixed] = values[:, j]
            u_new, p_new, eb_new, rel = newton(guess)
            if u_new is not None:
                break
        else:
            raise ConvergenceError(f"Newton did not converge at step {j}", None, [float(rel)])
        u = u_new
        p, eb = p_new, eb_new
        u_hist[:, j] = u
        ep_hist[:, :, j] = p.T
    return u_hist, ep_hist.reshape(3 * npts, nt), PlasticState(p, eb), total_iters
