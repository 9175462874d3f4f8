"""Multi-time PGD solver for the quasi-static linear equilibrium problem.

The space-time operator is ``K (x) I_tau (x) I_T``: the stiffness acts in
space and time only parametrizes the loading. The solution is built greedily
as a sum of triads. Each rank-1 enrichment is a Galerkin fixed point
alternating between the three directions; afterwards all spatial, micro and
macro modes are refined together by a few energy-norm alternating sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConvergenceError, ShapeError
from .fem import ElasticSolver
from .separated import SeparatedField, separate_signal, solve_gram


@dataclass(frozen=True)
class SeparatedRhs:
    """External and plastic right-hand sides as separated triads.

    Both terms are :class:`SeparatedField` objects whose spatial modes are
    nodal force vectors (``n_dofs``). Either may be ``None``.
    """

    force: SeparatedField = None
    plastic: SeparatedField = None

    def combined(self, n_dofs, n_micro, n_macro):
        out = SeparatedField.empty(n_dofs, n_micro, n_macro)
        for term in (self.force, self.plastic):
            if term is not None and term.rank:
                if term.n_space != n_dofs:
                    raise ShapeError(f"rhs spatial modes have {term.n_space} rows, expected {n_dofs}")
                out = out + term
        return out


@dataclass(frozen=True)
class DirichletData:
    """Prescribed dofs with separable values ``sum_k v_k(dof) a_k(tau) b_k(T)``."""

    dofs: np.ndarray
    values: SeparatedField

    @classmethod
    def from_signal(cls, dofs, pattern, signal, grid, tol=1e-12):
        """Values ``pattern * g(t)`` with ``g`` sampled on ``grid``."""
        micro, macro = separate_signal(signal, grid, tol)
        pattern = np.asarray(pattern, dtype=float)
        spatial = np.repeat(pattern[None, :], len(micro), axis=0)
        return cls(np.asarray(dofs, dtype=np.int64), SeparatedField(spatial, micro, macro).normalized())


@dataclass
class PGDResult:
    field: SeparatedField
    residual: float
    history: list
    rhs_norm: float


def _rel_residual(F, U, KU, A, B, Fa, Fb, scale2):
    """Relative residual ``||F - K u|| / ||F||`` of separated triads.

    Gram products are cheap but lose accuracy through cancellation once the
    residual approaches the rounding level of the individual terms; the norm
    is then recomputed from the core tensor in orthonormal time bases.
    """
    X = np.vstack([F, -KU]) if len(KU) else F
    P = np.vstack([Fa, A]) if len(A) else Fa
    Q = np.vstack([Fb, B]) if len(B) else Fb
    terms = (X @ X.T) * (P @ P.T) * (Q @ Q.T)
    r2 = float(np.sum(terms))
    if r2 > 1e-10 * float(np.abs(terms).sum()):
        return np.sqrt(r2 / scale2)
    Cp = np.linalg.qr(P.T)[1].T  # P = Cp Qp with orthonormal rows in Qp
    Cq = np.linalg.qr(Q.T)[1].T
    core = X.T @ (Cp[:, :, None] * Cq[:, None, :]).reshape(len(X), -1)
    return float(np.linalg.norm(core) / np.sqrt(scale2))


def mtpgd_solve(
    K,
    rhs,
    grid,
    dirichlet,
    tol=1e-6,
    max_rank=50,
    max_sweeps=50,
    sweep_tol=1e-8,
    solver=None,
    update_sweeps=5,
):
    """Solve ``K u(x, tau, T) = rhs(x, tau, T)`` in separated form.

    Parameters
    ----------
    K : sparse matrix
        Full stiffness matrix.
    rhs : SeparatedRhs
    grid : TimeGrid
    dirichlet : DirichletData
        Prescribed dofs and their separated values; handled by lifting.
    tol : float
        Relative space-time residual target on the free equations.
    max_rank : int
        Maximum number of enrichment triads (the lifting is not counted).
    update_sweeps : int
        Alternating refinement sweeps over all modes after each enrichment;
        0 gives the plain greedy expansion.
    solver : ElasticSolver, optional
        Pre-factorized stiffness for the same prescribed dofs.

    Returns
    -------
    PGDResult
        Displacement field over all dofs, final relative residual and the
        per-rank residual history.

    Raises
    ------
    ConvergenceError
        If ``max_rank`` is reached or an enrichment stagnates; ``best`` holds
        the partial :class:`PGDResult`.
    """
    n = K.shape[0]
    fixed = np.asarray(dirichlet.dofs, dtype=np.int64)
    if solver is None:
        solver = ElasticSolver(K, fixed)
    elif not np.array_equal(solver.fixed, fixed):
        raise ArgumentError("solver was factorized for different prescribed dofs")
    free = solver.free
    nm, nM = grid.n_micro, grid.n_macro
    vals = dirichlet.values
    if vals.rank and (vals.n_micro != nm or vals.n_macro != nM or vals.n_space != len(fixed)):
        raise ShapeError("Dirichlet values do not match the grid or the prescribed dofs")
    total = rhs.combined(n, nm, nM)
    if total.rank and (total.n_micro != nm or total.n_macro != nM):
        raise ShapeError("rhs time modes do not match the grid")

    # free-dof right-hand side triads, the lifting contributes -K_fd v
    F = [total.spatial[:, free]] if total.rank else []
    Fa = [total.micro] if total.rank else []
    Fb = [total.macro] if total.rank else []
    if vals.rank:
        F.append(-(solver.Kfd @ vals.spatial.T).T)
        Fa.append(vals.micro)
        Fb.append(vals.macro)
    nf = len(free)
    F = np.vstack(F) if F else np.zeros((0, nf))
    Fa = np.vstack(Fa) if Fa else np.zeros((0, nm))
    Fb = np.vstack(Fb) if Fb else np.zeros((0, nM))

    lift = SeparatedField.empty(n, nm, nM)
    if vals.rank:
        S = np.zeros((vals.rank, n))
        S[:, fixed] = vals.spatial
        lift = SeparatedField(S, vals.micro, vals.macro)

    scale2 = float(np.sum((F @ F.T) * (Fa @ Fa.T) * (Fb @ Fb.T))) if len(F) else 0.0
    if scale2 == 0.0:
        return PGDResult(lift, 0.0, [], 0.0)

    G = solver.solve_free(F.T).T  # K_ff^-1 applied to every rhs spatial mode
    Kff = solver.Kff
    U = np.zeros((0, nf))
    KU = np.zeros((0, nf))
    A = np.zeros((0, nm))
    B = np.zeros((0, nM))
    history = []
    res = 1.0

    def result():
        S = np.zeros((len(U), n))
        S[:, free] = U
        return SeparatedField(S, A, B, history).normalized() + lift

    while res > tol:
        if len(U) >= max_rank:
            best = PGDResult(result(), res, history, np.sqrt(scale2))
            raise ConvergenceError(
                f"MT-PGD reached max_rank={max_rank} with residual {res:.3e}", best, history
            )
        # deterministic start: dominant time content of the current residual
        wa = Fa.T @ (Fa @ np.ones(nm))
        a = np.linspace(1.0, 2.0, nm) if not np.any(wa) else wa
        b = np.ones(nM)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        x = np.zeros(nf)
        for _ in range(max_sweeps):
            x_old = x
            # space: K x |a|^2 |b|^2 = sum_p F_p (F^a_p.a)(F^b_p.b) - sum_k K U_k (A_k.a)(B_k.b)
            ca, cb = Fa @ a, Fb @ b
            x = G.T @ (ca * cb)
            if len(U):
                x -= U.T @ ((A @ a) * (B @ b))
            x /= (a @ a) * (b @ b)
            Kx = Kff @ x
            xKx = x @ Kx
            if xKx <= 0.0:
                break
            # microtime
            fx = F @ x
            a = Fa.T @ (fx * (Fb @ b))
            if len(U):
                a -= A.T @ ((KU @ x) * (B @ b))
            a /= xKx * (b @ b)
            # macrotime
            b = Fb.T @ (fx * (Fa @ a))
            if len(U):
                b -= B.T @ ((KU @ x) * (A @ a))
            b /= xKx * (a @ a)
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            if na == 0.0 or nb == 0.0:
                break
            a, b = a / na, b / nb
            x = x * na * nb
            if np.linalg.norm(x - x_old) <= sweep_tol * np.linalg.norm(x):
                break
        # final spatial update for the converged time modes
        ca, cb = Fa @ a, Fb @ b
        x = G.T @ (ca * cb)
        if len(U):
            x -= U.T @ ((A @ a) * (B @ b))
        x /= (a @ a) * (b @ b)
        A = np.vstack([A, a])
        B = np.vstack([B, b])
        U = np.vstack([U, x])
        KU = np.vstack([KU, Kff @ x])
        new_res = _rel_residual(F, U, KU, A, B, Fa, Fb, scale2)
        for _ in range(update_sweeps):
            saved = (U, KU, A, B)
            # energy-norm Galerkin update of all modes of one kind at a time
            U = solve_gram((A @ A.T) * (B @ B.T), ((Fa @ A.T) * (Fb @ B.T)).T @ G)
            KU = (Kff @ U.T).T
            FU = F @ U.T
            A = solve_gram((U @ KU.T) * (B @ B.T), (FU * (Fb @ B.T)).T @ Fa)
            B = solve_gram((U @ KU.T) * (A @ A.T), (FU * (Fa @ A.T)).T @ Fb)
            na = np.linalg.norm(A, axis=1)
            nb = np.linalg.norm(B, axis=1)
            keep = (na > 0) & (nb > 0)
            U, KU = U[keep] * (na * nb)[keep, None], KU[keep] * (na * nb)[keep, None]
            A, B = A[keep] / na[keep, None], B[keep] / nb[keep, None]
            upd = _rel_residual(F, U, KU, A, B, Fa, Fb, scale2)
            if not upd < new_res:
                U, KU, A, B = saved
                break
            gain = upd < (1.0 - 1e-3) * new_res
            new_res = upd
            if not gain:
                break
        history.append(new_res)
        if not new_res < res:
            best = PGDResult(result(), new_res, history, np.sqrt(scale2))
            raise ConvergenceError(
                f"MT-PGD enrichment stagnated at rank {len(U)} (residual {new_res:.3e})", best, history
            )
        res = new_res
    return PGDResult(result(), res, history, np.sqrt(scale2))


def equilibrium_residual(K, u_full, rhs_full, fixed):
    """Relative residual of ``K u = rhs`` on free dofs for dense histories."""
    free = np.setdiff1d(np.arange(K.shape[0]), fixed)
    r = (K @ u_full)[free] - rhs_full[free]
    den = np.linalg.norm(rhs_full[free] - (K[free][:, fixed] @ u_full[fixed]))
    return float(np.linalg.norm(r) / den) if den > 0 else float(np.linalg.norm(r))
