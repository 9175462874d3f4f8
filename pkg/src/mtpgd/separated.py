"""Space x microtime x macrotime separated representations.

The global time index of instant ``(i, J)`` (microstep ``i`` of cycle ``J``)
is ``t = J * n_micro + i``. Micro and macro modes of a
:class:`SeparatedField` carry unit Euclidean norm; amplitudes live in the
spatial modes.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ConvergenceError, ShapeError


@dataclass(frozen=True)
class TimeGrid:
    """Two-scale time discretization.

    Parameters
    ----------
    n_micro : int
        Steps per cycle, N_tau.
    n_macro : int
        Number of cycles, N_T.
    cycle_duration : float
        Cycle period T_1 in seconds.
    first_cycle : int
        Index of the first cycle covered (0 for a run starting at t = 0).
    """

    n_micro: int
    n_macro: int
    cycle_duration: float = 1.0
    first_cycle: int = 0

    def __post_init__(self):
        if self.n_micro < 1 or self.n_macro < 1:
            raise ArgumentError("n_micro and n_macro must be positive")
        if not self.cycle_duration > 0:
            raise ArgumentError("cycle_duration must be positive")

    @property
    def n_total(self):
        return self.n_micro * self.n_macro

    @property
    def dt_micro(self):
        return self.cycle_duration / self.n_micro

    @property
    def dt_macro(self):
        return self.cycle_duration

    def times(self):
        """End-of-step instants ``t_j`` in seconds."""
        start = self.first_cycle * self.n_micro
        return (start + np.arange(1, self.n_total + 1)) * self.dt_micro

    def micro_times(self):
        return np.arange(1, self.n_micro + 1) * self.dt_micro

    def window(self, first_cycle, n_macro):
        """Sub-grid of ``n_macro`` cycles starting at absolute cycle ``first_cycle``."""
        return TimeGrid(self.n_micro, n_macro, self.cycle_duration, first_cycle)


def reshape_time(signal, grid):
    """Rearrange ``(..., N_t)`` samples into ``(..., N_tau, N_T)``."""
    signal = np.asarray(signal)
    if signal.shape[-1] != grid.n_total:
        raise ShapeError(f"signal length {signal.shape[-1]} != N_tau * N_T = {grid.n_total}")
    lead = signal.shape[:-1]
    return np.swapaxes(signal.reshape(lead + (grid.n_macro, grid.n_micro)), -1, -2)


def flatten_time(tensor):
    """Inverse of :func:`reshape_time`."""
    tensor = np.asarray(tensor)
    lead = tensor.shape[:-2]
    return np.swapaxes(tensor, -1, -2).reshape(lead + (-1,))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SeparatedField:
    """Rank-``m`` sum of spatial x micro x macro triads.

    Attributes
    ----------
    spatial : (m, n_space) ndarray
    micro : (m, n_micro) ndarray
    macro : (m, n_macro) ndarray
    residual_history : tuple of float
        Relative residual after each rank, when produced by a solver.
    """

    spatial: np.ndarray
    micro: np.ndarray
    macro: np.ndarray
    residual_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        s, a, b = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (self.spatial, self.micro, self.macro))
        if not (len(s) == len(a) == len(b)):
            raise ShapeError("mode lists must share the same rank")
        object.__setattr__(self, "spatial", _readonly(s))
        object.__setattr__(self, "micro", _readonly(a))
        object.__setattr__(self, "macro", _readonly(b))
        object.__setattr__(self, "residual_history", tuple(self.residual_history))

    @classmethod
    def empty(cls, n_space, n_micro, n_macro):
        return cls(np.zeros((0, n_space)), np.zeros((0, n_micro)), np.zeros((0, n_macro)))

    @classmethod
    def from_triads(cls, triads, n_space=None, n_micro=None, n_macro=None, normalize=True):
        triads = list(triads)
        if not triads:
            return cls.empty(n_space, n_micro, n_macro)
        f = cls(*(np.array([t[i] for t in triads]) for i in range(3)))
        return f.normalized() if normalize else f

    @property
    def rank(self):
        return self.spatial.shape[0]

    @property
    def n_space(self):
        return self.spatial.shape[1]

    @property
    def n_micro(self):
        return self.micro.shape[1]

    @property
    def n_macro(self):
        return self.macro.shape[1]

    def normalized(self):
        """Unit-norm time modes with the amplitude moved to the spatial modes."""
        na = np.linalg.norm(self.micro, axis=1)
        nb = np.linalg.norm(self.macro, axis=1)
        keep = (na > 0) & (nb > 0)
        na, nb = na[keep], nb[keep]
        return SeparatedField(
            self.spatial[keep] * (na * nb)[:, None],
            self.micro[keep] / na[:, None],
            self.macro[keep] / nb[:, None],
            self.residual_history,
        )

    def tensor(self):
        """Dense ``(n_space, N_tau, N_T)`` reconstruction."""
        return np.einsum("ks,ki,kj->sij", self.spatial, self.micro, self.macro)

    def full(self):
        """Dense ``(n_space, N_t)`` reconstruction in global time order."""
        return flatten_time(self.tensor())

    def evaluate_at_points(self, points):
        return evaluate_at_points(self, points)

    def with_macro(self, macro):
        return SeparatedField(self.spatial, self.micro, macro)

    def restrict(self, rows):
        """Spatial restriction to the given rows."""
        return SeparatedField(self.spatial[:, rows], self.micro, self.macro)

    def scaled(self, factor):
        return SeparatedField(self.spatial * factor, self.micro, self.macro)

    def __add__(self, other):
        if self.rank == 0:
            return other
        if other.rank == 0:
            return self
        return SeparatedField(
            np.vstack([self.spatial, other.spatial]),
            np.vstack([self.micro, other.micro]),
            np.vstack([self.macro, other.macro]),
        )

    def norm(self, weights=None):
        """Weighted Frobenius norm computed from Gram matrices."""
        return np.sqrt(max(_gram_norm2(self.spatial, self.micro, self.macro, weights), 0.0))


def _gram_norm2(X, A, B, weights=None):
    Xw = X if weights is None else X * weights
    return float(np.sum((Xw @ X.T) * (A @ A.T) * (B @ B.T)))


def evaluate_at_points(field, points):
    """Dense trajectories of a separated field at selected spatial rows.

    Returns an array of shape ``(len(points), N_t)``; the cost does not depend
    on the total number of spatial samples.
    """
    points = np.asarray(points, dtype=np.int64)
    if points.size and (points.min() < 0 or points.max() >= field.n_space):
        raise ArgumentError(f"point index out of range [0, {field.n_space})")
    S = field.spatial[:, points]  # (m, J)
    out = np.einsum("kp,ki,kj->pji", S, field.micro, field.macro)
    return out.reshape(len(points), -1)


def separate_signal(signal, grid, tol=1e-12):
    """SVD separation of a scalar time signal into micro x macro pairs.

    Returns ``(micro, macro)`` with singular values absorbed into ``micro``;
    pairs below ``tol`` relative to the largest singular value are dropped.
    """
    M = reshape_time(np.asarray(signal, dtype=float), grid)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, grid.n_micro)), np.zeros((0, grid.n_macro))
    r = int(np.sum(s > tol * s[0]))
    return (U[:, :r] * s[:r]).T, Vt[:r]


def _power_vector(M, n_iter=8):
    """Dominant left singular vector of ``M`` from a deterministic start."""
    v = np.linspace(1.0, 2.0, M.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(n_iter):
        w = M @ (M.T @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    return v


def rank_one_als(R, weights=None, max_sweeps=50, sweep_tol=1e-8, init=None):
    """Best rank-1 triad of a 3-way array by alternating least squares.

    Minimizes ``sum_r w_r sum_ij (R_rij - x_r a_i b_j)^2`` sweeping x, a, b in
    turn. Returns ``(x, a, b, converged)`` with unit-norm ``a`` and ``b``.
    """
    n, p, q = R.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if init is None:
        a = _power_vector(np.moveaxis(R, 1, 0).reshape(p, -1))
        b = _power_vector(np.moveaxis(R, 2, 0).reshape(q, -1))
    else:
        a, b = (np.asarray(v, dtype=float) for v in init)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    x = np.einsum("rij,i,j->r", R, a, b)
    converged = False
    for _ in range(max_sweeps):
        x_old, a_old, b_old = x, a, b
        x = np.einsum("rij,i,j->r", R, a, b) / ((a @ a) * (b @ b))
        xw = w * x
        xx = xw @ x
        if xx == 0.0:
            return np.zeros(n), a, b, True
        a = np.einsum("r,rij,j->i", xw, R, b) / (xx * (b @ b))
        na = np.linalg.norm(a)
        if na == 0.0:
            return np.zeros(n), a_old, b, True
        a /= na
        x = x * na
        xw = w * x
        xx = xw @ x
        b = np.einsum("r,rij,i->j", xw, R, a) / xx
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros(n), a, b_old, True
        b /= nb
        x = x * nb
        # change of the rank-1 term in the weighted norm
        new2 = (w * x) @ x
        old2 = (w * x_old) @ x_old * (a_old @ a_old) * (b_old @ b_old)
        cross = ((w * x) @ x_old) * (a @ a_old) * (b @ b_old)
        change = np.sqrt(max(new2 + old2 - 2 * cross, 0.0) / max(new2, 1e-300))
        if change < sweep_tol:
            converged = True
            break
    # finish with the optimal spatial factor for the final time factors
    x = np.einsum("rij,i,j->r", R, a, b)
    return x, a, b, converged


def solve_gram(M, R):
    """``M^-1 R`` for a small Gram system, least squares if singular."""
    try:
        return np.linalg.solve(M, R)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(M, R, rcond=None)[0]


def _refine(T, w, X, A, B, total, res, sweeps, min_gain=1e-3):
    """Weighted alternating least squares over all triads at once."""
    for _ in range(sweeps):
        Xn = solve_gram((A @ A.T) * (B @ B.T), np.einsum("rij,ki,kj->kr", T, A, B))
        Xw = Xn * w
        An = solve_gram((Xw @ Xn.T) * (B @ B.T), np.einsum("kr,rij,kj->ki", Xw, T, B))
        Bn = solve_gram((Xw @ Xn.T) * (An @ An.T), np.einsum("kr,rij,ki->kj", Xw, T, An))
        na, nb = np.linalg.norm(An, axis=1), np.linalg.norm(Bn, axis=1)
        if np.any(na == 0) or np.any(nb == 0):
            break
        Xn, An, Bn = Xn * (na * nb)[:, None], An / na[:, None], Bn / nb[:, None]
        R = T - np.einsum("kr,ki,kj->rij", Xn, An, Bn)
        new = np.sqrt(np.einsum("r,rij,rij->", w, R, R)) / total
        if not new < res:
            break
        gain = new < (1.0 - min_gain) * res
        X, A, B, res = Xn, An, Bn, new
        if not gain:
            break
    return X, A, B, res


def mtpgd_decompose(
    snapshot,
    grid,
    tol=1e-6,
    max_rank=50,
    weights=None,
    max_sweeps=50,
    sweep_tol=1e-8,
    update_sweeps=50,
):
    """Greedy multi-time PGD decomposition of a space-time snapshot.

    Parameters
    ----------
    snapshot : (n_space, N_t) array_like or HistorySnapshot
    grid : TimeGrid
    tol : float
        Target relative (weighted) Frobenius residual.
    max_rank : int
    weights : (n_space,) array_like, optional
        Spatial quadrature weights defining the norm.
    update_sweeps : int
        Joint alternating sweeps over all triads after each enrichment;
        0 keeps the plain greedy expansion.

    Returns
    -------
    SeparatedField
        ``residual_history[k]`` is the relative residual with ``k + 1`` modes.
        If ``max_rank`` is reached first the field is returned with a warning.

    Raises
    ------
    ConvergenceError
        If a new triad fails to reduce the residual; ``best`` holds the
        decomposition built so far.
    """
    data = getattr(snapshot, "data", snapshot)
    X = reshape_time(np.asarray(data, dtype=float), grid)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    total = np.sqrt(np.einsum("r,rij,rij->", w, X, X))
    field_ = SeparatedField.empty(n, grid.n_micro, grid.n_macro)
    if total == 0.0:
        return field_
    R = X.copy()
    xs, as_, bs, hist = [], [], [], []
    res = 1.0
    while res > tol and len(xs) < max_rank:
        x, a, b, _ = rank_one_als(R, w, max_sweeps, sweep_tol)
        R_new = R - np.einsum("r,i,j->rij", x, a, b)
        res_new = np.sqrt(np.einsum("r,rij,rij->", w, R_new, R_new)) / total
        if res_new >= res:
            best = SeparatedField(
                np.array(xs).reshape(-1, n),
                np.array(as_).reshape(-1, grid.n_micro),
                np.array(bs).reshape(-1, grid.n_macro),
                hist,
            )
            raise ConvergenceError(
                f"decomposition stagnated at rank {len(xs)} (residual {res:.3e})", best, hist
            )
        xs.append(x)
        as_.append(a)
        bs.append(b)
        R, res = R_new, res_new
        if update_sweeps and len(xs) > 1 and res > tol:
            Xk, Ak, Bk, res = _refine(X, w, np.array(xs), np.array(as_), np.array(bs), total, res, update_sweeps)
            xs, as_, bs = list(Xk), list(Ak), list(Bk)
            R = X - np.einsum("kr,ki,kj->rij", Xk, Ak, Bk)
        hist.append(res)
    if res > tol:
        warnings.warn(f"mtpgd_decompose reached max_rank={max_rank} with residual {res:.3e}", stacklevel=2)
    return SeparatedField(np.array(xs), np.array(as_), np.array(bs), hist)


def hosvd_decompose(snapshot, grid, tol=1e-10):
    """Truncated higher-order SVD, expanded into triads (small cases only).

    Each nonzero Tucker core entry ``g_abc`` becomes the triad
    ``(g_abc U1[:, a], U2[:, b], U3[:, c])``.
    """
    data = getattr(snapshot, "data", snapshot)
    X = reshape_time(np.asarray(data, dtype=float), grid)
    factors = []
    for mode in range(3):
        M = np.moveaxis(X, mode, 0).reshape(X.shape[mode], -1)
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        r = max(1, int(np.sum(s > tol * max(s[0], 1e-300))))
        factors.append(U[:, :r])
    U1, U2, U3 = factors
    G = np.einsum("rij,ra,ib,jc->abc", X, U1, U2, U3)
    idx = np.argwhere(np.abs(G) > tol * max(np.abs(G).max(), 1e-300))
    if idx.size == 0:
        return SeparatedField.empty(X.shape[0], grid.n_micro, grid.n_macro)
    return SeparatedField(
        G[tuple(idx.T)][:, None] * U1[:, idx[:, 0]].T, U2[:, idx[:, 1]].T, U3[:, idx[:, 2]].T
    )


def relative_error(field, snapshot, grid, weights=None):
    """Weighted relative Frobenius error of a field against a dense snapshot."""
    data = np.asarray(getattr(snapshot, "data", snapshot), dtype=float)
    diff = field.full() - data
    w = np.ones(data.shape[0]) if weights is None else np.asarray(weights)
    den = np.sqrt(np.einsum("r,rt,rt->", w, data, data))
    return float(np.sqrt(np.einsum("r,rt,rt->", w, diff, diff)) / den) if den > 0 else np.inf


def total_variation(modes):
    """Total variation of each unit-normalized mode (rows)."""
    modes = np.atleast_2d(modes)
    norms = np.linalg.norm(modes, axis=1, keepdims=True)
    return np.abs(np.diff(modes / np.where(norms > 0, norms, 1), axis=1)).sum(axis=1)


def export_modes(field, directory, prefix="modes", grid=None):
    """Write spatial, micro and macro modes as three CSV files.

    Columns are ``mode_1 ... mode_m``; time files lead with the sample time
    when ``grid`` is given, otherwise with the sample index.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = [f"mode_{k + 1}" for k in range(field.rank)]
    if grid is not None:
        micro_t, micro_head = grid.micro_times(), "tau [s]"
        macro_t = (grid.first_cycle + np.arange(1, grid.n_macro + 1)) * grid.cycle_duration
        macro_head = "T [s]"
    else:
        micro_t, micro_head = np.arange(field.n_micro), "index [-]"
        macro_t, macro_head = np.arange(field.n_macro), "index [-]"
    paths = {}
    for label, lead, head, modes in (
        ("spatial", np.arange(field.n_space), "row [-]", field.spatial),
        ("micro", micro_t, micro_head, field.micro),
        ("macro", macro_t, macro_head, field.macro),
    ):
        path = directory / f"{prefix}_{label}.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([head] + [f"{n} [-]" for n in names])
            for row in np.column_stack([lead, modes.T]):
                wr.writerow([repr(float(v)) for v in row])
        paths[label] = path
    return paths
