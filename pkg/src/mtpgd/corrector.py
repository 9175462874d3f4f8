"""Forecast-based prediction of the plastic strain and its sparse correction.

The predictor keeps the spatial and microtime modes of the training
decomposition and replaces the macrotime modes by their forecasts. The
corrector integrates the constitutive law at a few reference elements,
updates the macro modes by a Galerkin projection on that sampled set and
enriches the representation with new triads fitted to what remains.

Sign convention: the sampled error is ``e = truth - predictor`` so that the
update solves ``a dPsi(T) = b(T)`` at every macro node.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError
from .mesh import POINTS_PER_ELEMENT
from .plasticity import stacked_rows
from .separated import SeparatedField, rank_one_als, reshape_time


class CorrectorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReferenceSet:
    """Reference elements and the quadrature points/snapshot rows they cover."""

    elements: np.ndarray
    points: np.ndarray
    n_points: int

    @property
    def rows(self):
        """Component-major snapshot rows of the reference points."""
        return stacked_rows(self.points, self.n_points)

    @property
    def size(self):
        return len(self.elements)


def select_reference_points(state, count, von_mises=None):
    """Pick the ``count`` elements with the largest accumulated plastic strain.

    Elements are ranked by their maximum ``eps_bar`` over quadrature points;
    ties go to the lowest element index. When no point has yielded the
    ranking falls back to ``von_mises`` (per point) with a warning.
    """
    eb = np.asarray(state.eps_bar, dtype=float)
    n_elem = len(eb) // POINTS_PER_ELEMENT
    count = int(count)
    if count < 1 or count >= n_elem:
        raise ArgumentError(f"reference count must satisfy 1 <= J < {n_elem}, got {count}")
    score = eb.reshape(n_elem, POINTS_PER_ELEMENT).max(axis=1)
    if not np.any(score > 0):
        if von_mises is None:
            warnings.warn("no plastic strain: selecting the first elements", CorrectorWarning, stacklevel=2)
        else:
            warnings.warn("no plastic strain: ranking by von Mises stress", CorrectorWarning, stacklevel=2)
            score = np.asarray(von_mises, dtype=float).reshape(n_elem, POINTS_PER_ELEMENT).max(axis=1)
    idx = np.arange(n_elem)
    order = np.lexsort((idx, -score))
    elements = np.sort(order[:count])
    points = (POINTS_PER_ELEMENT * elements[:, None] + np.arange(POINTS_PER_ELEMENT)).ravel()
    return ReferenceSet(elements, points, len(eb))


def predict_nonlinear(base, models, horizon):
    """Predictor over the forecast window.

    Spatial and micro modes of ``base`` are reused; each macro mode is replaced
    by the forecast of its fitted model over ``horizon`` cycles.
    """
    from .hodmd import hodmd_forecast

    horizon = int(horizon)
    if horizon <= 0:
        raise ArgumentError("forecast horizon must be positive")
    if len(models) != base.rank:
        raise ArgumentError(f"expected {base.rank} models, got {len(models)}")
    macro = np.array([hodmd_forecast(m, horizon) for m in models]).reshape(base.rank, horizon)
    return SeparatedField(base.spatial, base.micro, macro)


@dataclass
class GalerkinSystem:
    """Per-macro-node normal equations of the macro-mode update.

    Attributes
    ----------
    a : (m, m) ndarray
        ``(int_{Omega_r} Psi^x_k Psi^x_l dx) (int Psi^tau_k Psi^tau_l dtau)``.
    b : (m, N_T) ndarray
        ``int int Psi^x_k e Psi^tau_k dx dtau`` at every macro node.
    """

    a: np.ndarray
    b: np.ndarray
    condition: float = 1.0


def _sampled(field_or_dense, rows, grid):
    if isinstance(field_or_dense, SeparatedField):
        return field_or_dense.restrict(rows).tensor()
    return reshape_time(np.asarray(field_or_dense, dtype=float), grid)


def build_galerkin_system(base, rows, weights, truth, predictor, grid):
    """Assemble ``a`` and ``b`` on the sampled domain.

    Parameters
    ----------
    base : SeparatedField
        Training decomposition (spatial and micro modes are used).
    rows : array_like of int
        Snapshot rows of the reference points.
    weights : (len(rows),) array_like
        Spatial quadrature weights of those rows.
    truth : (len(rows), N_t) array_like
        Sparse constitutive integration over the forecast window.
    predictor : SeparatedField or (len(rows), N_t) array_like
        Prediction over the forecast window (full field or sampled rows).
    grid : TimeGrid
        Grid of the forecast window.
    """
    rows = np.asarray(rows, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (len(rows), grid.n_total):
        raise ShapeError(f"truth must have shape ({len(rows)}, {grid.n_total}), got {truth.shape}")
    X = base.spatial[:, rows]  # (m, J)
    A = base.micro
    dt = grid.dt_micro
    a = ((X * w) @ X.T) * ((A @ A.T) * dt)
    if isinstance(predictor, SeparatedField) and predictor.n_space != len(rows):
        pred = predictor.restrict(rows).tensor()
    else:
        pred = _sampled(predictor, np.arange(len(rows)), grid)
    err = reshape_time(truth, grid) - pred
    b = np.einsum("kr,r,rij,ki->kj", X, w, err, A) * dt
    cond = np.linalg.cond(a) if a.size else 1.0
    return GalerkinSystem(a, b, float(cond))


def correct_update(system, cond_limit=1e12):
    """Macro-mode corrections solving ``a dPsi(T_J) = b(T_J)`` at every node.

    Piecewise-linear macro elements with nodal quadrature make the weighted
    residual statement decouple node by node. A singular ``a`` falls back to
    the minimum-norm least-squares solution with a warning.
    """
    a, b = system.a, system.b
    if a.size == 0:
        return np.zeros_like(b)
    if not np.isfinite(system.condition) or system.condition > cond_limit:
        warnings.warn(
            f"Galerkin matrix is ill-conditioned (cond={system.condition:.2e}); using lstsq",
            CorrectorWarning,
            stacklevel=2,
        )
        return np.linalg.lstsq(a, b, rcond=None)[0]
    return np.linalg.solve(a, b)


@dataclass
class EnrichmentResult:
    field: SeparatedField
    history: list
    stalled: bool = False


def correct_enrich(residual, weights, grid, tol=1e-3, max_extra_rank=10, reference_norm=None,
                   max_sweeps=50, sweep_tol=1e-8):
    """Greedy triads fitted to the post-update residual on the sampled set.

    Parameters
    ----------
    residual : (J_rows, N_t) array_like
        ``truth - updated predictor`` at the reference rows.
    weights : (J_rows,) array_like
    tol : float
        Stop once the residual norm falls below ``tol * reference_norm``
        (``reference_norm`` defaults to the initial residual norm).

    Returns
    -------
    EnrichmentResult
        Triads with spatial modes on the reference rows only.
    """
    R = reshape_time(np.asarray(residual, dtype=float), grid).copy()
    w = np.asarray(weights, dtype=float)
    n = R.shape[0]
    norm0 = np.sqrt(np.einsum("r,rij,rij->", w, R, R))
    ref = norm0 if reference_norm is None else float(reference_norm)
    xs, as_, bs, hist = [], [], [], []
    stalled = False
    res = norm0
    while ref > 0 and res > tol * ref and len(xs) < max_extra_rank:
        x, a, b, _ = rank_one_als(R, w, max_sweeps, sweep_tol)
        R_new = R - np.einsum("r,i,j->rij", x, a, b)
        res_new = np.sqrt(np.einsum("r,rij,rij->", w, R_new, R_new))
        if not res_new < res:
            stalled = True
            break
        xs.append(x)
        as_.append(a)
        bs.append(b)
        R, res = R_new, res_new
        hist.append(res / ref)
    if not xs:
        return EnrichmentResult(SeparatedField.empty(n, grid.n_micro, grid.n_macro), hist, stalled)
    return EnrichmentResult(SeparatedField(np.array(xs), np.array(as_), np.array(bs)), hist, stalled)


def extend_spatial(field_r, rows, n_space, basis=None):
    """Extend triads defined on ``rows`` to the full spatial layout.

    Without ``basis`` the modes are zero outside ``rows``. With ``basis``
    (``(p, n_space)`` training spatial modes) each mode is replaced by its
    least-squares fit in the span of the basis restricted to ``rows``
    (gappy reconstruction), keeping the sampled values where they are known.
    """
    rows = np.asarray(rows, dtype=np.int64)
    S = np.zeros((field_r.rank, n_space))
    if basis is None or field_r.rank == 0:
        S[:, rows] = field_r.spatial
    else:
        Br = np.asarray(basis)[:, rows]
        coef, *_ = np.linalg.lstsq(Br.T, field_r.spatial.T, rcond=None)
        S = (np.asarray(basis).T @ coef).T
        S[:, rows] = field_r.spatial
    return SeparatedField(S, field_r.micro, field_r.macro)


@dataclass
class PredictionBundle:
    """Predictor, macro corrections and enrichment over the forecast window."""

    predictor: SeparatedField
    corrections: np.ndarray
    enrichment: SeparatedField
    reference: ReferenceSet
    system: GalerkinSystem = field(default=None, repr=False)
    enrichment_history: list = field(default_factory=list)

    @property
    def rank(self):
        return self.predictor.rank

    @property
    def total_rank(self):
        return self.predictor.rank + self.enrichment.rank

    def updated(self):
        p = self.predictor
        return SeparatedField(p.spatial, p.micro, p.macro + self.corrections)

    def corrected(self):
        return self.updated() + self.enrichment


def correct_prediction(base, predictor, reference, weights, truth, grid, *, enrich_tol=1e-3,
                       max_extra_rank=10, basis_extension=False):
    """Full correction step: Galerkin update followed by enrichment.

    ``weights`` are the spatial quadrature weights of all snapshot rows.
    """
    rows = reference.rows
    w = np.asarray(weights)[rows]
    system = build_galerkin_system(base, rows, w, truth, predictor, grid)
    delta = correct_update(system)
    updated = SeparatedField(predictor.spatial, predictor.micro, predictor.macro + delta)
    residual = np.asarray(truth) - updated.restrict(rows).full()
    truth_norm = np.sqrt(np.einsum("r,rt,rt->", w, truth, truth))
    enr = correct_enrich(residual, w, grid, enrich_tol, max_extra_rank, reference_norm=truth_norm)
    basis = base.spatial if basis_extension else None
    enrichment = extend_spatial(enr.field, rows, base.n_space, basis)
    return PredictionBundle(predictor, delta, enrichment, reference, system, enr.history)


def galerkin_orthogonality(base, rows, weights, residual, grid):
    """Projections of a sampled residual on every test triad, relative.

    Returns ``max |int Psi^x_k Psi^tau_k phi_J(T) e| / max |b|`` where ``b``
    are the same projections of the reference ``residual`` supplied. Used to
    check the weighted-residual statement after an update.
    """
    X = base.spatial[:, rows]
    E = reshape_time(np.asarray(residual, dtype=float), grid)
    return np.einsum("kr,r,rij,ki->kj", X, np.asarray(weights), E, base.micro) * grid.dt_micro


def prediction_error(candidate, reference, weights=None, rows=None):
    """Relative weighted L2 error over a space-time domain.

    ``candidate`` and ``reference`` are :class:`SeparatedField` or dense
    ``(n_space, N_t)`` arrays; ``rows`` restricts the spatial domain (dense
    arrays with ``len(rows)`` rows are taken as already restricted).
    ``weights`` cover all rows. A zero reference returns ``inf``.
    """

    def dense(f):
        if isinstance(f, SeparatedField):
            return f.full() if rows is None else f.restrict(rows).full()
        f = np.asarray(f, dtype=float)
        # dense arrays may already be restricted to the sampled rows
        return f if rows is None or len(f) == len(rows) else f[rows]

    c, r = dense(candidate), dense(reference)
    if c.shape != r.shape:
        raise ShapeError(f"fields are not aligned: {c.shape} vs {r.shape}")
    w = np.ones(r.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if rows is not None and len(w) != len(rows):
        w = w[rows]
    den = np.sqrt(np.einsum("r,rt,rt->", w, r, r))
    if den == 0.0:
        return np.inf
    d = c - r
    return float(np.sqrt(np.einsum("r,rt,rt->", w, d, d)) / den)
