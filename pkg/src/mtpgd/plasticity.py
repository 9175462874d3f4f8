"""J2 plasticity with linear isotropic hardening: radial return and histories.

The plastic strain is stored per point as tensor components
``(eps11, eps22, eps12)``; ``eps33 = -(eps11 + eps22)`` follows from plastic
incompressibility. Total strains come in engineering Voigt form
``(eps11, eps22, gamma12)`` under plane strain.

Snapshots are component-major: row ``c * n_points + p`` holds component
``c`` at point ``p`` and column ``j`` holds time instant ``t_j``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

YIELD_TOL = 1e-8  # relative to the initial yield stress


@dataclass
class PlasticState:
    """Plastic strain and accumulated effective plastic strain per point."""

    eps_p: np.ndarray
    eps_bar: np.ndarray

    def __post_init__(self):
        self.eps_p = np.asarray(self.eps_p, dtype=float).reshape(-1, 3)
        self.eps_bar = np.asarray(self.eps_bar, dtype=float).reshape(-1)
        if len(self.eps_p) != len(self.eps_bar):
            raise ShapeError("eps_p and eps_bar must describe the same points")

    @classmethod
    def zeros(cls, n_points):
        return cls(np.zeros((n_points, 3)), np.zeros(n_points))

    @property
    def n_points(self):
        return len(self.eps_bar)

    def copy(self):
        return PlasticState(self.eps_p.copy(), self.eps_bar.copy())

    def subset(self, points):
        points = np.asarray(points, dtype=np.int64)
        return PlasticState(self.eps_p[points].copy(), self.eps_bar[points].copy())


@dataclass
class HistorySnapshot:
    """Plastic strain trajectories, one column per time instant.

    Attributes
    ----------
    data : (3 * n_points, n_t) ndarray
        Component-major plastic strain history.
    points : ndarray of int or None
        Global point indices of the rows; ``None`` means all points in order.
    evaluations : int
        Number of pointwise return-mapping evaluations spent.
    eps_bar : (n_points, n_t) ndarray or None
        Effective plastic strain history, when recorded.
    """

    data: np.ndarray
    points: np.ndarray = None
    evaluations: int = 0
    eps_bar: np.ndarray = field(default=None, repr=False)

    @property
    def n_points(self):
        return self.data.shape[0] // 3

    @property
    def n_times(self):
        return self.data.shape[1]

    def component(self, c):
        n = self.n_points
        return self.data[c * n : (c + 1) * n]

    def restrict(self, local_points):
        """Rows of a subset of this snapshot's points (local indices)."""
        local_points = np.asarray(local_points, dtype=np.int64)
        rows = stacked_rows(local_points, self.n_points)
        pts = local_points if self.points is None else self.points[local_points]
        eb = None if self.eps_bar is None else self.eps_bar[local_points]
        return HistorySnapshot(self.data[rows], pts, 0, eb)


def stacked_rows(points, n_points):
    """Row indices of the given points in a component-major layout."""
    points = np.asarray(points, dtype=np.int64)
    return (np.arange(3)[:, None] * n_points + points[None, :]).ravel()


class ReturnMapResult(NamedTuple):
    eps_p: np.ndarray
    eps_bar: np.ndarray
    sigma: np.ndarray


def _return_map(eps, eps_p, eps_bar, mu, bulk, sy0, H):
    """Vectorized backward-Euler radial return over points.

    Returns new plastic strain, effective plastic strain, stress
    ``(s11, s22, s12, s33)`` and the plastic multiplier.
    """
    p11, p22, p12 = eps_p[:, 0], eps_p[:, 1], eps_p[:, 2]
    tr = eps[:, 0] + eps[:, 1]
    third = tr / 3.0
    s11 = 2.0 * mu * (eps[:, 0] - p11 - third)
    s22 = 2.0 * mu * (eps[:, 1] - p22 - third)
    s33 = 2.0 * mu * (p11 + p22 - third)
    s12 = 2.0 * mu * (0.5 * eps[:, 2] - p12)
    q = np.sqrt(1.5 * (s11 * s11 + s22 * s22 + s33 * s33 + 2.0 * s12 * s12))
    f = q - (sy0 + H * eps_bar)
    plastic = f > 0.0
    dgamma = np.where(plastic, f / (3.0 * mu + H), 0.0)
    qs = np.where(plastic, q, 1.0)
    flow = 1.5 * dgamma / qs
    new_p = np.column_stack([p11 + flow * s11, p22 + flow * s22, p12 + flow * s12])
    shrink = 1.0 - 3.0 * mu * dgamma / qs
    pressure = bulk * tr
    sigma = np.column_stack(
        [shrink * s11 + pressure, shrink * s22 + pressure, shrink * s12, shrink * s33 + pressure]
    )
    return new_p, eps_bar + dgamma, sigma, dgamma


def consistent_tangent(eps, eps_p, eps_bar, material):
    """Algorithmic tangent ``d sigma / d eps`` of the radial return.

    Returns ``(n, 3, 3)`` matrices in engineering layout, mapping
    ``(eps11, eps22, gamma12)`` to ``(s11, s22, s12)``.
    """
    mu, bulk, sy0, H = _constants(material)
    eps = np.asarray(eps, dtype=float).reshape(-1, 3)
    p11, p22, p12 = eps_p[:, 0], eps_p[:, 1], eps_p[:, 2]
    third = (eps[:, 0] + eps[:, 1]) / 3.0
    s = np.column_stack(
        [eps[:, 0] - p11 - third, eps[:, 1] - p22 - third, p11 + p22 - third, 0.5 * eps[:, 2] - p12]
    ) * (2.0 * mu)
    norm = np.sqrt(s[:, 0] ** 2 + s[:, 1] ** 2 + s[:, 2] ** 2 + 2.0 * s[:, 3] ** 2)
    q = np.sqrt(1.5) * norm
    f = q - (sy0 + H * eps_bar)
    plastic = f > 0.0
    dgamma = np.where(plastic, f / (3.0 * mu + H), 0.0)
    qs = np.where(plastic, q, 1.0)
    beta = 1.0 - 3.0 * mu * dgamma / qs
    gbar = np.where(plastic, 3.0 * mu / (3.0 * mu + H) - (1.0 - beta), 0.0)
    n = s / np.where(norm > 0, norm, 1.0)[:, None]
    nv = n[:, [0, 1, 3]]  # pairs with (eps11, eps22, gamma12)
    dev = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, 0.0], [0.0, 0.0, 1.5]]) / 3.0
    vol = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    D = bulk * vol + 2.0 * mu * beta[:, None, None] * dev
    D -= 2.0 * mu * gbar[:, None, None] * np.einsum("pi,pj->pij", nv, nv)
    return D


def _constants(material):
    mu = material.shear_modulus
    bulk = material.lame_lambda + 2.0 * mu / 3.0
    return mu, bulk, material.yield_stress, material.hardening_modulus


def return_map_point(eps_trial, state, material):
    """Elastic predictor / radial return at a single point.

    Parameters
    ----------
    eps_trial : (3,) array_like
        Total strain ``(eps11, eps22, gamma12)`` at the end of the step.
    state : PlasticState
        One-point state at the start of the step.
    material : Material

    Returns
    -------
    ReturnMapResult
        ``eps_p`` (3,), ``eps_bar`` (float) and ``sigma`` (4,) ordered
        ``(s11, s22, s12, s33)``.
    """
    eps = np.asarray(eps_trial, dtype=float).reshape(1, 3)
    if state.n_points != 1:
        raise ShapeError("return_map_point expects a one-point state")
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(state.eps_p)) and np.isfinite(state.eps_bar[0])):
        raise NumericError("non-finite strain or state")
    p, eb, sig, _ = _return_map(eps, state.eps_p, state.eps_bar, *_constants(material))
    return ReturnMapResult(p[0], float(eb[0]), sig[0])


def von_mises(sigma):
    """Von Mises stress of ``(..., 4)`` stresses ordered ``(s11, s22, s12, s33)``."""
    s11, s22, s12, s33 = np.moveaxis(np.asarray(sigma), -1, 0)
    return np.sqrt(0.5 * ((s11 - s22) ** 2 + (s22 - s33) ** 2 + (s33 - s11) ** 2) + 3.0 * s12**2)


def _integrate(strain, state, material, record_eps_bar):
    if strain.ndim != 3 or strain.shape[1] != 3:
        raise ShapeError(f"strain history must be (n_points, 3, n_t), got {strain.shape}")
    if strain.shape[0] != state.n_points:
        raise ShapeError(
            f"strain history has {strain.shape[0]} points, state has {state.n_points}"
        )
    n, _, nt = strain.shape
    consts = _constants(material)
    p, eb = state.eps_p.copy(), state.eps_bar.copy()
    out = np.empty((3, n, nt))
    ebh = np.empty((n, nt)) if record_eps_bar else None
    for j in range(nt):
        eps = strain[:, :, j]
        p, eb, _, _ = _return_map(eps, p, eb, *consts)
        out[:, :, j] = p.T
        if record_eps_bar:
            ebh[:, j] = eb
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(eb))):
        bad = np.argwhere(~np.isfinite(out)).min(axis=0)
        raise NumericError(f"non-finite plastic strain at point {bad[1]}, step {bad[2]}")
    return out.reshape(3 * n, nt), PlasticState(p, eb), ebh


def integrate_history(mesh, material, strain_history, initial_state=None, record_eps_bar=False):
    """Integrate the constitutive law at every point over a strain history.

    Parameters
    ----------
    strain_history : (n_points, 3, n_t) ndarray
        Total strain per point and instant, engineering layout.
    initial_state : PlasticState, optional
        State before the first instant; virgin material by default.

    Returns
    -------
    snapshot : HistorySnapshot
    final_state : PlasticState
    """
    strain = np.asarray(strain_history, dtype=float)
    if initial_state is None:
        initial_state = PlasticState.zeros(mesh.n_points)
    if strain.shape[0] != mesh.n_points:
        raise ShapeError(f"strain history has {strain.shape[0]} points, mesh has {mesh.n_points}")
    data, final, ebh = _integrate(strain, initial_state, material, record_eps_bar)
    return HistorySnapshot(data, None, strain.shape[0] * strain.shape[2], ebh), final


def integrate_history_sparse(
    mesh, material, strain_history_at_points, initial_state, points, record_eps_bar=False
):
    """Integrate the constitutive law only at the reference points.

    ``initial_state`` covers all mesh points (or is ``None``); it is restricted
    to ``points`` before integrating. Rows of the result are bit-identical to
    the same rows of :func:`integrate_history`.
    """
    points = np.asarray(points, dtype=np.int64)
    if points.size == 0:
        raise ArgumentError("reference point set is empty")
    if points.min() < 0 or points.max() >= mesh.n_points:
        raise ArgumentError("reference point index out of range")
    if initial_state is None:
        initial_state = PlasticState.zeros(mesh.n_points)
    strain = np.asarray(strain_history_at_points, dtype=float)
    local = initial_state.subset(points) if initial_state.n_points != len(points) else initial_state
    data, final, ebh = _integrate(strain, local, material, record_eps_bar)
    return HistorySnapshot(data, points, strain.shape[0] * strain.shape[2], ebh), final


# snapshot persistence ----------------------------------------------------------

_MAGIC = b"MTPGDSNP"
_HEADER = struct.Struct("<8sqqqq")


def write_snapshot(path, data, chunk_width=4096):
    """Write a ``(rows, cols)`` float64 matrix in column-chunked blocks.

    Header: magic, rows, cols, component count (3), chunk width, all
    little-endian. Each block holds ``rows x width`` values row-major.
    """
    data = np.asarray(data, dtype="<f8")
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, rows, cols, 3, chunk_width))
        for c0 in range(0, cols, chunk_width):
            fh.write(np.ascontiguousarray(data[:, c0 : c0 + chunk_width]).tobytes())


def read_snapshot(path):
    raw = Path(path).read_bytes()
    magic, rows, cols, ncomp, width = _HEADER.unpack_from(raw)
    if magic != _MAGIC or ncomp != 3 or width <= 0:
        raise ArgumentError(f"{path}: not a snapshot file")
    out = np.empty((rows, cols))
    offset = _HEADER.size
    for c0 in range(0, cols, width):
        w = min(width, cols - c0)
        block = np.frombuffer(raw, dtype="<f8", count=rows * w, offset=offset)
        out[:, c0 : c0 + w] = block.reshape(rows, w)
        offset += 8 * rows * w
    return out


def write_snapshot_csv(path, snapshot, times=None):
    """Small-case CSV export: one row per instant, one column per snapshot row."""
    data = snapshot.data if isinstance(snapshot, HistorySnapshot) else np.asarray(snapshot)
    n = data.shape[0] // 3
    names = [f"eps{c}_p{p} [-]" for c in ("11", "22", "12") for p in range(n)]
    t = np.arange(1, data.shape[1] + 1) if times is None else np.asarray(times)
    table = np.column_stack([t, data.T])
    np.savetxt(path, table, delimiter=",", header="t [s]," + ",".join(names), comments="")
