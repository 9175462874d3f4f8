"""Higher-order dynamic mode decomposition (DMD-d) for scalar series.

A series ``v_0 .. v_{N-1}`` is embedded in ``d``-lagged snapshots
``(v_j, ..., v_{j+d-1})``. The snapshot matrix is truncated by SVD, a reduced
Koopman operator is fitted between consecutive snapshots, and its spectrum
gives the expansion ``v_j = sum_i a_i mu_i^j`` whose amplitudes are fitted by
least squares on the training window.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ArgumentError


class UnstableForecastWarning(UserWarning):
    """A retained eigenvalue lies outside the growth guard."""


class RankDeficientWarning(UserWarning):
    """The lagged snapshot matrix was numerically rank deficient."""


@dataclass(frozen=True)
class HodmdModel:
    """Fitted DMD-d model of a scalar series.

    Attributes
    ----------
    d : int
        Lag depth.
    eigenvalues : (r,) complex ndarray
    amplitudes : (r,) complex ndarray
        ``v_j = Re sum_i amplitudes[i] * eigenvalues[i] ** j``.
    n_train : int
        Length of the training series; forecasts start at ``j = n_train``.
    dt : float
        Sampling interval.
    svd_rank : int
        Rank kept after SVD truncation of the lagged snapshots.
    rank_deficient : bool
        True when fewer than ``d`` singular values survived truncation.
    fit_error : float
        Relative l2 reconstruction error on the training window.
    """

    d: int
    eigenvalues: np.ndarray
    amplitudes: np.ndarray
    n_train: int
    dt: float = 1.0
    svd_rank: int = 0
    rank_deficient: bool = False
    fit_error: float = 0.0

    @property
    def rank(self):
        return len(self.eigenvalues)

    def evaluate(self, j):
        """Model values at (possibly fractional) sample indices ``j``."""
        j = np.asarray(j, dtype=float)
        if self.rank == 0:
            return np.zeros(j.shape)
        terms = self.amplitudes[:, None] * self.eigenvalues[:, None] ** j.ravel()[None, :]
        return np.real(terms.sum(axis=0)).reshape(j.shape)

    def reconstruct(self):
        return self.evaluate(np.arange(self.n_train))

    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues))) if self.rank else 0.0

    def companion_coefficients(self):
        """Coefficients ``c_1..c_d`` of ``v_{j+d} = sum_k c_k v_{j+k-1}``.

        Built from the retained spectrum padded with zero roots, so the
        companion matrix has ``c`` as its last row.
        """
        roots = np.concatenate([self.eigenvalues, np.zeros(self.d - self.rank)])
        poly = np.real_if_close(np.poly(roots), tol=1e6)  # z^d + p_1 z^{d-1} + ... + p_d
        return -np.real(poly[1:])[::-1]

    def companion_matrix(self):
        d = self.d
        R = np.zeros((d, d))
        R[np.arange(d - 1), np.arange(1, d)] = 1.0
        R[-1] = self.companion_coefficients()
        return R


def _lagged(series, d):
    n = len(series) - d + 1
    return np.lib.stride_tricks.sliding_window_view(series, d)[:n].T.copy()


def hodmd_fit(series, d=10, tol_svd=1e-8, tol_spectral=1e-6, dt=1.0):
    """Fit a DMD-d model to a real scalar series.

    Parameters
    ----------
    series : (N,) array_like
    d : int
        Lag depth; requires ``N > 2 d``.
    tol_svd : float
        Relative singular value cut-off for the lagged snapshot matrix.
    tol_spectral : float
        Modes whose relative contribution on the training window is below
        this value are discarded.
    dt : float
        Sampling interval, stored for bookkeeping.
    """
    v = np.asarray(series, dtype=float).ravel()
    N = len(v)
    if d < 1:
        raise ArgumentError("lag depth d must be >= 1")
    if N <= 2 * d:
        raise ArgumentError(f"series of length {N} too short for d={d} (need N > 2d)")
    if not np.all(np.isfinite(v)):
        raise ArgumentError("series contains non-finite values")
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return HodmdModel(d, np.zeros(0, complex), np.zeros(0, complex), N, dt, 0, True, 0.0)

    H = _lagged(v, d)  # (d, N - d + 1)
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    r = int(np.sum(s > tol_svd * s[0]))
    deficient = r < d
    reduced = s[:r, None] * Vt[:r]
    V1, V2 = reduced[:, :-1], reduced[:, 1:]
    R = V2 @ np.linalg.pinv(V1, rcond=1e-14)
    mu = np.linalg.eigvals(R)

    jj = np.arange(N)
    amps = _fit_amplitudes(mu, v, jj)
    contrib = np.abs(amps) * np.sqrt(np.sum(np.abs(mu[:, None] ** jj[None, :]) ** 2, axis=1)) / vnorm
    keep = contrib >= tol_spectral
    if not keep.all() and keep.any():
        mu = mu[keep]
        amps = _fit_amplitudes(mu, v, jj)
    model = HodmdModel(d, mu, amps, N, dt, r, deficient)
    err = np.linalg.norm(model.reconstruct() - v) / vnorm
    model = HodmdModel(d, mu, amps, N, dt, r, deficient, float(err))
    if deficient and r == 0:
        warnings.warn("lagged snapshot matrix has rank 0", RankDeficientWarning, stacklevel=2)
    return model


def _fit_amplitudes(mu, v, jj):
    Vand = mu[None, :] ** jj[:, None]
    amps, *_ = np.linalg.lstsq(Vand, v.astype(complex), rcond=None)
    return amps


def hodmd_forecast(model, horizon, growth_guard=0.05):
    """Forecast ``horizon`` samples after the training window.

    Emits :class:`UnstableForecastWarning` if any eigenvalue modulus exceeds
    ``1 + growth_guard``.
    """
    horizon = int(horizon)
    if horizon < 0:
        raise ArgumentError("horizon must be nonnegative")
    if model.spectral_radius() > 1.0 + growth_guard:
        warnings.warn(
            f"forecast uses an eigenvalue of modulus {model.spectral_radius():.4f}",
            UnstableForecastWarning,
            stacklevel=2,
        )
    return model.evaluate(np.arange(model.n_train, model.n_train + horizon))


def forecast_series(series, horizon, d=10, tol_svd=1e-8, tol_spectral=1e-6, resample=None):
    """Fit and forecast in one call, optionally on a coarser macro grid.

    With ``resample = N'``, the series is interpolated onto ``N'`` equispaced
    samples spanning the same interval, the model is fitted there and the
    forecast is interpolated back with a cubic spline.
    """
    v = np.asarray(series, dtype=float)
    N = len(v)
    if resample is None or resample >= N:
        model = hodmd_fit(v, min(d, (N - 1) // 2), tol_svd, tol_spectral)
        return hodmd_forecast(model, horizon), model
    step = (N - 1) / (resample - 1)
    coarse_t = np.arange(resample) * step
    coarse = CubicSpline(np.arange(N), v)(coarse_t)
    model = hodmd_fit(coarse, min(d, (resample - 1) // 2), tol_svd, tol_spectral, dt=step)
    n_extra = int(np.ceil((N - 1 + horizon) / step)) - (resample - 1) + 1
    fut = hodmd_forecast(model, max(n_extra, 1))
    all_t = np.concatenate([coarse_t, (resample - 1 + np.arange(1, len(fut) + 1)) * step])
    all_v = np.concatenate([model.reconstruct(), fut])
    target = np.arange(N, N + horizon)
    return CubicSpline(all_t, all_v)(target), model


def select_lag(series, candidate_ds, validation_fraction=0.25, tie_tol=1e-8, **fit_kw):
    """Lag depth with the smallest forecast error on a held-out tail.

    The last ``validation_fraction`` of the series is withheld, every
    feasible candidate is fitted on the remainder, and the relative error of
    its forecast over the tail is compared. Errors within ``tie_tol`` of the
    best count as ties, resolved towards the smallest ``d``.
    """
    v = np.asarray(series, dtype=float)
    n_val = max(1, int(round(validation_fraction * len(v))))
    train, tail = v[:-n_val], v[-n_val:]
    scale = np.linalg.norm(tail) or 1.0
    errors = {}
    for d in sorted(set(int(c) for c in candidate_ds)):
        if d < 1 or len(train) <= 2 * d:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnstableForecastWarning)
            model = hodmd_fit(train, d, **fit_kw)
            pred = hodmd_forecast(model, n_val)
        err = np.linalg.norm(pred - tail) / scale
        errors[d] = err if np.isfinite(err) else np.inf
    if not errors:
        raise ArgumentError("no candidate lag depth is feasible for this series")
    best = min(errors.values())
    return min(d for d, e in errors.items() if e <= best + tie_tol)


def write_model_csv(path, models):
    """Diagnostic dump: one row per (macro mode, eigenvalue)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mode [-]", "Re mu [-]", "Im mu [-]", "Re a [-]", "Im a [-]"])
        for k, m in enumerate(models):
            for mu, a in zip(m.eigenvalues, m.amplitudes):
                wr.writerow([k + 1] + [repr(float(x)) for x in (mu.real, mu.imag, a.real, a.imag)])
