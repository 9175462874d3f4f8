"""Cyclic displacement load programs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

WAVEFORMS = ("reversed", "tension")


def triangle_wave(phase, waveform="reversed"):
    """Unit piecewise-linear cycle evaluated at ``phase`` in [0, 1).

    ``reversed``: 0 -> +1 -> 0 -> -1 -> 0 over quarters of the cycle.
    ``tension``: 0 -> +1 -> 0 over halves of the cycle.
    """
    p = np.mod(np.asarray(phase, dtype=float), 1.0)
    if waveform == "reversed":
        return np.interp(p, [0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 1.0, 0.0, -1.0, 0.0])
    if waveform == "tension":
        return np.interp(p, [0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    raise ArgumentError(f"unknown waveform {waveform!r}; expected one of {WAVEFORMS}")


@dataclass(frozen=True)
class LoadProgram:
    """Prescribed end displacement ``g(t) = amplitude * wave(t / T_1) + drift * t``.

    Parameters
    ----------
    amplitude : float
        Peak cyclic displacement in mm.
    cycle_duration : float
        Cycle period T_1 in s.
    cycle_count : int
        Number of cycles the program is defined for.
    waveform : str
        ``"reversed"`` or ``"tension"``.
    drift : float
        Slope of the mean displacement in mm/s.
    body_force : tuple of float
        Reference body force (N/mm^3), scaled by the unit waveform.
    """

    amplitude: float
    cycle_duration: float = 20.0
    cycle_count: int = 1
    waveform: str = "reversed"
    drift: float = 0.0
    body_force: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.cycle_duration > 0:
            raise ArgumentError("cycle_duration must be positive")
        if self.cycle_count < 1:
            raise ArgumentError("cycle_count must be >= 1")
        if self.waveform not in WAVEFORMS:
            raise ArgumentError(f"unknown waveform {self.waveform!r}; expected one of {WAVEFORMS}")
        if not np.isfinite(self.amplitude) or not np.isfinite(self.drift):
            raise ArgumentError("amplitude and drift must be finite")

    @property
    def final_time(self):
        return self.cycle_count * self.cycle_duration

    def unit_wave(self, t):
        return triangle_wave(np.asarray(t, dtype=float) / self.cycle_duration, self.waveform)

    def displacement(self, t):
        """Prescribed end displacement in mm."""
        t = np.asarray(t, dtype=float)
        return self.amplitude * self.unit_wave(t) + self.drift * t

    def force_factor(self, t):
        """Time factor multiplying the reference external force."""
        return self.unit_wave(t)
