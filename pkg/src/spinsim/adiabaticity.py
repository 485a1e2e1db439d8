"""Adiabaticity diagnostic ``|dB_y/dt| eps / Delta_ge^2`` along a ramp.

Unit convention
---------------
With B_y, Delta in Hz and t in s the ratio ``Bdot * eps / Delta**2`` is
dimensionless up to a constant.  We divide by ``ADIABATIC_CONSTANT =
(2 pi)**2``, which reads the field term in hbar units and the gap in h
units.  This is a calibration: it reproduces the ~0.6 peak quoted for the
frustrated three-spin ramp with |J1| = 1 kHz.  The strict hbar/h bookkeeping
(a single 2 pi) would give values 2 pi times larger.  Change the constant
here only.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import hamiltonian as ham
from .errors import ConfigError
from .spectral import COUPLING_THRESHOLD, dense_spectrum

ADIABATIC_CONSTANT = (2.0 * math.pi) ** 2


def criterion_value(rate, epsilon, gap):
    return abs(rate) * epsilon / (ADIABATIC_CONSTANT * gap**2)


@dataclass(frozen=True, eq=False)
class AdiabaticityTrace:
    """Criterion per sample time and energy-ranked excited level.

    ``criterion[k, e]``, ``epsilon[k, e]`` and ``gap[k, e]`` are NaN where
    level ``e`` is not coupled to the ground state at sample ``k``.
    """

    times: np.ndarray
    b_y: np.ndarray
    rate: np.ndarray
    epsilon: np.ndarray
    gap: np.ndarray
    criterion: np.ndarray
    skipped: tuple = ()

    _ARRAYS = ("times", "b_y", "rate", "epsilon", "gap", "criterion")

    def __eq__(self, other):
        if not isinstance(other, AdiabaticityTrace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True) for k in self._ARRAYS
        ) and tuple(self.skipped) == tuple(other.skipped)

    @property
    def coupled_levels(self):
        return np.nonzero(np.any(np.isfinite(self.criterion), axis=0))[0]

    def to_dict(self):
        def enc(a):
            return [[None if not np.isfinite(x) else float(x) for x in row] for row in a] if a.ndim == 2 else a.tolist()

        d = {k: enc(getattr(self, k)) for k in self._ARRAYS}
        d["skipped"] = list(self.skipped)
        return d

    @classmethod
    def from_dict(cls, d):
        def dec(v):
            return np.array([[np.nan if x is None else x for x in row] for row in v], dtype=float) if v and isinstance(v[0], list) else np.array(v, dtype=float)

        kw = {k: dec(d[k]) for k in cls._ARRAYS}
        return cls(skipped=tuple(d.get("skipped", ())), **kw)

    def rows(self):
        levels = self.coupled_levels
        out = []
        for k in range(self.times.size):
            row = {"time": float(self.times[k]), "b_y": float(self.b_y[k]), "rate": float(self.rate[k])}
            for e in levels:
                row[f"criterion_{e}"] = float(self.criterion[k, e])
            out.append(row)
        return out


def adiabaticity_trace(couplings, ramp, times, threshold=COUPLING_THRESHOLD):
    """Evaluate the criterion at each of ``times`` along ``ramp``.

    Samples with no coupled excited state are recorded in ``skipped`` and
    left as NaN.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ConfigError("need at least one sample time")
    dim = 1 << couplings.n
    base = ham.HamiltonianParams(couplings, 0.0)
    b_vals = np.asarray(ramp.field(times), dtype=float)
    rates = np.asarray(ramp.rate(times), dtype=float)
    eps = np.full((times.size, dim), np.nan)
    gap = np.full((times.size, dim), np.nan)
    crit = np.full((times.size, dim), np.nan)
    skipped = []
    for k, (b, r) in enumerate(zip(b_vals, rates)):
        pt = dense_spectrum(base.with_field(b), threshold=threshold)
        idx = pt.coupled_levels()
        if idx.size == 0:
            skipped.append(k)
            continue
        g = pt.energies[idx] - pt.energies[0]
        eps[k, idx] = pt.epsilons[idx]
        gap[k, idx] = g
        crit[k, idx] = criterion_value(r, pt.epsilons[idx], g)
    return AdiabaticityTrace(times, b_vals, rates, eps, gap, crit, tuple(skipped))


def max_criterion(trace):
    """``(value, time, level)`` of the largest criterion on the trace.

    ``level`` is None when the maximum is zero (e.g. a constant ramp).
    """
    if trace.times.size == 0:
        raise ConfigError("empty adiabaticity trace")
    c = np.where(np.isfinite(trace.criterion), trace.criterion, -np.inf)
    if not np.any(np.isfinite(c)):
        raise ConfigError("trace has no coupled samples")
    k, e = np.unravel_index(np.argmax(c), c.shape)
    value = float(c[k, e])
    if value <= 0.0:
        return 0.0, float(trace.times[0]), None
    return value, float(trace.times[k]), int(e)


def two_spin_criterion(j, b_y, rate):
    """Closed form for N=2, ``H = J sx sx + B_y (sy_1 + sy_2)``.

    The ground state couples only to the other member of its
    ``{|+y+y>, |-y-y>}`` block: gap ``2 sqrt(4 B^2 + J^2)`` and
    ``eps = 2 |J| / sqrt(4 B^2 + J^2)``.
    """
    root = math.sqrt(4.0 * b_y**2 + j**2)
    return criterion_value(rate, 2.0 * abs(j) / root, 2.0 * root)
