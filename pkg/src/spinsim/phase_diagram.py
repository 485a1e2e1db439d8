"""P(FM) phase diagrams over (J2/|J1|, B_y/|J1|) for the three-spin chain."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import hamiltonian as ham
from .dynamics import MAX_PHASE_STEP, RampProfile, evolve_state, initial_state
from .errors import ConfigError

MODES = ("exact_ground", "adiabatic_protocol")
GROUND_DEGENERACY_RTOL = 1e-10
FIG3_RATIOS = (-1.3, -2.0, -3.6, 4.2, 2.0, 1.3, 0.92, 0.74, 0.62)


def default_ratio_axis():
    return np.round(np.arange(-4.0, 4.5 + 1e-9, 0.05), 10)


def default_field_axis():
    return np.logspace(-1.0, 1.0, 60)


def default_protocol_ramp(j1_abs):
    """Pure exponential from 10|J1| with a 100 us time constant (at |J1| = 1 kHz).

    Time scales as 1/|J1| so cell values depend on ratios only.
    """
    tau = 100e-6 * 1e3 / j1_abs
    return RampProfile("pure_exp", 10.0 * j1_abs, 10.0 * tau, tau=tau)


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """``values[i, k]`` is P(FM) at ``ratios[i]`` and ``fields[k]`` (units of |J1|)."""

    ratios: np.ndarray
    fields: np.ndarray
    values: np.ndarray
    mode: str
    j1: float = -1.0
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, PhaseGrid):
            return NotImplemented
        return (
            np.array_equal(self.ratios, other.ratios)
            and np.array_equal(self.fields, other.fields)
            and np.array_equal(self.values, other.values)
            and self.mode == other.mode
            and self.j1 == other.j1
            and self.meta == other.meta
        )

    def rows(self):
        return [
            {"ratio": float(r), "field": float(f), "pfm": float(self.values[i, k])}
            for i, r in enumerate(self.ratios)
            for k, f in enumerate(self.fields)
        ]

    def to_dict(self):
        return {
            "mode": self.mode,
            "j1": self.j1,
            "ratios": self.ratios.tolist(),
            "fields": self.fields.tolist(),
            "values": self.values.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["ratios"], dtype=float),
            np.array(d["fields"], dtype=float),
            np.array(d["values"], dtype=float),
            d["mode"],
            float(d["j1"]),
            dict(d.get("meta", {})),
        )


@dataclass(frozen=True)
class PhaseCut:
    axis: np.ndarray
    values: np.ndarray
    fixed: float
    kind: str  # "fixed_ratio" or "fixed_field"

    def max_jump(self):
        d = np.abs(np.diff(self.values))
        i = int(np.argmax(d))
        return float(d[i]), (float(self.axis[i]), float(self.axis[i + 1]))


def ground_pfm(params, rtol=GROUND_DEGENERACY_RTOL):
    """P(FM) of the ground manifold, averaged over an orthonormal basis of it."""
    w, v = np.linalg.eigh(ham.build_dense(params))
    tol = rtol * max(params.scale(), 1e-300)
    manifold = v[:, w - w[0] <= tol]
    up, down = ham.fm_indices(params.n)
    weight = np.abs(manifold[up, :]) ** 2 + np.abs(manifold[down, :]) ** 2
    return float(weight.sum() / manifold.shape[1])


def _check_j1(j1):
    if not j1 < 0:
        raise ConfigError(f"nearest-neighbour coupling J1 must be negative, got {j1}")


def _row_exact(j1, ratio, fields):
    c = ham.CouplingMatrix.chain3(j1, ratio * abs(j1))
    base = ham.HamiltonianParams(c, 0.0)
    return np.array([ground_pfm(base.with_field(f * abs(j1))) for f in fields])


def _row_protocol(j1, ratio, fields, ramp, max_phase_step):
    c = ham.CouplingMatrix.chain3(j1, ratio * abs(j1))
    b_abs = np.asarray(fields) * abs(j1)
    times = np.array([ramp.time_at_field(b) for b in b_abs])
    order = np.argsort(times, kind="stable")
    psi0 = initial_state(3, 1 if float(ramp.field(0.0)) >= 0 else -1)
    states = evolve_state(c, ramp, psi0, times[order], max_phase_step)
    out = np.empty(len(fields))
    for slot, psi in zip(order, states):
        out[slot] = ham.order_parameter(psi, check_norm=False)
    return out


def compute_grid(j1, ratios=None, fields=None, mode="exact_ground", ramp=None,
                 workers=1, max_phase_step=MAX_PHASE_STEP):
    """P(FM) over a (J2/|J1|, B_y/|J1|) grid.

    ``exact_ground`` diagonalizes each cell.  ``adiabatic_protocol`` runs
    one propagation per ratio and reads each field value off the
    trajectory at the time the ramp passes it.  Rows are independent and
    may run on ``workers`` threads; results do not depend on scheduling.
    """
    _check_j1(j1)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    ratios = default_ratio_axis() if ratios is None else np.atleast_1d(np.asarray(ratios, dtype=float))
    fields = default_field_axis() if fields is None else np.atleast_1d(np.asarray(fields, dtype=float))
    if ratios.size == 0 or fields.size == 0:
        raise ConfigError("phase grid axes must be non-empty")
    if np.any(fields < 0):
        raise ConfigError("field axis must be non-negative")
    meta = {}
    if mode == "exact_ground":
        def row(r):
            return _row_exact(j1, r, fields)
    else:
        ramp = default_protocol_ramp(abs(j1)) if ramp is None else ramp
        meta["ramp"] = ramp.to_dict()

        def row(r):
            return _row_protocol(j1, r, fields, ramp, max_phase_step)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(row, ratios))
    else:
        rows = [row(r) for r in ratios]
    return PhaseGrid(ratios, fields, np.vstack(rows), mode, float(j1), meta)


def cut_fixed_ratio(j1, ratio, fields, mode="exact_ground", ramp=None, **kw):
    g = compute_grid(j1, [ratio], fields, mode, ramp, **kw)
    return PhaseCut(g.fields, g.values[0], float(ratio), "fixed_ratio")


def cut_fixed_field(j1, field_ratio, ratios, mode="exact_ground", ramp=None, **kw):
    g = compute_grid(j1, ratios, [field_ratio], mode, ramp, **kw)
    return PhaseCut(g.ratios, g.values[:, 0], float(field_ratio), "fixed_field")


@dataclass(frozen=True)
class DegeneratePoint:
    ratio: float
    configurations: tuple  # SpinConfiguration, ascending index
    classes: dict
    frustrated: bool

    def labels(self):
        return [c.label() for c in self.configurations]


def locate_degenerate_point(j1):
    """Coupling ratio where the FM doublet and asymmetric-AFM quadruplet meet at B_y = 0.

    Both classical energies are linear in J2, so two evaluations per class
    fix the crossing exactly.
    """
    _check_j1(j1)
    configs = [ham.SpinConfiguration(i, 3) for i in range(8)]

    def class_energy(cls, ratio):
        c = ham.CouplingMatrix.chain3(j1, ratio * abs(j1))
        return min(ham.classical_ising_energy(s, c) for s in configs if s.classify() == cls)

    e_fm = [class_energy("fm", r) for r in (0.0, 1.0)]
    e_af = [class_energy("asymmetric_afm", r) for r in (0.0, 1.0)]
    slope = (e_fm[1] - e_fm[0]) - (e_af[1] - e_af[0])
    if slope == 0:
        raise ConfigError("FM and asymmetric-AFM energies never cross")
    ratio = -(e_fm[0] - e_af[0]) / slope
    c = ham.CouplingMatrix.chain3(j1, ratio * abs(j1))
    energies = np.array([ham.classical_ising_energy(s, c) for s in configs])
    tol = 1e-12 * abs(j1)
    members = tuple(s for s, e in zip(configs, energies) if e - energies.min() <= tol)
    classes = {}
    for s in members:
        classes[s.classify()] = classes.get(s.classify(), 0) + 1
    frustrated = len(members) > 2
    return DegeneratePoint(float(ratio), members, classes, frustrated)


def brute_force_ground_configs(couplings):
    """Minimum-energy x-configurations by enumeration (zero field)."""
    n = couplings.n
    configs = [ham.SpinConfiguration(i, n) for i in range(1 << n)]
    e = np.array([ham.classical_ising_energy(s, couplings) for s in configs])
    return [s for s, x in zip(configs, e) if x - e.min() <= 1e-12 * max(np.abs(e).max(), 1.0)]
