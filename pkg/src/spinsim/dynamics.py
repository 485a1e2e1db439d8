"""Ramped-field time evolution, projective readout and round-trip probes.

The Schroedinger equation is ``i d psi/dt = 2 pi H(t) psi`` with H in Hz.
Each step applies a fourth-order commutator-free exponential integrator
(two exponentials of H at effective fields built from the Gauss points);
every exponential is a Krylov action on the matrix-free product, so the
propagator is unitary to Krylov tolerance and no matrix is stored.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import hamiltonian as ham
from .errors import ConfigError, NormDriftError, NumericalError

RAMP_KINDS = ("exp_offset", "pure_exp", "linear", "constant")
MAX_PHASE_STEP = 0.05  # 2 pi * max(|B_y|, sum|J|) * dt
NORM_TOL = 1e-9
KRYLOV_TOL = 1e-13
KRYLOV_MAX = 40

_SQ3 = math.sqrt(3.0)
_CF4_A1 = (3.0 - 2.0 * _SQ3) / 12.0
_CF4_A2 = (3.0 + 2.0 * _SQ3) / 12.0
_CF4_C1 = 0.5 - _SQ3 / 6.0
_CF4_C2 = 0.5 + _SQ3 / 6.0


@dataclass(frozen=True)
class RampProfile:
    """Transverse-field schedule ``B_y(t)`` on ``[0, t_end]``.

    ``exp_offset``: a exp(-t/tau) + b;  ``pure_exp``: a exp(-t/tau);
    ``linear``: a (1 - t/t_end);  ``constant``: a.
    """

    kind: str
    a: float
    t_end: float
    tau: float = None
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in RAMP_KINDS:
            raise ConfigError(f"ramp kind must be one of {RAMP_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not np.isfinite(self.a) or not np.isfinite(self.b):
            raise ConfigError("ramp amplitudes must be finite")
        if self.kind in ("exp_offset", "pure_exp"):
            if self.tau is None or not (np.isfinite(self.tau) and self.tau > 0):
                raise ConfigError(f"{self.kind} ramp needs a positive tau")
            if self.a < 0:
                raise ConfigError("decaying ramps need a >= 0")
        if self.kind == "linear" and self.a < 0:
            raise ConfigError("decaying ramps need a >= 0")
        if self.kind != "exp_offset" and self.b != 0.0:
            raise ConfigError("offset b only applies to exp_offset ramps")

    def field(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exp_offset":
            return self.a * np.exp(-t / self.tau) + self.b
        if self.kind == "pure_exp":
            return self.a * np.exp(-t / self.tau)
        if self.kind == "linear":
            return self.a * (1.0 - t / self.t_end)
        return np.full_like(t, self.a)

    def rate(self, t):
        """Closed-form dB_y/dt in Hz/s."""
        t = np.asarray(t, dtype=float)
        if self.kind in ("exp_offset", "pure_exp"):
            return -self.a / self.tau * np.exp(-t / self.tau)
        if self.kind == "linear":
            return np.full_like(t, -self.a / self.t_end)
        return np.zeros_like(t)

    def time_at_field(self, b_y):
        """Earliest time at which the ramp reaches ``b_y`` (decaying kinds)."""
        b_y = float(b_y)
        lo, hi = sorted((float(self.field(0.0)), float(self.field(self.t_end))))
        if not lo - 1e-12 * abs(hi) <= b_y <= hi + 1e-12 * abs(hi):
            raise ConfigError(f"ramp never reaches B_y={b_y} (range [{lo}, {hi}])")
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear":
            return self.t_end * (1.0 - b_y / self.a)
        t = -self.tau * math.log(max((b_y - self.b) / self.a, 1e-300))
        return min(max(t, 0.0), self.t_end)

    def reversed(self):
        """Time-mirrored schedule, ``B_rev(t) = B(t_end - t)``."""
        return _MirroredRamp(self)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "tau": self.tau, "b": self.b, "t_end": self.t_end}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["a"], d["t_end"], d.get("tau"), d.get("b", 0.0))


class _MirroredRamp:
    def __init__(self, ramp):
        self.ramp = ramp
        self.t_end = ramp.t_end

    def field(self, t):
        return self.ramp.field(self.t_end - np.asarray(t, dtype=float))

    def rate(self, t):
        return -self.ramp.rate(self.t_end - np.asarray(t, dtype=float))


#: Named ramp presets (Hz, s).
RAMP_PRESETS = {
    "experiment": RampProfile("exp_offset", 10e3, 300e-6, tau=30e-6, b=500.0),
    "experiment_35us": RampProfile("exp_offset", 10e3, 300e-6, tau=35e-6, b=500.0),
    "pure_exp_100us": RampProfile("pure_exp", 10e3, 1e-3, tau=100e-6),
}


@dataclass(frozen=True)
class MeasurementModel:
    shots: int = 1000
    detection_fidelity: float = 0.97
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise ConfigError(f"shots must be a positive integer, got {self.shots}")
        if not 0.5 < self.detection_fidelity <= 1.0:
            raise ConfigError(f"detection_fidelity must be in (0.5, 1], got {self.detection_fidelity}")


@dataclass(frozen=True, eq=False)
class EvolutionRecord:
    times: np.ndarray
    b_y: np.ndarray
    populations: np.ndarray
    p_fm: np.ndarray
    fidelity: np.ndarray
    energy: np.ndarray
    norm_error: float
    final_state: np.ndarray = None

    _ARRAYS = ("times", "b_y", "populations", "p_fm", "fidelity", "energy")

    def __eq__(self, other):
        if not isinstance(other, EvolutionRecord):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self._ARRAYS) and (
            self.norm_error == other.norm_error
        )

    def to_dict(self):
        d = {k: getattr(self, k).tolist() for k in self._ARRAYS}
        d["norm_error"] = self.norm_error
        return d

    @classmethod
    def from_dict(cls, d):
        kw = {k: np.array(d[k], dtype=float) for k in cls._ARRAYS}
        return cls(norm_error=float(d["norm_error"]), **kw)

    def rows(self):
        n = int(self.populations.shape[1]).bit_length() - 1
        out = []
        for k in range(self.times.size):
            row = {
                "time": float(self.times[k]),
                "b_y": float(self.b_y[k]),
                "p_fm": float(self.p_fm[k]),
                "fidelity": float(self.fidelity[k]),
                "energy": float(self.energy[k]),
            }
            for a in range(1 << n):
                row[f"pop_{a}"] = float(self.populations[k, a])
            out.append(row)
        return out


def initial_state(n, b_sign=1):
    """Ground state of ``B_y sum_i sy_i`` for a field of sign ``b_sign``.

    Each spin is the sy = -sign(B_y) eigenstate ``(1, -+1j)/sqrt 2`` in the
    (up, down) x-basis, giving amplitude ``(+-1j)**popcount(a) / 2**(N/2)``.
    """
    n = ham._check_n(n)
    phase = 1j if b_sign >= 0 else -1j
    pop = ham._popcount(np.arange(1 << n))
    amps = phase**pop / 2.0 ** (n / 2.0)
    return ham.StateVector(n, amps)


def krylov_expm_apply(params, v, t_phase, tol=KRYLOV_TOL, max_dim=KRYLOV_MAX):
    """``exp(-1j * t_phase * H) @ v`` from a Lanczos basis of the matrix-free H."""
    dim = v.size
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return v.copy()
    basis = [v / nrm]
    alpha, beta = [], []
    w = np.empty_like(v)
    scale = max(params.scale(), 1e-300)
    for j in range(min(max_dim, dim)):
        ham.apply(params, basis[j], out=w)
        a = np.vdot(basis[j], w).real
        alpha.append(a)
        w -= a * basis[j]
        if j:
            w -= beta[-1] * basis[j - 1]
        for q in basis:  # cheap: Krylov dimension stays small
            w -= np.vdot(q, w) * q
        b = float(np.linalg.norm(w))
        m = j + 1
        t = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        theta, s = np.linalg.eigh(t)
        coef = s @ (np.exp(-1j * t_phase * theta) * s[0, :].conj())
        if b <= 1e-14 * scale or m == dim or b * abs(coef[-1]) <= tol:
            return nrm * (np.column_stack(basis) @ coef)
        beta.append(b)
        basis.append(w / b)
        w = np.empty_like(v)
    raise NumericalError(
        f"Krylov propagator did not converge in {max_dim} vectors (phase step {t_phase:.3g})"
    )


def _default_dt(couplings, ramp, t, max_phase_step):
    # piecewise-constant bound for the current step
    b = abs(float(ramp.field(t)))
    return max_phase_step / (2.0 * math.pi * max(b, couplings.abs_sum(), 1e-300))


def _step(base, ramp, psi, t, dt):
    b1 = float(ramp.field(t + _CF4_C1 * dt))
    b2 = float(ramp.field(t + _CF4_C2 * dt))
    # exp(-i dt (a1 H1 + a2 H2)) exp(-i dt (a2 H1 + a1 H2)); a1 + a2 = 1/2
    first = base.with_field(2.0 * (_CF4_A2 * b1 + _CF4_A1 * b2))
    second = base.with_field(2.0 * (_CF4_A1 * b1 + _CF4_A2 * b2))
    phase = math.pi * dt  # 2 pi * dt / 2
    psi = krylov_expm_apply(first, psi, phase)
    return krylov_expm_apply(second, psi, phase)


def _ground_manifold(params):
    """Orthonormal basis of the instantaneous ground manifold."""
    if params.n <= ham.DENSE_MAX_SPINS and params.n <= 10:
        w, v = np.linalg.eigh(ham.build_dense(params))
    else:
        from .spectral import lanczos_extremal

        w, v = lanczos_extremal(params, k=4)
    tol = 1e-9 * max(params.scale(), 1e-300)
    return v[:, w - w[0] <= tol]


def evolve_state(couplings, ramp, psi0, sample_times, max_phase_step=MAX_PHASE_STEP, dt=None):
    """Evolve ``psi0`` and return the state at each of ``sample_times``."""
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) < 0) or sample_times.size == 0:
        raise ConfigError("sample times must be non-empty and non-decreasing")
    if sample_times[0] < 0 or sample_times[-1] > ramp.t_end * (1 + 1e-12):
        raise ConfigError("sample times must lie within [0, t_end]")
    base = ham.HamiltonianParams(couplings, 0.0)
    base.diagonal  # cache once
    psi = np.array(ham._amps(psi0), dtype=complex)
    t = 0.0
    states = []
    for ts in sample_times:
        while ts - t > 1e-15 * max(ramp.t_end, 1.0):
            h = dt if dt is not None else _default_dt(couplings, ramp, t, max_phase_step)
            if h <= 1e-18:
                raise NumericalError(f"step size underflow at t={t}")
            h = min(h, ts - t)
            psi = _step(base, ramp, psi, t, h)
            t += h
            err = abs(np.linalg.norm(psi) - 1.0)
            if err > NORM_TOL:
                raise NormDriftError(f"norm drift {err:.3g} at t={t:.6g} s")
        states.append(psi.copy())
    return states


def propagate(couplings, ramp, samples=101, sample_times=None, psi0=None,
              max_phase_step=MAX_PHASE_STEP, dt=None):
    """Sudden switch-on of the full Hamiltonian, then evolution along ``ramp``.

    The state at ``t = 0`` is the field-only ground state for the sign of
    ``B_y(0)`` unless ``psi0`` is given.  Observables are recorded at
    ``samples`` evenly spaced times (or at ``sample_times``).
    """
    n = couplings.n
    if sample_times is None:
        sample_times = np.linspace(0.0, ramp.t_end, int(samples))
    sample_times = np.asarray(sample_times, dtype=float)
    if psi0 is None:
        psi0 = initial_state(n, 1 if float(ramp.field(0.0)) >= 0 else -1)
    states = evolve_state(couplings, ramp, psi0, sample_times, max_phase_step, dt)
    base = ham.HamiltonianParams(couplings, 0.0)
    b_vals = np.array([float(ramp.field(t)) for t in sample_times])
    pops, pfm, fid, energy = [], [], [], []
    norm_err = 0.0
    for psi, b in zip(states, b_vals):
        p = np.abs(psi) ** 2
        norm_err = max(norm_err, abs(p.sum() - 1.0))
        pops.append(p)
        pfm.append(ham.order_parameter(psi, check_norm=False))
        params = base.with_field(b)
        gm = _ground_manifold(params)
        fid.append(float(min(np.sum(np.abs(gm.conj().T @ psi) ** 2), 1.0)))
        energy.append(ham.expectation(params, psi))
    return EvolutionRecord(
        sample_times, b_vals, np.array(pops), np.array(pfm), np.array(fid), np.array(energy),
        float(norm_err), states[-1],
    )


def roundtrip_return_probability(couplings, ramp, max_phase_step=MAX_PHASE_STEP, dt=None):
    """Run the ramp forward, then its time mirror; return ``|<psi0|psi_final>|^2``."""
    n = couplings.n
    psi0 = initial_state(n, 1 if float(ramp.field(0.0)) >= 0 else -1).amplitudes
    fwd = evolve_state(couplings, ramp, psi0, [ramp.t_end], max_phase_step, dt)[-1]
    back = evolve_state(couplings, ramp.reversed(), fwd, [ramp.t_end], max_phase_step, dt)[-1]
    return float(abs(np.vdot(psi0, back)) ** 2)


def measure_shots(state, model):
    """Simulated x-basis readout with independent per-spin detection errors.

    Returns integer counts over the 2**N outcomes.
    """
    amps = ham._amps(state)
    n = int(amps.size).bit_length() - 1
    p = np.abs(amps) ** 2
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"measure_shots needs a normalized state (norm^2 = {total!r})")
    rng = np.random.default_rng(model.rng_seed)
    outcomes = rng.choice(p.size, size=model.shots, p=p / total)
    flips = rng.random((model.shots, n)) < (1.0 - model.detection_fidelity)
    masks = flips @ (1 << np.arange(n))
    return np.bincount(outcomes ^ masks, minlength=p.size)


def estimate_pfm(counts):
    counts = np.asarray(counts)
    return float((counts[0] + counts[-1]) / counts.sum())


def noisy_pfm_expectation(populations, detection_fidelity):
    """Closed-form mean of :func:`estimate_pfm` under the bit-flip readout model."""
    p = np.asarray(populations, dtype=float)
    n = int(p.size).bit_length() - 1
    f = detection_fidelity
    idx = np.arange(p.size)
    ones = ham._popcount(idx)
    # reach all-up: flip every 1; reach all-down: flip every 0
    to_up = f ** (n - ones) * (1 - f) ** ones
    to_down = f**ones * (1 - f) ** (n - ones)
    return float(np.sum(p * (to_up + to_down)))


def task_seed(master_seed, task_id):
    """Independent per-task RNG seed derived from ``(master_seed, task_id)``."""
    return int(np.random.SeedSequence([int(master_seed), int(task_id)]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class ShotRecord:
    """Outcome counts from :func:`measure_shots` with the model that made them."""

    counts: np.ndarray
    model: MeasurementModel

    def __eq__(self, other):
        return isinstance(other, ShotRecord) and np.array_equal(self.counts, other.counts) and self.model == other.model

    def to_dict(self):
        return {
            "counts": [int(c) for c in self.counts],
            "shots": int(self.model.shots),
            "detection_fidelity": self.model.detection_fidelity,
            "rng_seed": int(self.model.rng_seed),
        }

    @classmethod
    def from_dict(cls, d):
        model = MeasurementModel(d["shots"], d["detection_fidelity"], d["rng_seed"])
        return cls(np.array(d["counts"], dtype=np.int64), model)
