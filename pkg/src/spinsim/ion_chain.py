"""Linear ion-chain mechanics and spin-spin coupling engineering.

Positions are in units of the Coulomb length ``(e^2 / (4 pi eps0 M w_z^2))**(1/3)``.
Frequencies are ordinary frequencies (Hz); the Lamb-Dicke factor converts
with ``sqrt(hbar / (4 pi M nu))``, i.e. ``sqrt(hbar / (2 M omega))``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants, optimize

from .errors import BracketError, ConfigError, ConvergenceError, PoleWindowError
from .hamiltonian import CouplingMatrix

YB171_MASS = 170.9363258 * constants.atomic_mass
RAMAN_WAVELENGTH = 369.75e-9
DEFAULT_DELTA_K = math.sqrt(2.0) * 2.0 * math.pi / RAMAN_WAVELENGTH

POLE_WINDOW_FACTOR = 10.0
POLE_WINDOW_FLOOR = 100.0  # Hz
REGIME_WARN_RATIO = 10.0

#: Transverse mode frequencies reported for the three-ion experiment (Hz).
MEASURED_MODE_FREQS = (4.334e6, 4.074e6, 3.674e6)


@dataclass(frozen=True)
class TrapConfig:
    n_ions: int
    nu_transverse: float
    nu_axial: float
    ion_mass: float = YB171_MASS
    delta_k: float = DEFAULT_DELTA_K

    def __post_init__(self):
        if int(self.n_ions) != self.n_ions or not 2 <= self.n_ions <= 30:
            raise ConfigError(f"n_ions must be an integer in [2, 30], got {self.n_ions}")
        for name in ("nu_transverse", "nu_axial", "ion_mass", "delta_k"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be finite and positive, got {val}")

    @property
    def anisotropy(self):
        return self.nu_axial / self.nu_transverse

    def to_dict(self):
        return {
            "n_ions": self.n_ions,
            "nu_transverse": self.nu_transverse,
            "nu_axial": self.nu_axial,
            "ion_mass": self.ion_mass,
            "delta_k": self.delta_k,
        }


@dataclass(frozen=True, eq=False)
class ModeData:
    """Transverse modes, COM first; column ``m`` of ``b`` is mode ``m``."""

    freqs: np.ndarray
    b: np.ndarray
    positions: np.ndarray = field(default=None)

    def __eq__(self, other):
        return (
            isinstance(other, ModeData)
            and np.array_equal(self.freqs, other.freqs)
            and np.array_equal(self.b, other.b)
        )

    def to_dict(self):
        d = {"freqs": self.freqs.tolist(), "b": self.b.tolist()}
        if self.positions is not None:
            d["positions"] = self.positions.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        pos = d.get("positions")
        return cls(
            np.array(d["freqs"], dtype=float),
            np.array(d["b"], dtype=float),
            None if pos is None else np.array(pos, dtype=float),
        )


@dataclass(frozen=True)
class DriveConfig:
    rabi: tuple
    mu: float

    def __post_init__(self):
        rabi = tuple(float(r) for r in np.atleast_1d(self.rabi))
        if any(not np.isfinite(r) or r < 0 for r in rabi):
            raise ConfigError(f"Rabi frequencies must be finite and >= 0, got {rabi}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ConfigError(f"beatnote detuning mu must be positive, got {self.mu}")
        object.__setattr__(self, "rabi", rabi)

    @classmethod
    def uniform(cls, n, rabi, mu):
        return cls((float(rabi),) * n, mu)

    def with_mu(self, mu):
        return DriveConfig(self.rabi, mu)


@dataclass(frozen=True)
class RegimeReport:
    min_ratio: float
    ok: bool
    worst_ion: int
    worst_mode: int


def _force_residual(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def _force_jacobian(u):
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 2.0 / d**3
    jac = -inv3
    np.fill_diagonal(jac, 1.0 + inv3.sum(axis=1))
    return jac


def equilibrium_positions(n_ions, tol=1e-12, max_iter=200):
    """Dimensionless equilibrium positions of a linear Coulomb chain.

    Solves ``u_i = sum_{k != i} sgn(u_i - u_k) / (u_i - u_k)**2`` by damped
    Newton iteration from uniform spacing.
    """
    if int(n_ions) != n_ions or not 2 <= n_ions <= 30:
        raise ConfigError(f"n_ions must be in [2, 30], got {n_ions}")
    n = int(n_ions)
    # uniform seed with the empirical n**0.56 length scaling
    spacing = 2.018 / n**0.559
    u = spacing * (np.arange(n) - (n - 1) / 2.0)
    res = _force_residual(u)
    for _ in range(max_iter):
        rnorm = np.max(np.abs(res))
        if rnorm <= tol:
            break
        step = np.linalg.solve(_force_jacobian(u), -res)
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                tres = _force_residual(trial)
                if np.max(np.abs(tres)) < rnorm or lam < 1e-3:
                    break
            lam *= 0.5
        u, res = trial, tres
    else:
        raise ConvergenceError(
            f"equilibrium solve did not converge for n={n}", residuals=np.abs(res)
        )
    u = u - u.mean()
    return (u - u[::-1]) / 2.0  # exact mirror symmetry


def stiffness_matrix(n_ions, anisotropy, positions=None):
    """Transverse stiffness in units of ``nu_transverse**2``."""
    u = equilibrium_positions(n_ions) if positions is None else positions
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    c = anisotropy**2 / d**3
    a = c.copy()
    np.fill_diagonal(a, 1.0 - c.sum(axis=1))
    return a


def _fix_mode_signs(b, tol=1e-12):
    b = b.copy()
    for m in range(b.shape[1]):
        col = b[:, m]
        first = np.argmax(np.abs(col) > tol)
        if col[first] < 0:
            b[:, m] = -col
    return b


def transverse_modes(trap):
    """Transverse normal modes of ``trap``, sorted by descending frequency."""
    u = equilibrium_positions(trap.n_ions)
    a = stiffness_matrix(trap.n_ions, trap.anisotropy, u)
    lam, vec = np.linalg.eigh(a)
    if lam[0] <= 0:
        raise ConfigError(
            f"zigzag instability: lowest transverse eigenvalue {lam[0]:.3g} "
            f"at anisotropy nu_axial/nu_transverse = {trap.anisotropy:.6g}"
        )
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    freqs = trap.nu_transverse * np.sqrt(lam)
    # the COM vector is an exact eigenvector with eigenvalue 1
    freqs[0] = trap.nu_transverse
    return ModeData(freqs, _fix_mode_signs(vec), u)


def fit_axial_frequency(n_ions, nu_transverse, measured, bounds=None):
    """Least-squares axial frequency reproducing measured transverse modes.

    ``measured`` is the descending tuple of transverse frequencies (COM
    first).  The COM entry carries no axial information and is ignored.
    """
    measured = np.asarray(measured, dtype=float)
    if measured.size != n_ions:
        raise ConfigError("need one measured frequency per mode")

    def cost(nu_z):
        try:
            f = transverse_modes(TrapConfig(n_ions, nu_transverse, nu_z)).freqs
        except ConfigError:
            return np.inf
        return float(np.sum((f[1:] - measured[1:]) ** 2))

    if bounds is None:
        bounds = (1e-3 * nu_transverse, 0.9 * nu_transverse)
    res = optimize.minimize_scalar(
        cost, bounds=bounds, method="bounded", options={"xatol": 1e-3}
    )
    return float(res.x)


def lamb_dicke(trap, modes):
    """Lamb-Dicke matrix ``eta[i, m] = b[i, m] dk sqrt(hbar / (4 pi M nu_m))``."""
    scale = trap.delta_k * np.sqrt(constants.hbar / (4.0 * np.pi * trap.ion_mass * modes.freqs))
    return modes.b * scale[None, :]


def pole_windows(eta, drive):
    """Half-width of the excluded detuning band around each mode (Hz)."""
    rabi = np.asarray(drive.rabi)
    if rabi.size != eta.shape[0]:
        raise ConfigError(f"{rabi.size} Rabi frequencies for {eta.shape[0]} ions")
    strength = np.max(np.abs(eta) * rabi[:, None], axis=0)
    return np.maximum(POLE_WINDOW_FACTOR * strength, POLE_WINDOW_FLOOR)


def check_pole_windows(trap, modes, drive, eta=None):
    eta = lamb_dicke(trap, modes) if eta is None else eta
    win = pole_windows(eta, drive)
    dist = np.abs(modes.freqs - drive.mu)
    bad = np.nonzero(dist < win)[0]
    if bad.size:
        m = int(bad[0])
        raise PoleWindowError(
            f"mu = {drive.mu:.6f} Hz lies {dist[m]:.3f} Hz from mode {m} "
            f"({modes.freqs[m]:.3f} Hz), inside its exclusion window of {win[m]:.3f} Hz; "
            "see validate_regime"
        )


def ising_couplings(trap, modes, drive, check_poles=True):
    """Spin-spin couplings from the normal modes and beatnote detuning (Hz)."""
    eta = lamb_dicke(trap, modes)
    if check_poles:
        check_pole_windows(trap, modes, drive, eta)
    rabi = np.asarray(drive.rabi)
    if rabi.size != trap.n_ions:
        raise ConfigError(f"{rabi.size} Rabi frequencies for {trap.n_ions} ions")
    weights = modes.freqs / (drive.mu**2 - modes.freqs**2)
    j = np.einsum("im,km,m->ik", eta, eta, weights) * np.outer(rabi, rabi)
    j = np.triu(j, 1)
    return CouplingMatrix(j + j.T)


def coupling_ratio(couplings):
    """``J_13 / |J_12|`` (zero-based: ``J[0, 2] / |J[0, 1]|``)."""
    j = couplings.j
    return j[0, 2] / abs(j[0, 1])


def solve_detuning_for_ratio(target, trap, modes, drive, interval, rtol=1e-6):
    """Beatnote detuning in ``interval`` giving ``J_13/|J_12| == target``.

    ``drive`` supplies the Rabi frequencies; its ``mu`` is ignored.  The
    interval must avoid the pole windows and bracket a sign change of
    ``ratio(mu) - target``.
    """
    if trap.n_ions < 3:
        raise ConfigError("a next-nearest-neighbour ratio needs at least three ions")
    lo, hi = sorted(float(x) for x in interval)

    def f(mu):
        return coupling_ratio(ising_couplings(trap, modes, drive.with_mu(mu))) - target

    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"target ratio {target} is not bracketed on [{lo}, {hi}] Hz "
            f"(ratio - target = {f_lo:.4g}, {f_hi:.4g})"
        )
    mu = optimize.brentq(f, lo, hi, xtol=1e-9, rtol=4 * np.finfo(float).eps, maxiter=500)
    got = f(mu) + target
    if abs(got - target) > rtol * max(abs(target), 1e-300):
        raise ConvergenceError(f"detuning solve reached ratio {got}, target {target}")
    return float(mu)


def validate_regime(trap, modes, drive):
    """Check the virtual-phonon condition ``|nu_m - mu| >> eta_im Omega_i``.

    Returns the smallest ratio over ions and modes and whether it clears the
    warn threshold of 10.
    """
    eta = np.abs(lamb_dicke(trap, modes))
    rabi = np.asarray(drive.rabi)
    strength = eta * rabi[:, None]
    dist = np.abs(modes.freqs - drive.mu)[None, :] * np.ones_like(strength)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(strength > 0, dist / strength, np.inf)
    i, m = np.unravel_index(np.argmin(ratio), ratio.shape)
    r = float(ratio[i, m])
    return RegimeReport(r, r >= REGIME_WARN_RATIO, int(i), int(m))
