"""Transverse-field Ising Hamiltonian on N spins in the x-basis.

    H = sum_{i<k} J_ik sx_i sx_k + B_y sum_i sy_i        (all in Hz)

Basis convention
----------------
Basis index ``a`` in ``[0, 2**N)``; bit ``i`` of ``a`` is spin ``i`` along x,
0 = up (sx = +1), 1 = down (sx = -1).  In the single-spin (up, down) basis

    sy = [[0, 1j], [-1j, 0]]

so ``(sy_i v)[a] = 1j * s_i(a) * v[a ^ (1 << i)]`` where ``s_i(a)`` is the
x-eigenvalue of spin ``i`` in ``a``.  Every module goes through
:func:`apply` / :func:`apply_field` / :func:`build_dense`, so this is the
only place the sign is fixed.

The global parity ``P = prod_i sy_i`` acts as
``(P v)[a] = 1j**N * (-1)**popcount(a) * v[~a]`` and commutes with H.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NotParityEigenstateError, SizeCapError

DENSE_MAX_SPINS = 14
MATFREE_MAX_SPINS = 24
NORM_TOL = 1e-12
PARITY_TOL = 1e-8


def _check_n(n, cap=MATFREE_MAX_SPINS):
    if int(n) != n or n < 2:
        raise ConfigError(f"spin count must be an integer >= 2, got {n!r}")
    if n > cap:
        raise SizeCapError(f"N={n} exceeds the cap of {cap} spins")
    return int(n)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinConfiguration:
    """A single x-basis product configuration."""

    index: int
    n: int

    def __post_init__(self):
        _check_n(self.n)
        if not 0 <= self.index < (1 << self.n):
            raise ConfigError(f"index {self.index} out of range for N={self.n}")

    @classmethod
    def from_string(cls, text):
        """Parse ``"uud"`` / ``"↑↑↓"`` (spin 0 first)."""
        bits = []
        for ch in text:
            if ch in "u↑+0":
                bits.append(0)
            elif ch in "d↓-1":
                bits.append(1)
            else:
                raise ConfigError(f"bad spin character {ch!r} in {text!r}")
        return cls(sum(b << i for i, b in enumerate(bits)), len(bits))

    @property
    def bits(self):
        return tuple((self.index >> i) & 1 for i in range(self.n))

    @property
    def spins(self):
        """x-eigenvalues (+1/-1) per spin."""
        return tuple(1 - 2 * b for b in self.bits)

    def label(self):
        return "".join("↓" if b else "↑" for b in self.bits)

    def classify(self):
        return classify_configuration(self)


def classify_configuration(config):
    """Return one of ``"fm"``, ``"symmetric_afm"``, ``"asymmetric_afm"``, ``"other"``.

    FM: all spins equal.  Symmetric AFM: alternating (Neel) pattern.
    Asymmetric AFM: exactly one domain wall.  For N=3 these three classes
    cover all eight configurations (2 + 2 + 4).
    """
    bits = config.bits
    walls = sum(bits[i] != bits[i + 1] for i in range(len(bits) - 1))
    if walls == 0:
        return "fm"
    if walls == len(bits) - 1:
        return "symmetric_afm"
    if walls == 1:
        return "asymmetric_afm"
    return "other"


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric Ising couplings in Hz with zero diagonal."""

    j: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ConfigError(f"coupling matrix must be square, got shape {j.shape}")
        _check_n(j.shape[0])
        if not np.all(np.isfinite(j)):
            raise ConfigError("coupling matrix has non-finite entries")
        if not np.array_equal(j, j.T):
            raise ConfigError("coupling matrix must be exactly symmetric")
        if np.any(np.diag(j) != 0.0):
            raise ConfigError("coupling matrix must have a zero diagonal")
        object.__setattr__(self, "j", _frozen(j))

    @property
    def n(self):
        return self.j.shape[0]

    @classmethod
    def from_upper(cls, j):
        """Symmetrize from the upper triangle (lower triangle ignored)."""
        j = np.triu(np.asarray(j, dtype=float), 1)
        return cls(j + j.T)

    @classmethod
    def chain3(cls, j1, j2):
        """Mirror-symmetric three-spin chain: J12 = J23 = j1, J13 = j2."""
        return cls(np.array([[0.0, j1, j2], [j1, 0.0, j1], [j2, j1, 0.0]]))

    @classmethod
    def uniform(cls, n, j):
        m = np.full((n, n), float(j))
        np.fill_diagonal(m, 0.0)
        return cls(m)

    def scaled(self, c):
        return CouplingMatrix(self.j * c)

    def abs_sum(self):
        """sum_{i<k} |J_ik|, a bound on the Ising-term spectral radius."""
        return float(np.abs(np.triu(self.j, 1)).sum())

    def __eq__(self, other):
        return isinstance(other, CouplingMatrix) and np.array_equal(self.j, other.j)

    def __hash__(self):
        return hash(self.j.tobytes())

    def to_dict(self):
        return {"n": self.n, "j": self.j.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["j"], dtype=float))


@dataclass(frozen=True, eq=False)
class HamiltonianParams:
    couplings: CouplingMatrix
    b_y: float
    _diag: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.b_y):
            raise ConfigError(f"b_y must be finite, got {self.b_y}")
        object.__setattr__(self, "b_y", float(self.b_y))

    @property
    def n(self):
        return self.couplings.n

    @property
    def dim(self):
        return 1 << self.n

    @property
    def diagonal(self):
        """Ising energies of all basis states, computed once."""
        if self._diag is None:
            d = kernels.ising_diagonal(np.ascontiguousarray(self.couplings.j), self.n)
            object.__setattr__(self, "_diag", _frozen(d))
        return self._diag

    def with_field(self, b_y):
        """Same couplings, new field; reuses the cached diagonal."""
        return HamiltonianParams(self.couplings, b_y, self._diag)

    def scale(self):
        """Upper bound on the spectral radius, used for relative tolerances."""
        return self.couplings.abs_sum() + self.n * abs(self.b_y)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes over the 2**N x-basis configurations."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_n(self.n)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.n,):
            raise ConfigError(f"expected {1 << self.n} amplitudes, got shape {amps.shape}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL:
            raise ConfigError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def normalized(cls, amplitudes, n=None, fix_phase=False):
        amps = np.asarray(amplitudes, dtype=complex)
        if n is None:
            n = int(amps.size).bit_length() - 1
        nrm = np.linalg.norm(amps)
        if nrm == 0.0:
            raise ConfigError("cannot normalize the zero vector")
        amps = amps / nrm
        if fix_phase:
            amps = fix_global_phase(amps)
        return cls(n, amps)

    @classmethod
    def basis(cls, config):
        amps = np.zeros(1 << config.n, dtype=complex)
        amps[config.index] = 1.0
        return cls(config.n, amps)

    @property
    def populations(self):
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other):
        return complex(np.vdot(self.amplitudes, _amps(other)))

    def fidelity(self, other):
        return abs(self.overlap(other)) ** 2


def _amps(v):
    return v.amplitudes if isinstance(v, StateVector) else np.asarray(v)


def fix_global_phase(vec, rel_tol=1e-12):
    """Rotate ``vec`` so its first non-negligible entry is real and positive.

    Works on a single vector or on the columns of a matrix.
    """
    vec = np.asarray(vec, dtype=complex)
    if vec.ndim == 2:
        return np.column_stack([fix_global_phase(c, rel_tol) for c in vec.T]) if vec.shape[1] else vec
    mags = np.abs(vec)
    top = mags.max(initial=0.0)
    if top == 0.0:
        return vec
    first = int(np.argmax(mags > rel_tol * top))
    return vec * (np.conj(vec[first]) / mags[first])


# --- energies and operator application -------------------------------------

def classical_ising_energy(config, couplings):
    """Ising energy of an x-basis configuration (the Hamiltonian at zero field)."""
    if config.n != couplings.n:
        raise ConfigError(f"configuration has N={config.n}, couplings have N={couplings.n}")
    s = np.array(config.spins, dtype=float)
    return float(s @ np.triu(couplings.j, 1) @ s)


def build_dense(params):
    """Dense 2**N x 2**N Hermitian matrix of the Hamiltonian."""
    n = _check_n(params.n, DENSE_MAX_SPINS)
    dim = 1 << n
    idx = np.arange(dim)
    h = np.zeros((dim, dim), dtype=complex)
    h[idx, idx] = params.diagonal
    if params.b_y != 0.0:
        for i in range(n):
            s = 1.0 - 2.0 * ((idx >> i) & 1)
            h[idx, idx ^ (1 << i)] = 1j * params.b_y * s
    return h


def field_operator_dense(n):
    """Dense ``sum_i sy_i``, i.e. dH/dB_y."""
    zero = CouplingMatrix(np.zeros((n, n)))
    return build_dense(HamiltonianParams(zero, 1.0))


def _vector_in(v, dim):
    a = np.ascontiguousarray(_amps(v), dtype=complex)
    if a.shape != (dim,):
        raise ConfigError(f"vector of shape {a.shape} does not match dimension {dim}")
    return a


def apply(params, v, out=None):
    """Matrix-free ``H @ v``; returns an unnormalized complex array.

    Cost is O(N 2**N); no matrix is formed.
    """
    n = _check_n(params.n)
    a = _vector_in(v, params.dim)
    if out is None:
        out = np.empty_like(a)
    return kernels.apply_tfim(params.diagonal, params.b_y, a, out, n)


def apply_field(v, n, out=None):
    """Matrix-free ``(sum_i sy_i) @ v``."""
    n = _check_n(n)
    a = _vector_in(v, 1 << n)
    if out is None:
        out = np.empty_like(a)
    return kernels.apply_field(a, out, n)


def expectation(params, v):
    a = _amps(v)
    return float(np.vdot(a, apply(params, a)).real)


# --- observables ------------------------------------------------------------

def fm_indices(n):
    """Basis indices of all-up and all-down."""
    return (0, (1 << n) - 1)


def populations(v):
    return np.abs(_amps(v)) ** 2


def order_parameter(v, check_norm=True):
    """P(FM): total population of the two fully aligned x-configurations."""
    a = _amps(v)
    n = int(a.size).bit_length() - 1
    p = np.abs(a) ** 2
    if check_norm and abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"order_parameter needs a normalized state (norm^2 = {p.sum()!r})")
    up, down = fm_indices(n)
    return float(p[up] + p[down])


def apply_parity(v, n):
    a = _amps(v)
    idx = np.arange(1 << n)
    pop = _popcount(idx)
    coef = (1j ** n) * (1.0 - 2.0 * (pop & 1))
    return coef * a[idx ^ ((1 << n) - 1)]


def _popcount(idx):
    c = np.zeros_like(idx)
    x = idx.copy()
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def parity_matrix(n):
    """Dense ``prod_i sy_i``; Hermitian and squares to the identity."""
    dim = 1 << n
    return np.column_stack([apply_parity(e, n) for e in np.eye(dim, dtype=complex)])


def parity(v, tol=PARITY_TOL):
    """Global sy-parity sector (+1 or -1) of a parity eigenstate."""
    if isinstance(v, SpinConfiguration):
        v = StateVector.basis(v)
    a = _amps(v)
    n = int(a.size).bit_length() - 1
    nrm = np.linalg.norm(a)
    pa = apply_parity(a, n)
    lam = np.vdot(a, pa).real / nrm**2
    if np.linalg.norm(pa - lam * a) > tol * nrm:
        raise NotParityEigenstateError("state is not an eigenstate of the global parity")
    return 1 if lam > 0 else -1


def field_ground_parity(n, b_y_sign=1):
    """Parity sector of the field-term ground state for a field of given sign."""
    return (-1) ** n if b_y_sign >= 0 else 1
