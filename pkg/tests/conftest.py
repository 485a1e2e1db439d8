import functools

import numpy as np
import pytest

from spinsim import _fallback

try:
    from spinsim import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_fallback, id="python")]
if _kernels is not None:
    BACKENDS.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route spinsim.kernels through one implementation for the test."""
    from spinsim import kernels

    mod = request.param
    for name in ("ising_diagonal", "apply_tfim", "apply_field"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return mod


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _site(op, i, n):
    # bit i of the basis index is kron slot n-1-i
    out = np.eye(1, dtype=complex)
    for slot in range(n):
        out = np.kron(out, op if slot == n - 1 - i else np.eye(2))
    return out


@functools.lru_cache(maxsize=None)
def _x_basis_rotation(n):
    u = np.eye(1, dtype=complex)
    for _ in range(n):
        u = np.kron(u, _HAD)
    return u


def kron_hamiltonian(j, b_y):
    """Textbook Pauli-matrix construction in the z basis, rotated to the x basis."""
    j = np.asarray(j, dtype=float)
    n = j.shape[0]
    h = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        for k in range(i + 1, n):
            h += j[i, k] * _site(_SX, i, n) @ _site(_SX, k, n)
        h += b_y * _site(_SY, i, n)
    u = _x_basis_rotation(n)
    return u.conj().T @ h @ u


def random_couplings(rng, n, scale=1.0):
    a = rng.normal(scale=scale, size=(n, n))
    a = np.triu(a, 1)
    return a + a.T


# --- acceptance reporting -----------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
