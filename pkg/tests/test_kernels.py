import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import spinsim
from spinsim import _fallback, kernels
from conftest import _kernels, random_couplings

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def test_backend_flag_is_known():
    assert kernels.BACKEND in ("cython", "python")
    assert spinsim.BACKEND == kernels.BACKEND


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("SPINSIM_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python"
        assert mod.apply_tfim is _fallback.apply_tfim
    finally:
        monkeypatch.delenv("SPINSIM_PURE_PYTHON")
        importlib.reload(kernels)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 11, 12])
def test_diagonal_matches_direct_sum(backend, n):
    rng = np.random.default_rng(n)
    j = np.ascontiguousarray(random_couplings(rng, n))
    d = backend.ising_diagonal(j, n)
    for a in rng.integers(0, 1 << n, size=20):
        s = 1.0 - 2.0 * ((a >> np.arange(n)) & 1)
        assert d[a] == pytest.approx(s @ np.triu(j, 1) @ s, abs=1e-12)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 13), b=st.floats(-5, 5), seed=st.integers(0, 2**32 - 1))
def test_compiled_matches_fallback(n, b, seed):
    rng = np.random.default_rng(seed)
    j = np.ascontiguousarray(random_couplings(rng, n))
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    d_c, d_p = _kernels.ising_diagonal(j, n), _fallback.ising_diagonal(j, n)
    np.testing.assert_allclose(d_c, d_p, rtol=0, atol=1e-12 * max(1.0, np.abs(j).sum()))
    out_c = _kernels.apply_tfim(d_p, b, v, np.empty_like(v), n)
    out_p = _fallback.apply_tfim(d_p, b, v, np.empty_like(v), n)
    np.testing.assert_allclose(out_c, out_p, rtol=0, atol=1e-12 * np.abs(out_p).max())
    f_c = _kernels.apply_field(v, np.empty_like(v), n)
    f_p = _fallback.apply_field(v, np.empty_like(v), n)
    np.testing.assert_allclose(f_c, f_p, rtol=0, atol=1e-12 * np.abs(f_p).max())


@needs_ext
def test_compiled_tiling_boundary():
    # sizes straddling the in-cache tile width
    rng = np.random.default_rng(3)
    for n in (9, 10, 11, 14):
        v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        np.testing.assert_allclose(
            _kernels.apply_field(v, np.empty_like(v), n), _fallback.apply_field(v, np.empty_like(v), n), atol=1e-12
        )
