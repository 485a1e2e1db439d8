import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants

from spinsim import ion_chain as ic
from spinsim.errors import BracketError, ConfigError, PoleWindowError
from spinsim.hamiltonian import CouplingMatrix

NU_T = 4.334e6


def test_two_and_three_ion_positions():
    np.testing.assert_allclose(ic.equilibrium_positions(2), [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], atol=1e-12)
    x = (5 / 4) ** (1 / 3)
    np.testing.assert_allclose(ic.equilibrium_positions(3), [-x, 0.0, x], atol=1e-12)


@pytest.mark.parametrize("n", [4, 9, 20])
def test_positions_balance_forces(n):
    u = ic.equilibrium_positions(n)
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    assert np.max(np.abs(u - np.sum(np.sign(d) / d**2, axis=1))) < 1e-10
    np.testing.assert_allclose(u, -u[::-1], atol=1e-12)


@pytest.mark.parametrize("nu_z", [0.5e6, 1.2e6, 1.48e6])
def test_three_ion_modes_closed_form(nu_z):
    # transverse eigenvalues for three ions: 1, 1 - a, 1 - 12a/5 with a = (nu_z/nu_t)^2
    a = (nu_z / NU_T) ** 2
    f = ic.transverse_modes(ic.TrapConfig(3, NU_T, nu_z)).freqs
    np.testing.assert_allclose(f, NU_T * np.sqrt([1.0, 1.0 - a, 1.0 - 2.4 * a]), rtol=1e-12)


def test_mode_vectors_orthonormal_com_first():
    m = ic.transverse_modes(ic.TrapConfig(5, NU_T, 0.8e6))
    np.testing.assert_allclose(m.b.T @ m.b, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(m.b[:, 0], np.full(5, 1 / math.sqrt(5)), atol=1e-12)
    assert np.all(np.diff(m.freqs) < 0)
    assert ic.ModeData.from_dict(m.to_dict()) == m


def test_zigzag_instability():
    with pytest.raises(ConfigError, match="zigzag"):
        ic.transverse_modes(ic.TrapConfig(3, NU_T, 0.7 * NU_T))


def test_axial_fit_recovers_synthetic_value():
    truth = ic.transverse_modes(ic.TrapConfig(3, NU_T, 1.3e6)).freqs
    assert ic.fit_axial_frequency(3, NU_T, truth) == pytest.approx(1.3e6, abs=1.0)


def test_lamb_dicke_com_value():
    trap = ic.TrapConfig(3, NU_T, 1.4e6)
    eta = ic.lamb_dicke(trap, ic.transverse_modes(trap))
    omega = 2 * math.pi * NU_T
    want = trap.delta_k * math.sqrt(constants.hbar / (2 * trap.ion_mass * omega)) / math.sqrt(3)
    np.testing.assert_allclose(eta[:, 0], want, rtol=1e-12)


def _setup(mu=4.5e6, rabi=1e5):
    trap = ic.TrapConfig(3, NU_T, 1.45e6)
    return trap, ic.transverse_modes(trap), ic.DriveConfig.uniform(3, rabi, mu)


def test_couplings_match_explicit_sum():
    trap, modes, drive = _setup(mu=3.9e6)
    eta = ic.lamb_dicke(trap, modes)
    j = ic.ising_couplings(trap, modes, drive).j
    for i in range(3):
        for k in range(3):
            if i == k:
                assert j[i, k] == 0.0
                continue
            want = sum(
                1e10 * eta[i, m] * eta[k, m] * modes.freqs[m] / (drive.mu**2 - modes.freqs[m] ** 2)
                for m in range(3)
            )
            assert j[i, k] == pytest.approx(want, rel=1e-12)


def test_detuning_above_com_gives_uniform_couplings():
    # mu^2 > nu_m^2 for every mode: all couplings positive, ratio -> 1 as COM dominates
    trap, modes, _ = _setup()
    ratios = []
    for d in (300e3, 100e3, 60e3):
        j = ic.ising_couplings(trap, modes, ic.DriveConfig.uniform(3, 1e5, NU_T + d))
        assert np.all(j.j[np.triu_indices(3, 1)] > 0)
        ratios.append(ic.coupling_ratio(j))
    assert ratios == sorted(ratios) and 0.5 < ratios[-1] < 1.0


def test_couplings_scale_with_rabi_squared():
    trap, modes, d1 = _setup(rabi=5e4)
    j1 = ic.ising_couplings(trap, modes, d1).j
    j2 = ic.ising_couplings(trap, modes, ic.DriveConfig.uniform(3, 1e5, d1.mu)).j
    np.testing.assert_allclose(j2, 4 * j1, rtol=1e-12)


def test_pole_window_rejection_mentions_regime_check():
    trap, modes, _ = _setup()
    drive = ic.DriveConfig.uniform(3, 1e5, modes.freqs[1] + 50.0)
    with pytest.raises(PoleWindowError, match="validate_regime"):
        ic.ising_couplings(trap, modes, drive)


def test_regime_report():
    trap, modes, drive = _setup(mu=4.5e6)
    rep = ic.validate_regime(trap, modes, drive)
    eta = np.abs(ic.lamb_dicke(trap, modes))
    want = np.min(np.abs(modes.freqs - drive.mu)[None, :] / (eta * 1e5))
    assert rep.min_ratio == pytest.approx(want) and rep.ok
    near = ic.DriveConfig.uniform(3, 1e5, modes.freqs[0] + 15e3)
    assert not ic.validate_regime(trap, modes, near).ok


@settings(max_examples=10, deadline=None)
@given(target=st.floats(0.7, 4.5))
def test_detuning_solve_hits_ratio(target):
    trap = ic.TrapConfig(3, NU_T, ic.fit_axial_frequency(3, NU_T, ic.MEASURED_MODE_FREQS))
    modes = ic.transverse_modes(trap)
    drive = ic.DriveConfig.uniform(3, 1e5, 4e6)
    win = ic.pole_windows(ic.lamb_dicke(trap, modes), drive)
    interval = (modes.freqs[2] + 1.01 * win[2], modes.freqs[1] - 1.01 * win[1])
    mu = ic.solve_detuning_for_ratio(target, trap, modes, drive, interval)
    assert ic.coupling_ratio(ic.ising_couplings(trap, modes, drive.with_mu(mu))) == pytest.approx(target, rel=1e-6)


def test_detuning_solve_unbracketed():
    trap, modes, drive = _setup()
    with pytest.raises(BracketError):
        ic.solve_detuning_for_ratio(50.0, trap, modes, drive, (4.5e6, 4.6e6))


def test_trap_validation():
    with pytest.raises(ConfigError):
        ic.TrapConfig(1, NU_T, 1e6)
    with pytest.raises(ConfigError):
        ic.TrapConfig(3, -1.0, 1e6)
    with pytest.raises(ConfigError):
        ic.DriveConfig((1e5, -1.0), 4e6)
    assert isinstance(ic.ising_couplings(*_setup()), CouplingMatrix)
