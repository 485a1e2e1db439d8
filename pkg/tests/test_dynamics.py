import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from spinsim import dynamics as dyn
from spinsim import hamiltonian as ham
from spinsim.errors import ConfigError
from conftest import kron_hamiltonian, random_couplings

C3 = ham.CouplingMatrix.chain3(-1e3, -2e3)


def test_krylov_matches_dense_expm(backend):
    rng = np.random.default_rng(1)
    p = ham.HamiltonianParams(ham.CouplingMatrix(random_couplings(rng, 6)), 0.8)
    v = rng.normal(size=64) + 1j * rng.normal(size=64)
    for t in (0.01, 0.3, 1.0):
        want = expm(-1j * t * ham.build_dense(p)) @ v
        np.testing.assert_allclose(dyn.krylov_expm_apply(p, v, t), want, atol=1e-11)


def test_initial_state_is_field_ground_state():
    for sign in (1, -1):
        psi = dyn.initial_state(3, sign)
        h = kron_hamiltonian(np.zeros((3, 3)), sign * 1.0)
        assert np.vdot(psi.amplitudes, h @ psi.amplitudes).real == pytest.approx(-3.0)
        assert ham.parity(psi) == ham.field_ground_parity(3, sign)
    assert ham.order_parameter(dyn.initial_state(3)) == pytest.approx(0.25)


def test_constant_ramp_is_exact_exponential():
    ramp = dyn.RampProfile("constant", 700.0, 4e-4)
    psi0 = dyn.initial_state(3).amplitudes
    got = dyn.evolve_state(C3, ramp, psi0, [4e-4])[0]
    h = kron_hamiltonian(C3.j, 700.0)
    np.testing.assert_allclose(got, expm(-2j * math.pi * 4e-4 * h) @ psi0, atol=1e-10)


def test_time_dependent_against_ode_solver():
    ramp = dyn.RampProfile("exp_offset", 1e4, 1.5e-4, tau=3e-5, b=500.0)
    psi0 = dyn.initial_state(3).amplitudes
    h0 = kron_hamiltonian(C3.j, 0.0)
    hy = kron_hamiltonian(np.zeros((3, 3)), 1.0)

    def rhs(t, y):
        return -2j * math.pi * ((h0 + float(ramp.field(t)) * hy) @ y)

    ref = solve_ivp(rhs, (0, 1.5e-4), psi0.astype(complex), method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    got = dyn.evolve_state(C3, ramp, psi0, [1.5e-4])[0]
    assert abs(np.vdot(ref, got)) ** 2 == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(got, ref, atol=1e-7)


def test_self_convergence_fourth_order():
    ramp = dyn.RampProfile("exp_offset", 1e4, 1e-4, tau=3e-5, b=500.0)
    psi0 = dyn.initial_state(3).amplitudes
    ref = dyn.evolve_state(C3, ramp, psi0, [1e-4], dt=2.5e-8)[0]
    e1 = np.linalg.norm(dyn.evolve_state(C3, ramp, psi0, [1e-4], dt=2e-6)[0] - ref)
    e2 = np.linalg.norm(dyn.evolve_state(C3, ramp, psi0, [1e-4], dt=1e-6)[0] - ref)
    assert e2 < e1 / 10  # ~16 for fourth order
    default = dyn.evolve_state(C3, ramp, psi0, [1e-4])[0]
    assert np.linalg.norm(default - ref) < 1e-6


def test_norm_is_preserved():
    rec = dyn.propagate(C3, dyn.RAMP_PRESETS["experiment"], samples=31)
    assert rec.norm_error < 1e-9
    np.testing.assert_allclose(rec.populations.sum(axis=1), 1.0, atol=1e-9)


def test_uncoupled_spins_stay_in_field_ground_state():
    c = ham.CouplingMatrix(np.zeros((3, 3)))
    ramp = dyn.RAMP_PRESETS["experiment"]
    rec = dyn.propagate(c, ramp, samples=11)
    np.testing.assert_allclose(rec.fidelity, 1.0, atol=1e-9)
    assert dyn.roundtrip_return_probability(c, ramp) == pytest.approx(1.0, abs=1e-9)


def test_roundtrip_slow_ramp_returns():
    # the sudden switch-on already leaves ~0.4% outside the ground state, so
    # even a perfectly adiabatic round trip returns slightly less than 1
    c = ham.CouplingMatrix.chain3(-1e3, -2e3)
    slow = dyn.roundtrip_return_probability(c, dyn.RampProfile("linear", 1e4, 2e-3))
    fast = dyn.roundtrip_return_probability(c, dyn.RampProfile("linear", 1e4, 2e-4))
    assert slow > 0.97 and fast < slow - 0.1


class TestRamp:
    def test_rate_is_derivative(self):
        for r in (dyn.RAMP_PRESETS["experiment"], dyn.RampProfile("linear", 5.0, 2.0)):
            t = np.linspace(0.1, 0.9, 5) * r.t_end
            h = 1e-6 * r.t_end
            num = (r.field(t + h) - r.field(t - h)) / (2 * h)
            np.testing.assert_allclose(r.rate(t), num, rtol=1e-6)

    def test_time_at_field_inverts(self):
        r = dyn.RAMP_PRESETS["experiment"]
        for t in (0.0, 1e-5, 7e-5, 2e-4):
            assert r.time_at_field(float(r.field(t))) == pytest.approx(t, abs=1e-12)
        with pytest.raises(ConfigError):
            r.time_at_field(100.0)

    def test_reversed(self):
        r = dyn.RampProfile("linear", 5.0, 2.0)
        rev = r.reversed()
        assert rev.field(0.5) == pytest.approx(r.field(1.5))
        assert rev.rate(0.5) == pytest.approx(-r.rate(1.5))

    def test_validation_and_round_trip(self):
        with pytest.raises(ConfigError):
            dyn.RampProfile("pure_exp", 1.0, 1.0)
        with pytest.raises(ConfigError):
            dyn.RampProfile("cubic", 1.0, 1.0)
        with pytest.raises(ConfigError):
            dyn.RampProfile("linear", 1.0, 1.0, b=2.0)
        r = dyn.RAMP_PRESETS["experiment"]
        assert dyn.RampProfile.from_dict(r.to_dict()) == r


def test_sample_time_checks():
    r = dyn.RAMP_PRESETS["experiment"]
    psi0 = dyn.initial_state(3)
    with pytest.raises(ConfigError):
        dyn.evolve_state(C3, r, psi0, [2e-4, 1e-4])
    with pytest.raises(ConfigError):
        dyn.evolve_state(C3, r, psi0, [1.0])


def _brute_noisy_pfm(p, f):
    n = int(p.size).bit_length() - 1
    total = 0.0
    for a in range(p.size):
        for flips in range(p.size):
            k = bin(flips).count("1")
            out = a ^ flips
            if out in (0, p.size - 1):
                total += p[a] * (1 - f) ** k * f ** (n - k)
    return total


def test_noisy_expectation_closed_form():
    rng = np.random.default_rng(4)
    p = rng.random(8)
    p /= p.sum()
    assert dyn.noisy_pfm_expectation(p, 0.97) == pytest.approx(_brute_noisy_pfm(p, 0.97), rel=1e-12)


def test_shots_are_seeded_and_unbiased():
    psi = dyn.initial_state(3)
    model = dyn.MeasurementModel(40000, 0.97, rng_seed=123)
    c1, c2 = dyn.measure_shots(psi, model), dyn.measure_shots(psi, model)
    np.testing.assert_array_equal(c1, c2)
    assert c1.sum() == 40000
    est = dyn.estimate_pfm(c1)
    mean = dyn.noisy_pfm_expectation(psi.populations, 0.97)
    assert abs(est - mean) < 4 * math.sqrt(mean * (1 - mean) / 40000)


def test_perfect_readout_of_fm_state():
    amps = np.zeros(8, complex)
    amps[7] = 1.0
    counts = dyn.measure_shots(amps, dyn.MeasurementModel(100, 1.0, 0))
    assert counts[7] == 100


def test_measurement_validation():
    with pytest.raises(ConfigError):
        dyn.MeasurementModel(0)
    with pytest.raises(ConfigError):
        dyn.MeasurementModel(10, 0.4)


def test_task_seeds_distinct_and_stable():
    seeds = {dyn.task_seed(7, t) for t in range(50)}
    assert len(seeds) == 50
    assert dyn.task_seed(7, 3) == dyn.task_seed(7, 3)


def test_records_round_trip():
    rec = dyn.propagate(C3, dyn.RAMP_PRESETS["experiment"], samples=5)
    assert dyn.EvolutionRecord.from_dict(rec.to_dict()) == rec
    shots = dyn.ShotRecord(dyn.measure_shots(rec.final_state, dyn.MeasurementModel()), dyn.MeasurementModel())
    assert dyn.ShotRecord.from_dict(shots.to_dict()) == shots
