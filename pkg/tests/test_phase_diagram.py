import numpy as np
import pytest

from spinsim import hamiltonian as ham
from spinsim import phase_diagram as pd
from spinsim.dynamics import propagate
from spinsim.errors import ConfigError


def _pfm(ratio, field):
    c = ham.CouplingMatrix.chain3(-1.0, ratio)
    return pd.ground_pfm(ham.HamiltonianParams(c, field))


def test_zero_field_limits():
    assert _pfm(-2.0, 0.0) == pytest.approx(1.0)
    assert _pfm(3.0, 0.0) == pytest.approx(0.0, abs=1e-14)
    # six-fold point: two of six degenerate configurations are FM
    assert _pfm(1.0, 0.0) == pytest.approx(1.0 / 3.0)


def test_strong_field_tends_to_uniform():
    for r in (-3.6, 0.62, 4.2):
        assert _pfm(r, 1e4) == pytest.approx(0.25, abs=1e-3)


def test_degenerate_point():
    pt = pd.locate_degenerate_point(-1e3)
    assert pt.ratio == pytest.approx(1.0)
    assert pt.classes == {"fm": 2, "asymmetric_afm": 4}
    assert pt.frustrated and len(pt.configurations) == 6
    brute = pd.brute_force_ground_configs(ham.CouplingMatrix.chain3(-1e3, pt.ratio * 1e3))
    assert [s.index for s in brute] == [s.index for s in pt.configurations]


def test_brute_force_matches_dense_ground():
    rng = np.random.default_rng(3)
    for _ in range(5):
        j = rng.normal(size=(4, 4))
        c = ham.CouplingMatrix.from_upper(j)
        configs = pd.brute_force_ground_configs(c)
        w = np.linalg.eigvalsh(ham.build_dense(ham.HamiltonianParams(c, 0.0)))
        assert ham.classical_ising_energy(configs[0], c) == pytest.approx(w[0])
        assert len(configs) == int(np.sum(w - w[0] < 1e-9))


def test_grid_shape_rows_and_workers():
    g1 = pd.compute_grid(-1e3, [-2.0, 0.5, 3.0], [0.1, 1.0])
    g4 = pd.compute_grid(-1e3, [-2.0, 0.5, 3.0], [0.1, 1.0], workers=4)
    assert g1 == g4
    assert g1.values.shape == (3, 2)
    assert len(g1.rows()) == 6
    assert pd.PhaseGrid.from_dict(g1.to_dict()) == g1
    assert g1.values[0, 0] == pytest.approx(_pfm(-2.0, 0.1))


def test_grid_depends_only_on_ratios():
    a = pd.compute_grid(-1e3, [-1.3, 0.9], [0.3, 2.0])
    b = pd.compute_grid(-2.5, [-1.3, 0.9], [0.3, 2.0])
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_default_grid_shape():
    g = pd.compute_grid(-1e3)
    assert g.values.shape == (pd.default_ratio_axis().size, pd.default_field_axis().size)


def test_protocol_mode_matches_direct_propagation():
    ramp = pd.default_protocol_ramp(1e3)
    fields = [5.0, 1.0, 0.2]
    g = pd.compute_grid(-1e3, [-1.3], fields, mode="adiabatic_protocol")
    c = ham.CouplingMatrix.chain3(-1e3, -1.3e3)
    times = sorted(ramp.time_at_field(f * 1e3) for f in fields)
    rec = propagate(c, ramp, sample_times=times)
    np.testing.assert_allclose(g.values[0], rec.p_fm, atol=1e-12)
    assert g.meta["ramp"] == ramp.to_dict()


def test_cuts():
    cut = pd.cut_fixed_ratio(-1e3, -1.3, np.linspace(0.1, 3.0, 30))
    assert cut.kind == "fixed_ratio" and cut.values.size == 30
    jump, where = cut.max_jump()
    assert jump == pytest.approx(np.max(np.abs(np.diff(cut.values))))
    fc = pd.cut_fixed_field(-1e3, 0.0, np.arange(0.5, 1.5, 0.25))
    np.testing.assert_allclose(fc.values, [1.0, 1.0, 1 / 3, 0.0], atol=1e-12)


def test_validation():
    with pytest.raises(ConfigError):
        pd.compute_grid(1.0)
    with pytest.raises(ConfigError):
        pd.compute_grid(-1.0, mode="mean_field")
    with pytest.raises(ConfigError):
        pd.compute_grid(-1.0, fields=[-0.1])
