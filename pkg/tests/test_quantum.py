import json

import numpy as np
import pytest

from swapnpa.moments import prepare
from swapnpa.quantum import (
    PAULIS,
    NoiseModel,
    NormalizationError,
    QuantumSetup,
    SetupError,
    apply_noise,
    bell_povm,
    charlie_marginals,
    compute_probabilities,
    correlators,
    critical_visibility,
    dump_moments,
    moment_vector,
    projector,
    standard_setup,
)
from swapnpa.scenario import CoefficientMatrix, DomainError, Scenario, evaluate_F

SC33 = Scenario(3, 3, 2, True)
SC34 = Scenario(3, 4, 2, True)


def random_density(rng, product=False):
    if product:
        a, b = (random_density_qubit(rng) for _ in range(2))
        return np.kron(a, b)
    G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_density_qubit(rng):
    G = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_observable(rng):
    v = rng.normal(size=3)
    return sum(c * s for c, s in zip(v / np.linalg.norm(v) * rng.uniform(0, 1), PAULIS))


def random_setup(rng, m=3, n=3):
    return QuantumSetup(
        rho_AB1=random_density(rng),
        rho_B2C=random_density(rng),
        alice_observables=tuple(random_observable(rng) for _ in range(m)),
        bob_povm=bell_povm(),
        charlie_observables=tuple(random_observable(rng) for _ in range(n)),
    )


def test_bell_povm_is_complete_and_projective():
    B = bell_povm()
    assert np.allclose(sum(B), np.eye(4), atol=1e-14)
    for P in B:
        assert np.allclose(P @ P, P, atol=1e-14)
        assert np.trace(P).real == pytest.approx(1.0)


def test_last_outcome_is_singlet():
    singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
    assert np.allclose(bell_povm()[3], projector(singlet))


def test_standard_alice_observables(E33):
    s = standard_setup(SC33, E33)
    for O, P in zip(s.alice_observables, PAULIS):
        assert np.array_equal(O, P)


def test_standard_charlie_table_34(E34):
    s = standard_setup(SC34, E34)
    table = np.array([[1, -1, -1], [-1, 1, -1], [-1, -1, 1], [-1, -1, -1]]) / np.sqrt(3)
    for C, row in zip(s.charlie_observables, table):
        assert np.allclose(C, sum(c * P for c, P in zip(row, PAULIS)), atol=1e-15)
        assert np.allclose(C @ C, np.eye(2), atol=1e-14)


def test_zero_column_rejected():
    with pytest.raises(NormalizationError):
        standard_setup(SC33, CoefficientMatrix([[1, 0, 1], [1, 0, 1], [1, 0, 1]]))


@pytest.mark.parametrize("name,expected", [("paper-33a", 2.328346), ("paper-33b", 2.327605), ("paper-34", 4 * np.sqrt(3))])
def test_standard_setup_values(name, expected):
    from swapnpa.presets import preset

    E = preset(name)
    sc = Scenario(3, E.shape[1], 2, True)
    assert evaluate_F(E, correlators(standard_setup(sc, E))) == pytest.approx(expected, abs=1e-6)


def test_reported_complex_value(E33):
    assert evaluate_F(E33, correlators(standard_setup(SC33, E33))) == pytest.approx(2.3283, abs=1e-4)


def test_probabilities_normalize(rng):
    p = compute_probabilities(random_setup(rng)).values
    assert np.allclose(p.sum(axis=(0, 1, 2)), 1.0, atol=1e-12)


def test_maximally_mixed_links(rng):
    s = random_setup(rng)
    mixed = QuantumSetup(np.eye(4) / 4, np.eye(4) / 4, s.alice_observables, s.bob_povm, s.charlie_observables)
    p = compute_probabilities(mixed).values
    pb = np.array([np.trace(B).real / 4 for B in mixed.bob_povm])
    assert np.allclose(p, pb[None, :, None, None, None] / 4, atol=1e-14)


def test_correlator_sum_bound(rng):
    for _ in range(5):
        S = correlators(random_setup(rng)).values
        assert np.all(np.abs(S).sum(axis=0) <= 1 + 1e-12)


def test_independence_identity(rng):
    for _ in range(5):
        s = random_setup(rng)
        p = compute_probabilities(s).values
        pac = p.sum(axis=1)
        pa = p.sum(axis=(1, 2))[:, None]
        pc = p.sum(axis=(0, 1))[None, :]
        assert np.max(np.abs(pac - pa * pc)) < 1e-10


def test_noise_identity_values(E33):
    s = standard_setup(SC33, E33)
    S0 = correlators(s).values
    S1 = correlators(apply_noise(s, NoiseModel(0.95, 0.9))).values
    assert np.allclose(S1, 0.81225 * S0, atol=1e-12, rtol=0)


def test_noise_extremes(E33):
    s = standard_setup(SC33, E33)
    same = apply_noise(s, NoiseModel(1.0, 1.0))
    assert np.allclose(same.rho_AB1, s.rho_AB1) and all(np.allclose(a, b) for a, b in zip(same.bob_povm, s.bob_povm))
    dead = apply_noise(s, NoiseModel(0.0, 1.0))
    assert evaluate_F(E33, correlators(dead)) == pytest.approx(0.0, abs=1e-14)


def test_noise_domain_and_nonstandard(rng):
    with pytest.raises(DomainError):
        NoiseModel(1.2, 1.0)
    with pytest.raises(SetupError):
        apply_noise(random_setup(rng), NoiseModel(0.9, 0.9))


def test_setup_invariants_checked(E33):
    s = standard_setup(SC33, E33)
    with pytest.raises(SetupError):
        QuantumSetup(2 * s.rho_AB1, s.rho_B2C, s.alice_observables, s.bob_povm, s.charlie_observables)
    with pytest.raises(SetupError):
        QuantumSetup(s.rho_AB1, s.rho_B2C, s.alice_observables, s.bob_povm[:3] + (s.bob_povm[0],),
                     s.charlie_observables)
    with pytest.raises(SetupError):
        QuantumSetup(s.rho_AB1, s.rho_B2C, (2 * PAULIS[0],), s.bob_povm, s.charlie_observables)


def test_json_round_trip(rng):
    s = random_setup(rng)
    t = QuantumSetup.from_json(s.to_json())
    assert np.allclose(t.rho_AB1, s.rho_AB1, atol=0) and np.allclose(t.charlie_observables[2], s.charlie_observables[2])
    assert json.loads(s.to_json())["rho_AB1"][0][0] == [s.rho_AB1[0, 0].real, s.rho_AB1[0, 0].imag]


@pytest.mark.parametrize("R,vE,vI", [(0.8847, 0.940585, 0.8847), (0.9077, np.sqrt(0.9077), 0.9077)])
def test_critical_visibility(R, vE, vI):
    out = critical_visibility(R)
    assert out["v_E_at_v_I_1"] == pytest.approx(vE, abs=5e-6)
    assert out["v_E_at_v_I_1"] ** 2 == pytest.approx(R, abs=1e-12)
    assert out["v_I_at_v_E_1"] == vI


def test_critical_visibility_limits():
    assert critical_visibility(1 - 1e-12)["v_E_at_v_I_1"] == pytest.approx(1.0)
    for bad in (0.0, 1.0, 1.3, -0.1):
        with pytest.raises(DomainError):
            critical_visibility(bad)


def test_charlie_marginals_of_bell_pair(E33):
    assert charlie_marginals(standard_setup(SC33, E33)) == pytest.approx([0.5, 0.5, 0.5])


def test_moment_dump(E33):
    sc = Scenario(3, 3, 1, True)
    prob = prepare(sc, E33)
    s = standard_setup(sc, E33)
    dump = dump_moments(s, prob)
    assert len(dump) == prob.n_vars
    assert sum(dump[f"{b}|I|I"] for b in range(1, 5)) == pytest.approx(1.0)
    d = moment_vector(s, prob)
    assert sorted(dump.values()) == pytest.approx(sorted(d))
