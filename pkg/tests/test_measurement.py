import numpy as np
import pytest
from scipy.stats import chi2

from qwalk.measurement import (
    ReadoutModel,
    ShotCounts,
    effective_temperature,
    overlap_fidelity,
    post_select,
    sample_shots,
    thermal_excited_probability,
)
from qwalk.sector import QuantumState, basis_state, enumerate_basis


def test_perfect_readout_basis_state():
    b = enumerate_basis(2, 1)
    counts = sample_shots(basis_state(b, {0}), ReadoutModel.perfect(2), 1000, seed=1)
    assert counts.counts == {"10": 1000}


def test_readout_fidelity_one_statistics():
    # one qubit prepared excited; observed "1" frequency tracks F1 = 0.919
    b = enumerate_basis(1, 1)
    model = ReadoutModel.uniform(1, f0=1.0, f1=0.919)
    n = 50000
    counts = sample_shots(basis_state(b, {0}), model, n, seed=3)
    freq = counts.counts.get("1", 0) / n
    sigma = np.sqrt(0.919 * 0.081 / n)
    assert abs(freq - 0.919) < 3 * sigma


def test_born_rule_equal_superposition():
    b = enumerate_basis(2, 1)
    plus = QuantumState(b, np.array([1, 1]) / np.sqrt(2))
    n = 50000
    counts = sample_shots(plus, ReadoutModel.perfect(2), n, seed=9)
    for bits in ("01", "10"):
        freq = counts.counts[bits] / n
        assert abs(freq - 0.5) < 3 * np.sqrt(0.25 / n)


def test_sampling_deterministic_in_seed():
    b = enumerate_basis(3, 1)
    s = QuantumState(b, np.array([0.5, 0.5, np.sqrt(0.5)]))
    model = ReadoutModel.uniform(3, 0.97, 0.92, 0.01)
    a = sample_shots(s, model, 2000, seed=4)
    c = sample_shots(s, model, 2000, seed=4)
    assert a.counts == c.counts
    assert a.counts != sample_shots(s, model, 2000, seed=5).counts


def test_sample_shots_validation():
    b = enumerate_basis(2, 1)
    with pytest.raises(ValueError):
        sample_shots(basis_state(b, {0}), ReadoutModel.perfect(2), 0, seed=1)
    with pytest.raises(ValueError):
        sample_shots(basis_state(b, {0}), ReadoutModel.perfect(3), 10, seed=1)


def test_chi_square_goodness_of_fit_three_sites():
    rng = np.random.default_rng(12)
    b = enumerate_basis(3, 1)
    amp = rng.normal(size=3) + 1j * rng.normal(size=3)
    amp /= np.linalg.norm(amp)
    state = QuantumState(b, amp)
    n = 50000
    counts = sample_shots(state, ReadoutModel.perfect(3), n, seed=100)
    p = np.abs(amp) ** 2
    strings = [b.occupation_string(v) for v in b.states]
    observed = np.array([counts.counts.get(s, 0) for s in strings], dtype=float)
    expected = n * p
    stat = float(np.sum((observed - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=len(strings) - 1)


def test_post_select_definition():
    counts = ShotCounts({"11": 5, "10": 3, "00": 2}, 10, 2)
    kept, retention = post_select(counts, 2)
    assert kept.counts == {"11": 5}
    assert retention == pytest.approx(0.5)


def test_post_select_perfect_readout_keeps_everything():
    b = enumerate_basis(4, 2)
    rng = np.random.default_rng(2)
    amp = rng.normal(size=b.dimension) + 1j * rng.normal(size=b.dimension)
    amp /= np.linalg.norm(amp)
    counts = sample_shots(QuantumState(b, amp), ReadoutModel.perfect(4), 5000, seed=8)
    kept, retention = post_select(counts, 2)
    assert retention == 1.0
    assert kept.counts == counts.counts


def test_post_select_zero_retention_is_error():
    with pytest.raises(ValueError):
        post_select(ShotCounts({"00": 4}, 4, 2), 2)


def test_post_selected_populations_match_conditional_born():
    b = enumerate_basis(3, 1)
    state = QuantumState(b, np.array([np.sqrt(0.5), np.sqrt(0.3), np.sqrt(0.2)]))
    counts = sample_shots(state, ReadoutModel.perfect(3), 50000, seed=77)
    kept, _ = post_select(counts, 1)
    pops = kept.populations()
    # states ascend "001","010","100" -> site populations reverse the amplitudes
    assert np.allclose(pops, [0.2, 0.3, 0.5], atol=0.01)


def test_shot_counts_round_trip():
    counts = ShotCounts({"010": 3, "100": 7}, 10, 3)
    again = ShotCounts.from_lines(counts.to_lines(), 3)
    assert again.counts == counts.counts and again.n_shots == 10


def test_overlap_fidelity_examples():
    assert overlap_fidelity([0.2, 0.8], [0.2, 0.8]) == pytest.approx(1.0)
    assert overlap_fidelity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert overlap_fidelity([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5)


def test_overlap_fidelity_properties():
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = rng.random(6)
        q = rng.random(6)
        f = overlap_fidelity(p, q)
        assert 0.0 <= f <= 1.0 + 1e-12
        assert f == pytest.approx(overlap_fidelity(q, p))
        assert f == pytest.approx(overlap_fidelity(3.7 * p, 0.2 * q))
    with pytest.raises(ValueError):
        overlap_fidelity([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        overlap_fidelity([1.0], [0.5, 0.5])


def test_effective_temperature_examples():
    # 66 mK at 5 GHz sits near a 2.6% excited fraction
    p = thermal_excited_probability(66.0, 5.0)
    assert p == pytest.approx(0.026, abs=2e-3)
    assert effective_temperature(p, 5.0) == pytest.approx(66.0, rel=1e-9)
    # colder means exponentially less excitation
    assert thermal_excited_probability(10.0, 5.0) < 1e-4


def test_effective_temperature_round_trip():
    for t in (20.0, 66.0, 150.0):
        p = thermal_excited_probability(t, 5.0)
        assert effective_temperature(p, 5.0) == pytest.approx(t, rel=1e-9)


def test_effective_temperature_domain():
    with pytest.raises(ValueError):
        effective_temperature(0.6, 5.0)
    with pytest.raises(ValueError):
        effective_temperature(0.0, 5.0)


def test_thermal_excitation_inflates_weight():
    b = enumerate_basis(10, 1)
    model = ReadoutModel.uniform(10, f0=1.0, f1=1.0, thermal=0.2)
    counts = sample_shots(basis_state(b, {0}), model, 20000, seed=6)
    heavy = sum(c for bits, c in counts.counts.items() if bits.count("1") > 1)
    assert heavy / 20000 > 0.5  # 9 idle qubits at 20% each


def test_readout_model_validation():
    with pytest.raises(ValueError):
        ReadoutModel.uniform(2, f0=1.2)


def test_readout_model_from_device():
    from qwalk.device import default_device

    device = default_device()
    sites = device.functional_qubits[:4]
    model = ReadoutModel.from_device(device, sites)
    assert np.allclose(model.f0, 0.966) and np.allclose(model.f1, 0.919)
    assert np.allclose(model.thermal_excitation, 0.0)
    warm = ReadoutModel.from_device(device, sites, thermal_from_temperature=True)
    assert np.all(warm.thermal_excitation > 0.02) and np.all(warm.thermal_excitation < 0.04)


def test_post_select_exact_on_pure_bitstring():
    # single-support state: post-selected populations equal the conditional
    # Born distribution exactly
    b = enumerate_basis(4, 2)
    counts = sample_shots(basis_state(b, {1, 3}), ReadoutModel.perfect(4), 1234, seed=2)
    kept, retention = post_select(counts, 2)
    assert retention == 1.0
    assert np.array_equal(kept.populations(), np.array([0.0, 1.0, 0.0, 1.0]))
