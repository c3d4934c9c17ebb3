import numpy as np
import pytest
from scipy.linalg import expm

from qwalk.device import ActiveGraph, DisorderMap, grid_graph
from qwalk.evolution import (
    EvolutionError,
    EvolutionPlan,
    LindbladModel,
    evolve_lindblad,
    evolve_unitary,
    initial_density,
    krylov_expm_multiply,
    site_populations,
    time_series_populations,
)
from qwalk.hamiltonian import build_hamiltonian
from qwalk.sector import QuantumState, basis_state, enumerate_basis, populations

J = 2.01


def chain_instance(n, k=1, disorder=None):
    g = ActiveGraph(tuple(range(n)), tuple((i, i + 1, J) for i in range(n - 1)))
    b = enumerate_basis(n, k)
    return g, b, build_hamiltonian(g, b, disorder)


def test_plan_validation():
    _, _, h = chain_instance(2)
    with pytest.raises(ValueError):
        EvolutionPlan(h, (10.0, 5.0))
    with pytest.raises(ValueError):
        EvolutionPlan(h, (-1.0, 5.0))
    with pytest.raises(ValueError):
        EvolutionPlan(h, (0.0, 1.0), method="magic")
    assert EvolutionPlan(h, (0.0, 1.0)).resolve_method() == "dense_expm"


def test_auto_selects_krylov_above_cutoff():
    g = grid_graph(5, 5)
    b = enumerate_basis(25, 2)  # dim 300
    h = build_hamiltonian(g, b)
    assert EvolutionPlan(h, (1.0,)).resolve_method() == "krylov"


def test_two_site_rabi_swap():
    _, b, h = chain_instance(2)
    psi0 = basis_state(b, {0})
    times = tuple(np.arange(0.0, 200.0, 0.05))
    snaps = evolve_unitary(EvolutionPlan(h, times), psi0)
    p_src = np.array([populations(s)[0] for _, s in snaps])
    # cos^2(2 pi J t) on the initially excited site
    expected = np.cos(2 * np.pi * J * np.array(times) * 1e-3) ** 2
    assert np.allclose(p_src, expected, atol=1e-9)
    t_transfer = times[int(np.argmin(p_src))]
    assert t_transfer == pytest.approx(1e3 / (4 * J), abs=0.5)


def test_time_zero_is_identity():
    _, b, h = chain_instance(5)
    psi0 = basis_state(b, {2})
    for method in ("dense_expm", "krylov"):
        snaps = evolve_unitary(EvolutionPlan(h, (0.0,), method=method), psi0)
        assert np.allclose(snaps[0][1].amplitudes, psi0.amplitudes, atol=1e-12)


@pytest.mark.parametrize(
    "shape,k,sources",
    [
        ((3, 4), 2, {0, 5}),  # dim 66
        ((2, 5), 3, {0, 4, 9}),  # dim 120
        ((3, 6), 2, {0, 17}),  # dim 153
        ((4, 5), 1, {7}),  # dim 20
    ],
)
def test_krylov_matches_scipy_expm_oracle(shape, k, sources):
    rng = np.random.default_rng(42 + shape[0] * shape[1] + k)
    g = grid_graph(*shape)
    b = enumerate_basis(shape[0] * shape[1], k)
    assert b.dimension <= 200
    d = DisorderMap({s: float(rng.uniform(-1.5, 1.5)) for s in g.sites})
    h = build_hamiltonian(g, b, d)
    psi0 = basis_state(b, sources)
    times = (37.0, 100.0, 260.0, 333.0)
    snaps = evolve_unitary(EvolutionPlan(h, times, method="krylov"), psi0)
    dense = h.to_dense()
    for (t, state) in snaps:
        ref = expm(-1j * dense * (t * 1e-3)) @ psi0.amplitudes
        assert np.max(np.abs(state.amplitudes - ref)) < 1e-8


def test_dense_and_krylov_agree():
    g = grid_graph(4, 4)
    b = enumerate_basis(16, 2)
    h = build_hamiltonian(g, b)
    psi0 = basis_state(b, {0, 15})
    times = (50.0, 150.0, 400.0)
    sd = evolve_unitary(EvolutionPlan(h, times, method="dense_expm"), psi0)
    sk = evolve_unitary(EvolutionPlan(h, times, method="krylov"), psi0)
    for (_, a), (_, c) in zip(sd, sk):
        assert np.max(np.abs(a.amplitudes - c.amplitudes)) < 1e-9


def test_unitarity_at_every_sample():
    _, b, h = chain_instance(8, k=2)
    psi0 = basis_state(b, {0, 4})
    snaps = evolve_unitary(EvolutionPlan(h, tuple(np.arange(10.0, 800.0, 37.0)), method="krylov"), psi0)
    for _, s in snaps:
        assert abs(s.norm - 1.0) < 1e-9


def test_time_additivity_and_reversibility():
    rng = np.random.default_rng(6)
    _, b, h = chain_instance(6, k=2)
    psi = rng.normal(size=b.dimension) + 1j * rng.normal(size=b.dimension)
    psi /= np.linalg.norm(psi)
    one_shot = krylov_expm_multiply(h.matrix, psi, 0.35)
    stepped = krylov_expm_multiply(h.matrix, krylov_expm_multiply(h.matrix, psi, 0.15), 0.2)
    assert np.max(np.abs(one_shot - stepped)) < 1e-8
    back = krylov_expm_multiply(h.matrix, one_shot, -0.35)
    assert np.max(np.abs(back - psi)) < 1e-8


def test_krylov_non_convergence_names_failure():
    _, b, h = chain_instance(6, k=1)
    psi = basis_state(b, {0}).amplitudes
    with pytest.raises(EvolutionError):
        krylov_expm_multiply(h.matrix, psi, 5.0, m_start=64, m_max=1)


def test_dimension_mismatch():
    _, b, h = chain_instance(4)
    other = basis_state(enumerate_basis(5, 1), {0})
    with pytest.raises(ValueError):
        evolve_unitary(EvolutionPlan(h, (1.0,)), other)


def test_requires_normalized_state():
    _, b, h = chain_instance(3)
    bad = QuantumState(b, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        evolve_unitary(EvolutionPlan(h, (1.0,)), bad)


def test_time_series_populations_unitary():
    _, b, h = chain_instance(5, k=2)
    psi0 = basis_state(b, {0, 2})
    snaps = evolve_unitary(EvolutionPlan(h, (0.0, 40.0, 90.0)), psi0)
    mat = time_series_populations(snaps)
    assert mat.shape == (5, 3)
    assert np.allclose(mat[:, 0], [1, 0, 1, 0, 0])
    assert np.allclose(mat.sum(axis=0), 2.0, atol=1e-9)
    with pytest.raises(ValueError):
        time_series_populations([])


# ---------------------------------------------------------------------------
# Lindblad
# ---------------------------------------------------------------------------


def single_site_model(**kw):
    g = ActiveGraph((0,), ())
    return LindbladModel.from_graph(g, **kw)


def test_t1_relaxation_analytic():
    m = single_site_model(t1_us=12.26)
    rho0 = initial_density(m, {0})
    snaps = evolve_lindblad(m, rho0, (12260.0,))
    p = site_populations(m, snaps[0][1])[0]
    assert p == pytest.approx(np.exp(-1.0), abs=1e-4)


def test_pure_dephasing_analytic():
    m = single_site_model(t_phi_us=1.6)
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    snaps = evolve_lindblad(m, rho0, (800.0, 1600.0))
    for (t, rho) in snaps:
        assert abs(rho[0, 1]) == pytest.approx(0.5 * np.exp(-t * 1e-3 / 1.6), abs=1e-6)
        # populations untouched by pure dephasing
        assert rho[1, 1].real == pytest.approx(0.5, abs=1e-8)


def test_zero_rates_match_unitary():
    g = ActiveGraph((0, 1, 2), ((0, 1, J), (1, 2, J)))
    m = LindbladModel.from_graph(g, max_excitations=1)
    rho0 = initial_density(m, {0})
    times = (50.0, 130.0, 210.0)
    lind = evolve_lindblad(m, rho0, times)
    b = enumerate_basis(3, 1)
    h = build_hamiltonian(g, b)
    uni = evolve_unitary(EvolutionPlan(h, times), basis_state(b, {0}))
    for (t, rho), (_, psi) in zip(lind, uni):
        assert np.allclose(site_populations(m, rho), populations(psi), atol=1e-7)


def test_trace_hermiticity_positivity():
    g = grid_graph(2, 3)
    m = LindbladModel.from_graph(g, t1_us=8.0, t_phi_us=2.0, max_excitations=2)
    rho0 = initial_density(m, {0, 5})
    for t, rho in evolve_lindblad(m, rho0, (100.0, 300.0, 600.0)):
        assert abs(np.trace(rho).real - 1.0) < 1e-6
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-8
        assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_t1_column_sums_nonincreasing():
    g = ActiveGraph((0, 1, 2, 3), ((0, 1, J), (1, 2, J), (2, 3, J)))
    m = LindbladModel.from_graph(g, t1_us=5.0, max_excitations=1)
    snaps = evolve_lindblad(m, initial_density(m, {0}), tuple(np.arange(50.0, 1500.0, 100.0)))
    mat = time_series_populations(snaps, model=m)
    totals = mat.sum(axis=0)
    assert np.all(np.diff(totals) < 1e-9)
    assert np.all(totals <= 1.0 + 1e-9)


def test_sector_union_matches_full_space():
    g = ActiveGraph((0, 1, 2), ((0, 1, J), (1, 2, J)))
    mu = LindbladModel.from_graph(g, t1_us=6.0, t_phi_us=1.5, max_excitations=1)
    mf = LindbladModel.from_graph(g, t1_us=6.0, t_phi_us=1.5, full_space=True)
    su = evolve_lindblad(mu, initial_density(mu, {0}), (120.0, 480.0))
    sf = evolve_lindblad(mf, initial_density(mf, {0}), (120.0, 480.0))
    for (_, ru), (_, rf) in zip(su, sf):
        assert np.allclose(site_populations(mu, ru), site_populations(mf, rf), atol=1e-7)


def test_lindblad_site_cap():
    g = grid_graph(4, 4)
    with pytest.raises(ValueError):
        LindbladModel.from_graph(g, t1_us=10.0)


def test_lindblad_input_validation():
    m = single_site_model(t1_us=10.0)
    with pytest.raises(ValueError):
        evolve_lindblad(m, np.eye(3), (1.0,))
    with pytest.raises(ValueError):
        evolve_lindblad(m, np.eye(2), (5.0, 2.0))
    with pytest.raises(ValueError):
        initial_density(single_site_model(), {3})
