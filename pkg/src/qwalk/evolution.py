"""Time evolution: exact unitary propagation in a sector, and Lindblad
master-equation dynamics with per-site T1 / Tphi for small systems.

Times cross the API in ns; internally everything runs in us to match the
rad/us Hamiltonian units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal

from .device import ActiveGraph, DisorderMap
from .hamiltonian import HamiltonianMatrix
from .sector import QuantumState, _site_bit, populations

__all__ = [
    "EvolutionPlan",
    "EvolutionError",
    "evolve_unitary",
    "krylov_expm_multiply",
    "LindbladModel",
    "evolve_lindblad",
    "initial_density",
    "site_populations",
    "time_series_populations",
    "DENSE_CUTOFF",
]

DENSE_CUTOFF = 256
NS_TO_US = 1e-3


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionPlan:
    hamiltonian: HamiltonianMatrix
    times_ns: tuple
    method: str = "auto"
    tolerance: float = 1e-10

    def __post_init__(self):
        times = tuple(float(t) for t in self.times_ns)
        object.__setattr__(self, "times_ns", times)
        if any(t < 0 for t in times):
            raise ValueError("sample times must be nonnegative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if self.method not in ("auto", "krylov", "dense_expm"):
            raise ValueError(f"unknown evolution method {self.method!r}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def resolve_method(self) -> str:
        if self.method != "auto":
            return self.method
        return "dense_expm" if self.hamiltonian.dimension < DENSE_CUTOFF else "krylov"


def krylov_expm_multiply(
    matrix,
    v: np.ndarray,
    dt_us: float,
    tol: float = 1e-10,
    m_start: int = 20,
    m_max: int = 80,
    _depth: int = 0,
) -> np.ndarray:
    """exp(-i * dt * H) @ v via a Lanczos projection with adaptive subspace size.

    The subspace grows from m_start until successive projections agree within
    tol; if m_max is reached first, the step is split in half recursively.
    Works for either sign of dt.
    """
    if _depth > 40:
        raise EvolutionError(f"Krylov propagation failed to converge for dt={dt_us} us")
    matvec = (lambda x: matrix @ x) if not callable(matrix) else matrix
    beta = np.linalg.norm(v)
    if beta == 0 or dt_us == 0:
        return v.astype(np.complex128, copy=True)
    dim = v.shape[0]
    m_cap = min(m_max, dim)

    V = np.empty((m_cap + 1, dim), dtype=np.complex128)
    V[0] = v / beta
    alphas: list[float] = []
    offdiag: list[float] = []
    u_prev = None
    scale = 1.0
    m = 0
    while m < m_cap:
        w = matvec(V[m])
        a = np.real(np.vdot(V[m], w))
        w = w - a * V[m]
        if m > 0:
            w = w - offdiag[-1] * V[m - 1]
        # full reorthogonalization keeps the basis clean for long steps
        w = w - V[: m + 1].T @ (V[: m + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        alphas.append(float(a))
        m += 1
        scale = max(scale, abs(a), b)
        if b <= 1e-12 * scale:
            # invariant subspace reached: the projection is exact
            return _project_exp(V, alphas, offdiag, beta, dt_us, m)
        if m < m_cap:
            V[m] = w / b
            offdiag.append(b)
        if m == dim:
            return _project_exp(V, alphas, offdiag, beta, dt_us, m)
        if m >= m_start and (m % 5 == 0 or m == m_cap):
            u = _project_exp(V, alphas, offdiag, beta, dt_us, m)
            if u_prev is not None and np.linalg.norm(u - u_prev) <= tol * max(1.0, float(np.linalg.norm(u))):
                return u
            u_prev = u
    half = 0.5 * dt_us
    mid = krylov_expm_multiply(matvec, v, half, tol, m_start, m_max, _depth + 1)
    return krylov_expm_multiply(matvec, mid, half, tol, m_start, m_max, _depth + 1)


def _project_exp(V, alphas, offdiag, beta, dt_us, m):
    if m == 1:
        return beta * np.exp(-1j * dt_us * alphas[0]) * V[0]
    w, U = eigh_tridiagonal(np.array(alphas[:m]), np.array(offdiag[: m - 1]))
    y = U @ (np.exp(-1j * dt_us * w) * U[0])
    return beta * (V[:m].T @ y)


class _SpectralPropagator:
    """Dense propagator through one eigendecomposition, reused across times."""

    def __init__(self, h: HamiltonianMatrix):
        self.w, self.u = np.linalg.eigh(h.to_dense())

    def apply(self, v: np.ndarray, dt_us: float) -> np.ndarray:
        c = self.u.conj().T @ v
        return self.u @ (np.exp(-1j * self.w * dt_us) * c)


def evolve_unitary(plan: EvolutionPlan, psi0: QuantumState) -> list[tuple[float, QuantumState]]:
    """Snapshots of exp(-i H t) psi0 at the plan's sample times."""
    h = plan.hamiltonian
    if psi0.basis.dimension != h.dimension:
        raise ValueError("initial state dimension does not match the Hamiltonian")
    psi0.check_normalized()
    method = plan.resolve_method()
    out: list[tuple[float, QuantumState]] = []
    if method == "dense_expm":
        prop = _SpectralPropagator(h)
        for t in plan.times_ns:
            amp = prop.apply(psi0.amplitudes, t * NS_TO_US)
            out.append((t, QuantumState(psi0.basis, amp)))
    else:
        current = psi0.amplitudes.astype(np.complex128, copy=True)
        t_prev = 0.0
        for t in plan.times_ns:
            dt = (t - t_prev) * NS_TO_US
            if dt != 0:
                try:
                    current = krylov_expm_multiply(h.matrix, current, dt, tol=plan.tolerance)
                except EvolutionError as exc:
                    raise EvolutionError(f"propagation to t={t} ns failed: {exc}") from None
            t_prev = t
            out.append((t, QuantumState(psi0.basis, current.copy())))
    for t, state in out:
        if abs(state.norm - 1.0) > 1e-9:
            raise EvolutionError(f"norm drifted to {state.norm} at t={t} ns")
    return out


# ---------------------------------------------------------------------------
# Lindblad dynamics
# ---------------------------------------------------------------------------

MAX_LINDBLAD_SITES = 12


@dataclass
class LindbladModel:
    """Dense open-system model on the full 2^n space or a hard-core sector union.

    Jump operators: relaxation sigma-_j at rate 1/T1_j, pure dephasing
    sigma^z_j / sqrt(2 Tphi_j), so a lone-qubit coherence decays as
    exp(-t / Tphi).
    """

    n_sites: int
    states: tuple
    index: dict = field(repr=False)
    h: np.ndarray = field(repr=False)
    t1_us: dict = field(default_factory=dict)
    t_phi_us: dict = field(default_factory=dict)

    @classmethod
    def from_graph(
        cls,
        graph: ActiveGraph,
        disorder: DisorderMap | None = None,
        t1_us=None,
        t_phi_us=None,
        max_excitations: int = 1,
        full_space: bool = False,
    ) -> "LindbladModel":
        n = graph.n_sites
        if n > MAX_LINDBLAD_SITES:
            raise ValueError(f"Lindblad models are limited to {MAX_LINDBLAD_SITES} sites, got {n}")
        if full_space:
            states = tuple(range(2**n))
        else:
            # union of excitation sectors 0..max_excitations, closed under decay
            states = tuple(sorted(v for v in range(2**n) if bin(v).count("1") <= max_excitations))
        index = {v: i for i, v in enumerate(states)}
        dim = len(states)
        disorder = disorder or DisorderMap()
        offsets = np.array([disorder.get(s) for s in graph.sites])
        h = np.zeros((dim, dim))
        two_pi = 2.0 * np.pi
        for a, v in enumerate(states):
            for i, j, j_eff in graph.edges:
                bi, bj = _site_bit(n, i), _site_bit(n, j)
                if bool(v & bi) != bool(v & bj):
                    w = v ^ bi ^ bj
                    if w in index:
                        h[a, index[w]] = two_pi * j_eff
            if np.any(offsets):
                h[a, a] = two_pi * sum(offsets[j] for j in range(n) if v & _site_bit(n, j))
        return cls(n, states, index, h, _rate_map(t1_us, n), _rate_map(t_phi_us, n))

    @property
    def dimension(self) -> int:
        return len(self.states)

    def occupancy(self) -> np.ndarray:
        occ = np.zeros((self.dimension, self.n_sites))
        for a, v in enumerate(self.states):
            for j in range(self.n_sites):
                if v & _site_bit(self.n_sites, j):
                    occ[a, j] = 1.0
        return occ


def _rate_map(spec, n_sites: int) -> dict:
    if spec is None:
        return {}
    if np.isscalar(spec):
        return {j: float(spec) for j in range(n_sites)}
    return {int(j): float(v) for j, v in dict(spec).items()}


def initial_density(model: LindbladModel, excited_sites) -> np.ndarray:
    value = sum(_site_bit(model.n_sites, j) for j in set(excited_sites))
    if value not in model.index:
        raise ValueError("initial occupation string is outside the model basis")
    rho = np.zeros((model.dimension, model.dimension), dtype=np.complex128)
    rho[model.index[value], model.index[value]] = 1.0
    return rho


def _dissipator_tables(model: LindbladModel):
    n, dim = model.n_sites, model.dimension
    occ = model.occupancy()
    sz = 1.0 - 2.0 * occ  # dim x n, +-1 per (state, site)
    mask = np.zeros((dim, dim))
    jumps = []
    for j in range(n):
        t_phi = model.t_phi_us.get(j)
        if t_phi and np.isfinite(t_phi):
            g = 1.0 / t_phi
            mask += (g / 2.0) * (np.outer(sz[:, j], sz[:, j]) - 1.0)
        t1 = model.t1_us.get(j)
        if t1 and np.isfinite(t1):
            g = 1.0 / t1
            mask += -(g / 2.0) * (occ[:, j][:, None] + occ[:, j][None, :])
            src, dst = [], []
            bit = _site_bit(n, j)
            for a, v in enumerate(model.states):
                if v & bit and (v ^ bit) in model.index:
                    src.append(a)
                    dst.append(model.index[v ^ bit])
            jumps.append((g, np.array(src), np.array(dst)))
    return mask, jumps


def evolve_lindblad(
    model: LindbladModel,
    rho0: np.ndarray,
    times_ns,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> list[tuple[float, np.ndarray]]:
    """Density-matrix snapshots under the master equation, trace-checked."""
    times = np.asarray([float(t) for t in times_ns])
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and strictly increasing")
    dim = model.dimension
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (dim, dim):
        raise ValueError(f"density matrix shape {rho0.shape} does not match dimension {dim}")
    h = model.h
    mask, jumps = _dissipator_tables(model)

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        drho = -1j * (h @ rho - rho @ h)
        drho += mask * rho
        for g, src, dst in jumps:
            drho[np.ix_(dst, dst)] += g * rho[np.ix_(src, src)]
        return drho.ravel()

    t_eval = times * NS_TO_US
    span = (0.0, float(t_eval[-1]) if t_eval[-1] > 0 else 1e-12)
    sol = solve_ivp(rhs, span, rho0.ravel(), t_eval=t_eval, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise EvolutionError(f"Lindblad integration failed: {sol.message}")
    out = []
    for k, t in enumerate(times):
        rho = sol.y[:, k].reshape(dim, dim)
        tr = float(np.trace(rho).real)
        if abs(tr - 1.0) > 1e-6:
            raise EvolutionError(f"trace drifted to {tr} at t={t} ns")
        out.append((float(t), rho))
    return out


def site_populations(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    return np.real(np.diag(rho)) @ model.occupancy()


def time_series_populations(snapshots, model: LindbladModel | None = None) -> np.ndarray:
    """Stack per-site populations over snapshots into an (n_sites x n_times) matrix."""
    if not snapshots:
        raise ValueError("no snapshots given")
    cols = []
    for _t, item in snapshots:
        if isinstance(item, QuantumState):
            cols.append(populations(item))
        else:
            if model is None:
                raise ValueError("density-matrix snapshots need the LindbladModel for site populations")
            cols.append(site_populations(model, item))
    return np.column_stack(cols)
