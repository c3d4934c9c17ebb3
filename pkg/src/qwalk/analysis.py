"""Correlation functions, light-cone front extraction, propagation velocities,
and interference-fringe statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .device import DisorderMap, QubitId, default_device, grid_graph, sample_disorder
from .evolution import EvolutionPlan, evolve_unitary
from .hamiltonian import TWO_PI, build_hamiltonian
from .sector import QuantumState, basis_state, enumerate_basis, populations

__all__ = [
    "CorrelationSeries",
    "FrontFit",
    "FringeStats",
    "correlation",
    "correlation_series",
    "fit_gaussian_front",
    "fit_velocity",
    "lr_bound",
    "instantaneous_velocity",
    "fringe_stats",
    "fringe_axis_variance",
    "sign_alternations",
    "interaction_signature",
    "ctqw_velocity_pipeline",
    "disorder_velocity_study",
    "VelocityPipelineResult",
    "VelocityStudyResult",
]

SQRT2 = math.sqrt(2.0)


def correlation(state: QuantumState, i: int, j: int) -> float:
    """Connected sigma-z correlation between two sites.

    With sigma_z = 1 - 2n this reduces to 4(<n_i n_j> - <n_i><n_j>), evaluated
    exactly from the amplitudes.
    """
    if i == j:
        raise ValueError("correlation requires two distinct sites")
    occ = state.basis.occupancy_matrix()
    p = np.abs(state.amplitudes) ** 2
    n_i = float(p @ occ[:, i])
    n_j = float(p @ occ[:, j])
    n_ij = float(p @ (occ[:, i] * occ[:, j]))
    return 4.0 * (n_ij - n_i * n_j)


@dataclass(frozen=True)
class CorrelationSeries:
    site_pair: tuple[int, int]
    times_ns: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times_ns", np.asarray(self.times_ns, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.times_ns.shape != self.values.shape:
            raise ValueError("times and values must have matching lengths")


def correlation_series(snapshots, i: int, j: int) -> CorrelationSeries:
    times = np.array([t for t, _ in snapshots], dtype=float)
    values = np.array([correlation(s, i, j) for _, s in snapshots])
    return CorrelationSeries((i, j), times, values)


@dataclass(frozen=True)
class FrontFit:
    distance: float
    peak_time_ns: float
    peak_time_err_ns: float
    amplitude: float
    width_ns: float
    offset: float


def _gaussian(t, a, c, w, o):
    return a * np.exp(-((t - c) ** 2) / (2.0 * w**2)) + o


def fit_gaussian_front(
    series: CorrelationSeries,
    distance: float,
    noise_floor: float = 1e-9,
    lobe_fraction: float = 0.25,
) -> FrontFit:
    """Locate the propagation front as the centre of a Gaussian fitted to |C|(t).

    The fit is restricted to the first lobe whose height reaches
    lobe_fraction * max|C|; later revival lobes of the correlation signal
    would otherwise capture the fit at long distances.
    """
    t = series.times_ns
    c = np.abs(series.values)
    if len(t) < 8:
        raise ValueError("need at least 8 time samples to fit a front")
    cmax = float(np.max(c))
    if cmax <= noise_floor:
        raise ValueError("no detectable extremum above the noise floor")

    above = np.where(c >= lobe_fraction * cmax)[0]
    i = int(above[0])
    while i < len(c) - 1 and c[i + 1] >= c[i]:
        i += 1
    i_peak = i
    lo = i_peak
    while lo > 0 and c[lo - 1] <= c[lo]:
        lo -= 1
    hi = i_peak
    while hi < len(c) - 1 and c[hi + 1] <= c[hi]:
        hi += 1
    lo = max(0, lo - 2)
    hi = min(len(c) - 1, hi + 2)
    while hi - lo + 1 < 8:
        lo = max(0, lo - 1)
        hi = min(len(c) - 1, hi + 1)
    tw, cw = t[lo : hi + 1], c[lo : hi + 1]

    peak = float(c[i_peak])
    dt = float(t[1] - t[0])
    half = np.where(cw >= 0.5 * peak)[0]
    fwhm = float(tw[half[-1]] - tw[half[0]]) if len(half) > 1 else 2.0 * dt
    p0 = [peak, float(t[i_peak]), max(fwhm / 2.355, dt), float(np.median(c[: max(3, len(c) // 10)]))]
    try:
        popt, pcov = curve_fit(_gaussian, tw, cw, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise ValueError(f"Gaussian front fit did not converge: {exc}") from None
    center = float(popt[1])
    if not t[0] <= center <= t[-1]:
        raise ValueError(f"fitted front centre {center:.1f} ns lies outside the sampled range")
    err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("inf")
    return FrontFit(
        distance=float(distance),
        peak_time_ns=center,
        peak_time_err_ns=err,
        amplitude=float(popt[0]),
        width_ns=abs(float(popt[2])),
        offset=float(popt[3]),
    )


def fit_velocity(fronts) -> tuple[float, float]:
    """Propagation velocity in sites/us from a line through (peak time, distance).

    Weighted by 1/err^2 on the front times; falls back to an unweighted fit
    when the errors are degenerate. The returned uncertainty is the
    residual-scaled standard error of the slope.
    """
    fronts = list(fronts)
    if len(fronts) < 2:
        raise ValueError("need at least two fronts to fit a velocity")
    d = np.array([f.distance for f in fronts])
    t_us = np.array([f.peak_time_ns for f in fronts]) * 1e-3
    errs = np.array([f.peak_time_err_ns for f in fronts]) * 1e-3
    if len(np.unique(d)) < 2:
        raise ValueError("fronts must span at least two distinct distances")
    degenerate = np.any(~np.isfinite(errs)) or np.any(errs <= 0)
    w = np.ones_like(errs) if degenerate else 1.0 / errs**2
    a = np.vstack([t_us, np.ones_like(t_us)]).T
    atw = a.T * w
    try:
        coef = np.linalg.solve(atw @ a, atw @ d)
        cov = np.linalg.inv(atw @ a)
    except np.linalg.LinAlgError:
        raise ValueError("velocity fit is singular (degenerate front times)") from None
    resid = d - a @ coef
    chi2 = float(resid @ (w * resid))
    dof = len(fronts) - 2
    scale = chi2 / dof if dof > 0 else 0.0
    std_err = float(np.sqrt(max(cov[0, 0] * scale, 0.0)))
    return float(coef[0]), std_err


def lr_bound(j_eff_mhz: float, u_mhz: float) -> float:
    """Maximal group velocity (sites/us) for the 2D hard-core hopping model.

    The hopping rate enters as an angular frequency; the anharmonic correction
    depends only on the J/U ratio.
    """
    if u_mhz == 0:
        raise ValueError("on-site interaction must be nonzero")
    j_ang = TWO_PI * j_eff_mhz
    return 2.0 * SQRT2 * j_ang * (1.0 - 16.0 * j_eff_mhz**2 / (9.0 * u_mhz**2))


def instantaneous_velocity(fronts, d0: float, window: float = 3.0 * SQRT2) -> tuple[float, float]:
    """fit_velocity restricted to fronts with d0 <= distance <= d0 + window."""
    sel = [f for f in fronts if d0 - 1e-9 <= f.distance <= d0 + window + 1e-9]
    if len(sel) < 4:
        raise ValueError(f"only {len(sel)} fronts inside the window starting at d0={d0:.3f}")
    return fit_velocity(sel)


# ---------------------------------------------------------------------------
# fringe grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FringeStats:
    visibility: float
    variance: float
    mean: float


def fringe_stats(grid) -> FringeStats:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty fringe grid")
    if np.all(grid == 0):
        raise ValueError("all-zero fringe grid")
    gmax, gmin = float(grid.max()), float(grid.min())
    if gmax + gmin == 0:
        raise ValueError("visibility undefined: grid maximum and minimum cancel")
    return FringeStats(
        visibility=(gmax - gmin) / (gmax + gmin),
        variance=float(grid.var()),
        mean=float(grid.mean()),
    )


def fringe_axis_variance(grid, axis: int = 1) -> float:
    """Mean variance along one grid axis; isolates structure driven by that knob."""
    grid = np.asarray(grid, dtype=float)
    return float(np.var(grid, axis=axis).mean())


def sign_alternations(grid, axis: int, threshold: float) -> int:
    """Largest number of sign flips of significant successive differences
    along lines of the grid; interference fringes alternate, smooth
    transmission decay does not."""
    grid = np.asarray(grid, dtype=float)
    lines = grid.T if axis == 0 else grid
    worst = 0
    for line in lines:
        diffs = [d for d in np.diff(line) if abs(d) > threshold]
        flips = sum(1 for a, b in zip(diffs, diffs[1:]) if np.sign(a) != np.sign(b))
        worst = max(worst, flips)
    return worst


def interaction_signature(two_walker_grid, single_left_grid, single_right_grid) -> np.ndarray:
    """Two-walker fringe grid minus the sum of the single-walker grids.

    Flat (zero) for independent distinguishable walkers; structure here is the
    footprint of the hard-core interaction.
    """
    g2 = np.asarray(two_walker_grid, dtype=float)
    gl = np.asarray(single_left_grid, dtype=float)
    gr = np.asarray(single_right_grid, dtype=float)
    if not (g2.shape == gl.shape == gr.shape):
        raise ValueError("signature grids must share a shape")
    return g2 - (gl + gr)


# ---------------------------------------------------------------------------
# velocity pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityPipelineResult:
    velocity: float
    std_err: float
    fronts: tuple
    series: tuple


def ctqw_velocity_pipeline(
    device=None,
    t_max_ns: float = 600.0,
    step_ns: float = 10.0,
    n_distances: int = 4,
    origin_label: str = "U00Q0",
    disorder: DisorderMap | None = None,
) -> VelocityPipelineResult:
    """Single-walker walk from the corner qubit; correlation fronts along the
    grid diagonal at d = sqrt(2)..n*sqrt(2) and a linear velocity fit."""
    from .device import FrequencyConfig, active_subgraph

    device = device or default_device()
    config = FrequencyConfig.from_disorder(device.functional_qubits, disorder)
    graph = active_subgraph(device, config)
    index = graph.index
    origin = QubitId.parse(origin_label)
    r0, c0 = origin.grid_position
    diag_sites = []
    for k in range(1, n_distances + 1):
        q = QubitId.from_grid(r0 + k, c0 + k)
        if q not in index:
            raise ValueError(f"diagonal site {q} is not active")
        diag_sites.append((k, index[q]))

    basis = enumerate_basis(graph.n_sites, 1)
    h = build_hamiltonian(graph, basis, disorder)
    psi0 = basis_state(basis, {index[origin]})
    times = tuple(np.arange(0.0, t_max_ns + 1e-9, step_ns))
    snapshots = evolve_unitary(EvolutionPlan(h, times), psi0)

    series, fronts = [], []
    for k, site in diag_sites:
        s = correlation_series(snapshots, index[origin], site)
        series.append(s)
        fronts.append(fit_gaussian_front(s, distance=k * SQRT2))
    velocity, std_err = fit_velocity(fronts)
    return VelocityPipelineResult(velocity, std_err, tuple(fronts), tuple(series))


@dataclass(frozen=True)
class VelocityStudyResult:
    d0_values: tuple
    velocities: tuple
    std_errs: tuple
    fronts: tuple
    n_seeds: int
    disorder_bound_mhz: float


def disorder_velocity_study(
    n_side: int = 15,
    disorder_bound_mhz: float = 1.6,
    n_seeds: int = 32,
    seed: int = 11000,
    t_max_ns: float = 1000.0,
    step_ns: float = 10.0,
    max_diagonal: int | None = None,
    d0_steps: int = 8,
) -> VelocityStudyResult:
    """Instantaneous velocity vs distance on an n x n lattice under random disorder.

    Correlation curves between the corner site and each diagonal site are
    averaged over the disorder ensemble before front fitting; the windowed
    velocity then probes how the front speed grows with distance.
    """
    if n_seeds < 1:
        raise ValueError("need at least one disorder seed")
    graph = grid_graph(n_side, n_side)
    index = graph.index
    basis = enumerate_basis(graph.n_sites, 1)
    kmax = max_diagonal or (n_side - 4)
    origin = index[(0, 0)]
    diag = [index[(k, k)] for k in range(1, kmax + 1)]
    times = tuple(np.arange(0.0, t_max_ns + 1e-9, step_ns))
    psi0 = basis_state(basis, {origin})

    acc = np.zeros((kmax, len(times)))
    for s in range(n_seeds):
        disorder = sample_disorder(graph.sites, disorder_bound_mhz, seed + s)
        h = build_hamiltonian(graph, basis, disorder)
        snapshots = evolve_unitary(EvolutionPlan(h, times), psi0)
        pops = np.column_stack([populations(state) for _, state in snapshots])
        for row, site in enumerate(diag):
            # single-walker connected correlation: C = -4 p_i p_j
            acc[row] += 4.0 * pops[origin] * pops[site]
    acc /= n_seeds

    fronts = []
    for row in range(kmax):
        series = CorrelationSeries((origin, diag[row]), np.array(times), acc[row])
        fronts.append(fit_gaussian_front(series, distance=(row + 1) * SQRT2))
    d0_values, velocities, std_errs = [], [], []
    for k0 in range(1, d0_steps + 1):
        v, e = instantaneous_velocity(fronts, k0 * SQRT2)
        d0_values.append(k0 * SQRT2)
        velocities.append(v)
        std_errs.append(e)
    return VelocityStudyResult(
        tuple(d0_values), tuple(velocities), tuple(std_errs), tuple(fronts), n_seeds, disorder_bound_mhz
    )
