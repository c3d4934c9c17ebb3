"""Device calibration against simulated twins with hidden disorders:
multi-qubit swap data, derivative-free disorder-map recovery, iterative
frequency alignment, interferometer optimization, and idle-frequency setup.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .device import (
    ActiveGraph,
    DeviceModel,
    DisorderMap,
    FrequencyConfig,
    QubitId,
    rng_stream,
)
from .scenarios import MZLayout

__all__ = [
    "CalibrationError",
    "OptimizerConfig",
    "NelderMeadResult",
    "nelder_mead",
    "CalibrationTwin",
    "SwapDataset",
    "generate_swap_data",
    "DisorderFit",
    "fit_disorder_map",
    "AlignmentResult",
    "alignment_loop",
    "InterferometerOptimization",
    "optimize_interferometer",
    "zz_coupling",
    "assign_idle_frequencies",
    "validate_idle_assignment",
    "canonical_gauge",
]


class CalibrationError(RuntimeError):
    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 20000
    simplex_scale_mhz: float = 0.8
    cost_tolerance: float = 1e-12
    param_tolerance: float = 1e-6
    n_starts: int = 12  # the swap-data cost surface has local minima
    start_spread_mhz: float = 1.6
    early_stop_cost: float = 1e-9  # a converged start this low is the global fit


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_evaluations: int
    n_iterations: int
    converged: bool
    history: list = field(default_factory=list)  # (iteration, best cost, best x)


def nelder_mead(
    f,
    x0,
    scale: float = 1.0,
    max_iterations: int = 20000,
    cost_tolerance: float = 1e-12,
    param_tolerance: float = 1e-6,
    record_every: int = 50,
) -> NelderMeadResult:
    """Downhill simplex with the standard coefficients (reflect 1, expand 2,
    contract 0.5, shrink 0.5). Initial simplex: x0 plus unit perturbations of
    size `scale` along each coordinate."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += scale
        simplex.append(v)
    fvals = [float(f(v)) for v in simplex]
    n_eval = n + 1
    history = []
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        order = np.argsort(fvals)
        simplex = [simplex[k] for k in order]
        fvals = [fvals[k] for k in order]
        if it % record_every == 0 or it == 1:
            history.append((it, fvals[0], simplex[0].copy()))
        f_spread = fvals[-1] - fvals[0]
        x_spread = max(float(np.max(np.abs(v - simplex[0]))) for v in simplex[1:])
        if f_spread <= cost_tolerance and x_spread <= param_tolerance:
            converged = True
            break
        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = float(f(xr))
        n_eval += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = float(f(xe))
            n_eval += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = float(f(xc))
            n_eval += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    fvals[i] = float(f(simplex[i]))
                    n_eval += 1
    order = np.argsort(fvals)
    best = int(order[0])
    history.append((it, fvals[best], simplex[best].copy()))
    return NelderMeadResult(simplex[best], fvals[best], n_eval, it, converged, history)


# ---------------------------------------------------------------------------
# twin experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationTwin:
    """A simulated device with a hidden disorder map standing in for hardware.

    Calibration routines may only query it through experiment-shaped
    interfaces; the hidden map is reserved for validation.
    """

    device: DeviceModel
    hidden: DisorderMap
    n_shots: int | None = None
    seed: int = 0


@dataclass(frozen=True)
class SwapDataset:
    center: QubitId
    sites: tuple  # center first, then coupled neighbours
    j_eff_mhz: tuple  # couplings center-neighbour, aligned with sites[1:]
    times_ns: tuple
    populations: np.ndarray  # n_sites x n_times


def _star_graph(device: DeviceModel, center: QubitId) -> ActiveGraph:
    neighbours = device.neighbors(center)
    if not neighbours:
        raise ValueError(f"qubit {center} has no functional couplings")
    sites = (center, *neighbours)
    edges = tuple((0, k, device.edge(center, q).j_eff_mhz) for k, q in enumerate(neighbours, start=1))
    return ActiveGraph(sites, edges)


def single_excitation_populations(graph: ActiveGraph, offsets: DisorderMap, source_idx: int, times_ns) -> np.ndarray:
    """Site populations (n_sites x n_times) of one walker released on a graph.

    Dense spectral kernel in site order; optimizer cost loops call this
    thousands of times, so it skips the sector-basis machinery (equivalence
    with the generic engine is pinned by tests).
    """
    n = graph.n_sites
    two_pi = 2.0 * np.pi
    h = np.zeros((n, n))
    for i, j, j_eff in graph.edges:
        h[i, j] = h[j, i] = two_pi * j_eff
    for k, site in enumerate(graph.sites):
        h[k, k] = two_pi * offsets.get(site)
    w, v = np.linalg.eigh(h)
    c = v[source_idx].conj()
    t_us = 1e-3 * np.asarray(list(times_ns), dtype=float)
    amp = v @ (np.exp(-1j * np.outer(w, t_us)) * c[:, None])
    return np.abs(amp) ** 2


def _star_populations(graph: ActiveGraph, offsets: DisorderMap, times_ns) -> np.ndarray:
    return single_excitation_populations(graph, offsets, 0, times_ns)


def generate_swap_data(
    twin: CalibrationTwin,
    center: QubitId,
    correction: DisorderMap | None = None,
    times_ns=None,
) -> SwapDataset:
    """Excite the centre qubit, let it swap with its coupled neighbours, and
    record all populations. The twin's hidden disorder (plus any applied
    correction) detunes the star; shot noise is added when the twin asks."""
    times_ns = tuple(times_ns) if times_ns is not None else tuple(np.arange(0.0, 1000.1, 10.0))
    graph = _star_graph(twin.device, center)
    correction = correction or DisorderMap()
    offsets = DisorderMap({q: twin.hidden.get(q) + correction.get(q) for q in graph.sites})
    pops = _star_populations(graph, offsets, times_ns)
    if twin.n_shots:
        rng = rng_stream(twin.seed, 0xCA, zlib.crc32(center.label.encode()))
        pops = rng.binomial(twin.n_shots, np.clip(pops, 0.0, 1.0)) / twin.n_shots
    return SwapDataset(
        center=center,
        sites=graph.sites,
        j_eff_mhz=tuple(j for _, _, j in graph.edges),
        times_ns=times_ns,
        populations=pops,
    )


def canonical_gauge(offsets: dict) -> dict:
    """Fix the two unobservable degrees of freedom of a disorder map.

    Swap populations are invariant under a global offset shift (rotating
    frame) and, on bipartite graphs, under a global sign flip; centre to zero
    mean and make the largest-magnitude entry positive.
    """
    keys = sorted(offsets, key=str)
    vals = np.array([offsets[k] for k in keys], dtype=float)
    vals = vals - vals.mean()
    if len(vals) and vals[int(np.argmax(np.abs(vals)))] < 0:
        vals = -vals
    return {k: float(v) for k, v in zip(keys, vals)}


@dataclass
class DisorderFit:
    disorder: DisorderMap
    cost: float
    overall_distance: float
    n_evaluations: int
    history: list


def fit_disorder_map(datasets, config: OptimizerConfig | None = None) -> DisorderFit:
    """Search for the disorder map whose simulated swap data best match the
    given datasets (summed squared distance over all qubits and times).

    The returned map is gauge-fixed by canonical_gauge; the physical sign is
    resolved experimentally by alignment_loop.
    """
    config = config or OptimizerConfig()
    datasets = list(datasets)
    if not datasets:
        raise ValueError("no swap datasets given")
    qubits = sorted({q for ds in datasets for q in ds.sites})
    pos = {q: i for i, q in enumerate(qubits)}
    star_graphs = [
        ActiveGraph(ds.sites, tuple((0, k, j) for k, j in enumerate(ds.j_eff_mhz, start=1)))
        for ds in datasets
    ]

    def cost(x) -> float:
        total = 0.0
        for ds, graph in zip(datasets, star_graphs):
            offsets = DisorderMap({q: x[pos[q]] for q in ds.sites})
            sim = _star_populations(graph, offsets, ds.times_ns)
            total += float(np.sum((sim - ds.populations) ** 2))
        return total

    rng = rng_stream(0xF17)
    best = None
    total_evals = 0
    for start in range(max(1, config.n_starts)):
        x0 = np.zeros(len(qubits)) if start == 0 else rng.uniform(
            -config.start_spread_mhz, config.start_spread_mhz, len(qubits)
        )
        result = nelder_mead(
            cost,
            x0,
            scale=config.simplex_scale_mhz,
            max_iterations=config.max_iterations,
            cost_tolerance=config.cost_tolerance,
            param_tolerance=config.param_tolerance,
        )
        total_evals += result.n_evaluations
        if best is None or result.fun < best.fun:
            best = result
        if best.converged and best.fun <= config.early_stop_cost:
            break
    fitted = canonical_gauge({q: best.x[pos[q]] for q in qubits})
    zero_cost = cost(np.zeros(len(qubits)))
    if not best.converged:
        raise CalibrationError(
            f"disorder fit hit max_iterations={config.max_iterations} before meeting tolerance "
            f"(best cost {best.fun:.3e} vs zero-map cost {zero_cost:.3e})",
            best=DisorderMap(fitted),
        )
    return DisorderFit(DisorderMap(fitted), best.fun, zero_cost, total_evals, best.history)


@dataclass
class AlignmentResult:
    config: FrequencyConfig
    correction: DisorderMap
    overall_distances: list
    residual_max_mhz: float
    rounds_run: int
    history: list = field(default_factory=list)  # (round, sign, distance, accepted)


def _overall_distance(twin: CalibrationTwin, correction: DisorderMap, qubits, times_ns) -> float:
    """Summed squared distance between corrected-twin swap data and the
    zero-disorder simulation."""
    total = 0.0
    for q in qubits:
        ds = generate_swap_data(twin, q, correction, times_ns)
        graph = ActiveGraph(ds.sites, tuple((0, k, j) for k, j in enumerate(ds.j_eff_mhz, start=1)))
        ideal = _star_populations(graph, DisorderMap(), ds.times_ns)
        total += float(np.sum((ds.populations - ideal) ** 2))
    return total


def alignment_loop(
    twin: CalibrationTwin,
    rounds: int = 5,
    config: OptimizerConfig | None = None,
    qubits=None,
    times_ns=None,
) -> AlignmentResult:
    """Iterative frequency alignment: fit a disorder map from swap data, try
    both correction signs, keep whichever shrinks the overall distance, and
    repeat until it saturates."""
    if rounds < 1:
        raise ValueError("need at least one round")
    config = config or OptimizerConfig()
    qubits = list(qubits) if qubits is not None else twin.device.functional_qubits
    times_ns = tuple(times_ns) if times_ns is not None else tuple(np.arange(0.0, 1000.1, 10.0))
    correction = DisorderMap({})
    overall = [_overall_distance(twin, correction, qubits, times_ns)]
    history = []
    rounds_run = 0
    for round_no in range(1, rounds + 1):
        rounds_run = round_no
        datasets = [generate_swap_data(twin, q, correction, times_ns) for q in qubits]
        fit = fit_disorder_map(datasets, config)
        candidates = []
        for sign in (-1.0, 1.0):
            cand = DisorderMap(
                {q: correction.get(q) + sign * fit.disorder.get(q) for q in qubits}
            )
            candidates.append((sign, cand, _overall_distance(twin, cand, qubits, times_ns)))
        best_sign, best_corr, best_dist = min(candidates, key=lambda item: item[2])
        accepted = best_dist < overall[-1]
        for sign, _cand, dist in candidates:
            history.append((round_no, sign, dist, accepted and sign == best_sign))
        if not accepted:
            break  # saturated: neither sign improves
        correction = best_corr
        overall.append(best_dist)
    residual = canonical_gauge({q: twin.hidden.get(q) + correction.get(q) for q in qubits})
    residual_max = max(abs(v) for v in residual.values()) if residual else 0.0
    freq_config = FrequencyConfig.from_disorder(qubits, correction)
    return AlignmentResult(freq_config, correction, overall, residual_max, rounds_run, history)


# ---------------------------------------------------------------------------
# interferometer optimization
# ---------------------------------------------------------------------------


@dataclass
class InterferometerOptimization:
    correction: DisorderMap
    config: FrequencyConfig
    detector_population: float
    initial_detector_population: float
    stage1_product: float
    stage1_history: list
    stage2_history: list


def _subgraph_of(device: DeviceModel, qubits) -> ActiveGraph:
    config = FrequencyConfig.from_disorder(qubits)
    from .device import active_subgraph

    return active_subgraph(device, config)


def _site_population(graph: ActiveGraph, offsets: DisorderMap, source: QubitId, t_ns: float) -> np.ndarray:
    return single_excitation_populations(graph, offsets, graph.index[source], (t_ns,))[:, 0]


def optimize_interferometer(
    twin: CalibrationTwin,
    layout: MZLayout,
    config: OptimizerConfig | None = None,
    stage1_time_ns: float = 550.0,
    stage2_time_ns: float = 650.0,
    stage1_floor: float = 0.02,
) -> InterferometerOptimization:
    """Two-step frequency optimization of the interferometer on a twin.

    Step 1 balances the arms: with the recombiner and detector parked, the
    product of the arm-end populations at t=550 ns is maximized. Step 2 then
    maximizes the detector population at t=650 ns over all sites. Direct
    one-step optimization tends to a local optimum with one arm blocked.
    """
    config = config or OptimizerConfig()
    layout.validate(twin.device)
    source = layout.source

    stage1_sites = tuple(q for q in layout.sites if q not in (layout.recombiner, layout.detector))
    g1 = _subgraph_of(twin.device, stage1_sites)
    l_end, r_end = layout.left_arm[-1], layout.right_arm[-1]
    i_l, i_r = g1.index[l_end], g1.index[r_end]

    def offsets_for(sites, x) -> DisorderMap:
        return DisorderMap({q: twin.hidden.get(q) + x[k] for k, q in enumerate(sites)})

    def cost1(x) -> float:
        pops = _site_population(g1, offsets_for(stage1_sites, x), source, stage1_time_ns)
        return -float(pops[i_l] * pops[i_r])

    res1 = nelder_mead(
        cost1,
        np.zeros(len(stage1_sites)),
        scale=config.simplex_scale_mhz,
        max_iterations=config.max_iterations,
        cost_tolerance=config.cost_tolerance,
        param_tolerance=config.param_tolerance,
    )
    pops1 = _site_population(g1, offsets_for(stage1_sites, res1.x), source, stage1_time_ns)
    if pops1[i_l] < stage1_floor or pops1[i_r] < stage1_floor:
        raise CalibrationError(
            f"arm balancing failed: end populations {pops1[i_l]:.4f}/{pops1[i_r]:.4f} below {stage1_floor}"
        )

    all_sites = layout.sites
    g2 = _subgraph_of(twin.device, all_sites)
    i_d = g2.index[layout.detector]
    x0 = np.array([res1.x[stage1_sites.index(q)] if q in stage1_sites else 0.0 for q in all_sites])
    initial = float(_site_population(g2, offsets_for(all_sites, np.zeros(len(all_sites))), source, stage2_time_ns)[i_d])

    def cost2(x) -> float:
        return -float(_site_population(g2, offsets_for(all_sites, x), source, stage2_time_ns)[i_d])

    res2 = nelder_mead(
        cost2,
        x0,
        scale=0.5 * config.simplex_scale_mhz,
        max_iterations=config.max_iterations,
        cost_tolerance=config.cost_tolerance,
        param_tolerance=config.param_tolerance,
    )
    correction = DisorderMap({q: float(res2.x[k]) for k, q in enumerate(all_sites)})
    freq_config = FrequencyConfig.from_disorder(all_sites, correction)
    return InterferometerOptimization(
        correction=correction,
        config=freq_config,
        detector_population=-res2.fun,
        initial_detector_population=initial,
        stage1_product=-res1.fun,
        stage1_history=res1.history,
        stage2_history=res2.history,
    )


# ---------------------------------------------------------------------------
# idle-frequency setup
# ---------------------------------------------------------------------------


def zz_coupling(g_mhz: float, eta1_mhz: float, eta2_mhz: float, delta_mhz: float) -> float:
    """Static ZZ shift -2 g^2 (eta1 + eta2) / ((delta - eta1)(delta + eta2)) in MHz."""
    d1 = delta_mhz - eta1_mhz
    d2 = delta_mhz + eta2_mhz
    if d1 == 0 or d2 == 0:
        which = "delta = eta1" if d1 == 0 else "delta = -eta2"
        raise ValueError(f"ZZ formula pole at the two-photon resonance {which}")
    return -2.0 * g_mhz**2 * (eta1_mhz + eta2_mhz) / (d1 * d2)


MIN_IDLE_GHZ = 4.9
NEIGHBOR_GAP_GHZ = 0.050
F12_GAP_GHZ = 0.045
F02_HALF_WINDOW_GHZ = 0.001


def _idle_conflicts(f: float, q: QubitId, neighbour: QubitId, f_nb: float, device: DeviceModel) -> str | None:
    eta_q = device.qubits[q].anharmonicity_mhz * 1e-3
    eta_nb = device.qubits[neighbour].anharmonicity_mhz * 1e-3
    if abs(f - f_nb) < NEIGHBOR_GAP_GHZ:
        return f"gap |{q}-{neighbour}| below 50 MHz"
    if abs(f - (f_nb + eta_nb / 2.0)) < F02_HALF_WINDOW_GHZ or abs(f_nb - (f + eta_q / 2.0)) < F02_HALF_WINDOW_GHZ:
        return f"two-photon f02/2 collision between {q} and {neighbour}"
    if abs(f - (f_nb + eta_nb)) < F12_GAP_GHZ or abs(f_nb - (f + eta_q)) < F12_GAP_GHZ:
        return f"f01-f12 gap below 45 MHz between {q} and {neighbour}"
    return None


def validate_idle_assignment(device: DeviceModel, assignment: dict) -> list[str]:
    """Standalone constraint checker, independent of the search; returns the
    list of violations (empty means the assignment is feasible)."""
    problems = []
    for q, f in assignment.items():
        if f < MIN_IDLE_GHZ:
            problems.append(f"{q} below the minimum idle frequency {MIN_IDLE_GHZ} GHz")
    for q in assignment:
        for nb in device.neighbors(q):
            if nb in assignment and sorted((q, nb))[0] == q:
                msg = _idle_conflicts(assignment[q], q, nb, assignment[nb], device)
                if msg:
                    problems.append(msg)
    return problems


def assign_idle_frequencies(
    device: DeviceModel,
    tables: dict,
    seed: int = 0,
    max_restarts: int = 200,
) -> dict:
    """Greedy randomized idle-frequency assignment.

    `tables` maps each functional qubit to a list of (frequency_ghz, t1_us)
    candidates. Qubits are processed most-constrained first (shortest current
    table); candidates are drawn with T1 weights; a dead end restarts the
    whole search. Raises after the restart budget with the conflict that
    emptied a table.
    """
    qubits = device.functional_qubits
    for q in qubits:
        if q not in tables or not tables[q]:
            raise ValueError(f"no candidate frequencies for qubit {q}")
    last_conflict = "no conflict recorded"
    for attempt in range(max_restarts):
        rng = rng_stream(seed, 0x1D, attempt)
        available = {
            q: [(f, t1) for f, t1 in tables[q] if f >= MIN_IDLE_GHZ] for q in qubits
        }
        if any(not v for v in available.values()):
            empty = next(q for q, v in available.items() if not v)
            raise CalibrationError(f"qubit {empty} has no candidates above {MIN_IDLE_GHZ} GHz")
        assignment: dict[QubitId, float] = {}
        failed = False
        while len(assignment) < len(qubits):
            pending = [q for q in qubits if q not in assignment]
            q = min(pending, key=lambda p: (len(available[p]), str(p)))
            if not available[q]:
                last_conflict = f"table of {q} emptied by neighbour constraints"
                failed = True
                break
            freqs = np.array([f for f, _ in available[q]])
            weights = np.array([max(t1, 1e-9) for _, t1 in available[q]])
            pick = rng.choice(len(freqs), p=weights / weights.sum())
            f = float(freqs[pick])
            assignment[q] = f
            for nb in device.neighbors(q):
                if nb not in assignment:
                    kept = []
                    for cand, t1 in available[nb]:
                        if _idle_conflicts(cand, nb, q, f, device) is None:
                            kept.append((cand, t1))
                    available[nb] = kept
        if failed:
            continue
        problems = validate_idle_assignment(device, assignment)
        if problems:
            last_conflict = problems[0]
            continue
        return {q: assignment[q] for q in qubits}
    raise CalibrationError(f"no feasible idle-frequency assignment in {max_restarts} restarts: {last_conflict}")
