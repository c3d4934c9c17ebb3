"""Simulated joint single-shot readout with per-qubit confusion errors,
excitation-number post-selection, and distribution fidelities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import rng_stream
from .sector import QuantumState

__all__ = [
    "ReadoutModel",
    "ShotCounts",
    "sample_shots",
    "post_select",
    "overlap_fidelity",
    "effective_temperature",
    "thermal_excited_probability",
]

# h/k_B in mK per GHz: h * 1e9 / (k_B * 1e-3)
_H_OVER_KB_MK_PER_GHZ = 6.62607015e-34 * 1e9 / (1.380649e-23 * 1e-3)


@dataclass(frozen=True)
class ReadoutModel:
    """Independent per-qubit confusion matrix plus optional thermal excitation.

    f0[j] = P(read 0 | true 0), f1[j] = P(read 1 | true 1). Thermal excitation
    flips a true 0 to 1 at preparation, modelling spurious heating that
    post-selection is meant to suppress.
    """

    f0: np.ndarray
    f1: np.ndarray
    thermal_excitation: np.ndarray

    @classmethod
    def uniform(cls, n_sites: int, f0: float = 0.966, f1: float = 0.919, thermal: float = 0.0) -> "ReadoutModel":
        return cls.validate_arrays(np.full(n_sites, f0), np.full(n_sites, f1), np.full(n_sites, thermal))

    @classmethod
    def perfect(cls, n_sites: int) -> "ReadoutModel":
        return cls.uniform(n_sites, 1.0, 1.0, 0.0)

    @classmethod
    def from_device(cls, device, sites, thermal_from_temperature: bool = False) -> "ReadoutModel":
        """Per-qubit fidelities for the given site order; optionally derive the
        thermal excitation from each qubit's effective temperature."""
        f0, f1, thermal = [], [], []
        for q in sites:
            params = device.qubits[q]
            f0.append(params.readout_fidelity_0)
            f1.append(params.readout_fidelity_1)
            if thermal_from_temperature:
                thermal.append(
                    thermal_excited_probability(params.effective_temperature_mk, params.idle_frequency_ghz)
                )
            else:
                thermal.append(0.0)
        return cls.validate_arrays(f0, f1, thermal)

    @classmethod
    def validate_arrays(cls, f0, f1, thermal) -> "ReadoutModel":
        f0, f1, thermal = (np.asarray(a, dtype=float) for a in (f0, f1, thermal))
        for name, arr in (("f0", f0), ("f1", f1), ("thermal_excitation", thermal)):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} probabilities must lie in [0, 1]")
        return cls(f0, f1, thermal)

    @property
    def n_sites(self) -> int:
        return len(self.f0)


@dataclass
class ShotCounts:
    counts: dict
    n_shots: int
    n_sites: int

    def __post_init__(self):
        total = sum(self.counts.values())
        if total != self.n_shots:
            raise ValueError(f"counts sum to {total}, expected {self.n_shots}")

    def populations(self) -> np.ndarray:
        """Per-site excitation frequency across the retained shots."""
        pops = np.zeros(self.n_sites)
        for bits, c in self.counts.items():
            for j, ch in enumerate(bits):
                if ch == "1":
                    pops[j] += c
        return pops / max(self.n_shots, 1)

    def to_lines(self) -> str:
        return "".join(f"{bits} {count}\n" for bits, count in sorted(self.counts.items()))

    @classmethod
    def from_lines(cls, text: str, n_sites: int) -> "ShotCounts":
        counts = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            bits, raw = line.split()
            counts[bits] = int(raw)
        return cls(counts, sum(counts.values()), n_sites)


def sample_shots(state: QuantumState, readout: ReadoutModel, n_shots: int, seed: int) -> ShotCounts:
    """Draw bitstrings from |amplitude|^2, then corrupt them per qubit."""
    if n_shots <= 0:
        raise ValueError("n_shots must be positive")
    state.check_normalized()
    n = state.basis.n_sites
    if readout.n_sites != n:
        raise ValueError(f"readout model covers {readout.n_sites} sites, state has {n}")
    p = np.abs(state.amplitudes) ** 2
    p = p / p.sum()
    rng = rng_stream(seed, 0x5A)
    drawn = rng.choice(state.basis.dimension, size=n_shots, p=p)
    occ = state.basis.occupancy_matrix().astype(bool)
    bits = occ[drawn]  # n_shots x n_sites, true occupations
    u = rng.random(size=bits.shape)
    thermal = ~bits & (u < readout.thermal_excitation)
    bits = bits | thermal
    u = rng.random(size=bits.shape)
    flip_1to0 = bits & (u >= readout.f1)
    flip_0to1 = ~bits & (u >= readout.f0)
    observed = (bits & ~flip_1to0) | flip_0to1
    patterns, mults = np.unique(observed, axis=0, return_counts=True)
    counts: dict[str, int] = {}
    for row, mult in zip(patterns, mults):
        counts["".join("1" if b else "0" for b in row)] = int(mult)
    return ShotCounts(counts, n_shots, n)


def post_select(counts: ShotCounts, n_excitations: int) -> tuple[ShotCounts, float]:
    """Keep shots conserving the prepared excitation number."""
    kept = {bits: c for bits, c in counts.counts.items() if bits.count("1") == n_excitations}
    n_kept = sum(kept.values())
    if n_kept == 0:
        raise ValueError("post-selection retained zero shots; statistics unusable")
    retention = n_kept / counts.n_shots
    return ShotCounts(kept, n_kept, counts.n_sites), retention


def overlap_fidelity(p, q) -> float:
    """Squared statistical overlap (sum sqrt(p q))^2 / (sum p * sum q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share an index set")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("distributions must be nonnegative")
    sp_, sq = p.sum(), q.sum()
    if sp_ == 0 or sq == 0:
        raise ValueError("cannot compare an all-zero distribution")
    return float(np.sum(np.sqrt(p * q)) ** 2 / (sp_ * sq))


def effective_temperature(p_excited: float, qubit_frequency_ghz: float) -> float:
    """Two-level Boltzmann inversion: temperature in mK from the excited fraction."""
    if not 0.0 < p_excited < 0.5:
        raise ValueError("excited-state probability must lie in (0, 0.5)")
    if qubit_frequency_ghz <= 0:
        raise ValueError("qubit frequency must be positive")
    return _H_OVER_KB_MK_PER_GHZ * qubit_frequency_ghz / np.log((1.0 - p_excited) / p_excited)


def thermal_excited_probability(temperature_mk: float, qubit_frequency_ghz: float) -> float:
    """Inverse of effective_temperature: equilibrium excited fraction at T."""
    if temperature_mk <= 0:
        return 0.0
    x = np.exp(-_H_OVER_KB_MK_PER_GHZ * qubit_frequency_ghz / temperature_mk)
    return float(x / (1.0 + x))
