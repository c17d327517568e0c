"""Counts post-processing and error mitigation.

Pipeline order: readout-error inversion (per-qubit assignment-matrix
inverses applied sparsely), clipping of negative quasi-probabilities,
symmetry post-selection on electron number and S_z, RDM assembly from the
measurement plan, trace rescaling, N-representability reporting, and a
global white-noise calibration against a reference state.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations, permutations
from math import comb

import numpy as np

from .fermion import FermionOperator
from .planner import MeasurementPlan, product_value
from .rdm import RDM
from .simulator import (
    CountsTable, NoiseSpec, Statevector, operator_matrix_in_sector, sample,
    sector_basis,
)

# ---------------------------------------------------------------------------
# readout calibration and inversion


@dataclass
class AssignmentCalibration:
    """Per-qubit 2x2 readout assignment matrices and their inverses."""

    matrices: np.ndarray   # shape (n, 2, 2); column y holds p(read x | true y)
    inverses: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        self.inverses = np.asarray(self.inverses, dtype=float)
        n = self.matrices.shape[0]
        if not np.allclose(self.matrices.sum(axis=1), 1.0, atol=1e-10):
            raise ValueError("assignment matrix columns must sum to 1")
        eye = np.einsum("nij,njk->nik", self.inverses, self.matrices)
        if not np.allclose(eye, np.broadcast_to(np.eye(2), (n, 2, 2)),
                           atol=1e-10):
            raise ValueError("inverses do not match the assignment matrices")

    @property
    def n_qubits(self) -> int:
        return self.matrices.shape[0]

    @classmethod
    def identity(cls, n_qubits: int) -> "AssignmentCalibration":
        eye = np.broadcast_to(np.eye(2), (n_qubits, 2, 2)).copy()
        return cls(eye, eye.copy())

    @classmethod
    def from_flip_rates(cls, p01, p10) -> "AssignmentCalibration":
        p01, p10 = np.atleast_1d(p01).astype(float), \
            np.atleast_1d(p10).astype(float)
        n = p01.size
        mats = np.empty((n, 2, 2))
        for q in range(n):
            det = 1.0 - p01[q] - p10[q]
            if det <= 1e-9 or p01[q] >= 0.5 or p10[q] >= 0.5:
                raise ValueError(
                    f"assignment matrix singular on qubit {q}: "
                    f"flip rates {p01[q]:.3f}/{p10[q]:.3f}")
            mats[q] = [[1 - p01[q], p10[q]], [p01[q], 1 - p10[q]]]
        invs = np.linalg.inv(mats)
        return cls(mats, invs)


def calibrate_readout(noise: NoiseSpec, n_qubits: int, shots: int,
                      seed: int = 0) -> AssignmentCalibration:
    """Estimate per-qubit flip rates from all-zeros and all-ones preparations."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p01 = np.zeros(n_qubits)
    p10 = np.zeros(n_qubits)
    for prep, rates, flipped in ((0, p01, "1"), ((1 << n_qubits) - 1,
                                                 p10, "0")):
        state = Statevector.basis_state(prep, n_qubits)
        counts = sample(state, shots, noise, seed=seed + prep)
        for bits, c in counts.counts.items():
            for q in range(n_qubits):
                if bits[-1 - q] == flipped:
                    rates[q] += c
        rates /= shots
    return AssignmentCalibration.from_flip_rates(p01, p10)


def _flip_bit(bits: str, q: int) -> str:
    i = len(bits) - 1 - q
    return bits[:i] + ("0" if bits[i] == "1" else "1") + bits[i + 1:]


def apply_qrem(counts: CountsTable, cal: AssignmentCalibration) -> dict:
    """Per-qubit inverse applied tensor-wise on the observed sparse support.

    Returns a bitstring -> quasi-probability dict (entries may be negative).
    """
    probs = counts.probabilities()
    n = len(next(iter(probs)))
    if cal.n_qubits != n:
        raise ValueError("calibration does not cover all qubits")
    for q in range(n):
        inv = cal.inverses[q]
        out: dict = {}
        for bits in set(probs) | {_flip_bit(b, q) for b in probs}:
            b = int(bits[-1 - q])
            v = inv[b, 0] * probs.get(bits if b == 0 else _flip_bit(bits, q),
                                      0.0) \
                + inv[b, 1] * probs.get(bits if b == 1 else _flip_bit(bits, q),
                                        0.0)
            if v != 0.0:
                out[bits] = v
        probs = out
    return probs


def clip_to_physical(quasi: dict, tol: float = 1e-6) -> dict:
    """Zero negative entries, redistributing their mass evenly over the
    remaining positive entries, iterated to a fixed point."""
    total = sum(quasi.values())
    if abs(total - 1.0) > tol:
        raise ValueError(f"quasi-probabilities sum to {total}, not 1")
    entries = dict(sorted(quasi.items()))
    removed = set()
    while True:
        negatives = [b for b, v in entries.items() if v < 0.0]
        if not negatives:
            break
        mass = sum(entries[b] for b in negatives)
        for b in negatives:
            entries[b] = 0.0
            removed.add(b)
        positive = [b for b, v in entries.items()
                    if v > 0.0 and b not in removed]
        if not positive:
            raise ValueError("no positive probability mass to redistribute to")
        share = mass / len(positive)
        for b in positive:
            entries[b] += share
    norm = sum(entries.values())
    return {b: v / norm for b, v in entries.items()}


def symmetry_postselect(probs: dict, n_electrons: int, s_z: float,
                        spins) -> tuple[dict, float]:
    """Keep outcomes with the right electron number and S_z; renormalize.

    `spins` labels each bit position ("u"/"d") in the measured register.
    """
    accepted = {}
    total = 0.0
    for bits, p in probs.items():
        total += p
        occ = [q for q in range(len(bits)) if bits[-1 - q] == "1"]
        if len(occ) != n_electrons:
            continue
        up = sum(1 for q in occ if spins[q] == "u")
        if abs(0.5 * (up - (len(occ) - up)) - s_z) > 1e-12:
            continue
        accepted[bits] = p
    mass = sum(accepted.values())
    if mass <= 0.0:
        raise ValueError("post-selection removed all probability mass")
    rate = mass / total
    return {b: p / mass for b, p in accepted.items()}, rate


# ---------------------------------------------------------------------------
# RDM assembly


def assemble_rdm(plan: MeasurementPlan, circuits, tables,
                 n_electrons: int) -> RDM:
    """Average decoded eigenvalue products into the canonical RDM storage.

    `circuits[i]` is the MeasurementCircuit and `tables[i]` the (possibly
    mitigated) bitstring -> probability dict for plan basis i.
    """
    if len(circuits) != len(plan.bases) or len(tables) != len(plan.bases):
        raise ValueError("per-basis circuits/tables do not match the plan")
    order = next(iter(plan.coverage)).order if plan.coverage else 0
    # measured elements use ascending annihilation order; canonical RDM
    # storage applies annihilations in descending order
    reversal = -1.0 if (order * (order - 1) // 2) % 2 else 1.0
    rdm = RDM(order, plan.n_modes, n_electrons)
    for e in sorted(plan.coverage):
        value = 0.0
        for b_idx, sign, factors in plan.coverage[e]:
            mc, table = circuits[b_idx], tables[b_idx]
            if mc is None or table is None:
                raise ValueError(f"basis {b_idx} covering {e} is unavailable")
            mean = sum(p * product_value(mc, factors, int(bits, 2))
                       for bits, p in table.items())
            value += sign * mean
        rdm.set(e.creations, e.annihilations, reversal * value)
    return rdm


def rescale_rdm(rdm: RDM) -> RDM:
    """Scale so the trace matches C(N_e, p) exactly."""
    ideal = rdm.ideal_trace()
    actual = rdm.trace()
    if abs(actual) < 1e-6 * ideal:
        raise ValueError(f"RDM trace {actual} too close to zero to rescale")
    return rdm.scaled(ideal / actual)


@dataclass
class RepresentabilityReport:
    hermiticity: float
    antisymmetry: float
    trace_residual: float
    contraction_residual: float
    min_eigenvalue: float

    def to_json(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def check_representability(rdm: RDM) -> RepresentabilityReport:
    """Necessary p-RDM validity conditions; reporting only, never mutates."""
    herm = 0.0
    for (sub, sup), v in rdm.data.items():
        mirror = rdm.data.get((sup, sub))
        herm = max(herm, abs(v - (mirror.conjugate() if mirror is not None
                                  else 0.0)))
    anti = 0.0
    keys = list(combinations(range(rdm.n_modes), rdm.order))
    for sub in keys[:6]:
        for sup in keys[:6]:
            base = rdm.get(sub, sup)
            for perm in list(permutations(sub))[:4]:
                swaps = _parity(perm, sub)
                anti = max(anti, abs(rdm.get(perm, sup) - swaps * base))
    trace_residual = abs(rdm.trace() - rdm.ideal_trace())
    if rdm.order >= 1 and rdm.n_electrons > rdm.order - 1:
        lower = rdm.contract()
        contraction_residual = abs(lower.trace() - lower.ideal_trace())
    else:
        contraction_residual = 0.0
    mat, _ = rdm.matricize()
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))))
    return RepresentabilityReport(herm, anti, trace_residual,
                                  contraction_residual, min_eig)


def _parity(perm, base) -> float:
    seen = list(perm)
    sign = 1.0
    for i in range(len(seen)):
        while seen[i] != base[i]:
            j = seen.index(base[i])
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# global white-noise calibration


def reference_calibrate(noisy_trial: float, noisy_ref: float,
                        ideal_ref: float, mixed_value: float,
                        tolerance: float = 1e-9) -> tuple[float, float]:
    """Estimate the white-noise rate from a reference state and invert it.

    q̂ = (noisy_ref − ideal_ref)/(mixed_value − ideal_ref);
    corrected = (noisy_trial − q̂·mixed_value)/(1 − q̂).
    """
    denom = mixed_value - ideal_ref
    if abs(denom) <= tolerance:
        raise ValueError("reference value equals the mixed-state value; "
                         "white-noise rate is unresolvable")
    q_hat = (noisy_ref - ideal_ref) / denom
    if q_hat >= 1.0:
        raise ValueError(f"estimated white-noise rate {q_hat} >= 1")
    if q_hat < 0.0:
        warnings.warn(f"estimated white-noise rate {q_hat} clamped to 0")
        q_hat = 0.0
    corrected = (noisy_trial - q_hat * mixed_value) / (1.0 - q_hat)
    return q_hat, corrected


def mixed_state_value(op: FermionOperator, n_electrons: int, sz=None,
                      spins=None) -> float:
    """Tr(op) / dim over the symmetry sector surviving post-selection."""
    basis = sector_basis(op.n_modes, n_electrons, sz=sz, spins=spins)
    if not basis:
        raise ValueError("empty symmetry sector")
    mat = operator_matrix_in_sector(op, basis)
    return float(np.trace(mat).real / len(basis))
