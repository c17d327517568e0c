"""Hamiltonian moments, cumulants, and the Lanczos-corrected energy.

The ground-state estimate is built from the first four Hamiltonian moments
<H^p> of a trial state: moments are converted to cumulants c_1..c_4 by the
connected-moment recursion, and the analytic second-order Lanczos expansion

    E_L = c1 - c2^2/(c3^2 - c2 c4) (sqrt(3 c3^2 - 2 c2 c4) - c3)

gives an energy below <H> = c1 that is exact for eigenstates and for any
state over a two-eigenvalue Hamiltonian. Moments come either from an
assembled reduced density matrix or from a statevector oracle. Bootstrap
resampling of the per-basis count tables propagates shot noise through the
full analysis pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .fermion import FermionOperator, expectation_from_rdm, multiply
from .rdm import RDM
from .simulator import CountsTable, Statevector, operator_matrix_in_sector

# ---------------------------------------------------------------------------
# domain types


@dataclass
class MomentSet:
    """First four Hamiltonian moments <H^p> (Ha, Ha^2, Ha^3, Ha^4)."""

    m1: float
    m2: float
    m3: float
    m4: float

    def as_tuple(self) -> tuple:
        return (self.m1, self.m2, self.m3, self.m4)

    def validate(self, tol: float = 1e-9):
        """Variance nonnegativity; holds for moments of any valid state."""
        if self.m2 < self.m1 ** 2 - tol:
            raise ValueError(
                f"moment set has negative variance: m2 - m1^2 = "
                f"{self.m2 - self.m1 ** 2}")
        return self


@dataclass
class CumulantSet:
    """Connected moments c_1..c_4 derived from a MomentSet."""

    c1: float
    c2: float
    c3: float
    c4: float

    def as_tuple(self) -> tuple:
        return (self.c1, self.c2, self.c3, self.c4)


@dataclass
class EnergyEstimate:
    """Both energy estimators with bootstrap uncertainties and provenance."""

    h_expect: float
    e_l: float
    std_h: float = 0.0
    std_el: float = 0.0
    q_hat: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_h < 0.0 or self.std_el < 0.0:
            raise ValueError("standard deviations must be nonnegative")

    def to_json(self) -> dict:
        return {
            "h_expect": float(self.h_expect),
            "e_l": float(self.e_l),
            "std_h": float(self.std_h),
            "std_el": float(self.std_el),
            "q_hat": float(self.q_hat),
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EnergyEstimate":
        return cls(obj["h_expect"], obj["e_l"], obj["std_h"], obj["std_el"],
                   obj["q_hat"], dict(obj.get("metadata", {})))


# ---------------------------------------------------------------------------
# cumulants and the Lanczos energy


def cumulants(m: MomentSet) -> CumulantSet:
    """Connected-moment recursion, expanded in closed form.

    c_p = m_p - sum_{j=0}^{p-2} C(p-1, j) c_{j+1} m_{p-1-j}.
    """
    c1 = m.m1
    c2 = m.m2 - m.m1 ** 2
    c3 = m.m3 - 3.0 * m.m1 * m.m2 + 2.0 * m.m1 ** 3
    c4 = m.m4 - m.m1 * m.m3 - 3.0 * c2 * m.m2 - 3.0 * c3 * m.m1
    return CumulantSet(c1, c2, c3, c4)


def _cumulant_scale(c: CumulantSet) -> float:
    """Characteristic energy scale, for dimensionally consistent tolerances."""
    return max(1.0, abs(c.c1), abs(c.c2) ** 0.5, abs(c.c3) ** (1.0 / 3.0),
               abs(c.c4) ** 0.25)


def lanczos_energy(c: CumulantSet, tol: float = 1e-9) -> float:
    """Second-order Lanczos ground-state estimate from four cumulants.

    The closed form is an indeterminate 0/0 at c3^2 = c2 c4 (every eigenstate
    lands there). Writing D = 3 c3^2 - 2 c2 c4, the identity
    D - c3^2 = 2 (c3^2 - c2 c4) turns the correction into
    2 c2^2 / (sqrt(D) + c3) whenever c3 >= 0 -- an algebraically exact,
    cancellation-free form with no denominator singularity. For c3 < 0 the
    limit genuinely diverges, so a vanishing denominator is an error.
    """
    u = _cumulant_scale(c)
    c2 = c.c2
    if c2 < 0.0:
        if c2 < -tol * u * u:
            raise ValueError(f"negative second cumulant {c2}: "
                             "inconsistent or excessively noisy moments")
        c2 = 0.0
    if c2 < tol * u * u:
        return c.c1  # zero-variance state: already an eigenstate
    disc = 3.0 * c.c3 ** 2 - 2.0 * c2 * c.c4
    if disc < 0.0:
        if disc < -tol * u ** 6:
            raise ValueError(f"negative discriminant {disc}: "
                             "inconsistent or excessively noisy moments")
        disc = 0.0
    if c.c3 >= 0.0:
        denom = sqrt(disc) + c.c3
        if denom <= tol * u ** 3:
            raise ValueError(
                "degenerate cumulants with vanishing c3: the Lanczos "
                "correction diverges (inconsistent moments)")
        return c.c1 - 2.0 * c2 ** 2 / denom
    denom = c.c3 ** 2 - c2 * c.c4
    if abs(denom) <= tol * (c.c3 ** 2 + abs(c2 * c.c4)):
        raise ValueError(
            "degenerate cumulants with negative c3: the Lanczos "
            "correction diverges (inconsistent moments)")
    return c.c1 - c2 ** 2 / denom * (sqrt(disc) - c.c3)


# ---------------------------------------------------------------------------
# moments


def hamiltonian_powers(h: FermionOperator, max_power: int = 4,
                       tol: float = 1e-12) -> list:
    """Normal-ordered [H, H^2, ..., H^max_power]."""
    powers = [h]
    for _ in range(max_power - 1):
        powers.append(multiply(powers[-1], h, tol=tol))
    return powers


def moments_from_rdm(h_powers, rdm: RDM, n_electrons: int) -> MomentSet:
    """Moments by contracting each normal-ordered power against the RDM.

    Terms of order above the electron number are exact zeros and are dropped
    inside the contraction.
    """
    if len(h_powers) != 4:
        raise ValueError("expected the four powers [H, H^2, H^3, H^4]")
    vals = [expectation_from_rdm(hp, rdm, n_electrons) for hp in h_powers]
    return MomentSet(*vals)


def moments_from_statevector(h: FermionOperator,
                             state: Statevector) -> MomentSet:
    """Oracle moments via the dense Fock-space matrix of H."""
    if h.n_modes != state.n_qubits:
        raise ValueError("mode-count mismatch")
    basis = list(range(1 << h.n_modes))
    mat = operator_matrix_in_sector(h, basis)
    vec = state.amplitudes
    vals = []
    cur = vec
    for _ in range(4):
        cur = mat @ cur
        vals.append(float(np.real(np.vdot(vec, cur))))
    return MomentSet(*vals)


# ---------------------------------------------------------------------------
# bootstrap resampling


@dataclass
class BootstrapResult:
    means: dict
    stds: dict
    resamples: int
    failures: int

    def to_json(self) -> dict:
        return {"means": {k: float(v) for k, v in sorted(self.means.items())},
                "stds": {k: float(v) for k, v in sorted(self.stds.items())},
                "resamples": self.resamples, "failures": self.failures}


def bootstrap(tables, pipeline, resamples: int = 500,
              seed: int = 0) -> BootstrapResult:
    """Multinomial resampling of per-basis counts through a full pipeline.

    Each resample independently redraws every table at its original shot
    count (bases are measured in separate runs, so there are no cross-basis
    correlations to preserve) and calls ``pipeline(tables)``, which must
    return a mapping of estimator name to value. Failed resamples are
    recorded and excluded; more than 10% failures aborts. Deterministic for
    a fixed seed.
    """
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    tables = list(tables)
    children = np.random.SeedSequence(seed).spawn(resamples)
    keys_per_table = [sorted(t.counts) for t in tables]
    probs_per_table = []
    for t, keys in zip(tables, keys_per_table):
        p = np.array([t.counts[k] for k in keys], dtype=float)
        probs_per_table.append(p / p.sum())
    samples = []
    failures = 0
    for child in children:
        rng = np.random.default_rng(child)
        redrawn = []
        for t, keys, p in zip(tables, keys_per_table, probs_per_table):
            draw = rng.multinomial(t.shots, p)
            redrawn.append(CountsTable(
                counts={k: int(n) for k, n in zip(keys, draw) if n},
                shots=t.shots))
        try:
            samples.append(dict(pipeline(redrawn)))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            failures += 1
    if failures > 0.1 * resamples:
        raise ValueError(
            f"bootstrap failure fraction {failures}/{resamples} exceeds 10%")
    names = sorted(samples[0])
    means = {k: float(np.mean([s[k] for s in samples])) for k in names}
    stds = {k: float(np.std([s[k] for s in samples], ddof=1)) for k in names}
    return BootstrapResult(means, stds, resamples, failures)
