"""Readout inversion, clipping, post-selection, RDM assembly, calibration."""
import numpy as np
import pytest

from qcmoments.conventions import interleaved_spins
from qcmoments.fermion import FermionOperator, number_operator
from qcmoments.mitigation import (
    AssignmentCalibration, apply_qrem, assemble_rdm, calibrate_readout,
    check_representability, clip_to_physical, mixed_state_value,
    reference_calibrate, rescale_rdm, symmetry_postselect,
)
from qcmoments.planner import build_measurement_circuit, build_plan, \
    enumerate_elements
from qcmoments.rdm import RDM, rdm_from_determinant
from qcmoments.simulator import (
    CountsTable, NoiseSpec, Statevector, rdm_from_statevector, run, sample,
    sector_basis,
)
from qcmoments.conventions import bits_to_string


# -- calibration

def test_calibrate_zero_noise_is_identity():
    cal = calibrate_readout(NoiseSpec(), 3, shots=100)
    assert np.allclose(cal.matrices, np.broadcast_to(np.eye(2), (3, 2, 2)))


def test_calibrate_estimates_flip_rates():
    noise = NoiseSpec.uniform_readout(4, p01=0.02, p10=0.05)
    cal = calibrate_readout(noise, 4, shots=100_000, seed=5)
    sigma01 = np.sqrt(0.02 * 0.98 / 100_000)
    sigma10 = np.sqrt(0.05 * 0.95 / 100_000)
    for q in range(4):
        assert abs(cal.matrices[q][1, 0] - 0.02) < 3 * sigma01 + 1e-12
        assert abs(cal.matrices[q][0, 1] - 0.05) < 3 * sigma10 + 1e-12


def test_calibrate_singular_matrix_is_an_error():
    noise = NoiseSpec.uniform_readout(2, p01=0.0, p10=0.6)
    with pytest.raises(ValueError, match="singular"):
        calibrate_readout(noise, 2, shots=50_000)


def test_assignment_calibration_validation():
    bad = np.broadcast_to(np.array([[0.9, 0.2], [0.2, 0.8]]), (1, 2, 2))
    with pytest.raises(ValueError, match="sum to 1"):
        AssignmentCalibration(bad.copy(), bad.copy())


# -- QREM

def test_qrem_identity_calibration_is_noop():
    counts = CountsTable({"010": 40, "111": 60}, shots=100)
    out = apply_qrem(counts, AssignmentCalibration.identity(3))
    assert out == pytest.approx(counts.probabilities())


def test_qrem_reduces_total_variation():
    rng = np.random.default_rng(9)
    amps = rng.normal(size=16)
    state = Statevector((amps / np.linalg.norm(amps)).astype(complex))
    ideal = state.probabilities()
    noise = NoiseSpec.uniform_readout(4, p01=0.03, p10=0.06, seed=11)
    counts = sample(state, 1_000_000, noise)
    cal = AssignmentCalibration.from_flip_rates([0.03] * 4, [0.06] * 4)
    quasi = apply_qrem(counts, cal)

    def tv(dist):
        return 0.5 * sum(abs(dist.get(bits_to_string(i, 4), 0.0) - ideal[i])
                         for i in range(16))

    assert tv(quasi) * 5 <= tv(counts.probabilities())


def test_qrem_produces_negative_entries():
    counts = CountsTable({"00": 100}, shots=100)
    cal = AssignmentCalibration.from_flip_rates([0.2, 0.2], [0.1, 0.1])
    quasi = apply_qrem(counts, cal)
    assert min(quasi.values()) < 0.0
    assert sum(quasi.values()) == pytest.approx(1.0, abs=1e-12)


# -- clipping

def reference_clip(quasi):
    """Independent re-implementation of iterative even redistribution."""
    vals = dict(quasi)
    frozen = set()
    while min(vals.values()) < 0:
        neg = sum(v for v in vals.values() if v < 0)
        for b, v in list(vals.items()):
            if v < 0:
                vals[b] = 0.0
                frozen.add(b)
        live = [b for b, v in vals.items() if v > 0 and b not in frozen]
        for b in live:
            vals[b] += neg / len(live)
    total = sum(vals.values())
    return {b: v / total for b, v in vals.items()}


def test_clip_already_physical():
    dist = {"00": 0.25, "11": 0.75}
    assert clip_to_physical(dist) == pytest.approx(dist)


def test_clip_two_outcomes():
    out = clip_to_physical({"0": 1.1, "1": -0.1})
    assert out == pytest.approx({"0": 1.0, "1": 0.0})


def test_clip_matches_reference_on_random_quasi_distributions():
    rng = np.random.default_rng(21)
    for _ in range(20):
        raw = rng.normal(size=8) * 0.3 + 0.125
        raw = raw / raw.sum()
        quasi = {format(i, "03b"): float(v) for i, v in enumerate(raw)}
        out = clip_to_physical(quasi)
        ref = reference_clip(quasi)
        assert out == pytest.approx(ref, abs=1e-12)
        assert min(out.values()) >= 0.0
        assert sum(out.values()) == pytest.approx(1.0, abs=1e-10)


def test_clip_errors():
    with pytest.raises(ValueError, match="sum"):
        clip_to_physical({"0": 0.5, "1": 0.1})


# -- post-selection

def test_postselect_uniform_acceptance_rate():
    spins = interleaved_spins(8)
    uniform = {format(i, "08b"): 1 / 256 for i in range(256)}
    filtered, rate = symmetry_postselect(uniform, 4, 0.0, spins)
    assert rate == pytest.approx(36 / 256)
    assert len(filtered) == 36
    assert sum(filtered.values()) == pytest.approx(1.0)


def test_postselect_clean_state_accepts_everything():
    probs = {"00001111": 1.0}
    filtered, rate = symmetry_postselect(probs, 4, 0.0, interleaved_spins(8))
    assert rate == 1.0 and filtered == probs


def test_postselect_zero_mass_is_an_error():
    with pytest.raises(ValueError, match="mass"):
        symmetry_postselect({"0011": 1.0}, 3, 0.5, interleaved_spins(4))


# -- RDM assembly

def exact_tables(plan, layout, state):
    circuits, tables = [], []
    for basis in plan.bases:
        mc = build_measurement_circuit(basis, layout)
        probs = np.abs(run(mc.circuit, state).amplitudes) ** 2
        circuits.append(mc)
        tables.append({bits_to_string(i, plan.n_modes): float(p)
                       for i, p in enumerate(probs) if p > 1e-15})
    return circuits, tables


def random_sector_state(n_modes, n_electrons, seed, sz=None):
    """Random real state in a fixed (N, S_z) sector so that all
    spin-nonconserving RDM elements vanish exactly."""
    spins = interleaved_spins(n_modes)
    rng = np.random.default_rng(seed)
    amps = np.zeros(1 << n_modes)
    for mask in sector_basis(n_modes, n_electrons,
                             sz=0.0 if sz is None else sz, spins=spins):
        amps[mask] = rng.normal()
    return Statevector((amps / np.linalg.norm(amps)).astype(complex))


def test_assemble_rdm_matches_statevector_oracle():
    spins = interleaved_spins(4)
    plan = build_plan(enumerate_elements(4, 2, spins), spins)
    state = random_sector_state(4, 2, seed=3)
    circuits, tables = exact_tables(plan, (0, 1, 2, 3), state)
    rdm = assemble_rdm(plan, circuits, tables, n_electrons=2)
    oracle = rdm_from_statevector(state, 2, n_electrons=2)
    for key in oracle.data:
        assert rdm.get(*key) == pytest.approx(oracle.get(*key), abs=1e-9)


def test_assemble_rdm_hartree_fock_pattern():
    spins = interleaved_spins(4)
    plan = build_plan(enumerate_elements(4, 2, spins), spins)
    state = Statevector.basis_state(0b0011, 4)
    circuits, tables = exact_tables(plan, (0, 1, 2, 3), state)
    rdm = assemble_rdm(plan, circuits, tables, n_electrons=2)
    ref = rdm_from_determinant((0, 1), 4, 2)
    for sub in [(0, 1), (0, 2), (2, 3), (1, 3)]:
        for sup in [(0, 1), (0, 2), (2, 3), (1, 3)]:
            assert rdm.get(sub, sup) == pytest.approx(
                ref.get(sub, sup), abs=1e-10)


def test_assemble_rdm_from_sampled_counts():
    spins = interleaved_spins(4)
    plan = build_plan(enumerate_elements(4, 2, spins), spins)
    state = random_sector_state(4, 2, seed=13)
    oracle = rdm_from_statevector(state, 2, n_electrons=2)
    circuits, tables = [], []
    for i, basis in enumerate(plan.bases):
        mc = build_measurement_circuit(basis, (0, 1, 2, 3))
        out = run(mc.circuit, state)
        counts = sample(out, 100_000, NoiseSpec(), seed=100 + i)
        circuits.append(mc)
        tables.append(counts.probabilities())
    rdm = assemble_rdm(plan, circuits, tables, n_electrons=2)
    # 5-sigma-style bound: each product mean carries at most ~2/sqrt(shots)
    for key in oracle.data:
        assert abs(rdm.get(*key) - oracle.get(*key)) < 0.05


def test_assemble_rdm_missing_basis_is_an_error():
    spins = interleaved_spins(4)
    plan = build_plan(enumerate_elements(4, 2, spins), spins)
    state = random_sector_state(4, 2, seed=3)
    circuits, tables = exact_tables(plan, (0, 1, 2, 3), state)
    circuits[0] = None
    with pytest.raises(ValueError, match="unavailable"):
        assemble_rdm(plan, circuits, tables, n_electrons=2)


# -- rescaling and representability

def test_rescale_restores_ideal_trace():
    rdm = rdm_from_determinant((0, 1, 2, 3), 6, 2).scaled(0.8)
    out = rescale_rdm(rdm)
    assert out.trace() == pytest.approx(out.ideal_trace(), abs=1e-12)
    assert out.get((0, 1), (0, 1)) == pytest.approx(
        0.8 * 1.25, abs=1e-12)
    again = rescale_rdm(out)
    assert again.trace() == pytest.approx(out.trace(), abs=1e-12)


def test_rescale_zero_trace_is_an_error():
    rdm = RDM(2, 4, 2)
    rdm.set((0, 1), (0, 1), 0.0)
    with pytest.raises(ValueError, match="trace"):
        rescale_rdm(rdm)


def test_representability_exact_state():
    state = random_sector_state(4, 2, seed=23)
    rdm = rdm_from_statevector(state, 2, n_electrons=2)
    report = check_representability(rdm)
    assert report.hermiticity < 1e-9
    assert report.antisymmetry < 1e-9
    assert report.trace_residual < 1e-9
    assert report.contraction_residual < 1e-9
    assert report.min_eigenvalue >= -1e-9


def test_representability_mixed_sector_state():
    from itertools import combinations
    rdm = RDM(2, 4, 2)
    dets = list(combinations(range(4), 2))
    for sub in dets:
        rdm.set(sub, sub, 0.0)
    for det in dets:
        contrib = rdm_from_determinant(det, 4, 2)
        for key, v in contrib.data.items():
            rdm.data[key] = rdm.data.get(key, 0.0) + v / len(dets)
    report = check_representability(rdm)
    assert report.trace_residual < 1e-12
    assert report.min_eigenvalue >= -1e-12


def test_representability_flags_corruption():
    state = random_sector_state(4, 2, seed=29)
    rdm = rdm_from_statevector(state, 2, n_electrons=2)
    rdm.set_raw((0, 1), (0, 2), rdm.get((0, 1), (0, 2)) + 0.3)
    report = check_representability(rdm)
    assert report.hermiticity > 0.1


# -- white-noise calibration

def test_reference_calibrate_noiseless():
    q, corrected = reference_calibrate(-1.2, -2.0, -2.0, 0.5)
    assert q == 0.0 and corrected == -1.2


@pytest.mark.parametrize("q", [0.05, 0.3, 0.6, 0.9])
def test_reference_calibrate_exact_white_noise(q):
    ideal_trial, ideal_ref, mixed = -75.0, -74.2, -1.5
    noisy_trial = (1 - q) * ideal_trial + q * mixed
    noisy_ref = (1 - q) * ideal_ref + q * mixed
    q_hat, corrected = reference_calibrate(noisy_trial, noisy_ref,
                                           ideal_ref, mixed)
    assert q_hat == pytest.approx(q, abs=1e-12)
    assert corrected == pytest.approx(ideal_trial, abs=1e-9)


def test_reference_calibrate_errors_and_clamp():
    with pytest.raises(ValueError, match="unresolvable"):
        reference_calibrate(0.0, 0.1, 0.5, 0.5)
    with pytest.raises(ValueError, match=">= 1"):
        reference_calibrate(0.0, 2.0, 0.0, 1.0)
    with pytest.warns(UserWarning, match="clamped"):
        q, corrected = reference_calibrate(-1.0, -0.1, 0.0, 1.0)
    assert q == 0.0 and corrected == -1.0


# -- mixed-state values

def test_mixed_state_number_operator():
    op = number_operator(8)
    assert mixed_state_value(op, 4) == pytest.approx(4.0)


def test_mixed_state_identity():
    op = FermionOperator.identity(6)
    assert mixed_state_value(op, 3) == pytest.approx(1.0)


def test_mixed_state_matches_dense_sector_average():
    from qcmoments.fermion import jordan_wigner
    rng = np.random.default_rng(31)
    op = FermionOperator(6)
    op.add_string([(0, True), (1, False)], 0.7)
    op.add_string([(1, True), (0, False)], 0.7)
    op.add_string([(2, True), (2, False)], -1.3)
    op.add_string([(0, True), (3, True), (3, False), (0, False)], 0.4)
    spins = interleaved_spins(6)
    masks = sector_basis(6, 3, sz=0.5, spins=spins)
    dense = jordan_wigner(op).to_matrix()
    expected = float(np.mean([dense[m, m].real for m in masks]))
    assert mixed_state_value(op, 3, sz=0.5, spins=spins) == \
        pytest.approx(expected, abs=1e-12)


def test_mixed_state_empty_sector():
    with pytest.raises(ValueError, match="empty"):
        mixed_state_value(number_operator(4), 5)
