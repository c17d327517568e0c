"""Element enumeration, Re/Im decomposition, grouping, and measurement
circuits."""
import itertools

import numpy as np
import pytest

from qcmoments.conventions import interleaved_spins
from qcmoments.fermion import jordan_wigner
from qcmoments.planner import (
    MeasurementPlan, RdmElement, build_measurement_circuit, build_plan,
    decompose_element, element_count_formula, enumerate_elements,
    factor_operator, group_level1, group_level2, product_value,
)
from qcmoments.simulator import Statevector, run

SPINS4 = ("u", "u", "d", "d")

# the twelve spin-conserving 2-RDM excitations on 4 modes (2 up, 2 down),
# in the order used by the grouping walkthrough
TWELVE = [RdmElement(c, a) for c, a in [
    ((0, 1), (0, 1)),
    ((0, 2), (0, 2)), ((0, 2), (1, 2)), ((0, 2), (0, 3)), ((0, 2), (1, 3)),
    ((1, 2), (1, 2)), ((1, 2), (0, 3)), ((1, 2), (1, 3)),
    ((0, 3), (0, 3)), ((0, 3), (1, 3)),
    ((1, 3), (1, 3)),
    ((2, 3), (2, 3)),
]]


# -- enumeration

def test_element_validation_and_canonical_form():
    with pytest.raises(ValueError):
        RdmElement((1, 0), (0, 1))
    with pytest.raises(ValueError):
        RdmElement((0,), (0, 1))
    e = RdmElement((0, 3), (1, 2))
    assert e.conjugate() == RdmElement((1, 2), (0, 3))
    # canonical representative has the lexicographically smaller
    # annihilation list
    assert e.canonical() == RdmElement((1, 2), (0, 3))
    assert e.canonical().canonical() == e.canonical()
    assert e.conjugate().canonical() == e.conjugate()


def test_enumeration_counts():
    assert len(enumerate_elements(8, 4)) == 2485
    assert len(enumerate_elements(8, 4, interleaved_spins(8))) == 940
    assert len(enumerate_elements(4, 2, SPINS4)) == 12
    assert set(enumerate_elements(4, 2, SPINS4)) == \
        {e.canonical() for e in TWELVE}


def test_enumeration_count_formula_exhaustive():
    for n in range(1, 9):
        for p in range(1, min(n, 4) + 1):
            assert len(enumerate_elements(n, p)) == element_count_formula(n, p)


def test_enumeration_rejects_large_order():
    with pytest.raises(ValueError):
        enumerate_elements(3, 4)


# -- decomposition

def dense_factor(factor, n_modes):
    return jordan_wigner(factor_operator(factor, n_modes)).to_matrix()


def dense_hermitian_part(e, n_modes):
    op = (e.operator(n_modes) + e.operator(n_modes).dagger()).scale(0.5)
    return jordan_wigner(op).to_matrix()


def assert_decomposition_exact(e, spins):
    """Independent dense-matrix check of the operator identity."""
    n = len(spins)
    total = np.zeros((1 << n, 1 << n), dtype=complex)
    for sign, factors in decompose_element(e, spins):
        prod = np.eye(1 << n, dtype=complex)
        for f in factors:
            prod = prod @ dense_factor(f, n)
        total += sign * prod
    assert np.max(np.abs(total - dense_hermitian_part(e, n))) < 1e-10


def test_decompose_two_body_cross():
    products = decompose_element(RdmElement((1, 2), (0, 3)), SPINS4)
    assert products == [(-1, (("Re", (0, 1)), ("Re", (2, 3)))),
                        (-1, (("Im", (0, 1)), ("Im", (2, 3))))]
    assert_decomposition_exact(RdmElement((1, 2), (0, 3)), SPINS4)


def test_decompose_pure_number():
    products = decompose_element(RdmElement((0, 1), (0, 1)), SPINS4)
    assert products == [(-1, (("N", (0,)), ("N", (1,))))]


def test_decompose_mixed_number_and_cross():
    products = decompose_element(RdmElement((0, 2), (1, 2)), SPINS4)
    assert len(products) == 1
    sign, factors = products[0]
    assert set(factors) == {("N", (2,)), ("Re", (0, 1))}
    assert_decomposition_exact(RdmElement((0, 2), (1, 2)), SPINS4)


def test_decompose_order_four_all_distinct():
    spins = interleaved_spins(8)
    e = RdmElement((1, 3, 4, 6), (0, 2, 5, 7))
    products = decompose_element(e, spins)
    # four cross pairs: the even-Im half of the 2^4 expansion survives
    assert len(products) == 8
    assert all(sum(1 for k, _ in f if k == "Im") % 2 == 0
               for _, f in products)
    assert_decomposition_exact(e, spins)


def test_decompose_random_elements_against_dense_oracle():
    spins = interleaved_spins(6)
    rng = np.random.default_rng(11)
    elements = enumerate_elements(6, 3, spins)
    for i in rng.choice(len(elements), size=12, replace=False):
        assert_decomposition_exact(elements[i], spins)


def test_decompose_rejects_spin_nonconserving():
    with pytest.raises(ValueError, match="pairing"):
        decompose_element(RdmElement((0, 1), (2, 3)), SPINS4)


# -- level-1 grouping

def test_group_level1_walkthrough():
    bases, assignments = group_level1(TWELVE, SPINS4)
    assert [b.interactions for b in bases] == [
        [(0, 1), (2, 2), (3, 3)],
        [(0, 0), (1, 1), (2, 2), (3, 3)],
        [(0, 0), (1, 1), (2, 3)],
        [(0, 1), (2, 3)],
    ]
    assert [a[0] for a in assignments] == [0, 1, 0, 2, 3, 1, 3, 2, 1, 0, 1, 0]


def test_group_level1_single_element():
    bases, assignments = group_level1([RdmElement((0, 2), (1, 3))], SPINS4)
    assert len(bases) == 1
    assert bases[0].interactions == [(0, 1), (2, 3)]
    assert assignments[0][0] == 0


def test_group_level1_partition_invariants():
    spins = interleaved_spins(8)
    elements = enumerate_elements(8, 4, spins)
    bases, assignments = group_level1(elements, spins)
    assert len(assignments) == len(elements)
    for e, (b_idx, matching, required) in zip(elements, assignments):
        basis = bases[b_idx]
        assert required <= basis.interaction_set()
    for basis in bases:
        used = [q for s in basis.interactions for q in s if s[0] != s[1]]
        used += [s[0] for s in basis.interactions if s[0] == s[1]]
        assert len(used) == len(set(used))  # disjoint interactions
        for q1, q2 in basis.pair_sites():
            assert spins[q1] == spins[q2]


# -- level-2 grouping

def test_group_level2_xx_yy_split():
    elements = [RdmElement((1, 2), (0, 3)), RdmElement((0, 2), (1, 3))]
    bases, assignments = group_level1(elements, SPINS4)
    assert len(bases) == 1 and bases[0].interactions == [(0, 1), (2, 3)]
    element_products = [
        (e, decompose_element(e, SPINS4, matching=a[1]))
        for e, a in zip(elements, assignments)]
    concrete, placements = group_level2(bases[0], element_products)
    assert len(concrete) == 2
    assert concrete[0].assignments == {(0, 1): "Re", (2, 3): "Re"}
    assert concrete[1].assignments == {(0, 1): "Im", (2, 3): "Im"}
    for placed in placements:
        assert {idx for idx, _, _ in placed} == {0, 1}


def test_group_level2_all_number_basis():
    e = RdmElement((0, 1), (0, 1))
    bases, assignments = group_level1([e], ("u", "d"))
    concrete, _ = group_level2(
        bases[0], [(e, decompose_element(e, ("u", "d"),
                                         matching=assignments[0][1]))])
    assert len(concrete) == 1
    assert all(v == "Number" for v in concrete[0].assignments.values())


def test_group_level2_single_site():
    e = RdmElement((0,), (1,))
    bases, assignments = group_level1([e], ("u", "u"))
    concrete, _ = group_level2(
        bases[0], [(e, decompose_element(e, ("u", "u"),
                                         matching=assignments[0][1]))])
    assert len(concrete) == 1
    assert concrete[0].assignments == {(0, 1): "Re"}


def test_full_plan_basis_count_for_940_elements():
    spins = interleaved_spins(8)
    plan = build_plan(enumerate_elements(8, 4, spins), spins, route=False)
    assert 190 <= len(plan.bases) <= 215
    assert len(plan.coverage) == 940


# -- measurement circuits

def circuit_unitary(circ):
    dim = 1 << circ.n_qubits
    u = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        u[:, b] = run(circ, Statevector.basis_state(b, circ.n_qubits)).amplitudes
    return u


def layout_unitary(layout, n):
    """Mode-ordered state -> physical state for a position->mode map."""
    dim = 1 << n
    u = np.zeros((dim, dim), dtype=complex)
    pos = {m: i for i, m in enumerate(layout)}
    for mask in range(dim):
        occ_pos = sorted(pos[m] for m in range(n) if mask >> m & 1)
        modes = [layout[i] for i in occ_pos]
        inv = sum(1 for i in range(len(modes)) for j in range(i + 1, len(modes))
                  if modes[i] > modes[j])
        u[sum(1 << i for i in occ_pos), mask] = -1.0 if inv % 2 else 1.0
    return u


def plan_element_values(plan, layout, mode_state):
    """Estimate every covered element from exact outcome distributions."""
    phys = Statevector(layout_unitary(layout, plan.n_modes) @ mode_state)
    mcircs, probs = [], []
    for b in plan.bases:
        mc = build_measurement_circuit(b, layout)
        mcircs.append(mc)
        probs.append(np.abs(run(mc.circuit, phys).amplitudes) ** 2)
    values = {}
    for e, prods in plan.coverage.items():
        total = 0.0
        for b_idx, sign, factors in prods:
            p = probs[b_idx]
            exp = sum(p[bits] * product_value(mcircs[b_idx], factors, bits)
                      for bits in np.nonzero(p > 1e-14)[0])
            total += sign * exp
        values[e] = total
    return values


def random_real_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << n)
    return (amps / np.linalg.norm(amps)).astype(complex)


def test_measurement_circuits_recover_all_twelve_elements():
    plan = build_plan(TWELVE, SPINS4)
    mode_state = random_real_state(4, seed=7)
    values = plan_element_values(plan, (0, 1, 2, 3), mode_state)
    for e in TWELVE:
        exact = np.real(np.conj(mode_state) @
                        (dense_hermitian_part(e, 4) @ mode_state))
        assert values[e] == pytest.approx(exact, abs=1e-10)


def test_measurement_circuits_with_routing_and_layout():
    spins = interleaved_spins(8)
    rng = np.random.default_rng(3)
    all_elements = enumerate_elements(8, 4, spins)
    elements = [all_elements[i]
                for i in rng.choice(len(all_elements), 25, replace=False)]
    layout = (2, 0, 1, 4, 3, 6, 7, 5)
    plan = build_plan(elements, spins, layout=layout)
    mode_state = random_real_state(8, seed=4)
    values = plan_element_values(plan, layout, mode_state)
    for e in elements:
        exact = np.real(np.conj(mode_state) @
                        (dense_hermitian_part(e, 8) @ mode_state))
        assert values[e] == pytest.approx(exact, abs=1e-10)


def test_pair_expectations_on_bell_like_state():
    e = RdmElement((0,), (1,))
    spins = ("u", "u")
    plan = build_plan([e], spins)
    # (|01> + |10>)/sqrt(2): Re(a+_0 a_1) = 1/2, Im = 0
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = amps[0b10] = 1 / np.sqrt(2)
    values = plan_element_values(plan, (0, 1), amps)
    assert values[e] == pytest.approx(0.5, abs=1e-12)

    im_basis = plan.bases[0]
    im_basis.assignments = {(0, 1): "Im"}
    mc = build_measurement_circuit(im_basis, (0, 1))
    p = np.abs(run(mc.circuit, Statevector(amps)).amplitudes) ** 2
    im_val = sum(p[b] * mc.pair_value((0, 1), b) for b in range(4))
    assert im_val == pytest.approx(0.0, abs=1e-12)


def test_measurement_circuits_conserve_number_and_sz():
    plan = build_plan(TWELVE, SPINS4)
    number = np.zeros(16)
    sz = np.zeros(16)
    for mask in range(16):
        occ = [m for m in range(4) if mask >> m & 1]
        number[mask] = len(occ)
        sz[mask] = 0.5 * sum(1 if SPINS4[m] == "u" else -1 for m in occ)
    n_mat, sz_mat = np.diag(number), np.diag(sz)
    for basis in plan.bases:
        u = circuit_unitary(build_measurement_circuit(basis, (0, 1, 2, 3)).circuit)
        assert np.max(np.abs(u @ n_mat - n_mat @ u)) < 1e-10
        # all interactions pair equal spins, so S_z is conserved as well
        assert np.max(np.abs(u @ sz_mat - sz_mat @ u)) < 1e-10


def test_plan_json_roundtrip():
    plan = build_plan(TWELVE, SPINS4)
    back = MeasurementPlan.loads(plan.dumps())
    assert back.to_json() == plan.to_json()
    assert back.coverage == plan.coverage


def test_layout_mismatch_is_an_error():
    plan = build_plan(TWELVE, SPINS4)
    basis = next(b for b in plan.bases if b.pair_sites())
    with pytest.raises(ValueError, match="layout"):
        build_measurement_circuit(basis, (3, 2, 1, 0))
