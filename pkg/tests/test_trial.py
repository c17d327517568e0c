"""Trial circuits: excitation blocks, routing, full builds, and SPSA."""
import numpy as np
import pytest
import scipy.linalg

from qcmoments.fermion import jordan_wigner
from qcmoments.simulator import Circuit, Statevector, run
from qcmoments.trial import (
    Ansatz, Excitation, build_uccd, exact_trial_state, fswap_network,
    hartree_fock_circuit, local_double_excitation, simplified_block,
    spsa_minimize, trial_state_in_mode_order, _pauli_gadget_block,
)


def circuit_unitary(circ):
    dim = 1 << circ.n_qubits
    u = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        u[:, b] = run(circ, Statevector.basis_state(b, circ.n_qubits)).amplitudes
    return u


def exact_block(exc, n_modes):
    gen = jordan_wigner(exc.generator(n_modes)).to_matrix()
    return scipy.linalg.expm(exc.theta * gen)


def test_hartree_fock_circuit():
    circ = hartree_fock_circuit(5, 0b10011)
    state = run(circ, Statevector.basis_state(0, 5))
    assert abs(state.amplitudes[0b10011] - 1) < 1e-12
    with pytest.raises(ValueError):
        hartree_fock_circuit(3, 1 << 3)


def test_excitation_validation():
    with pytest.raises(ValueError):
        Excitation((0, 1), (1, 2))
    with pytest.raises(ValueError):  # up,up -> up,down does not conserve spin
        Excitation((4, 6), (0, 3), 0.1).validate_spin("udududud")
    Excitation((4, 7), (0, 3), 0.1).validate_spin("udududud")


@pytest.mark.parametrize("theta", [0.0, 0.3, -1.2, 2.9])
def test_local_double_excitation_matches_exponential(theta):
    circ = local_double_excitation(theta)
    target = exact_block(Excitation((2, 3), (0, 1), theta), 4)
    assert np.max(np.abs(circuit_unitary(circ) - target)) < 1e-9


def test_local_double_excitation_rotates_the_expected_pair():
    theta = 0.4
    u = circuit_unitary(local_double_excitation(theta))
    a, b = 0b0011, 0b1100
    assert u[a, a] == pytest.approx(np.cos(theta), abs=1e-10)
    assert abs(abs(u[b, a]) - abs(np.sin(theta))) < 1e-10
    for k in range(16):
        if k not in (a, b):
            assert abs(u[k, k] - 1) < 1e-10


def test_gadget_block_other_index_orders():
    # the synthesis must be exact for any quadruple ordering in the window
    for creations, annihilations in [((0, 3), (1, 2)), ((1, 2), (0, 3)),
                                     ((0, 2), (1, 3))]:
        exc = Excitation(creations, annihilations, 0.7)
        circ = _pauli_gadget_block(exc.generator(4), 0.7)
        assert np.max(np.abs(circuit_unitary(circ) - exact_block(exc, 4))) \
            < 1e-9


def test_gadget_block_cnot_count():
    # shared-ladder synthesis: 3 + (2+4+2+6+2+4+2) + 3 CNOTs
    assert local_double_excitation(0.5).cnot_count() == 28


def fswap_oracle(layout, n):
    """Dense unitary of the mode relabeling defined by a layout."""
    dim = 1 << n
    u = np.zeros((dim, dim), dtype=complex)
    pos = {m: i for i, m in enumerate(layout)}
    for mask in range(dim):
        occ_modes = [m for m in range(n) if mask >> m & 1]
        occ_pos = sorted(pos[m] for m in occ_modes)
        modes_by_pos = [layout[i] for i in occ_pos]
        inv = sum(1 for i in range(len(modes_by_pos))
                  for j in range(i + 1, len(modes_by_pos))
                  if modes_by_pos[i] > modes_by_pos[j])
        out = sum(1 << i for i in occ_pos)
        u[out, mask] = -1.0 if inv % 2 else 1.0
    return u


def test_fswap_network_routing_and_signs():
    circ, layout, start = fswap_network({0, 1, 2, 7}, 8)
    assert sum(1 for g in circ.gates if g[0] == "FSWAP") <= 4
    window = set(layout[start:start + 4])
    assert window == {0, 1, 2, 7}
    assert np.max(np.abs(circuit_unitary(circ) - fswap_oracle(layout, 8))) \
        < 1e-12


def test_fswap_network_small_cases():
    circ, layout, start = fswap_network({2, 3}, 4)
    assert layout == (0, 1, 2, 3) and not circ.gates
    circ, layout, start = fswap_network({0, 3}, 4)
    assert set(layout[start:start + 2]) == {0, 3}
    assert np.max(np.abs(circuit_unitary(circ) - fswap_oracle(layout, 4))) \
        < 1e-12
    with pytest.raises(ValueError):
        fswap_network({9}, 4)


def test_simplified_block_costs():
    gen = Excitation((2, 3), (0, 1)).generator(4)
    # only the lower pair reachable: single-branch ladder, 3 CNOTs
    block = simplified_block(gen, 0.37, {0b0011})
    assert block is not None and block.cnot_count() == 3
    # paired patterns on both sides: compressed rotation, 8 CNOTs
    block = simplified_block(gen, 0.37, {0b0011, 0b1100, 0b0000, 0b1111})
    assert block is not None and block.cnot_count() <= 8
    # excitation untouched by the reachable states: empty circuit
    block = simplified_block(gen, 0.37, {0b0101, 0b1010})
    assert block is not None and not block.gates
    # a generic pattern set cannot be simplified
    assert simplified_block(gen, 0.37, {0b0011, 0b0010}) is None


def assert_matches_oracle(ansatz, simplify):
    built = build_uccd(ansatz, simplify=simplify)
    state = trial_state_in_mode_order(built, ansatz.n_qubits)
    ref = exact_trial_state(ansatz)
    assert np.max(np.abs(state.amplitudes - ref.amplitudes)) < 1e-9
    return built


PAIRED_LAYOUT = (0, 1, 4, 5, 2, 3, 6, 7)


def paired_ansatz(thetas):
    excs = [Excitation((4, 5), (0, 1), thetas[0]),
            Excitation((4, 5), (2, 3), thetas[1]),
            Excitation((6, 7), (2, 3), thetas[2]),
            Excitation((4, 5), (0, 1), thetas[3])]
    return Ansatz(8, 0b00001111, excs, initial_layout=PAIRED_LAYOUT)


def test_build_uccd_paired_four_excitations():
    ansatz = paired_ansatz([0.31, -0.52, 0.18, 0.07])
    built = assert_matches_oracle(ansatz, simplify=True)
    assert built.cnot_count <= 28
    assert "general" not in built.block_kinds


def test_build_uccd_without_simplification():
    ansatz = paired_ansatz([0.31, -0.52, 0.18, 0.07])
    built = assert_matches_oracle(ansatz, simplify=False)
    assert all(k == "general" for k in built.block_kinds)


def test_build_uccd_with_routing():
    # a non-adjacent excitation exercises the FSWAP network inside the build
    excs = [Excitation((4, 5), (0, 1), 0.45), Excitation((4, 5), (0, 3), -0.3)]
    ansatz = Ansatz(6, 0b001111, excs)
    assert_matches_oracle(ansatz, simplify=True)
    assert_matches_oracle(ansatz, simplify=False)


def test_build_uccd_odd_preparation_parity():
    # initial layout that reorders the occupied modes with odd parity
    ansatz = Ansatz(4, 0b0101, [Excitation((1, 3), (0, 2), 0.6)],
                    initial_layout=(2, 1, 0, 3), spins=("u",) * 4)
    assert_matches_oracle(ansatz, simplify=True)


def test_spsa_minimize_quadratic():
    target = np.array([0.7, -0.4, 1.1])

    def objective(t):
        return float(np.sum((np.asarray(t) - target) ** 2))

    theta, info = spsa_minimize(objective, 3, seeds=[0, 1], max_iter=150)
    assert np.max(np.abs(theta - target)) < 1e-5
    assert len(info["traces"]) == 2
    assert info["traces"][0][-1] < info["traces"][0][0]
    theta2, _ = spsa_minimize(objective, 3, seeds=[0, 1], max_iter=150)
    assert np.array_equal(theta, theta2)


def test_spsa_rejects_non_finite():
    with pytest.raises(ValueError):
        spsa_minimize(lambda t: float("nan"), 1, seeds=[0], max_iter=3)
