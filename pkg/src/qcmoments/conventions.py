"""Shared index and spin conventions.

Spatial orbital p maps to spin-orbitals 2p (spin up) and 2p+1 (spin down).
Qubit j carries spin-orbital j under the Jordan-Wigner encoding; bit j of a
statevector index is the occupation of mode j. Bitstrings are printed
most-significant qubit first.
"""
from __future__ import annotations

UP = "u"
DOWN = "d"


def interleaved_spins(n_modes: int) -> tuple[str, ...]:
    """Default spin labels: even modes up, odd modes down."""
    return tuple(UP if m % 2 == 0 else DOWN for m in range(n_modes))


def block_spins(n_modes: int) -> tuple[str, ...]:
    """First half up, second half down (used by some worked examples)."""
    half = n_modes // 2
    return tuple(UP if m < half else DOWN for m in range(n_modes))


def spin_counts(occupied, spins) -> tuple[int, int]:
    n_up = sum(1 for m in occupied if spins[m] == UP)
    n_down = len(list(occupied)) - n_up if hasattr(occupied, "__len__") else None
    if n_down is None:
        n_down = sum(1 for m in occupied if spins[m] == DOWN)
    return n_up, n_down


def sz_of(occupied, spins) -> float:
    up = sum(1 for m in occupied if spins[m] == UP)
    down = sum(1 for m in occupied if spins[m] == DOWN)
    return 0.5 * (up - down)


def bits_to_string(bits: int, n_qubits: int) -> str:
    return format(bits, f"0{n_qubits}b")


def string_to_bits(s: str) -> int:
    return int(s, 2)
