"""Dense statevector simulation.

Qubit q is bit q of the basis index. Bit 0 is |0> (spin up, Z = +1) and bit 1
is |1> (spin down, Z = -1), so the Z eigenvalue of qubit q in basis state i is
``1 - 2 * ((i >> q) & 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K

NORM_TOL = 1e-8


class StateVector:
    """Complex amplitudes over the 2**n computational basis states."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size == 0 or amps.size & (amps.size - 1):
            raise ValueError(f"amplitude array must be 1-D with length 2**n, got shape {amps.shape}")
        self.amplitudes = amps

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def __len__(self) -> int:
        return self.amplitudes.size

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits}, norm={self.norm():.12g})"

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> StateVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        self.amplitudes /= nrm
        return self

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> StateVector:
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def plus(cls, n_qubits: int) -> StateVector:
        """Product of |+> on every qubit (uniform superposition)."""
        N = 1 << n_qubits
        return cls(np.full(N, 1.0 / np.sqrt(N), dtype=np.complex128))

    @classmethod
    def minus(cls, n_qubits: int) -> StateVector:
        """Product of |-> on every qubit, the ground state of sum_q X_q."""
        N = 1 << n_qubits
        idx = np.arange(N, dtype=np.uint64)
        parity = np.zeros(N, dtype=np.int64)
        for q in range(n_qubits):
            parity ^= ((idx >> np.uint64(q)) & np.uint64(1)).astype(np.int64)
        return cls((1.0 - 2.0 * parity) / np.sqrt(N) + 0j)


def _as_amps(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.amplitudes
    return np.ascontiguousarray(state, dtype=np.complex128)


# --------------------------------------------------------------------------
# gates


class _Hadamard:
    def __repr__(self) -> str:
        return "HADAMARD"


HADAMARD = _Hadamard()

_LETTERS = frozenset("IXYZ")


@dataclass(frozen=True)
class RotationGate:
    """exp(-i * angle * P / 2) for a Pauli string P given letter by letter.

    ``generator[m]`` acts on the m-th qubit passed to :func:`apply_gate`.
    """

    generator: str
    angle: float = 0.0

    def __post_init__(self):
        if not self.generator or set(self.generator) - _LETTERS:
            raise ValueError(f"generator must be a string over IXYZ, got {self.generator!r}")
        if sum(ch != "I" for ch in self.generator) > 2:
            raise ValueError("at most two non-identity letters are supported")


def pauli_masks(generator: str, qubits: Sequence[int]) -> tuple[int, int, int]:
    """(xmask, yzmask, ny) for a Pauli string on the given qubits."""
    xmask = yzmask = ny = 0
    for ch, q in zip(generator, qubits):
        b = 1 << q
        if ch == "X":
            xmask |= b
        elif ch == "Y":
            xmask |= b
            yzmask |= b
            ny += 1
        elif ch == "Z":
            yzmask |= b
    return xmask, yzmask, ny


def _check_qubits(qubits: Sequence[int], n_qubits: int, arity: int | None = None) -> tuple[int, ...]:
    qubits = tuple(int(q) for q in qubits)
    if arity is not None and len(qubits) != arity:
        raise ValueError(f"gate acts on {arity} qubit(s), got {len(qubits)}")
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit index {q} out of range for {n_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"duplicate qubit indices {qubits}")
    return qubits


def _rotate_inplace(amps: np.ndarray, generator: str, qubits: Sequence[int], angle: float) -> None:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    active = [(ch, q) for ch, q in zip(generator, qubits) if ch != "I"]
    if len(active) == 2 and active[0][0] + active[1][0] in ("ZY", "YZ"):
        (a, qa), (_, qb) = active
        qz, qy = (qa, qb) if a == "Z" else (qb, qa)
        K.zy_rotation(amps, qz, qy, c, s)
        return
    xmask, yzmask, ny = pauli_masks(generator, qubits)
    if xmask == 0 and yzmask == 0:
        amps *= c - 1j * s
        return
    K.pauli_rotation(amps, xmask, yzmask, ny, c, s)


def apply_gate(state: StateVector, gate, qubits: Sequence[int] | int) -> StateVector:
    """Return ``gate`` applied to ``state`` on ``qubits`` (input left untouched)."""
    if isinstance(qubits, (int, np.integer)):
        qubits = (int(qubits),)
    amps = _as_amps(state).copy()
    n = amps.size.bit_length() - 1
    if gate is HADAMARD:
        (q,) = _check_qubits(qubits, n, 1)
        K.hadamard(amps, q)
    elif isinstance(gate, RotationGate):
        qubits = _check_qubits(qubits, n, len(gate.generator))
        _rotate_inplace(amps, gate.generator, qubits, gate.angle)
    else:
        raise TypeError(f"unsupported gate {gate!r}")
    return StateVector(amps)


def apply_diagonal_phase(state: StateVector, energy_table, factor: complex) -> StateVector:
    """amplitude[i] <- exp(factor * E_i) * amplitude[i]; no renormalization."""
    amps = _as_amps(state)
    table = np.asarray(energy_table, dtype=np.float64)
    if table.shape != amps.shape:
        raise ValueError(f"energy table length {table.size} does not match state length {amps.size}")
    out = amps.copy()
    K.diagonal_phase(out, table, complex(factor))
    return StateVector(out)


def _require_normalized(amps: np.ndarray) -> None:
    nrm = np.linalg.norm(amps)
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm = {nrm!r})")


def expectation_diagonal(state: StateVector, energy_table) -> float:
    """sum_i |a_i|^2 E_i for a normalized state."""
    amps = _as_amps(state)
    table = np.asarray(energy_table, dtype=np.float64)
    if table.shape != amps.shape:
        raise ValueError(f"energy table length {table.size} does not match state length {amps.size}")
    _require_normalized(amps)
    return float(np.dot(amps.real**2 + amps.imag**2, table))


def expectation_transverse(state: StateVector, intensities) -> float:
    """sum_q h_q <X_q> for a normalized state."""
    amps = _as_amps(state)
    h = np.asarray(intensities, dtype=np.float64)
    n = amps.size.bit_length() - 1
    if h.shape != (n,):
        raise ValueError(f"need {n} intensities, got shape {h.shape}")
    _require_normalized(amps)
    return float(np.dot(h, K.x_expectations(amps)))


# --------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class CircuitOp:
    """One circuit element: a fixed Hadamard, or a rotation bound to a parameter slot."""

    qubits: tuple[int, ...]
    generator: str | None = None  # None means Hadamard
    slot: int | None = None


@dataclass
class Circuit:
    n_qubits: int
    ops: list[CircuitOp] = field(default_factory=list)

    def h(self, q: int) -> Circuit:
        self.ops.append(CircuitOp((_check_qubits((q,), self.n_qubits)[0],)))
        return self

    def rotation(self, generator: str, qubits: Sequence[int], slot: int) -> Circuit:
        RotationGate(generator)  # validates letters
        qubits = _check_qubits(qubits, self.n_qubits, len(generator))
        self.ops.append(CircuitOp(qubits, generator, int(slot)))
        return self

    @property
    def n_params(self) -> int:
        slots = [op.slot for op in self.ops if op.slot is not None]
        return max(slots) + 1 if slots else 0

    def validate(self) -> None:
        slots = [op.slot for op in self.ops if op.slot is not None]
        p = self.n_params
        seen = sorted(slots)
        if seen != list(range(p)):
            missing = sorted(set(range(p)) - set(slots))
            if missing:
                raise ValueError(f"unbound parameter slot(s) {missing}")
            raise ValueError("a parameter slot is bound by more than one gate")

    def run(self, params, input_state=None) -> np.ndarray:
        """Output amplitudes for the given parameters (default input |0...0>)."""
        params = self._check_params(params)
        amps = self._input(input_state)
        for op in self.ops:
            _apply_op(amps, op, params)
        return amps

    def _check_params(self, params) -> np.ndarray:
        self.validate()
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"circuit has {self.n_params} parameters, got shape {params.shape}")
        return params

    def _input(self, input_state) -> np.ndarray:
        if input_state is None:
            amps = np.zeros(1 << self.n_qubits, dtype=np.complex128)
            amps[0] = 1.0
            return amps
        amps = _as_amps(input_state).copy()
        if amps.size != 1 << self.n_qubits:
            raise ValueError("input state size does not match the circuit")
        return amps


def _apply_op(amps: np.ndarray, op: CircuitOp, params: np.ndarray) -> None:
    if op.generator is None:
        K.hadamard(amps, op.qubits[0])
    else:
        _rotate_inplace(amps, op.generator, op.qubits, params[op.slot])


def _apply_generator(amps: np.ndarray, op: CircuitOp) -> np.ndarray:
    """(-i/2) P amps for the op's Pauli string."""
    xmask, yzmask, ny = pauli_masks(op.generator, op.qubits)
    out = np.empty_like(amps)
    K.apply_pauli(amps, out, xmask, yzmask, ny, -0.5j)
    return out


def tangent_states(circuit: Circuit, params, input_state=None) -> np.ndarray:
    """Exact derivatives d|phi>/d theta_k of the circuit output, one row per parameter.

    Each row is obtained by inserting (-i/2) P_k right after the k-th gate and
    running the rest of the circuit.
    """
    params = circuit._check_params(params)
    amps = circuit._input(input_state)
    ops = circuit.ops
    out = np.empty((circuit.n_params, amps.size), dtype=np.complex128)
    for pos, op in enumerate(ops):
        _apply_op(amps, op, params)
        if op.slot is None:
            continue
        tangent = _apply_generator(amps, op)
        for later in ops[pos + 1:]:
            _apply_op(tangent, later, params)
        out[op.slot] = tangent
    return out
