"""Exact imaginary-time evolution for diagonal Hamiltonians."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annealing import Trajectory, _sector_columns
from .lattice import IsingModel
from .statevector import StateVector, expectation_diagonal

UNDERFLOW = 1e-300


@dataclass(frozen=True)
class QiteConfig:
    delta_tau: float = 0.1
    total_tau: float = 40.0
    record_every: int = 1

    def __post_init__(self):
        if self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        if self.total_tau < self.delta_tau:
            raise ValueError("total_tau must be at least delta_tau")
        if self.record_every < 1:
            raise ValueError("record_every must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.total_tau / self.delta_tau))


def qite_step(amps: np.ndarray, shifted: np.ndarray, delta_tau: float) -> np.ndarray:
    """One normalized step: a_i <- exp(-(E_i - E_min) dtau) a_i / norm."""
    out = amps * np.exp(-shifted * delta_tau)
    nrm = np.linalg.norm(out)
    if nrm < UNDERFLOW:
        raise FloatingPointError("all amplitudes underflowed")
    return out / nrm


def qite_run(model: IsingModel, config: QiteConfig | None = None, energy_table=None) -> Trajectory:
    """Imaginary-time evolution from the uniform superposition, normalized every step.

    Energies are shifted by their minimum so the decay factors stay in (0, 1].
    """
    config = config or QiteConfig()
    table = model.energies if energy_table is None else np.asarray(energy_table, dtype=np.float64)
    shifted = table - table.min()
    amps = StateVector.plus(model.n_sites).amplitudes
    traj = Trajectory("qite", meta={"delta_tau": config.delta_tau, "total_tau": config.total_tau})

    def record(step: int):
        state = StateVector(amps)
        e = expectation_diagonal(state, table)
        rec = {"step": step, "t": step * config.delta_tau, "s": 1.0, "energy_H0": e, "energy_Hs": e,
               "norm": state.norm(), "phase": "qite"}
        rec.update(_sector_columns(state, model))
        traj.records.append(rec)

    record(0)
    n = config.n_steps
    for step in range(1, n + 1):
        amps = qite_step(amps, shifted, config.delta_tau)
        if step % config.record_every == 0 or step == n:
            record(step)
    traj.final_state = StateVector(amps)
    return traj


def ground_overlap(state, table, decimals: int = 9) -> float:
    """Probability weight on the minimum-energy configurations."""
    amps = np.asarray(getattr(state, "amplitudes", state))
    E = np.round(np.asarray(table), decimals)
    mask = E == E.min()
    return float(np.sum(np.abs(amps[mask]) ** 2) / np.sum(np.abs(amps) ** 2))
