"""Layered variational ansatz with McLachlan imaginary-time (VQITE), its
diagonal variant, and plain gradient descent (VQE).

The circuit is ``V2(alpha, beta) V1(omega) H^n |0>``. V1 applies Rz, Rx, Rz on
every qubit; V2 applies, bond by bond, exp(-i alpha Z_j Y_k / 2) followed by
exp(-i beta Y_j Z_k / 2). Parameters are ordered omega (3 per qubit, qubit
major), then (alpha, beta) per bond.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .annealing import Trajectory, _sector_columns
from .lattice import IsingModel
from .statevector import Circuit, StateVector, expectation_diagonal

log = logging.getLogger(__name__)

INIT_SIGMA = 0.05
CONVERGENCE_TOL = 5e-2
CONVERGENCE_WINDOW = 10

_SQ2 = 1.0 / math.sqrt(2.0)


def _rz(a):
    return np.array([[np.exp(-0.5j * a), 0], [0, np.exp(0.5j * a)]])


def _rx(a):
    c, s = math.cos(a / 2), math.sin(a / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1.0 + 0j, -1.0])


class Ansatz:
    def __init__(self, model: IsingModel):
        self.model = model
        self.n_qubits = model.n_sites
        self.bonds = [(b.j, b.k) for b in model.bonds]
        self.n_params = 3 * self.n_qubits + 2 * len(self.bonds)

    @property
    def n_v1(self) -> int:
        return 3 * self.n_qubits

    def circuit(self) -> Circuit:
        """Equivalent gate-level circuit, used for cross-checks."""
        c = Circuit(self.n_qubits)
        for q in range(self.n_qubits):
            c.h(q)
        for q in range(self.n_qubits):
            c.rotation("Z", (q,), 3 * q)
            c.rotation("X", (q,), 3 * q + 1)
            c.rotation("Z", (q,), 3 * q + 2)
        for b, (j, k) in enumerate(self.bonds):
            c.rotation("ZY", (j, k), self.n_v1 + 2 * b)
            c.rotation("YZ", (j, k), self.n_v1 + 2 * b + 1)
        return c

    def init_params(self, rng=None, sigma: float = INIT_SIGMA) -> np.ndarray:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return rng.normal(0.0, sigma, self.n_params)

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"ansatz has {self.n_params} parameters, got shape {theta.shape}")
        return theta

    # -- V1: product state ---------------------------------------------------

    def _single_qubit(self, omega):
        """Per-qubit state u and its three derivatives."""
        plus = np.array([_SQ2, _SQ2], dtype=complex)
        r0, r1, r2 = _rz(omega[0]), _rx(omega[1]), _rz(omega[2])
        v0 = r0 @ plus
        v1 = r1 @ v0
        u = r2 @ v1
        d0 = r2 @ r1 @ (-0.5j * _Z @ v0)
        d1 = r2 @ (-0.5j * _X @ v1)
        d2 = -0.5j * _Z @ u
        return u, (d0, d1, d2)

    @staticmethod
    def _product(vectors) -> np.ndarray:
        """Little-endian product state: qubit 0 is the fastest-varying index."""
        out = np.ones(1, dtype=complex)
        for v in vectors:
            out = np.kron(v, out)
        return out

    # -- V2 --------------------------------------------------------------------

    def _apply_v2(self, psi: np.ndarray, theta: np.ndarray, start: int = 0) -> None:
        for g in range(2 * start, 2 * len(self.bonds)):
            self._apply_v2_gate(psi, g, theta[self.n_v1 + g])

    def _apply_v2_gate(self, psi, g, angle, inverse=False):
        j, k = self.bonds[g // 2]
        a = -angle if inverse else angle
        c, s = math.cos(a / 2), math.sin(a / 2)
        if g % 2 == 0:
            K.zy_rotation(psi, j, k, c, s)  # Z_j Y_k
        else:
            K.zy_rotation(psi, k, j, c, s)  # Y_j Z_k

    def _generator(self, psi, g) -> np.ndarray:
        """(-i/2) P_g psi for V2 gate g (a real operator)."""
        j, k = self.bonds[g // 2]
        zq, yq = (j, k) if g % 2 == 0 else (k, j)
        out = np.empty_like(psi)
        K.apply_pauli(psi, out, 1 << yq, (1 << yq) | (1 << zq), 1, -0.5j)
        return out

    # -- public ----------------------------------------------------------------

    def state(self, theta) -> np.ndarray:
        theta = self._check(theta)
        psi = self._product([self._single_qubit(theta[3 * q:3 * q + 3])[0] for q in range(self.n_qubits)])
        self._apply_v2(psi, theta)
        return psi

    def energy(self, theta, table=None) -> float:
        table = self.model.energies if table is None else table
        return expectation_diagonal(StateVector(self.state(theta)), table)

    def jacobian(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """(phi, J) with J[k] = d phi / d theta_k, shape (p, 2**n)."""
        theta = self._check(theta)
        n, nb_ = self.n_qubits, len(self.bonds)
        singles = [self._single_qubit(theta[3 * q:3 * q + 3]) for q in range(n)]
        us = [u for u, _ in singles]
        W = np.empty((n + 2 * nb_, 1 << n), dtype=np.complex128)
        # Each V1 derivative splits as a * u_q + b * u_q_perp, so one extra
        # propagated product state per qubit covers all three of its parameters.
        coeffs = []
        for q, (u, ds) in enumerate(singles):
            perp = np.array([-np.conj(u[1]), np.conj(u[0])])
            coeffs.append([(np.vdot(u, d), np.vdot(perp, d)) for d in ds])
            W[q] = self._product(us[:q] + [perp] + us[q + 1:])
        psi = self._product(us)[None, :]
        # The two gates of a bond commute, so both tangents can be spawned after the pair.
        for b, (j, k) in enumerate(self.bonds):
            R = _pair_matrix(theta[self.n_v1 + 2 * b], theta[self.n_v1 + 2 * b + 1])
            K.pair_rotation_rows(psi, 1, j, k, R)
            K.pair_rotation_rows(W, n + 2 * b, j, k, R)
            W[n + 2 * b] = self._generator(psi[0], 2 * b)
            W[n + 2 * b + 1] = self._generator(psi[0], 2 * b + 1)
        psi = psi[0]
        # Expand the per-qubit rows into the three V1 tangents.
        full = np.empty((self.n_params, 1 << n), dtype=np.complex128)
        for q in range(n):
            for m, (a, c) in enumerate(coeffs[q]):
                full[3 * q + m] = a * psi + c * W[q]
        full[self.n_v1:] = W[n:]
        return psi, full

    def energy_gradient(self, theta, table=None) -> tuple[float, np.ndarray]:
        """(E, dE/dtheta) by one forward and one backward sweep."""
        theta = self._check(theta)
        table = self.model.energies if table is None else np.asarray(table)
        n = self.n_qubits
        psi = self.state(theta)
        lam = table * psi
        energy = float(np.real(np.vdot(psi, lam)))
        grad = np.empty(self.n_params)
        for g in range(2 * len(self.bonds) - 1, -1, -1):
            grad[self.n_v1 + g] = 2.0 * np.real(np.vdot(lam, self._generator(psi, g)))
            self._apply_v2_gate(psi, g, theta[self.n_v1 + g], inverse=True)
            self._apply_v2_gate(lam, g, theta[self.n_v1 + g], inverse=True)
        # lam is now V2^dag H phi. A V1 tangent is the product state with
        # u_q -> du_q, so contract lam against the other qubits' u_r first.
        us = [self._single_qubit(theta[3 * q:3 * q + 3]) for q in range(n)]
        for q, (_, ds) in enumerate(us):
            w = _partial_overlap(lam, [u for u, _ in us], q)
            for m, d in enumerate(ds):
                grad[3 * q + m] = 2.0 * np.real(w @ d)
        return energy, grad


def _partial_overlap(lam: np.ndarray, us, q: int) -> np.ndarray:
    """w[b] = <lam | (prod_{r != q} u_r) with qubit q in |b>>."""
    n = len(us)
    t = np.moveaxis(lam.reshape((2,) * n), n - 1 - q, 0).reshape(2, -1)
    rest = np.ones(1, dtype=complex)
    for r in range(n):
        if r != q:
            rest = np.kron(us[r], rest)
    return np.array([np.vdot(t[0], rest), np.vdot(t[1], rest)])


_ZY = np.kron(np.diag([1.0, -1.0]), np.array([[0, -1j], [1j, 0]]))  # Z_j (x) Y_k on 2*b_j + b_k
_YZ = np.kron(np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))


def _pair_matrix(alpha: float, beta: float) -> np.ndarray:
    """Real 4x4 action of exp(-i alpha Z_j Y_k / 2) exp(-i beta Y_j Z_k / 2) on index 2*b_j + b_k."""
    ga = math.cos(alpha / 2) * np.eye(4) - 1j * math.sin(alpha / 2) * _ZY
    gb = math.cos(beta / 2) * np.eye(4) - 1j * math.sin(beta / 2) * _YZ
    return np.ascontiguousarray((gb @ ga).real)


# --------------------------------------------------------------------------
# McLachlan system


def assemble_A(ansatz: Ansatz, theta, jac=None) -> np.ndarray:
    """A_jk = Re <d_j phi | d_k phi>."""
    _, J = ansatz.jacobian(theta) if jac is None else jac
    Jv = J.view(np.float64)  # interleaved (re, im): Re<a|b> is the real dot product
    A = Jv @ Jv.T
    return 0.5 * (A + A.T)


def assemble_C(ansatz: Ansatz, theta, model: IsingModel | None = None, jac=None) -> np.ndarray:
    """C_j = -Re <d_j phi | H0 | phi>."""
    table = (model or ansatz.model).energies
    phi, J = ansatz.jacobian(theta) if jac is None else jac
    return -(J.view(np.float64) @ (table * phi).view(np.float64))


@dataclass(frozen=True)
class VqiteConfig:
    mode: str = "full"  # "full" or "diagonal"
    delta_t: float | None = None  # None: 0.1 for full, 0.05 for diagonal
    epsilon: float = 1e-4
    total_t: float = 40.0
    record_every: int = 1
    max_halvings: int = 10
    increase_tol: float = 1e-6
    stop_on_convergence: bool = False
    snapshot_every: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "diagonal"):
            raise ValueError(f"mode must be 'full' or 'diagonal', got {self.mode!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.step <= 0 or self.total_t <= 0:
            raise ValueError("delta_t and total_t must be positive")

    @property
    def step(self) -> float:
        if self.delta_t is not None:
            return self.delta_t
        return 0.1 if self.mode == "full" else 0.05

    @property
    def n_steps(self) -> int:
        return int(round(self.total_t / self.step))


DEFAULT_ETA = {"tri": 0.02, "sq": 0.05}


@dataclass(frozen=True)
class VqeConfig:
    eta: float | None = None  # None: 0.02 for tri, 0.05 otherwise
    max_iters: int = 2000
    record_every: int = 1
    stop_on_convergence: bool = False
    snapshot_every: int = 0

    def __post_init__(self):
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    def learning_rate(self, kind: str) -> float:
        return self.eta if self.eta is not None else DEFAULT_ETA.get(kind, 0.05)


def _theta_dot(ansatz: Ansatz, theta: np.ndarray, config: VqiteConfig, info: dict) -> np.ndarray:
    if config.mode == "diagonal":
        # Every generator is a Pauli string, so A_jj = |(-i/2) P phi|^2 = 1/4 exactly
        # and C = -grad E / 2.
        energy, grad = ansatz.energy_gradient(theta)
        info["energy"] = energy
        return (-0.5 * grad) / (0.25 + config.epsilon)
    jac = ansatz.jacobian(theta)
    phi = jac[0]
    A = assemble_A(ansatz, theta, jac)
    C = assemble_C(ansatz, theta, jac=jac)
    info["energy"] = float(np.real(np.vdot(phi, ansatz.model.energies * phi)))
    info["a_min_eig"] = float(np.linalg.eigvalsh(A)[0])
    M = A + config.epsilon * np.eye(A.shape[0])
    try:
        return np.linalg.solve(M, C)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"McLachlan system is singular (min eig of A = {info['a_min_eig']:.3e})") from exc


def vqite_step(ansatz: Ansatz, theta, config: VqiteConfig | None = None, info: dict | None = None) -> np.ndarray:
    """theta + dt * theta_dot with (A + eps I) theta_dot = C.

    In full mode a step that raises the energy by more than ``increase_tol`` is
    retried with half the step; the number of halvings lands in ``info``.
    """
    config = config or VqiteConfig()
    info = {} if info is None else info
    theta = ansatz._check(theta)
    tdot = _theta_dot(ansatz, theta, config, info)
    info["thetadot_norm"] = float(np.linalg.norm(tdot))
    dt = config.step
    new = theta + dt * tdot
    info["halvings"] = 0
    if config.mode == "full":
        e_old = info["energy"]
        e_new = ansatz.energy(new)
        while e_new > e_old + config.increase_tol and info["halvings"] < config.max_halvings:
            dt *= 0.5
            info["halvings"] += 1
            new = theta + dt * tdot
            e_new = ansatz.energy(new)
        if info["halvings"]:
            log.warning("VQITE energy rose; step halved %d time(s) to dt=%g", info["halvings"], dt)
        info["energy_after"] = e_new
    info["dt"] = dt
    return new


def first_converged(energies, e0: float, tol: float = CONVERGENCE_TOL, window: int = CONVERGENCE_WINDOW):
    """Index of the first record opening a run of ``window`` records within tol of e0, else None."""
    ok = np.abs(np.asarray(energies, dtype=float) - e0) < tol
    run = 0
    for i, flag in enumerate(ok):
        run = run + 1 if flag else 0
        if run == window:
            return i - window + 1
    return None


def _finish(traj: Trajectory, ansatz: Ansatz, theta: np.ndarray) -> Trajectory:
    state = StateVector(ansatz.state(theta))
    traj.final_state = state
    traj.meta["theta"] = theta
    traj.meta["sectors"] = _sector_columns(state, ansatz.model).get("sectors")
    e0 = float(ansatz.model.energies.min())
    idx = first_converged(traj.column("energy"), e0)
    traj.meta["e0"] = e0
    traj.meta["converged_at"] = None if idx is None else float(traj.records[idx]["t"])
    return traj


def vqite_run(model: IsingModel, ansatz: Ansatz | None = None, config: VqiteConfig | None = None,
              theta0=None, seed=None, snapshot_path=None) -> Trajectory:
    config = config or VqiteConfig()
    ansatz = ansatz or Ansatz(model)
    theta = ansatz.init_params(seed) if theta0 is None else ansatz._check(theta0).copy()
    mode = "vqite" if config.mode == "full" else "diag-vqite"
    traj = Trajectory(mode, meta={"mode": config.mode, "delta_t": config.step, "epsilon": config.epsilon,
                                  "halving_events": 0, "a_min_eig": math.inf})
    snap = SnapshotWriter(snapshot_path) if snapshot_path and config.snapshot_every else None
    e0 = float(model.energies.min())
    t = 0.0
    window = 0
    try:
        for step in range(config.n_steps + 1):
            last = step == config.n_steps
            info: dict = {}
            if not last:
                new = vqite_step(ansatz, theta, config, info)
            else:
                info["energy"] = ansatz.energy(theta)
                info["thetadot_norm"] = math.nan
            if step % config.record_every == 0 or last:
                rec = {"step": step, "t": t, "energy": info["energy"], "grad_norm": math.nan,
                       "thetadot_norm": info["thetadot_norm"], "mode": mode}
                if "a_min_eig" in info:
                    rec["a_min_eig"] = info["a_min_eig"]
                    traj.meta["a_min_eig"] = min(traj.meta["a_min_eig"], info["a_min_eig"])
                traj.records.append(rec)
            if snap and step % config.snapshot_every == 0:
                snap.write(step, theta)
            window = window + 1 if abs(info["energy"] - e0) < CONVERGENCE_TOL else 0
            if last or (config.stop_on_convergence and window >= CONVERGENCE_WINDOW):
                break
            traj.meta["halving_events"] += info.get("halvings", 0) > 0
            theta = new
            t += info["dt"]
    finally:
        if snap:
            snap.close()
    return _finish(traj, ansatz, theta)


def vqe_run(model: IsingModel, ansatz: Ansatz | None = None, config: VqeConfig | None = None,
            theta0=None, seed=None, snapshot_path=None) -> Trajectory:
    """Full-gradient descent on <phi(theta)|H0|phi(theta)>."""
    config = config or VqeConfig()
    ansatz = ansatz or Ansatz(model)
    eta = config.learning_rate(model.kind)
    theta = ansatz.init_params(seed) if theta0 is None else ansatz._check(theta0).copy()
    traj = Trajectory("vqe", meta={"eta": eta})
    snap = SnapshotWriter(snapshot_path) if snapshot_path and config.snapshot_every else None
    e0 = float(model.energies.min())
    window = 0
    try:
        for it in range(config.max_iters + 1):
            energy, grad = ansatz.energy_gradient(theta)
            last = it == config.max_iters
            if it % config.record_every == 0 or last:
                traj.records.append({"step": it, "t": float(it), "energy": energy,
                                     "grad_norm": float(np.linalg.norm(grad)), "thetadot_norm": math.nan,
                                     "mode": "vqe"})
            if snap and it % config.snapshot_every == 0:
                snap.write(it, theta)
            window = window + 1 if abs(energy - e0) < CONVERGENCE_TOL else 0
            if last or (config.stop_on_convergence and window >= CONVERGENCE_WINDOW):
                break
            theta = theta - eta * grad
    finally:
        if snap:
            snap.close()
    return _finish(traj, ansatz, theta)


# --------------------------------------------------------------------------
# parameter snapshots

_SNAP_HEADER = struct.Struct("<II")


class SnapshotWriter:
    """Appends (step, p) little-endian uint32 headers, each followed by p float64 values."""

    def __init__(self, path):
        self._fh = open(path, "wb")

    def write(self, step: int, theta) -> None:
        theta = np.ascontiguousarray(theta, dtype="<f8")
        self._fh.write(_SNAP_HEADER.pack(step, theta.size))
        self._fh.write(theta.tobytes())

    def close(self) -> None:
        self._fh.close()


def read_snapshots(path) -> list[tuple[int, np.ndarray]]:
    raw = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(raw):
        step, p = _SNAP_HEADER.unpack_from(raw, pos)
        pos += _SNAP_HEADER.size
        out.append((step, np.frombuffer(raw, dtype="<f8", count=p, offset=pos).copy()))
        pos += 8 * p
    return out
