"""Real-time quantum annealing (QA) and sweeping quantum annealing (SQA).

The stepped Hamiltonian is ``H = s * H0 + sum_q f_q X_q`` with ``H0`` diagonal.
For QA every ``f_q = 1 - s``; SQA raises the field on one column ("virtual
edge") at a time. The initial state is the all-``|->`` product, the ground
state of ``sum_q X_q``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from . import _kernels as K
from .lattice import IsingModel, sector_distribution
from .statevector import StateVector, expectation_diagonal

DEFAULT_TOL = 1e-10


# --------------------------------------------------------------------------
# single-step propagators


def _spectral_bounds(diag: np.ndarray, fields: np.ndarray) -> tuple[float, float]:
    spread = float(np.abs(fields).sum())
    return float(diag.min()) - spread, float(diag.max()) + spread


def chebyshev_coefficients(radius: float, dt: float, tol: float) -> np.ndarray:
    """Expansion coefficients of exp(-i R x) on [-1, 1], R = radius * dt, truncated below tol."""
    R = radius * dt
    kmax = int(R + 30 + 10 * math.log10(1.0 / tol))
    ks = np.arange(kmax + 1)
    jk = jv(ks, R)
    coef = 2.0 * (-1j) ** ks * jk
    coef[0] = jk[0]
    # Keep terms until the magnitude tail is well below tol.
    tail = np.cumsum(np.abs(coef[::-1]))[::-1]
    keep = int(np.argmax((tail < tol * 1e-3) & (ks > R))) or kmax + 1
    return np.ascontiguousarray(coef[:keep])


def _chebyshev(diag, fields, sign, psi, dt, tol):
    lo, hi = _spectral_bounds(diag, fields)
    center, radius = 0.5 * (hi + lo), max(0.5 * (hi - lo), 1e-12)
    coef = chebyshev_coefficients(radius, dt, tol) * np.exp(-1j * center * dt)
    return K.chebyshev_propagate(diag, fields, sign, psi, coef, center, radius)


def _strang(diag, fields, psi, dt, m):
    """m symmetric splitting substeps of size dt/m on the full space."""
    h = dt / m
    half = np.exp(-0.5j * h * diag)
    out = psi.copy()
    for _ in range(m):
        out *= half
        for q, f in enumerate(fields):
            if f != 0.0:
                K.pauli_rotation(out, 1 << q, 0, 0, math.cos(f * h), math.sin(f * h))
        out *= half
    return out


def _split(diag, fields, psi, dt, tol, max_substeps=1 << 14):
    # Strang error is even in the substep size, so (4 fine - coarse) / 3 is fourth order.
    m = 1
    coarse = _strang(diag, fields, psi, dt, m)
    prev = None
    while m < max_substeps:
        fine = _strang(diag, fields, psi, dt, 2 * m)
        extrap = (4.0 * fine - coarse) / 3.0
        if prev is not None and np.linalg.norm(extrap - prev) < tol:
            return extrap
        prev = extrap
        m *= 2
        coarse = fine
    raise RuntimeError(f"splitting error above tol={tol} after {max_substeps} substeps")


def evolve_step(state, energy_table, intensities, s: float, delta_t: float,
                tol: float = DEFAULT_TOL, method: str = "chebyshev") -> StateVector:
    """Apply exp(-i [s H0 + sum_q (1 - s) h_q X_q] delta_t).

    ``method`` is ``"chebyshev"`` (default), ``"split"`` (Strang splitting with
    Richardson-controlled substeps) or ``"krylov"``.
    """
    amps = np.ascontiguousarray(getattr(state, "amplitudes", state), dtype=np.complex128)
    table = np.ascontiguousarray(energy_table, dtype=np.float64)
    h = np.ascontiguousarray(intensities, dtype=np.float64)
    n = amps.size.bit_length() - 1
    if table.shape != amps.shape or h.shape != (n,):
        raise ValueError("energy table / intensities do not match the state size")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    diag = s * table
    fields = (1.0 - s) * h
    if method == "chebyshev":
        out = _chebyshev(diag, fields, 0, amps, delta_t, tol)
    elif method == "split":
        out = _split(diag, fields, amps, delta_t, tol)
    elif method == "krylov":
        out = krylov_propagate(diag, fields, amps, delta_t, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return StateVector(out)


def _dense_free_matvec(diag: np.ndarray, fields: np.ndarray, v: np.ndarray) -> np.ndarray:
    idx = np.arange(v.size)
    out = diag * v
    for q, f in enumerate(fields):
        if f != 0.0:
            out = out + f * v[idx ^ (1 << q)]
    return out


def krylov_propagate(diag, fields, psi, dt, tol=DEFAULT_TOL, m_max: int = 120) -> np.ndarray:
    """Reference exp(-i H dt) psi by Lanczos with full reorthogonalization.

    Pure numpy and independent of the Chebyshev kernel; the Krylov dimension
    grows until two successive approximations agree to tol / 10.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    beta0 = np.linalg.norm(psi)
    V = np.zeros((m_max + 1, psi.size), dtype=np.complex128)
    V[0] = psi / beta0
    alpha, beta = [], []
    prev = None
    for j in range(m_max):
        w = _dense_free_matvec(diag, fields, V[j])
        alpha.append(float(np.real(np.vdot(V[j], w))))
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        if j >= 3 or b < 1e-14:
            evals, evecs = eigh_tridiagonal(np.array(alpha), np.array(beta)) if j else (np.array(alpha), np.eye(1))
            coeff = evecs @ (np.exp(-1j * evals * dt) * evecs[0])
            approx = beta0 * (coeff @ V[: j + 1])
            if b < 1e-14 or (prev is not None and np.linalg.norm(approx - prev) < tol / 10):
                return approx
            prev = approx
        beta.append(b)
        V[j + 1] = w / b
    raise RuntimeError(f"Krylov propagation did not converge within {m_max} vectors")


# --------------------------------------------------------------------------
# configs and schedules


@dataclass(frozen=True)
class AnnealConfig:
    delta_t: float = 0.1
    delta_s: float = 1e-4
    record_every: int | None = None  # None: 10 steps for N <= 1000, else N // 100
    tol: float = DEFAULT_TOL
    method: str = "chebyshev"
    use_symmetry: bool = True  # evolve only the spin-flip-even half when possible

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        n = 1.0 / self.delta_s if self.delta_s > 0 else -1
        if n < 1 or abs(n - round(n)) > 1e-6 * n:
            raise ValueError(f"1/delta_s must be a positive integer, got delta_s={self.delta_s}")
        if self.method not in ("chebyshev", "split", "krylov"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def n_steps(self) -> int:
        return int(round(1.0 / self.delta_s))

    @property
    def total_time(self) -> float:
        return self.n_steps * self.delta_t

    @classmethod
    def from_total_time(cls, T: float, delta_t: float = 0.1, **kw) -> AnnealConfig:
        return cls(delta_t=delta_t, delta_s=delta_t / T, **kw)

    def recording_interval(self) -> int:
        if self.record_every is not None:
            return max(1, int(self.record_every))
        return 10 if self.n_steps <= 1000 else self.n_steps // 100


@dataclass(frozen=True)
class SweepConfig:
    h_max: float = 2.0
    s_max: float = 0.8
    edge_axis: str = "x"  # "x": edge j is column x = j - 1; "y": row y = j - 1
    edge_count: int = 4
    creation_steps: int | None = None  # None: same as the edge's gluing step count

    def __post_init__(self):
        # h_max = 1 is admitted so the schedule can collapse onto plain QA.
        if self.h_max < 1.0:
            raise ValueError("h_max must be >= 1")
        if not 0.0 < self.s_max < 1.0:
            raise ValueError("s_max must lie in (0, 1)")
        if self.edge_axis not in ("x", "y"):
            raise ValueError("edge_axis must be 'x' or 'y'")
        if self.edge_count < 1:
            raise ValueError("edge_count must be positive")

    @property
    def slope(self) -> float:
        return self.edge_count * self.h_max / self.s_max

    def edge_start(self, j: int) -> float:
        """s at which edge j (1-based) is created."""
        return (j - 1) * self.s_max / self.edge_count

    def glue_line(self, j: int, s: float) -> float:
        return self.h_max - self.slope * (s - self.edge_start(j))

    def rejoin(self, j: int) -> float:
        """s where edge j's gluing line meets the ambient 1 - s line."""
        a = self.slope
        return (1.0 - self.h_max - a * self.edge_start(j)) / (1.0 - a)


@dataclass(frozen=True)
class ScheduleStep:
    clock: int  # global step counter, pauses included
    s: float
    fields: np.ndarray
    phase: str


class SweepSchedule:
    """Per-step (s, per-site field) sequence of an SQA run."""

    def __init__(self, model: IsingModel, config: AnnealConfig, sweep: SweepConfig):
        self.model, self.config, self.sweep = model, config, sweep
        n_lines = model.Lx if sweep.edge_axis == "x" else model.Ly
        if sweep.edge_count > n_lines:
            raise ValueError(f"edge_count {sweep.edge_count} exceeds the {n_lines} available lines")
        self.edges = []
        for j in range(1, sweep.edge_count + 1):
            line = j - 1
            if sweep.edge_axis == "x":
                sites = [model.site(line, y) for y in range(model.Ly)]
            else:
                sites = [model.site(x, line) for x in range(model.Lx)]
            self.edges.append(np.array(sites, dtype=np.int64))
        N, ds = config.n_steps, config.delta_s
        # QA step index k after which edge j is created, and its gluing length.
        self.start_step = [int(round(sweep.edge_start(j) / ds)) for j in range(1, sweep.edge_count + 1)]
        self.glue_steps = []
        for j, k0 in enumerate(self.start_step, 1):
            n = 0
            while k0 + n + 1 <= N and sweep.glue_line(j, (k0 + n + 1) * ds) > 1.0 - (k0 + n + 1) * ds:
                n += 1
            self.glue_steps.append(n)
        self.create_steps = []
        for j, n_glue in enumerate(self.glue_steps, 1):
            if j == 1:
                self.create_steps.append(0)  # at s = 0 every field strength shares the ground state
            elif sweep.creation_steps is not None:
                self.create_steps.append(int(sweep.creation_steps) if n_glue else 0)
            else:
                self.create_steps.append(n_glue)
        self._segments = self._build_segments()

    @property
    def total_steps(self) -> int:
        return self.config.n_steps + sum(self.create_steps)

    @property
    def sweep_steps(self) -> int:
        return sum(self.create_steps)

    def _build_segments(self):
        """List of (first_clock, kind, edge, k_start, n): kind 'create' pauses s, 'qa' advances it."""
        segs = []
        clock = 0
        k = 0
        for j in range(1, self.sweep.edge_count + 1):
            k0 = self.start_step[j - 1]
            if k0 > k:
                segs.append((clock, "qa", 0, k, k0 - k))
                clock += k0 - k
                k = k0
            if self.create_steps[j - 1]:
                segs.append((clock, "create", j, k, self.create_steps[j - 1]))
                clock += self.create_steps[j - 1]
        if self.config.n_steps > k:
            segs.append((clock, "qa", 0, k, self.config.n_steps - k))
        return segs

    def _segment_at(self, clock: int):
        for seg in reversed(self._segments):
            if clock > seg[0]:
                return seg
        return self._segments[0]

    def fields_at(self, s: float, clock: int) -> np.ndarray:
        """Per-site transverse-field coefficients at global step ``clock``, where s has reached ``s``."""
        ds = self.config.delta_s
        fields = np.full(self.model.n_sites, 1.0 - s)
        if clock > 0:
            first, kind, j, k0, n = self._segment_at(clock)
            if kind == "create":
                s_j = k0 * ds
                fields[self.edges[j - 1]] = (1.0 - s_j) + (self.sweep.h_max - (1.0 - s_j)) * (clock - first) / n
                return fields
        if s >= self.sweep.s_max:
            return fields
        k = int(round(s / ds))
        for j, sites in enumerate(self.edges, 1):
            k0 = self.start_step[j - 1]
            if k0 < k <= k0 + self.glue_steps[j - 1] or (k == 0 and j == 1):
                fields[sites] = max(self.sweep.glue_line(j, s), 1.0 - s)
        return fields

    def field_intensity(self, site: int, s: float, clock: int) -> float:
        return float(self.fields_at(s, clock)[site])

    def phase_at(self, clock: int) -> str:
        if clock == 0:
            return "init"
        first, kind, j, k0, _ = self._segment_at(clock)
        if kind == "create":
            return f"create-{j}"
        k = k0 + clock - first
        for jj in range(1, self.sweep.edge_count + 1):
            kk = self.start_step[jj - 1]
            if kk < k <= kk + self.glue_steps[jj - 1]:
                return f"glue-{jj}"
        return "qa"

    def __iter__(self) -> Iterator[ScheduleStep]:
        ds = self.config.delta_s
        for first, kind, j, k0, count in self._segments:
            for i in range(1, count + 1):
                clock = first + i
                s = k0 * ds if kind == "create" else (k0 + i) * ds
                s = min(s, 1.0)
                yield ScheduleStep(clock, s, self.fields_at(s, clock), self.phase_at(clock))


def sqa_field_intensity(schedule: SweepSchedule, site: int, s_progress: float, phase_clock: int) -> float:
    return schedule.field_intensity(site, s_progress, phase_clock)


def qa_schedule(model: IsingModel, config: AnnealConfig) -> Iterator[ScheduleStep]:
    n = model.n_sites
    ds = config.delta_s
    for k in range(1, config.n_steps + 1):
        s = min(k * ds, 1.0)
        yield ScheduleStep(k, s, np.full(n, 1.0 - s), "qa")


# --------------------------------------------------------------------------
# trajectories

ANNEAL_COLUMNS = ("step", "t", "s", "energy_H0", "energy_Hs", "norm",
                  "sector_p0", "sector_p2", "sector_p4", "sector_invalid")


@dataclass
class Trajectory:
    algorithm: str
    records: list[dict] = field(default_factory=list)
    final_state: StateVector | None = None
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> dict:
        return self.records[-1]

    @property
    def final_energy(self) -> float:
        return float(self.records[-1]["energy_H0" if "energy_H0" in self.records[-1] else "energy"])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def write_csv(self, path) -> None:
        cols = ANNEAL_COLUMNS if "energy_H0" in self.records[0] else VARIATIONAL_COLUMNS
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow([_fmt(r.get(c, math.nan)) for c in cols])


VARIATIONAL_COLUMNS = ("step", "t", "energy", "grad_norm", "thetadot_norm", "mode")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.12g" % v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        rec = {}
        for key, v in r.items():
            try:
                rec[key] = int(v) if key == "step" else float(v)
            except ValueError:
                rec[key] = v
        out.append(rec)
    return out


def _sector_columns(state: StateVector, model: IsingModel) -> dict:
    if model.kind not in ("tri", "sq"):
        return {}
    dist = sector_distribution(state, model)
    return {"sector_p0": dist.get(0, 0.0), "sector_p2": dist.get(2, 0.0),
            "sector_p4": dist.get(4, 0.0), "sector_invalid": dist["invalid"],
            "sectors": dist}


def _anneal_record(step, t, s, fields, psi: np.ndarray, model: IsingModel, with_sectors: bool) -> dict:
    state = StateVector(psi)
    norm = state.norm()
    unit = StateVector(psi / norm)
    e0 = expectation_diagonal(unit, model.energies)
    ex = float(np.dot(fields, K.x_expectations(unit.amplitudes)))
    rec = {"step": step, "t": t, "s": s, "energy_H0": e0, "energy_Hs": s * e0 + ex, "norm": norm}
    if with_sectors:
        rec.update(_sector_columns(unit, model))
    return rec


def _flip_symmetric(table: np.ndarray) -> bool:
    return bool(np.array_equal(table, table[::-1]))


def _run_schedule(model: IsingModel, config: AnnealConfig, steps, total: int, algorithm: str,
                  sector_every_record: bool = True, progress=None) -> Trajectory:
    n = model.n_sites
    table = model.energies
    psi = StateVector.minus(n).amplitudes
    reduced = config.use_symmetry and config.method == "chebyshev" and _flip_symmetric(table)
    parity = -1.0 if n % 2 else 1.0  # spin-flip eigenvalue of the all-|-> state
    half = table.size // 2
    if reduced:
        work = np.ascontiguousarray(psi[:half])
        diag_table = np.ascontiguousarray(table[:half])
    else:
        work = psi
        diag_table = table

    def full():
        if reduced:
            return np.concatenate([work, parity * work[::-1]])
        return work

    every = config.recording_interval()
    traj = Trajectory(algorithm, meta={"n_steps": total, "delta_t": config.delta_t,
                                       "delta_s": config.delta_s, "record_every": every})
    traj.records.append(_anneal_record(0, 0.0, 0.0, np.ones(n), psi, model, True) | {"phase": "init"})
    last = None
    for st in steps:
        diag = st.s * diag_table
        if config.method == "chebyshev":
            work = _chebyshev(diag, st.fields, parity if reduced else 0, work, config.delta_t, config.tol)
        elif config.method == "split":
            work = _split(diag, st.fields, work, config.delta_t, config.tol)
        else:
            work = krylov_propagate(diag, st.fields, work, config.delta_t, config.tol)
        last = st
        if st.clock % every == 0 or st.clock == total:
            rec = _anneal_record(st.clock, st.clock * config.delta_t, st.s, st.fields, full(), model,
                                 sector_every_record or st.clock == total)
            rec["phase"] = st.phase
            traj.records.append(rec)
            if progress:
                progress(rec)
    if last is not None and traj.records[-1]["step"] != last.clock:
        traj.records.append(_anneal_record(last.clock, last.clock * config.delta_t, last.s, last.fields,
                                           full(), model, True) | {"phase": last.phase})
    # The measured (normalized) state; its raw norm is in the last record.
    traj.final_state = StateVector(full()).normalize()
    return traj


def qa_run(model: IsingModel, config: AnnealConfig | None = None, progress=None) -> Trajectory:
    config = config or AnnealConfig()
    traj = _run_schedule(model, config, qa_schedule(model, config), config.n_steps, "qa", progress=progress)
    traj.meta["total_time"] = config.total_time
    return traj


def sqa_run(model: IsingModel, config: AnnealConfig | None = None, sweep: SweepConfig | None = None,
            progress=None) -> Trajectory:
    config = config or AnnealConfig()
    sweep = sweep or SweepConfig()
    sched = SweepSchedule(model, config, sweep)
    traj = _run_schedule(model, config, iter(sched), sched.total_steps, "sqa", progress=progress)
    traj.meta.update(total_time=sched.total_steps * config.delta_t,
                     sweep_time=sched.sweep_steps * config.delta_t,
                     glue_steps=list(sched.glue_steps), create_steps=list(sched.create_steps))
    return traj
