"""Ising models on small periodic lattices, their classical energy tables and
topological-sector classification.

Sites are indexed row-major, ``site(x, y) = y * Lx + x``, with periodic wrap in
both directions. Energies are ``sum_bonds coupling * z_j * z_k`` with
``z = 1 - 2 * bit``.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

MAX_EXHAUSTIVE_SITES = 24
KIND_IDS = {"chain": 0, "tri": 1, "sq": 2, "ising2d": 3}
BOND_CLASSES = ("Jx", "Jwedge", "J", "K", "Kp", "chain", "ising2d")

DEFAULT_COUPLINGS = {
    "tri": {"Jx": 0.9, "Jwedge": 1.0},
    "sq": {"J": 1.0, "K": -1.0, "Kp": 0.9},
    "chain": {"J": 1.0},
    "ising2d": {"J": 0.1},
}
DEFAULT_DIMS = {"tri": (4, 4), "sq": (4, 4), "chain": (16, 1), "ising2d": (4, 4)}


@dataclass(frozen=True)
class Bond:
    j: int
    k: int
    coupling: float
    cls: str


@dataclass(frozen=True)
class SectorLabel:
    defect_count: int  # -1 when invalid
    valid: bool


@dataclass(eq=False)
class IsingModel:
    kind: str
    Lx: int
    Ly: int
    bonds: tuple[Bond, ...]
    couplings: dict = field(default_factory=dict)
    periodic: tuple[bool, bool] = (True, True)

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def site(self, x: int, y: int) -> int:
        return (y % self.Ly) * self.Lx + (x % self.Lx)

    def bond_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(j, k, coupling) as arrays, in bond-list order."""
        j = np.array([b.j for b in self.bonds], dtype=np.int64)
        k = np.array([b.k for b in self.bonds], dtype=np.int64)
        c = np.array([b.coupling for b in self.bonds], dtype=np.float64)
        return j, k, c

    @cached_property
    def energies(self) -> np.ndarray:
        table = energy_table(self)
        table.flags.writeable = False
        return table

    @cached_property
    def classification(self) -> np.ndarray:
        """int8 N_D per basis configuration, -1 where the local rule is violated."""
        table = classify_all(self)
        table.flags.writeable = False
        return table

    def __repr__(self) -> str:
        return f"IsingModel(kind={self.kind!r}, Lx={self.Lx}, Ly={self.Ly}, n_bonds={self.n_bonds})"


# --------------------------------------------------------------------------
# construction


def _sq_target(x: int, y: int) -> bool:
    """Vertical bonds weakened by Kp: a staggered pattern, one per plaquette."""
    return x % 2 == 1 if y % 2 == 0 else x % 2 == 0


def build_model(kind: str, Lx: int | None = None, Ly: int | None = None, couplings: dict | None = None) -> IsingModel:
    if kind not in KIND_IDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(KIND_IDS)}")
    dLx, dLy = DEFAULT_DIMS[kind]
    Lx = dLx if Lx is None else int(Lx)
    Ly = dLy if Ly is None else int(Ly)
    if Lx <= 0 or Ly <= 0:
        raise ValueError(f"lattice dimensions must be positive, got {Lx}x{Ly}")
    if kind == "chain" and Ly != 1:
        raise ValueError("a chain has Ly = 1")
    if kind in ("tri", "sq") and (Lx % 2 or Ly % 2):
        warnings.warn(f"{kind} model with odd dimensions {Lx}x{Ly}: sector structure assumes even wrapping",
                      stacklevel=2)
    cpl = dict(DEFAULT_COUPLINGS[kind])
    if couplings:
        unknown = set(couplings) - set(cpl)
        if unknown:
            raise ValueError(f"unknown couplings for {kind}: {sorted(unknown)}")
        cpl.update({key: float(v) for key, v in couplings.items()})

    def s(x, y):
        return (y % Ly) * Lx + (x % Lx)

    bonds: list[Bond] = []
    if kind == "chain":
        bonds = [Bond(x, (x + 1) % Lx, cpl["J"], "chain") for x in range(Lx)]
    elif kind == "ising2d":
        for y in range(Ly):
            for x in range(Lx):
                bonds.append(Bond(s(x, y), s(x + 1, y), cpl["J"], "ising2d"))
        for y in range(Ly):
            for x in range(Lx):
                bonds.append(Bond(s(x, y), s(x, y + 1), cpl["J"], "ising2d"))
    elif kind == "tri":
        for y in range(Ly):
            for x in range(Lx):
                bonds.append(Bond(s(x, y), s(x + 1, y), cpl["Jx"], "Jx"))
        for y in range(Ly):
            for x in range(Lx):
                bonds.append(Bond(s(x, y), s(x, y + 1), cpl["Jwedge"], "Jwedge"))
                bonds.append(Bond(s(x, y), s(x + 1, y + 1), cpl["Jwedge"], "Jwedge"))
    else:  # sq
        for y in range(Ly):
            for x in range(Lx):
                bonds.append(Bond(s(x, y), s(x + 1, y), cpl["K"], "K"))
        for y in range(Ly):
            for x in range(Lx):
                base, cls = (cpl["J"], "J") if x % 2 else (cpl["K"], "K")
                if _sq_target(x, y):
                    bonds.append(Bond(s(x, y), s(x, y + 1), float(np.sign(base)) * cpl["Kp"], "Kp"))
                else:
                    bonds.append(Bond(s(x, y), s(x, y + 1), base, cls))
    return IsingModel(kind, Lx, Ly, tuple(bonds), cpl)


# --------------------------------------------------------------------------
# exhaustive tables


def _guard(model: IsingModel) -> None:
    if model.n_sites > MAX_EXHAUSTIVE_SITES:
        raise ValueError(f"{model.n_sites} sites exceeds the exhaustive-enumeration limit of {MAX_EXHAUSTIVE_SITES}")


def _basis(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def _antiparallel(idx: np.ndarray, j: int, k: int) -> np.ndarray:
    """1 where spins j and k differ, else 0."""
    return ((idx >> j) ^ (idx >> k)) & 1


def energy_table(model: IsingModel) -> np.ndarray:
    _guard(model)
    idx = _basis(model.n_sites)
    table = np.zeros(idx.size, dtype=np.float64)
    for b in model.bonds:
        # z_j z_k = 1 - 2 * [spins differ]
        table += b.coupling * (1.0 - 2.0 * _antiparallel(idx, b.j, b.k))
    return table


def brute_force_spectrum(model: IsingModel, decimals: int = 9) -> list[tuple[float, int]]:
    """Distinct classical energies with their degeneracies, ascending."""
    values, counts = np.unique(np.round(model.energies, decimals), return_counts=True)
    return [(float(v), int(c)) for v, c in zip(values, counts)]


def tri_row_defects(model: IsingModel) -> np.ndarray:
    """Antiparallel x-bond count in every row, shape (2**n, Ly)."""
    _require_kind(model, "tri")
    idx = _basis(model.n_sites)
    out = np.zeros((idx.size, model.Ly), dtype=np.int8)
    for y in range(model.Ly):
        for x in range(model.Lx):
            out[:, y] += _antiparallel(idx, model.site(x, y), model.site(x + 1, y)).astype(np.int8)
    return out


def _tri_valid(model: IsingModel, idx: np.ndarray) -> np.ndarray:
    valid = np.ones(idx.size, dtype=bool)
    for y in range(model.Ly):
        for x in range(model.Lx):
            a, b, c = model.site(x, y), model.site(x + 1, y), model.site(x + 1, y + 1)
            d = model.site(x, y + 1)
            for tri in ((a, b, c), (a, d, c)):
                parallel = 3 - (_antiparallel(idx, tri[0], tri[1]) + _antiparallel(idx, tri[1], tri[2])
                                + _antiparallel(idx, tri[0], tri[2]))
                valid &= parallel == 1
    return valid


def _sq_bond_lookup(model: IsingModel) -> dict:
    return {(b.j, b.k): b.coupling for b in model.bonds}


def _sq_excited(model: IsingModel, idx: np.ndarray):
    """Excitation indicators keyed by ('h'|'v', x, y)."""
    cpl = _sq_bond_lookup(model)
    exc = {}
    for y in range(model.Ly):
        for x in range(model.Lx):
            for tag, (j, k) in (("h", (model.site(x, y), model.site(x + 1, y))),
                                ("v", (model.site(x, y), model.site(x, y + 1)))):
                c = cpl[(j, k)]
                zz = 1 - 2 * _antiparallel(idx, j, k)
                exc[(tag, x, y)] = (np.sign(c) * zz > 0).astype(np.int8)
    return exc


def sq_windings(model: IsingModel) -> tuple[np.ndarray, np.ndarray]:
    """Staggered excited-bond counts through every horizontal and vertical cut.

    Returns ``(Wr, Wc)`` with shapes (2**n, Ly) and (2**n, Lx). ``Wr[:, y]``
    counts excited bonds along row y, ``Wc[:, x]`` along column x, each with
    sublattice sign (-1)**(x + y).
    """
    _require_kind(model, "sq")
    idx = _basis(model.n_sites)
    exc = _sq_excited(model, idx)
    Wr = np.zeros((idx.size, model.Ly), dtype=np.int8)
    Wc = np.zeros((idx.size, model.Lx), dtype=np.int8)
    for y in range(model.Ly):
        for x in range(model.Lx):
            sg = 1 if (x + y) % 2 == 0 else -1
            Wr[:, y] += sg * exc[("h", x, y)]
            Wc[:, x] += sg * exc[("v", x, y)]
    return Wr, Wc


def sq_reference_winding(model: IsingModel) -> tuple[int, int]:
    """Windings of the dimer covering formed by the weakened (Kp) bonds."""
    _require_kind(model, "sq")
    wr = wc = 0
    for b in model.bonds:
        if b.cls != "Kp":
            continue
        x, y = b.j % model.Lx, b.j // model.Lx
        sg = 1 if (x + y) % 2 == 0 else -1
        horizontal = b.k == model.site(x + 1, y)
        if horizontal and y == 0:
            wr += sg
        if not horizontal and x == 0:
            wc += sg
    return wr, wc


def _sq_valid(model: IsingModel, idx: np.ndarray) -> np.ndarray:
    exc = _sq_excited(model, idx)
    valid = np.ones(idx.size, dtype=bool)
    Lx, Ly = model.Lx, model.Ly
    for y in range(Ly):
        for x in range(Lx):
            m = exc[("h", x, y)] + exc[("h", x, (y + 1) % Ly)] + exc[("v", x, y)] + exc[("v", (x + 1) % Lx, y)]
            valid &= m == 1
    return valid


def classify_all(model: IsingModel) -> np.ndarray:
    """N_D for every configuration (int8), -1 for rule-violating ones.

    tri: antiparallel x-bonds in row 0.
    sq: L1 distance of the (row-0, column-0) winding pair from the Kp covering.
    """
    _guard(model)
    idx = _basis(model.n_sites)
    if model.kind == "tri":
        valid = _tri_valid(model, idx)
        nd = np.zeros(idx.size, dtype=np.int8)
        for x in range(model.Lx):
            nd += _antiparallel(idx, model.site(x, 0), model.site(x + 1, 0)).astype(np.int8)
    elif model.kind == "sq":
        valid = _sq_valid(model, idx)
        Wr, Wc = sq_windings(model)
        wr0, wc0 = sq_reference_winding(model)
        nd = (np.abs(Wr[:, 0] - wr0) + np.abs(Wc[:, 0] - wc0)).astype(np.int8)
    else:
        raise ValueError(f"sector classification is defined for tri and sq, not {model.kind!r}")
    nd[~valid] = -1
    return nd


def _require_kind(model: IsingModel, kind: str) -> None:
    if model.kind != kind:
        raise ValueError(f"expected a {kind} model, got {model.kind!r}")


def sector_label(model: IsingModel, config: int) -> SectorLabel:
    if model.kind not in ("tri", "sq"):
        raise ValueError(f"sector labels are defined for tri and sq, not {model.kind!r}")
    config = int(config)
    if not 0 <= config < 1 << model.n_sites:
        raise ValueError(f"configuration {config} out of range")
    nd = int(model.classification[config])
    return SectorLabel(nd, nd >= 0)


def sector_distribution(state, model: IsingModel) -> dict:
    """Probability per N_D, with rule-violating mass under the key ``"invalid"``."""
    amps = np.asarray(getattr(state, "amplitudes", state))
    table = model.classification
    if amps.shape != table.shape:
        raise ValueError(f"state length {amps.size} does not match the {model.n_sites}-site model")
    probs = amps.real**2 + amps.imag**2
    total = probs.sum()
    mass = np.bincount(table.astype(np.int64) + 1, weights=probs / total)
    out: dict = {"invalid": float(mass[0])}
    for nd in range(1, mass.size):
        if nd - 1 >= 0 and np.any(table == nd - 1):
            out[nd - 1] = float(mass[nd])
    return out


def sector_populations(model: IsingModel) -> dict:
    """Number of configurations per N_D (plus ``"invalid"``)."""
    table = model.classification
    values, counts = np.unique(table, return_counts=True)
    out: dict = {"invalid": 0}
    for v, c in zip(values, counts):
        out["invalid" if v < 0 else int(v)] = int(c)
    return out


def sector_minima(model: IsingModel) -> dict[int, float]:
    table = model.classification
    E = model.energies
    return {int(v): float(E[table == v].min()) for v in np.unique(table) if v >= 0}


# --------------------------------------------------------------------------
# fixture IO


def write_bonds(path, model_or_bonds) -> None:
    bonds = model_or_bonds.bonds if isinstance(model_or_bonds, IsingModel) else model_or_bonds
    with open(path, "w") as fh:
        for b in bonds:
            fh.write(f"{b.j} {b.k} {b.coupling!r} {b.cls}\n")


def read_bonds(path) -> list[Bond]:
    bonds = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or parts[3] not in BOND_CLASSES:
            raise ValueError(f"{path}:{lineno}: expected 'j k coupling class', got {line!r}")
        bonds.append(Bond(int(parts[0]), int(parts[1]), float(parts[2]), parts[3]))
    return bonds


def model_from_bonds(kind: str, Lx: int, Ly: int, bonds: Iterable[Bond]) -> IsingModel:
    bonds = tuple(bonds)
    n = Lx * Ly
    for b in bonds:
        if not (0 <= b.j < n and 0 <= b.k < n) or b.j == b.k:
            raise ValueError(f"bad bond {b} for {n} sites")
    return IsingModel(kind, Lx, Ly, bonds)


_HEADER = struct.Struct("<II")


def export_classification(path, model: IsingModel) -> None:
    """8-byte header (n_sites, kind id) as little-endian uint32, then int8 N_D per configuration."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(model.n_sites, KIND_IDS[model.kind]))
        fh.write(np.ascontiguousarray(model.classification, dtype=np.int8).tobytes())


def read_classification(path) -> tuple[int, str, np.ndarray]:
    raw = Path(path).read_bytes()
    n_sites, kind_id = _HEADER.unpack_from(raw)
    kind = {v: k for k, v in KIND_IDS.items()}[kind_id]
    table = np.frombuffer(raw, dtype=np.int8, offset=_HEADER.size)
    if table.size != 1 << n_sites:
        raise ValueError(f"{path}: expected {1 << n_sites} entries, found {table.size}")
    return n_sites, kind, table.copy()
