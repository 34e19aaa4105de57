"""Low-lying spectrum of H(s) = s * H0 + (1 - s) * sum_q X_q and gap curves."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from scipy.sparse.linalg import LinearOperator, eigsh

from . import _kernels as K
from .lattice import IsingModel, brute_force_spectrum

DEFAULT_K = 8


class Operator:
    """Matrix-free real symmetric H(s), optionally restricted to a spin-flip sector."""

    def __init__(self, table: np.ndarray, s: float, fields=None, sector: int = 0):
        table = np.asarray(table, dtype=np.float64)
        n = table.size.bit_length() - 1
        self.fields = np.full(n, 1.0 - s) if fields is None else np.asarray(fields, dtype=np.float64)
        self.sector = int(sector)
        if self.sector not in (-1, 0, 1):
            raise ValueError("sector must be 0 (full space), +1 or -1")
        if self.sector and not np.array_equal(table, table[::-1]):
            raise ValueError("spin-flip sectors need a flip-symmetric energy table")
        diag = s * table
        self.diag = np.ascontiguousarray(diag[: diag.size // 2] if self.sector else diag)
        self.dim = self.diag.size
        self.matvecs = 0

    def apply_rows(self, X: np.ndarray) -> np.ndarray:
        """H applied to every row of X (rows are vectors)."""
        out = np.empty_like(X)
        for r in range(X.shape[0]):
            K.field_hamiltonian_apply(self.diag, self.fields, X[r], out[r], self.sector)
        self.matvecs += X.shape[0]
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        """H applied to every column of X."""
        return self.apply_rows(np.ascontiguousarray(X.T)).T


def _arpack(op: Operator, k: int, tol: float, v0: np.ndarray, basis: np.ndarray | None):
    """k lowest eigenpairs of op restricted to the complement of the columns of basis."""
    if basis is None:
        def matvec(x):
            return op.apply_rows(np.ascontiguousarray(x.reshape(1, -1)))[0]
    else:
        # Found directions are shifted far above the spectrum so they cannot reappear.
        shift = 2.0 * (np.abs(op.diag).max() + op.fields.sum()) + 1.0

        def matvec(x):
            c = basis.T @ x
            y = x - basis @ c
            hy = op.apply_rows(np.ascontiguousarray(y.reshape(1, -1)))[0]
            return hy - basis @ (basis.T @ hy) + shift * (basis @ c)
    lin = LinearOperator((op.dim, op.dim), matvec=matvec, dtype=np.float64)
    ncv = min(op.dim, max(4 * k + 8, 40))
    return eigsh(lin, k=k, which="SA", tol=tol, v0=v0, ncv=ncv)


def lowest_eigenpairs(op: Operator, k: int, tol: float = 1e-10, seed: int = 0, return_vectors: bool = False,
                      max_deflations: int = 8):
    """k lowest eigenpairs of op by implicitly restarted Lanczos (ARPACK) with a completeness check.

    Single-vector Lanczos can miss copies of a degenerate level. After each
    solve the complement of the found vectors is searched for anything below
    the current k-th value, and such pairs are merged in until none remain.
    Every returned pair has residual norm below ``max(1e-6, 1e3 * tol) * max(1, |lambda|)``.
    """
    if k < 1 or k + 4 >= op.dim:
        raise ValueError(f"k must lie in [1, {op.dim - 5}]")
    rng = np.random.default_rng(seed)
    vals, vecs = _arpack(op, k, tol, rng.standard_normal(op.dim), None)
    for _ in range(max_deflations):
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        basis, _ = np.linalg.qr(vecs)
        extra_vals, extra_vecs = _arpack(op, min(4, k), tol, rng.standard_normal(op.dim), basis)
        new = extra_vals < vals[k - 1] - 10 * tol * max(1.0, abs(vals[k - 1]))
        if not np.any(new):
            break
        vals = np.concatenate([vals, extra_vals[new]])
        vecs = np.hstack([vecs, extra_vecs[:, new]])
        order = np.argsort(vals)[:k]
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise RuntimeError("degenerate-level search did not settle")
    res = np.linalg.norm(op.apply(vecs) - vecs * vals, axis=0)
    bound = max(1e-6, 1e3 * tol) * np.maximum(1.0, np.abs(vals))
    if np.any(res > bound):
        raise RuntimeError(f"eigensolver residual {res.max():.2e} exceeds {bound.max():.1e}")
    return (vals, vecs) if return_vectors else vals


def _driver_levels(n: int, k: int, sector: int) -> np.ndarray:
    """Lowest k eigenvalues of (1-s) sum X at s = 0 scaled to unit field: -n + 2m, m flipped spins."""
    m = np.arange(1 << n)
    pop = np.array([bin(v).count("1") for v in m])
    vals = -n + 2 * pop
    if sector:
        # In the Hadamard basis the spin-flip operator is (-1)**(number of |-> spins) = (-1)**(n - m).
        vals = vals[((-1) ** (n - pop)) == sector]
    return np.sort(vals)[:k].astype(float)


def lowest_k(model_or_table, s: float, k: int = DEFAULT_K, tol: float = 1e-10, sector: int = 0,
             seed: int = 0, return_vectors: bool = False):
    """k lowest eigenvalues of H(s) (ascending).

    At s = 1 the operator is diagonal and at s = 0 it is a free paramagnet;
    both are returned exactly.
    """
    table = model_or_table.energies if isinstance(model_or_table, IsingModel) else np.asarray(model_or_table)
    if k > 16:
        raise ValueError("k must be at most 16")
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    n = table.size.bit_length() - 1
    if not return_vectors:
        if s == 1.0:
            # In a flip sector every classical pair {i, ~i} contributes one state of energy E_i.
            t = table[: table.size // 2] if sector else table
            return np.sort(t)[:k].astype(float)
        if s == 0.0:
            return _driver_levels(n, k, sector)
    op = Operator(table, s, sector=sector)
    return lowest_eigenpairs(op, k, tol=tol, seed=seed, return_vectors=return_vectors)


@dataclass
class GapCurve:
    s: np.ndarray
    levels: np.ndarray  # (len(s), k)
    degeneracy: int  # index d of the level the gap is measured to
    sector: int = 0

    @property
    def k(self) -> int:
        return self.levels.shape[1]

    @property
    def gap(self) -> np.ndarray:
        return self.levels[:, self.degeneracy] - self.levels[:, 0]

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.gap))

    @property
    def g_min(self) -> float:
        return float(self.gap[self.argmin])

    @property
    def s_star(self) -> float:
        return float(self.s[self.argmin])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s"] + [f"E_{i}" for i in range(self.k)] + ["gap"])
            for s, row, g in zip(self.s, self.levels, self.gap):
                w.writerow(["%.12g" % s] + ["%.12g" % v for v in row] + ["%.12g" % g])


def ground_degeneracy(model: IsingModel, sector: int = 0) -> int:
    d = brute_force_spectrum(model)[0][1]
    return max(1, d // 2) if sector else d


def gap_curve(model: IsingModel, s_grid=None, k: int = DEFAULT_K, refine: int = 10, tol: float = 1e-10,
              sector: int = 0, progress=None) -> GapCurve:
    """Levels on s_grid (default 101 points on [0, 1]) plus a refined grid around the minimum gap.

    The gap is E_d - E_0 with d the classical ground degeneracy, so a ground
    manifold that becomes degenerate at s = 1 is measured to the level above it.
    """
    s_grid = np.linspace(0.0, 1.0, 101) if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0) or s_grid.min() < 0 or s_grid.max() > 1:
        raise ValueError("s_grid must be sorted, strictly increasing and inside [0, 1]")
    d = ground_degeneracy(model, sector)
    if d >= k:
        raise ValueError(f"k = {k} cannot resolve a ground degeneracy of {d}")

    def levels(s):
        vals = lowest_k(model, float(s), k, tol=tol, sector=sector)
        if progress:
            progress(s, vals)
        return vals

    rows = {float(s): levels(s) for s in s_grid}
    curve = _curve(rows, d, sector)
    if refine and refine > 1 and len(s_grid) > 2:
        i = curve.argmin
        lo = curve.s[max(i - 1, 0)]
        hi = curve.s[min(i + 1, len(curve.s) - 1)]
        step = (s_grid[1] - s_grid[0]) / refine
        for s in np.arange(lo, hi + 0.5 * step, step):
            s = float(np.round(s, 12))
            if s not in rows:
                rows[s] = levels(s)
        curve = _curve(rows, d, sector)
    return curve


def _curve(rows: dict, d: int, sector: int) -> GapCurve:
    s = np.array(sorted(rows))
    return GapCurve(s, np.array([rows[v] for v in s]), d, sector)


def adiabatic_time(g_min: float) -> float:
    """Adiabatic time scale 1 / g_min**2 (hbar = 1)."""
    return float("inf") if g_min <= 0 else 1.0 / g_min**2
