"""Numba kernels for dense statevector work.

Basis convention: bit q of the basis index is qubit q (little-endian),
bit value 0 is |0> (spin up, Z = +1), bit value 1 is |1> (spin down, Z = -1).

Pauli strings are encoded by three bit masks: ``xmask`` (qubits carrying X or
Y, i.e. the bits flipped), ``yzmask`` (qubits carrying Y or Z, i.e. the bits
contributing a sign) and ``ny`` (number of Y letters). With these,

    P |b> = i**ny * (-1)**popcount(b & yzmask) |b ^ xmask>
"""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _parity(v):
    p = 0
    while v:
        v &= v - 1
        p ^= 1
    return p


@nb.njit(cache=True)
def pauli_rotation(psi, xmask, yzmask, ny, c, s):
    """In place: psi <- (c*I - 1j*s*P) psi, i.e. exp(-i a P / 2) with c=cos(a/2), s=sin(a/2)."""
    N = psi.shape[0]
    iy = 1.0 + 0j
    for _ in range(ny % 4):
        iy *= 1j
    if xmask == 0:
        # diagonal string
        for i in range(N):
            sg = 1.0 - 2.0 * _parity(i & yzmask)
            psi[i] *= c - 1j * s * iy * sg
        return
    top = 1
    while top <= xmask:
        top <<= 1
    top >>= 1
    for blk in range(0, N, 2 * top):
        for i in range(blk, blk + top):
            j = i ^ xmask
            a = psi[i]
            b = psi[j]
            ph_i = iy * (1.0 - 2.0 * _parity(i & yzmask))
            ph_j = iy * (1.0 - 2.0 * _parity(j & yzmask))
            psi[i] = c * a - 1j * s * ph_j * b
            psi[j] = c * b - 1j * s * ph_i * a


@nb.njit(cache=True, fastmath=True)
def zy_rotation(psi, qz, qy, c, s):
    """In place exp(-i a Z_qz Y_qy / 2); real-coefficient special case of pauli_rotation."""
    by = 1 << qy
    N = psi.shape[0]
    run = 1 << min(qz, qy)
    for blk in range(0, N, 2 * by):
        for start in range(blk, blk + by, run):
            cs = s * (1.0 - 2.0 * ((start >> qz) & 1))
            for j in range(start, start + run):
                lo = psi[j]
                hi = psi[j + by]
                psi[j] = c * lo - cs * hi
                psi[j + by] = c * hi + cs * lo


@nb.njit(cache=True)
def apply_pauli(psi, out, xmask, yzmask, ny, factor):
    """out <- factor * P psi."""
    N = psi.shape[0]
    iy = factor + 0j
    for _ in range(ny % 4):
        iy *= 1j
    for i in range(N):
        j = i ^ xmask
        out[j] = iy * (1.0 - 2.0 * _parity(i & yzmask)) * psi[i]


@nb.njit(cache=True)
def hadamard(psi, q):
    b = 1 << q
    N = psi.shape[0]
    r = 1.0 / np.sqrt(2.0)
    for blk in range(0, N, 2 * b):
        for i in range(blk, blk + b):
            a = psi[i]
            c = psi[i + b]
            psi[i] = r * (a + c)
            psi[i + b] = r * (a - c)


@nb.njit(cache=True)
def x_expectations(psi):
    """<X_q> for every qubit of a normalized state."""
    N = psi.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    out = np.zeros(n)
    for q in range(n):
        b = 1 << q
        acc = 0.0
        for blk in range(0, N, 2 * b):
            for i in range(blk, blk + b):
                a = psi[i]
                c = psi[i + b]
                acc += 2.0 * (a.real * c.real + a.imag * c.imag)
        out[q] = acc
    return out


@nb.njit(cache=True, fastmath=True)
def field_hamiltonian_apply(diag, fields, x, out, sign):
    """out <- (diag + sum_q fields[q] X_q) x.

    ``sign == 0``: ``x`` is a full vector over all basis states.
    ``sign == +-1``: ``x`` holds the lower half (top qubit = 0) of a state
    with x_full[~i] = sign * x_full[i]; the top qubit's X then maps the
    lower half onto itself through the complement of the low bits.
    """
    N = x.shape[0]
    nf = fields.shape[0]
    nloc = nf if sign == 0 else nf - 1
    for i in range(N):
        out[i] = diag[i] * x[i]
    for q in range(nloc):
        f = fields[q]
        if f == 0.0:
            continue
        b = 1 << q
        for blk in range(0, N, 2 * b):
            for i in range(blk, blk + b):
                out[i] += f * x[i + b]
                out[i + b] += f * x[i]
    if sign != 0:
        ftop = fields[nf - 1] * sign
        for i in range(N):
            out[i] += ftop * x[N - 1 - i]


@nb.njit(cache=True)
def chebyshev_propagate(diag, fields, sign, psi, coef, center, radius):
    """sum_k coef[k] T_k((H - center) / radius) psi, H as in field_hamiltonian_apply."""
    N = psi.shape[0]
    K = coef.shape[0]
    t0 = psi.copy()
    t1 = np.empty_like(psi)
    t2 = np.empty_like(psi)
    res = np.empty_like(psi)
    for i in range(N):
        res[i] = coef[0] * t0[i]
    if K == 1:
        return res
    inv = 1.0 / radius
    field_hamiltonian_apply(diag, fields, t0, t1, sign)
    for i in range(N):
        t1[i] = (t1[i] - center * t0[i]) * inv
        res[i] += coef[1] * t1[i]
    for k in range(2, K):
        field_hamiltonian_apply(diag, fields, t1, t2, sign)
        ck = coef[k]
        for i in range(N):
            v = 2.0 * (t2[i] - center * t1[i]) * inv - t0[i]
            t0[i] = t1[i]
            t1[i] = v
            res[i] += ck * v
    return res


@nb.njit(cache=True)
def diagonal_phase(psi, table, factor):
    for i in range(psi.shape[0]):
        psi[i] *= np.exp(factor * table[i])


@nb.njit(cache=True, fastmath=True)
def pair_rotation_rows(M, count, qj, qk, R):
    """Apply the real 4x4 matrix R on qubits (qj, qk) to rows M[:count].

    R acts on the local index 2*b_j + b_k.
    """
    N = M.shape[1]
    bj = 1 << qj
    bk = 1 << qk
    lo = min(bj, bk)
    hi = max(bj, bk)
    for r in range(count):
        row = M[r]
        for base in range(0, N, 2 * hi):
            for mid in range(base, base + hi, 2 * lo):
                for i in range(mid, mid + lo):
                    a0 = row[i]
                    a1 = row[i + bk]
                    a2 = row[i + bj]
                    a3 = row[i + bj + bk]
                    row[i] = R[0, 0] * a0 + R[0, 1] * a1 + R[0, 2] * a2 + R[0, 3] * a3
                    row[i + bk] = R[1, 0] * a0 + R[1, 1] * a1 + R[1, 2] * a2 + R[1, 3] * a3
                    row[i + bj] = R[2, 0] * a0 + R[2, 1] * a1 + R[2, 2] * a2 + R[2, 3] * a3
                    row[i + bj + bk] = R[3, 0] * a0 + R[3, 1] * a1 + R[3, 2] * a2 + R[3, 3] * a3
