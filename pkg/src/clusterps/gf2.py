"""Dense linear algebra over GF(2) for code construction and checks.

Matrices are small (a few hundred rows/columns at most), so everything here
works on ``uint8`` numpy arrays with row operations done by XOR.
"""

from __future__ import annotations

import numpy as np


def as_gf2(mat) -> np.ndarray:
    """Return ``mat`` as a 2-D ``uint8`` array reduced mod 2."""
    if hasattr(mat, "toarray"):
        mat = mat.toarray()
    arr = np.asarray(mat, dtype=np.int64) % 2
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr.astype(np.uint8)


def row_reduce(mat) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and the list of pivot columns."""
    a = as_gf2(mat).copy()
    n_rows, n_cols = a.shape
    pivots: list[int] = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        hits = np.nonzero(a[row:, col])[0]
        if hits.size == 0:
            continue
        pivot_row = row + hits[0]
        if pivot_row != row:
            a[[row, pivot_row]] = a[[pivot_row, row]]
        others = np.nonzero(a[:, col])[0]
        others = others[others != row]
        a[others] ^= a[row]
        pivots.append(col)
        row += 1
    return a, pivots


def rank(mat) -> int:
    a = as_gf2(mat)
    if a.size == 0:
        return 0
    return len(row_reduce(a)[1])


def nullspace(mat) -> np.ndarray:
    """Basis of ``{x : mat @ x = 0 mod 2}`` as rows of the returned array."""
    a = as_gf2(mat)
    n_cols = a.shape[1]
    rref, pivots = row_reduce(a)
    free = [c for c in range(n_cols) if c not in set(pivots)]
    basis = np.zeros((len(free), n_cols), dtype=np.uint8)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for r, p in enumerate(pivots):
            basis[k, p] = rref[r, f]
    return basis


def in_rowspace(vec, mat) -> bool:
    """Whether ``vec`` lies in the row space of ``mat``."""
    a = as_gf2(mat)
    v = as_gf2(vec)
    if a.shape[0] == 0:
        return not v.any()
    return rank(np.vstack([a, v])) == rank(a)


def logical_basis(hx, hz) -> np.ndarray:
    """Independent representatives of ``ker(hx) / rowspace(hz)``.

    For a Z-memory experiment these are the logical Z operators: they commute
    with every X check and are not products of Z checks.
    """
    hx = as_gf2(hx)
    hz = as_gf2(hz)
    kernel = nullspace(hx) if hx.shape[0] else np.eye(hz.shape[1], dtype=np.uint8)
    current = hz.copy()
    base_rank = rank(current)
    chosen = []
    for vec in kernel:
        trial = np.vstack([current, vec])
        trial_rank = rank(trial)
        if trial_rank > base_rank:
            chosen.append(vec)
            current = trial
            base_rank = trial_rank
    if not chosen:
        return np.zeros((0, hz.shape[1]), dtype=np.uint8)
    return np.array(chosen, dtype=np.uint8)
