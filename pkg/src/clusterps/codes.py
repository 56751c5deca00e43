"""CSS code families and phenomenological Z-memory detector error models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import gf2
from .dem import DetectorErrorModel

# Classical (3,4)-regular check matrix whose hypergraph product with itself
# is the [[225, 9, 6]] code.
HGP_CLASSICAL_CHECK = np.array(
    [
        [0, 0, 1, 1, 0, 1, 0, 0, 0, 0, 1, 0],
        [0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1],
        [0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 1],
        [0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0],
        [1, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0],
        [1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0],
        [0, 1, 0, 0, 1, 1, 0, 1, 0, 0, 0, 0],
        [1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0],
    ],
    dtype=np.uint8,
)

# Bivariate bicycle instances: (l, m, A monomials, B monomials), each monomial
# an exponent pair (a, b) standing for x^a y^b.
BB_72_12_6 = (6, 6, [(3, 0), (0, 1), (0, 2)], [(0, 3), (1, 0), (2, 0)])
BB_144_12_12 = (12, 6, [(3, 0), (0, 1), (0, 2)], [(0, 3), (1, 0), (2, 0)])


@dataclass(frozen=True, eq=False)
class CssCodeSpec:
    hx: np.ndarray
    hz: np.ndarray
    logical_z: np.ndarray
    name: str = ""

    def __post_init__(self):
        for attr in ("hx", "hz", "logical_z"):
            object.__setattr__(self, attr, gf2.as_gf2(getattr(self, attr)))
        n = self.hz.shape[1]
        if self.hx.size and self.hx.shape[1] != n:
            raise ValueError("hx and hz have different column counts")
        if self.hx.size and np.any((self.hx.astype(np.int64) @ self.hz.T.astype(np.int64)) % 2):
            raise ValueError(f"{self.name}: hx @ hz.T != 0 mod 2")
        if self.hx.size and np.any((self.logical_z.astype(np.int64) @ self.hx.T.astype(np.int64)) % 2):
            raise ValueError(f"{self.name}: logical Z does not commute with X checks")

    @property
    def n(self) -> int:
        return self.hz.shape[1]

    @property
    def k(self) -> int:
        return self.logical_z.shape[0]


def _css(hx, hz, name: str) -> CssCodeSpec:
    hx = np.asarray(hx, dtype=np.uint8).reshape(-1, np.asarray(hz).shape[1])
    return CssCodeSpec(hx=hx, hz=np.asarray(hz, dtype=np.uint8), logical_z=gf2.logical_basis(hx, hz), name=name)


def _check_odd_distance(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be an odd integer >= 3, got {d!r}")


def repetition_code(d: int) -> CssCodeSpec:
    """Bit-flip repetition code: d-1 ZZ checks on a line, logical Z on all qubits."""
    _check_odd_distance(d)
    hz = np.zeros((d - 1, d), dtype=np.uint8)
    for i in range(d - 1):
        hz[i, i] = hz[i, i + 1] = 1
    return CssCodeSpec(
        hx=np.zeros((0, d), dtype=np.uint8),
        hz=hz,
        logical_z=np.ones((1, d), dtype=np.uint8),
        name=f"rep{d}",
    )


def rotated_surface_code(d: int) -> CssCodeSpec:
    """Rotated surface code on a d x d grid of data qubits.

    Face (a, b), 0 <= a, b <= d, covers the qubits at rows a-1..a and columns
    b-1..b that exist. Bulk faces alternate X/Z by (a + b) parity; weight-2
    X faces sit on the top/bottom edges and Z faces on the left/right edges.
    """
    _check_odd_distance(d)
    hx_rows, hz_rows = [], []
    for a in range(d + 1):
        for b in range(d + 1):
            is_x = (a + b) % 2 == 0
            on_tb = a in (0, d) and 0 < b < d
            on_lr = b in (0, d) and 0 < a < d
            bulk = 0 < a < d and 0 < b < d
            if not (bulk or (on_tb and is_x) or (on_lr and not is_x)):
                continue
            row = np.zeros(d * d, dtype=np.uint8)
            for i in (a - 1, a):
                for j in (b - 1, b):
                    if 0 <= i < d and 0 <= j < d:
                        row[i * d + j] = 1
            (hx_rows if is_x else hz_rows).append(row)
    return _css(np.array(hx_rows), np.array(hz_rows), f"surface{d}")


def _shift(size: int, power: int) -> np.ndarray:
    return np.roll(np.eye(size, dtype=np.uint8), power % size, axis=1)


def bivariate_bicycle_code(
    l: int, m: int, poly_a: Sequence[tuple[int, int]], poly_b: Sequence[tuple[int, int]]
) -> CssCodeSpec:
    """BB code with ``hx = [A|B]`` and ``hz = [B^T|A^T]``.

    ``x = S_l (x) I_m`` and ``y = I_l (x) S_m`` for cyclic shifts ``S``.
    """
    if l < 1 or m < 1:
        raise ValueError("l and m must be positive")

    def poly(terms):
        mat = np.zeros((l * m, l * m), dtype=np.uint8)
        for term in terms:
            if len(term) != 2:
                raise ValueError(f"monomial {term!r} is not an exponent pair")
            a, b = term
            if a < 0 or b < 0:
                raise ValueError(f"monomial {term!r} has a negative exponent")
            mat ^= np.kron(_shift(l, a), _shift(m, b))
        return mat

    A, B = poly(poly_a), poly(poly_b)
    hx = np.hstack([A, B])
    hz = np.hstack([B.T, A.T])
    return _css(hx, hz, f"bb{l}x{m}")


def hgp_code(h1, h2) -> CssCodeSpec:
    """Hypergraph product of two classical check matrices.

    ``hx = [h1 (x) I | I (x) h2^T]`` and ``hz = [I (x) h2 | h1^T (x) I]``,
    with n = n1*n2 + r1*r2 qubits.
    """
    h1 = np.asarray(h1, dtype=np.uint8)
    h2 = np.asarray(h2, dtype=np.uint8)
    if h1.ndim != 2 or h2.ndim != 2 or h1.size == 0 or h2.size == 0:
        raise ValueError("hypergraph product needs two nonempty 2-D matrices")
    r1, n1 = h1.shape
    r2, n2 = h2.shape
    hx = np.hstack([np.kron(h1, np.eye(n2, dtype=np.uint8)), np.kron(np.eye(r1, dtype=np.uint8), h2.T)])
    hz = np.hstack([np.kron(np.eye(n1, dtype=np.uint8), h2), np.kron(h1.T, np.eye(r2, dtype=np.uint8))])
    return _css(hx % 2, hz % 2, f"hgp{n1 * n2 + r1 * r2}")


def phenomenological_dem(
    code: CssCodeSpec, rounds: int, p_data: float, p_meas: float, basis: str = "Z"
) -> DetectorErrorModel:
    """Z-memory DEM with data X errors and measurement flips.

    Round t = 0..T-1 measures every Z check; the last round is the perfect
    readout obtained from the final data measurement. Detector (t, c) is the
    XOR of check c's outcomes in rounds t-1 and t (round -1 reads 0).

    Mechanisms, in column order: for each round t, one X error per data qubit
    (flipping detectors (t, c) for every check c on that qubit, and the
    logical observables containing it), followed by one measurement flip per
    check when t < T-1 (flipping detectors (t, c) and (t+1, c)). Mechanisms
    with zero probability are omitted.
    """
    if basis != "Z":
        raise ValueError("only Z-basis memory is supported")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    for p in (p_data, p_meas):
        if not 0.0 <= p <= 0.5:
            raise ValueError("probabilities must lie in [0, 0.5]")
    hz = code.hz
    n_checks, n = hz.shape
    qubit_checks = [np.flatnonzero(hz[:, q]) for q in range(n)]
    qubit_obs = [np.flatnonzero(code.logical_z[:, q]) for q in range(n)]
    det_cols, obs_cols, priors = [], [], []
    for t in range(rounds):
        base = t * n_checks
        for q in range(n if p_data > 0 else 0):
            if qubit_checks[q].size == 0 and qubit_obs[q].size == 0:
                continue
            det_cols.append(base + qubit_checks[q])
            obs_cols.append(qubit_obs[q])
            priors.append(p_data)
        if t < rounds - 1 and p_meas > 0:
            for c in range(n_checks):
                det_cols.append([base + c, base + n_checks + c])
                obs_cols.append([])
                priors.append(p_meas)
    times = np.repeat(np.arange(rounds), n_checks)
    return DetectorErrorModel.from_columns(
        det_cols,
        obs_cols,
        priors,
        num_detectors=rounds * n_checks,
        num_observables=code.k,
        detector_times=times,
    )


def code_parameters(code: CssCodeSpec) -> tuple[int, int]:
    """``(n, n - rank(hx) - rank(hz))``."""
    return code.n, code.n - gf2.rank(code.hx) - gf2.rank(code.hz)


def has_logical_of_weight_at_most(code: CssCodeSpec, max_weight: int) -> bool:
    """Whether some X-error of weight <= ``max_weight`` is an undetectable logical.

    Meet-in-the-middle over column syndromes of ``hz``: a weight-w error is
    undetectable iff the syndromes of its two halves coincide. Candidates are
    then tested against the logical Z basis. Returns False exactly when the
    Z-memory distance exceeds ``max_weight``.
    """
    from itertools import combinations

    hz = code.hz.astype(np.uint8)
    n = code.n
    cols = [np.packbits(hz[:, q]).tobytes() for q in range(n)]
    logical = code.logical_z.astype(np.int64)

    def syndrome_key(qubits):
        acc = np.zeros(len(cols[0]), dtype=np.uint8)
        for q in qubits:
            acc ^= np.frombuffer(cols[q], dtype=np.uint8)
        return acc.tobytes()

    def is_logical(qubits):
        vec = np.zeros(n, dtype=np.int64)
        vec[list(qubits)] ^= 1
        return bool(np.any(logical @ vec % 2))

    half = (max_weight + 1) // 2
    table: dict[bytes, list[tuple[int, ...]]] = {}
    for w in range(0, half + 1):
        for combo in combinations(range(n), w):
            table.setdefault(syndrome_key(combo), []).append(combo)
    for key, group in table.items():
        for i, left in enumerate(group):
            for right in group[i:]:
                support = set(left) ^ set(right)
                if 0 < len(support) <= max_weight and is_logical(support):
                    return True
    return False
