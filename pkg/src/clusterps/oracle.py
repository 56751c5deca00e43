"""Brute-force references for tiny models: exhaustive ML decoding, exact
logical gap and a loop-based re-implementation of the metrics.

ML here means minimum log-likelihood weight (degeneracy is ignored).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dem import DetectorErrorModel


@dataclass(frozen=True)
class OracleLimit:
    max_mechanisms: int = 20

    def __post_init__(self):
        if not 0 <= self.max_mechanisms <= 26:
            raise ValueError("max_mechanisms must lie in [0, 26]")


@dataclass(frozen=True, eq=False)
class OracleResult:
    fault: np.ndarray
    weight: float
    class_weights: dict[int, float]

    @property
    def logical_class(self) -> int:
        return min(self.class_weights, key=lambda c: (self.class_weights[c], c)) if self.class_weights else -1


class InconsistentSyndromeError(ValueError):
    """No fault vector reproduces the syndrome."""


def _pack_columns(mat, cols: np.ndarray) -> np.ndarray:
    """Rows of ``mat`` restricted to ``cols`` as (len(cols), words) uint64 bit patterns."""
    dense = np.asarray(mat[:, cols].toarray(), dtype=np.uint8)
    n_rows = dense.shape[0]
    words = max(1, (n_rows + 63) // 64)
    out = np.zeros((cols.size, words), dtype=np.uint64)
    for c in range(cols.size):
        for i in np.flatnonzero(dense[:, c]):
            out[c, i // 64] |= np.uint64(1) << np.uint64(i % 64)
    return out


def _pack_vector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.uint8)
    words = max(1, (v.size + 63) // 64)
    out = np.zeros(words, dtype=np.uint64)
    for i in np.flatnonzero(v):
        out[i // 64] |= np.uint64(1) << np.uint64(i % 64)
    return out


def ml_decode_exhaustive(
    model: DetectorErrorModel,
    syndrome,
    limit: OracleLimit = OracleLimit(),
    mechanisms: Optional[np.ndarray] = None,
) -> OracleResult:
    """Minimum-weight fault vector consistent with ``syndrome``.

    Enumerates every subset of ``mechanisms`` (default: all). Also returns,
    for every reachable logical class (observable flips packed as an int,
    observable 0 in bit 0), the minimum weight in that class. Weight ties
    resolve to the lexicographically smallest fault vector.
    """
    mech = np.arange(model.num_mechanisms) if mechanisms is None else np.unique(np.asarray(mechanisms, np.int64))
    n = mech.size
    if n > limit.max_mechanisms:
        raise ValueError(f"{n} mechanisms exceed the oracle limit of {limit.max_mechanisms}")
    k = model.num_observables
    if k > 62:
        raise ValueError("too many observables for the oracle")
    det_cols = _pack_columns(model.check_matrix, mech)
    obs_cols = _pack_columns(model.observable_matrix, mech)
    target = _pack_vector(syndrome)
    llrs = np.asarray(model.llrs, dtype=np.float64)[mech]

    masks = np.arange(1 << n, dtype=np.int64)
    syn = np.zeros((masks.size, det_cols.shape[1]), dtype=np.uint64)
    obs = np.zeros(masks.size, dtype=np.uint64)
    weight = np.zeros(masks.size)
    for b in range(n):
        on = ((masks >> b) & 1).astype(bool)
        syn[on] ^= det_cols[b]
        obs[on] ^= obs_cols[b, 0]
        weight[on] += llrs[b]
    ok = np.all(syn == target, axis=1)
    if not ok.any():
        raise InconsistentSyndromeError("syndrome is not reachable")
    cand = masks[ok]
    cw = weight[ok]
    classes = obs[ok]
    class_weights = {}
    for cls in np.unique(classes):
        class_weights[int(cls)] = float(cw[classes == cls].min())
    best_w = cw.min()
    ties = cand[np.abs(cw - best_w) <= 1e-12 * max(1.0, abs(best_w))]
    vectors = [tuple(int((m >> b) & 1) for b in range(n)) for m in ties]
    best = min(vectors)
    fault = np.zeros(model.num_mechanisms, dtype=np.uint8)
    fault[mech] = best
    return OracleResult(fault=fault, weight=float(best_w), class_weights=class_weights)


def logical_gap_exact(class_weights) -> float:
    """Difference of the two smallest class weights; ``inf`` if fewer than two classes."""
    values = sorted(class_weights.values() if isinstance(class_weights, dict) else class_weights)
    values = [v for v in values if math.isfinite(v)]
    if len(values) < 2:
        return math.inf
    return values[1] - values[0]


def metric_reference(outcome, model: DetectorErrorModel, spec) -> float:
    """Evaluate a metric straight from its definition with plain Python loops."""
    family = spec.family
    if family == "detector_density":
        bits = [int(b) for b in outcome.syndrome]
        if not bits:
            raise ValueError("no detectors")
        return sum(bits) / len(bits)
    w = [math.log((1 - p) / p) for p in model.priors]
    if family == "correction_weight":
        return sum(w[j] for j, bit in enumerate(outcome.correction) if bit)
    universe = set(range(model.num_mechanisms)) if spec.restriction is None else set(int(j) for j in spec.restriction)
    pieces = []
    for cluster in outcome.clusters:
        members = getattr(cluster, "mechanisms", cluster)
        kept = [int(j) for j in members if int(j) in universe]
        if kept:
            pieces.append(kept)
    if not pieces:
        return 0.0
    if family == "cluster_size":
        stats = [float(len(p)) for p in pieces]
        total = float(len(universe))
    else:
        stats = [sum(w[j] for j in p) for p in pieces]
        total = sum(w[j] for j in universe)
    if total == 0:
        raise ValueError("empty or zero-weight restriction")
    if math.isinf(spec.alpha):
        return max(stats) / total
    return sum(x ** spec.alpha for x in stats) ** (1 / spec.alpha) / total
